import math
from dataclasses import replace

import numpy as np
import pytest

import genmodel
import scenario
from genmodel import GenInput
from matstat import make_rng
from mixnoise import GaussianMixture, NoiseSpec, default_noise_spec
from scenario import InputEvent, PmuRecord, RecordParseError, ScenarioConfig, TruthTrajectory


def test_config_validation(params):
    with pytest.raises(ValueError):
        ScenarioConfig(duration=-1.0)
    with pytest.raises(ValueError):
        ScenarioConfig(pmu_rate=50)
    ScenarioConfig(pmu_rate=50, allow_any_rate=True)
    with pytest.raises(ValueError):
        ScenarioConfig(events=(InputEvent(2.0, "vt", 1.0), InputEvent(1.0, "vt", 1.05)))
    with pytest.raises(ValueError):
        ScenarioConfig(duration=1.0, events=(InputEvent(3.5, "vt", 1.05),))
    with pytest.raises(ValueError):
        InputEvent(1.0, "xd", 1.0)
    with pytest.raises(ValueError):
        ScenarioConfig(vt_noise=True)


def test_no_events_stays_at_equilibrium(equilibrium):
    traj = scenario.simulate_truth(ScenarioConfig(events=(), duration=2.0))
    assert len(traj) == 121
    assert np.max(np.abs(traj.states - equilibrium)) <= 1e-9


def test_event_switches_inputs_on_its_tick(short_scenario, equilibrium):
    traj = scenario.simulate_truth(short_scenario)
    np.testing.assert_array_equal(traj.vt[:60], 1.0)
    np.testing.assert_array_equal(traj.vt[60:], 1.05)
    assert np.max(np.abs(traj.states[:61] - equilibrium)) <= 1e-9
    assert np.max(np.abs(traj.states[-1] - equilibrium)) > 1e-4


@pytest.mark.slow
def test_settles_at_new_equilibrium(params):
    cfg = ScenarioConfig(events=(InputEvent(1.0, "vt", 1.05),), duration=60.0)
    traj = scenario.simulate_truth(cfg)
    target = genmodel.find_equilibrium(GenInput(0.7, 2.2, 1.05), params)
    scale = np.maximum(np.abs(target), 1.0)
    assert np.all(np.abs(traj.states[-1] - target) <= 0.01 * scale)


def test_thirty_samples_per_second():
    cfg = ScenarioConfig(pmu_rate=30, duration=2.0, events=(InputEvent(1.0, "vt", 1.05),))
    traj = scenario.simulate_truth(cfg)
    assert len(traj) == 61
    np.testing.assert_allclose(np.diff(traj.times), 1.0 / 30.0, rtol=1e-12)


@pytest.mark.parametrize("duration, rate, ticks", [
    (2.0, 60, 121),
    (1.01, 60, 61),
    (0.7, 60, 43),
    (0.1, 30, 4),
])
def test_last_tick_does_not_pass_duration(duration, rate, ticks):
    cfg = ScenarioConfig(events=(), duration=duration, pmu_rate=rate)
    assert cfg.n_ticks == ticks
    assert (cfg.n_ticks - 1) / rate <= duration + 1e-12


def test_zero_duration_gives_one_sample(equilibrium):
    traj = scenario.simulate_truth(ScenarioConfig(events=(), duration=0.0))
    assert len(traj) == 1
    assert traj.times[0] == 0.0
    np.testing.assert_allclose(traj.states[0], equilibrium)


def test_quiet_noise_matches_clean(short_scenario, quiet_noise):
    traj = scenario.simulate_truth(short_scenario)
    noisy = scenario.corrupt(traj, quiet_noise, make_rng(1))
    clean = scenario.clean_records(traj)
    assert len(noisy) == len(clean) == len(traj)
    for a, b in zip(noisy, clean):
        assert a.t == b.t and a.vt == b.vt
        assert abs(a.pt - b.pt) < 1e-12
        assert abs(a.qt - b.qt) < 1e-12


def test_noise_residual_variance():
    n = 20_000
    traj = TruthTrajectory(
        times=np.arange(n) / 60.0,
        states=np.tile([0.5, 0.0, 1.1, 0.2], (n, 1)),
        clean_measurements=np.tile([0.7, 0.1], (n, 1)),
        inputs=np.tile([0.7, 2.2, 1.0], (n, 1)),
    )
    records = scenario.corrupt(traj, default_noise_spec(), make_rng(20190101))
    residual = np.array([r.pt for r in records]) - 0.7
    assert abs(np.var(residual) - 1.9e-4) <= 0.1 * 1.9e-4
    se = math.sqrt(1.9e-4 / n)
    assert abs(np.mean(residual)) <= 4 * se
    q_residual = np.array([r.qt for r in records]) - 0.1
    assert abs(np.mean(q_residual)) <= 4 * se
    assert all(r.vt == 1.0 for r in records)


def test_vt_noise_extension(short_scenario):
    g = GaussianMixture.from_triples([(1.0, 0.0, 1e-4)])
    cfg = replace(short_scenario, noise=NoiseSpec(p=g, q=g, vt=g), vt_noise=True)
    traj = scenario.simulate_truth(cfg)
    records = scenario.corrupt(traj, cfg.noise, make_rng(3), vt_noise=True)
    assert any(r.vt != v for r, v in zip(records, traj.vt))


def test_corruption_is_reproducible(short_scenario):
    traj = scenario.simulate_truth(short_scenario)
    a = scenario.corrupt(traj, short_scenario.noise, make_rng(7))
    b = scenario.corrupt(traj, short_scenario.noise, make_rng(7))
    c = scenario.corrupt(traj, short_scenario.noise, make_rng(8))
    assert a == b
    assert scenario.records_checksum(a) == scenario.records_checksum(b)
    assert scenario.records_checksum(a) != scenario.records_checksum(c)
    assert len(scenario.records_checksum(a)) == 64


def test_records_round_trip(tmp_path, short_scenario):
    traj = scenario.simulate_truth(short_scenario)
    records = scenario.corrupt(traj, short_scenario.noise, make_rng(11))
    records[5] = PmuRecord(records[5].t, math.nan, math.nan, records[5].vt)
    path = tmp_path / "records.csv"
    scenario.write_records(records, path)
    back = scenario.read_records(path)
    assert len(back) == len(records)
    np.testing.assert_array_equal(
        np.array([(r.t, r.pt, r.qt, r.vt) for r in back]),
        np.array([(r.t, r.pt, r.qt, r.vt) for r in records]),
    )
    assert b"\r" not in path.read_bytes()


def test_empty_records_file(tmp_path):
    path = tmp_path / "empty.csv"
    scenario.write_records([], path)
    assert path.read_text() == "t,pt,qt,vt\n"
    assert scenario.read_records(path) == []


def _write(tmp_path, text):
    path = tmp_path / "records.csv"
    path.write_text(text)
    return path


def test_non_increasing_time_is_reported_with_line(tmp_path):
    path = _write(tmp_path, "t,pt,qt,vt\n0,0.7,0.1,1\n0.5,0.7,0.1,1\n0.5,0.7,0.1,1\n")
    with pytest.raises(RecordParseError) as info:
        scenario.read_records(path)
    assert info.value.line == 4


def test_wrong_header(tmp_path):
    path = _write(tmp_path, "time,p,q,v\n0,0.7,0.1,1\n")
    with pytest.raises(RecordParseError) as info:
        scenario.read_records(path)
    assert info.value.line == 1


def test_unparsable_value(tmp_path):
    path = _write(tmp_path, "t,pt,qt,vt\n0,0.7,0.1,1\n0.1,abc,0.1,1\n")
    with pytest.raises(RecordParseError) as info:
        scenario.read_records(path)
    assert info.value.line == 3
    assert "pt" in str(info.value)


def test_missing_field(tmp_path):
    path = _write(tmp_path, "t,pt,qt,vt\n0,0.7,0.1\n")
    with pytest.raises(RecordParseError) as info:
        scenario.read_records(path)
    assert info.value.line == 2


def test_extra_field(tmp_path):
    path = _write(tmp_path, "t,pt,qt,vt\n0,0.7,0.1,1\n0.1,0.7,0.1,1,9\n")
    with pytest.raises(RecordParseError) as info:
        scenario.read_records(path)
    assert info.value.line == 3


def test_truth_round_trip(tmp_path, short_scenario):
    traj = scenario.simulate_truth(short_scenario)
    path = tmp_path / "truth.csv"
    scenario.write_truth(traj, path)
    back = scenario.read_truth(path)
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.clean_measurements, traj.clean_measurements)
    np.testing.assert_array_equal(back.vt, traj.vt)
    assert np.all(np.isnan(back.inputs[:, :2]))


def test_describe(short_scenario):
    info = scenario.describe(short_scenario)
    assert info["ticks"] == 121
    assert info["events"] == 1
    assert info["p_noise_var"] == pytest.approx(1.9e-4)
