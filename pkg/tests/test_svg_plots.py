import xml.etree.ElementTree as ET

import numpy as np
import pytest

import svg_plots
from harness import FilterRun, LengthMismatch
from scenario import TruthTrajectory
from ukf import BeliefState

NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def truth():
    n = 61
    return TruthTrajectory(
        times=np.arange(n) / 30.0,
        states=np.tile([0.5, 0.0, 1.1, 0.2], (n, 1)),
        clean_measurements=np.tile([0.7, 0.1], (n, 1)),
        inputs=np.tile([0.7, 2.2, 1.0], (n, 1)),
    )


def _run(kind, truth, offset):
    beliefs = [BeliefState(x + offset, np.eye(4) * 1e-4) for x in truth.states]
    n = len(beliefs)
    return FilterRun(kind, truth.times, beliefs, np.zeros((n, 2)), np.zeros(n), np.ones(n, dtype=bool))


def test_axis_range():
    assert svg_plots.axis_range(np.array([0.0, 10.0])) == pytest.approx((-0.5, 10.5))
    assert svg_plots.axis_range(np.array([2.0, 2.0])) == pytest.approx((1.9, 2.1))
    assert svg_plots.axis_range(np.zeros(3)) == pytest.approx((-0.05, 0.05))
    assert svg_plots.axis_range(np.array([1e-4, 1e-2]), log=True) == pytest.approx((-4.1, -1.9))
    assert svg_plots.axis_range(np.array([])) == (0.0, 1.0)
    assert svg_plots.axis_range(np.array([np.nan, 1.0, 3.0])) == pytest.approx((0.9, 3.1))


def test_emit_plots_writes_parseable_files(tmp_path, truth):
    runs = {"ukf": _run("ukf", truth, 0.01), "enkf": _run("enkf", truth, -0.02)}
    files = svg_plots.emit_plots(truth, runs, tmp_path)
    names = sorted(f.name for f in files)
    assert len(names) == 8
    assert "track_delta.svg" in names and "sqerr_ed_p.svg" in names
    for f in files:
        root = ET.parse(f).getroot()
        assert root.tag == f"{NS}svg"
        series = {p.get("data-series") for p in root.iter(f"{NS}polyline")}
        if f.name.startswith("track_"):
            assert series == {"truth", "ukf", "enkf"}
        else:
            assert series == {"ukf", "enkf"}


def test_constant_truth_is_horizontal(tmp_path, truth):
    svg_plots.emit_plots(truth, {"ukf": _run("ukf", truth, 0.01)}, tmp_path)
    root = ET.parse(tmp_path / "track_eq_p.svg").getroot()
    line = next(p for p in root.iter(f"{NS}polyline") if p.get("data-series") == "truth")
    ys = {pair.split(",")[1] for pair in line.get("points").split()}
    assert len(ys) == 1


def test_accepts_belief_lists(tmp_path, truth):
    beliefs = [BeliefState(x, np.zeros((4, 4))) for x in truth.states]
    files = svg_plots.emit_plots(truth, {"ukf": beliefs}, tmp_path)
    assert len(files) == 8


def test_titles_name_the_state(truth):
    errors = {"ukf": np.full(len(truth), 1e-6)}
    svg = svg_plots.error_svg(truth.times, errors, "delta")
    assert any((t.text or "").startswith("Squared error of rotor angle") for t in svg.iter("text"))


def test_emit_plots_errors(tmp_path, truth):
    with pytest.raises(FileNotFoundError):
        svg_plots.emit_plots(truth, {"ukf": _run("ukf", truth, 0.0)}, tmp_path / "missing")
    short = _run("ukf", truth, 0.0)
    short.beliefs = short.beliefs[:-1]
    with pytest.raises(LengthMismatch):
        svg_plots.emit_plots(truth, {"ukf": short}, tmp_path)
