import math
import pickle

import numpy as np
import pytest

import genmodel
from genmodel import (
    GeneratorParams,
    GenInput,
    GenState,
    Measurement,
    NoConvergence,
    NonFiniteState,
)
from matstat import make_rng


def test_params_validation():
    with pytest.raises(ValueError):
        GeneratorParams(xd=0.2, xd_p=0.3)
    with pytest.raises(ValueError):
        GeneratorParams(inertia_j=0.0)
    with pytest.raises(ValueError):
        GeneratorParams(damping_d=-1.0)
    with pytest.raises(ValueError):
        GenInput(tm=0.5, efd=1.0, vt=0.0)
    with pytest.raises(ValueError):
        GenInput(tm=math.nan, efd=1.0, vt=1.0)


def test_state_and_measurement_arrays():
    s = GenState(0.5, 0.01, 1.1, 0.2)
    np.testing.assert_array_equal(s.to_array(), [0.5, 0.01, 1.1, 0.2])
    assert GenState.from_array(s.to_array()) == s
    assert Measurement.from_array(np.asarray(Measurement(0.7, 0.1))) == Measurement(0.7, 0.1)


def test_currents_quadrature_angle():
    p = GeneratorParams(xd_p=0.3, xq=1.0, xq_p=0.38)
    i_d, i_q = genmodel.currents([math.pi / 2, 0.0, 1.0, 0.0], GenInput(0.0, 1.0, 1.0), p)
    assert i_d == pytest.approx(1.0 / 0.3)
    assert i_q == pytest.approx(1.0)


def test_currents_no_load():
    p = GeneratorParams()
    i_d, i_q = genmodel.currents([0.0, 0.0, 1.0, 0.0], GenInput(0.0, 1.0, 1.0), p)
    assert i_d == pytest.approx(0.0, abs=1e-15)
    assert i_q == pytest.approx(0.0, abs=1e-15)


def test_measure_examples():
    u = GenInput(0.0, 1.0, 1.0)
    np.testing.assert_allclose(genmodel.measure([0.0, 0.0, 1.0, 0.0], u, GeneratorParams(xd_p=0.3)),
                               [0.0, 0.0], atol=1e-12)

    p = GeneratorParams(xd_p=0.3, xq=0.6, xq_p=0.38)
    pt, qt = genmodel.measure([0.0, 0.0, 1.2, 0.0], u, p)
    assert pt == pytest.approx(0.0, abs=1e-15)
    assert qt == pytest.approx(0.2 / 0.3, rel=1e-12)

    pt, _ = genmodel.measure([math.pi, 0.0, 1.1, 0.0], u, GeneratorParams())
    assert pt == pytest.approx(0.0, abs=1e-12)


def test_power_identity_via_currents(params):
    rng = make_rng(5)
    n = 10_000
    x = np.column_stack([
        rng.uniform(-math.pi, math.pi, n),
        rng.uniform(-0.01, 0.01, n),
        rng.uniform(0.5, 1.5, n),
        rng.uniform(-0.5, 0.5, n),
    ])
    u = GenInput(0.7, 2.2, 1.03)
    i_d, i_q = genmodel.currents(x, u, params)
    v_d = u.vt * np.sin(x[:, 0])
    v_q = u.vt * np.cos(x[:, 0])
    y = genmodel.measure(x, u, params)
    assert y.shape == (n, 2)
    np.testing.assert_allclose(v_d * i_d + v_q * i_q, y[:, 0], rtol=0, atol=1e-12)
    np.testing.assert_allclose(v_q * i_d - v_d * i_q, y[:, 1], rtol=0, atol=1e-12)


def test_rhs_at_equilibrium(equilibrium, inputs, params):
    assert np.max(np.abs(genmodel.dynamics_rhs(equilibrium, inputs, params))) <= 1e-10


def test_rhs_structure(params):
    x = np.array([0.4, 0.0, 1.1, 0.1])
    u = GenInput(0.5, 2.0, 1.0)
    assert genmodel.dynamics_rhs(x, u, params)[0] == 0.0
    balanced = GenInput(float(genmodel.measure(x, u, params)[0]), 2.0, 1.0)
    assert genmodel.dynamics_rhs(x, balanced, params)[1] == 0.0


def test_rhs_broadcasts_over_stack(equilibrium, inputs, params):
    stack = np.tile(equilibrium, (7, 1)) + 0.01 * np.arange(7)[:, None]
    out = genmodel.dynamics_rhs(stack, inputs, params)
    assert out.shape == (7, 4)
    np.testing.assert_allclose(out[3], genmodel.dynamics_rhs(stack[3], inputs, params))


def test_equilibrium_is_a_fixpoint(equilibrium, inputs, params):
    x = equilibrium
    for _ in range(600):
        nxt = genmodel.step_rk4(x, inputs, params, 1.0 / 60.0, 4)
        assert np.max(np.abs(nxt - x)) <= 1e-9
        x = nxt


def test_default_operating_point(equilibrium):
    assert 0.0 < equilibrium[0] < math.pi / 2
    assert equilibrium[1] == pytest.approx(0.0, abs=1e-12)
    assert equilibrium[2] > 0.0


def test_rk4_fourth_order(equilibrium, params):
    u = GenInput(0.7, 2.2, 1.05)
    x0 = equilibrium + np.array([0.1, 0.001, 0.05, 0.05])
    dt = 1.0 / 30.0
    reference = genmodel.step_rk4(x0, u, params, dt, 256)
    err1 = np.linalg.norm(genmodel.step_rk4(x0, u, params, dt, 1) - reference)
    err2 = np.linalg.norm(genmodel.step_rk4(x0, u, params, dt, 2) - reference)
    assert err1 / err2 >= 12.0


def test_step_rk4_rejects_bad_arguments(equilibrium, inputs, params):
    with pytest.raises(ValueError):
        genmodel.step_rk4(equilibrium, inputs, params, 0.0)
    with pytest.raises(ValueError):
        genmodel.step_rk4(equilibrium, inputs, params, 0.01, 0)


def test_step_rk4_names_non_finite_members(equilibrium, inputs, params):
    stack = np.vstack([equilibrium, [np.nan, 0.0, 1.0, 0.0], equilibrium])
    with pytest.raises(NonFiniteState) as info:
        genmodel.step_rk4(stack, inputs, params, 0.01)
    assert info.value.members == (1,)
    restored = pickle.loads(pickle.dumps(info.value))
    assert restored.members == (1,)


def test_equilibrium_no_load(params):
    x = genmodel.find_equilibrium(GenInput(0.0, 1.0, 1.0), params)
    np.testing.assert_allclose(x, [0.0, 0.0, 1.0, 0.0], atol=1e-8)


def test_equilibrium_after_voltage_step(params):
    u = GenInput(0.7, 2.2, 1.05)
    x = genmodel.find_equilibrium(u, params)
    assert np.max(np.abs(genmodel.dynamics_rhs(x, u, params))) <= 1e-10


def test_equilibrium_infeasible_torque(params):
    with pytest.raises(NoConvergence):
        genmodel.find_equilibrium(GenInput(5.0, 2.2, 1.0), params)
