from dataclasses import dataclass

import numpy as np
import pytest

import genmodel
from genmodel import GeneratorParams, GenInput
from mixnoise import GaussianMixture, NoiseSpec
from scenario import InputEvent, ScenarioConfig


@pytest.fixture
def params():
    return GeneratorParams()


@pytest.fixture
def inputs():
    return GenInput(tm=0.7, efd=2.2, vt=1.0)


@pytest.fixture
def equilibrium(inputs, params):
    return genmodel.find_equilibrium(inputs, params)


@dataclass
class LinearSystem:
    """x' = F x + w, y = H x + v, with the exact Kalman recursion as oracle."""

    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    m0: np.ndarray
    P0: np.ndarray

    def propagate(self, x):
        return x @ self.F.T

    def observe(self, x):
        return x @ self.H.T

    def kf_predict(self, m, P):
        return self.F @ m, self.F @ P @ self.F.T + self.Q

    def kf_update(self, m, P, y):
        S = self.H @ P @ self.H.T + self.R
        K = P @ self.H.T @ np.linalg.inv(S)
        return m + K @ (y - self.H @ m), P - K @ S @ K.T


@pytest.fixture
def linear_system():
    dt = 0.1
    return LinearSystem(
        F=np.array([[1.0, dt], [-0.2 * dt, 1.0 - 0.1 * dt]]),
        H=np.array([[1.0, 0.0], [0.5, 1.0]]),
        Q=np.diag([1e-3, 2e-3]),
        R=np.diag([0.05, 0.08]),
        m0=np.array([1.0, -0.5]),
        P0=np.array([[0.5, 0.1], [0.1, 0.3]]),
    )


@pytest.fixture
def short_scenario(params):
    return ScenarioConfig(
        params=params,
        events=(InputEvent(1.0, "vt", 1.05),),
        duration=2.0,
        seed=7,
    )


@pytest.fixture
def quiet_noise():
    g = GaussianMixture.from_triples([(1.0, 0.0, 1e-30)])
    return NoiseSpec(p=g, q=g)
