"""
Unscented Kalman Filter Module for the DSE Toolkit

Additive-noise UKF with scaled symmetric sigma points. The generic
``unscented_predict``/``unscented_update`` pair works on any transition
and observation callables that map a stack of states (rows) to a stack of
outputs; ``ukf_predict``/``ukf_update`` bind them to the generator model.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

import genmodel
from genmodel import GeneratorParams, GenInput
from matstat import check_covariance, kalman_gain, repair_covariance, sqrt_factor, symmetrize, weighted_moments

logger = logging.getLogger(__name__)

# Maps an (M, n) stack of states to an (M, k) stack of outputs
VectorMap = Callable[[NDArray[np.float64]], NDArray[np.float64]]


def default_process_cov() -> NDArray[np.float64]:
    return np.diag([1e-8, 1e-8, 1e-8, 1e-8])


def default_meas_cov() -> NDArray[np.float64]:
    return np.diag([1.9e-4, 1.9e-4])


@dataclass
class BeliefState:
    """Filter mean and covariance over the state vector."""

    mean: NDArray[np.float64]
    cov: NDArray[np.float64]

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=float)
        self.cov = np.array(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ValueError(f"Covariance shape {self.cov.shape} does not match mean of length {n}")
        if not np.all(np.isfinite(self.mean)):
            raise ValueError("Belief mean has non-finite entries")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class UkfConfig:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 0.0
    process_cov: NDArray[np.float64] = field(default_factory=default_process_cov)
    meas_cov: NDArray[np.float64] = field(default_factory=default_meas_cov)

    def __post_init__(self):
        self.process_cov = np.array(self.process_cov, dtype=float)
        self.meas_cov = np.array(self.meas_cov, dtype=float)
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        n = self.process_cov.shape[0]
        if n + self.lam(n) <= 0:
            raise ValueError(f"alpha={self.alpha}, kappa={self.kappa} give n + lambda <= 0 for n={n}")
        check_covariance("process_cov", self.process_cov)
        check_covariance("meas_cov", self.meas_cov)

    def lam(self, n: int) -> float:
        return self.alpha ** 2 * (n + self.kappa) - n


@dataclass
class SigmaSet:
    points: NDArray[np.float64]
    mean_weights: NDArray[np.float64]
    cov_weights: NDArray[np.float64]


def sigma_points(b: BeliefState, c: UkfConfig) -> SigmaSet:
    """
    Scaled symmetric sigma set: the mean plus/minus the columns of
    sqrt((n + lambda) P).
    """
    n = b.dim
    lam = c.lam(n)
    spread = sqrt_factor((n + lam) * b.cov)
    offsets = spread.T
    points = np.vstack([b.mean, b.mean + offsets, b.mean - offsets])

    mean_weights = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    cov_weights = mean_weights.copy()
    mean_weights[0] = lam / (n + lam)
    cov_weights[0] = mean_weights[0] + (1.0 - c.alpha ** 2 + c.beta)
    return SigmaSet(points=points, mean_weights=mean_weights, cov_weights=cov_weights)


def unscented_predict(b: BeliefState, propagate: VectorMap, c: UkfConfig) -> BeliefState:
    """Push the sigma set through ``propagate`` and add the process covariance."""
    sigma = sigma_points(b, c)
    propagated = propagate(sigma.points)
    mean, cov = weighted_moments(propagated, sigma.mean_weights, sigma.cov_weights)
    return BeliefState(mean=mean, cov=repair_covariance(cov + c.process_cov))


def unscented_update(b: BeliefState, y: ArrayLike, observe: VectorMap, c: UkfConfig) -> BeliefState:
    """
    Measurement update with S = Pyy + R and K = Pxy S^-1.

    Raises:
        SingularInnovation: if S cannot be inverted.
    """
    y = np.asarray(y, dtype=float)
    sigma = sigma_points(b, c)
    predicted = observe(sigma.points)
    y_hat = sigma.mean_weights @ predicted

    dx = sigma.points - b.mean
    dy = predicted - y_hat
    pyy = symmetrize((dy * sigma.cov_weights[:, None]).T @ dy)
    pxy = (dx * sigma.cov_weights[:, None]).T @ dy
    s = pyy + c.meas_cov

    gain = kalman_gain(pxy, s)
    innovation = y - y_hat
    logger.debug(f"UKF innovation norm {np.linalg.norm(innovation):.3e}")
    mean = b.mean + gain @ innovation
    cov = b.cov - gain @ s @ gain.T
    return BeliefState(mean=mean, cov=repair_covariance(cov))


def ukf_predict(
    b: BeliefState,
    u: GenInput,
    p: GeneratorParams,
    c: UkfConfig,
    dt: float,
    substeps: int = 4,
) -> BeliefState:
    """Predict over one interval of ``dt`` seconds through the RK4 model."""
    return unscented_predict(b, lambda x: genmodel.step_rk4(x, u, p, dt, substeps), c)


def ukf_update(
    b: BeliefState,
    y: ArrayLike,
    u: GenInput,
    p: GeneratorParams,
    c: UkfConfig,
) -> BeliefState:
    """Assimilate one (pt, qt) measurement."""
    return unscented_update(b, np.asarray(y, dtype=float), lambda x: genmodel.measure(x, u, p), c)
