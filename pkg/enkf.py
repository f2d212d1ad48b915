"""
Ensemble Kalman Filter Module for the DSE Toolkit

Stochastic (perturbed-observation) EnKF. Members are rows of an (N, n)
array and are propagated through the model in one vectorised call; all
random draws come from the ensemble's own stream in member order, so a
run is reproducible from its seed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

import genmodel
from genmodel import GeneratorParams, GenInput
from matstat import RngStream, check_covariance, kalman_gain, sample_mvn, symmetrize
from ukf import BeliefState, VectorMap, default_meas_cov, default_process_cov

logger = logging.getLogger(__name__)


@dataclass
class Ensemble:
    """N state vectors (rows) plus the stream that perturbs them."""

    members: NDArray[np.float64]
    rng: RngStream

    def __post_init__(self):
        self.members = np.array(self.members, dtype=float)
        if self.members.ndim != 2 or self.members.shape[0] < 2:
            raise ValueError(f"Ensemble needs at least 2 members, got shape {self.members.shape}")
        if not np.all(np.isfinite(self.members)):
            raise ValueError("Ensemble members have non-finite entries")

    @property
    def size(self) -> int:
        return self.members.shape[0]


@dataclass
class EnkfConfig:
    ensemble_size: int = 100
    process_cov: NDArray[np.float64] = field(default_factory=default_process_cov)
    meas_cov: NDArray[np.float64] = field(default_factory=default_meas_cov)
    inflation: float = 1.0

    def __post_init__(self):
        self.process_cov = np.array(self.process_cov, dtype=float)
        self.meas_cov = np.array(self.meas_cov, dtype=float)
        if int(self.ensemble_size) != self.ensemble_size or self.ensemble_size < 2:
            raise ValueError(f"ensemble_size must be an integer >= 2, got {self.ensemble_size}")
        self.ensemble_size = int(self.ensemble_size)
        if not self.inflation >= 1.0:
            raise ValueError(f"inflation must be >= 1, got {self.inflation}")
        check_covariance("process_cov", self.process_cov)
        check_covariance("meas_cov", self.meas_cov)


def enkf_init(prior: BeliefState, c: EnkfConfig, rng: RngStream) -> Ensemble:
    """Draw ``ensemble_size`` members from N(prior.mean, prior.cov)."""
    members = sample_mvn(prior.mean, prior.cov, rng, size=c.ensemble_size)
    return Ensemble(members=members, rng=rng)


def inflate(members: NDArray[np.float64], factor: float) -> NDArray[np.float64]:
    """Scale anomalies about the ensemble mean by ``factor``."""
    if factor == 1.0:
        return members
    mean = members.mean(axis=0)
    return mean + factor * (members - mean)


def ensemble_forecast(e: Ensemble, propagate: VectorMap, c: EnkfConfig) -> Ensemble:
    """Propagate every member, add process noise, then inflate."""
    n = e.members.shape[1]
    forecast = propagate(e.members)
    noise = sample_mvn(np.zeros(n), c.process_cov, e.rng, size=e.size)
    return Ensemble(members=inflate(forecast + noise, c.inflation), rng=e.rng)


def ensemble_analysis(e: Ensemble, y: ArrayLike, observe: VectorMap, c: EnkfConfig) -> Ensemble:
    """
    Perturbed-observation update.

    Each member assimilates y + eps_i with eps_i ~ N(0, R); covariances use
    the unbiased 1/(N-1) normalisation.

    Raises:
        SingularInnovation: if S = Pyy + R cannot be inverted.
    """
    y = np.asarray(y, dtype=float)
    members = e.members
    n_members = e.size
    predicted = observe(members)

    x_anom = members - members.mean(axis=0)
    y_anom = predicted - predicted.mean(axis=0)
    pxy = x_anom.T @ y_anom / (n_members - 1)
    pyy = symmetrize(y_anom.T @ y_anom / (n_members - 1))
    s = pyy + c.meas_cov

    gain = kalman_gain(pxy, s)
    perturbations = sample_mvn(np.zeros(y.shape[0]), c.meas_cov, e.rng, size=n_members)
    innovations = y + perturbations - predicted
    logger.debug(f"EnKF mean innovation norm {np.linalg.norm(innovations.mean(axis=0)):.3e}")
    return Ensemble(members=members + innovations @ gain.T, rng=e.rng)


def enkf_predict(
    e: Ensemble,
    u: GenInput,
    p: GeneratorParams,
    c: EnkfConfig,
    dt: float,
    substeps: int = 4,
) -> Ensemble:
    """
    Forecast over one interval of ``dt`` seconds.

    Raises:
        NonFiniteState: naming the members that blew up.
    """
    return ensemble_forecast(e, lambda x: genmodel.step_rk4(x, u, p, dt, substeps), c)


def enkf_update(
    e: Ensemble,
    y: ArrayLike,
    u: GenInput,
    p: GeneratorParams,
    c: EnkfConfig,
) -> Ensemble:
    return ensemble_analysis(e, y, lambda x: genmodel.measure(x, u, p), c)


def ensemble_stats(e: Ensemble) -> BeliefState:
    """Sample mean and unbiased sample covariance of the members."""
    mean = e.members.mean(axis=0)
    anomalies = e.members - mean
    cov = symmetrize(anomalies.T @ anomalies / (e.size - 1))
    return BeliefState(mean=mean, cov=cov)
