"""
Covariance Kernel Module for the DSE Toolkit

This module holds the small dense linear-algebra helpers shared by the
unscented and ensemble filters: Cholesky factors, covariance repair,
gain computation and seeded random streams.
"""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

# Seeded Monte-Carlo stream; one per trial, one owner at a time.
RngStream = np.random.Generator

# Clipping larger than this is reported as a repair event
REPAIR_WARN_THRESHOLD = 1e-9


class NotPositiveDefinite(ValueError):
    """Raised when a covariance cannot be factorised (filter divergence upstream)."""


class SingularInnovation(ValueError):
    """Raised when an innovation covariance cannot be inverted."""


def make_rng(seed: int) -> RngStream:
    """Create a reproducible PCG64 stream from a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def trial_rng(seed: int, trial_index: int) -> RngStream:
    """Independent stream for one Monte-Carlo trial (seed + trial_index)."""
    return make_rng(int(seed) + int(trial_index))


def trial_streams(seed: int, trial_index: int, count: int) -> List[RngStream]:
    """``count`` non-overlapping streams spawned from the trial seed (seed + trial_index)."""
    root = np.random.SeedSequence((int(seed) + int(trial_index)) & 0xFFFFFFFFFFFFFFFF)
    return [np.random.Generator(np.random.PCG64(child)) for child in root.spawn(count)]


def symmetrize(m: ArrayLike) -> NDArray[np.float64]:
    """Return (m + m^T) / 2."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"Matrix must be square, got shape {m.shape}")
    return (m + m.T) / 2.0


def cholesky(m: ArrayLike) -> NDArray[np.float64]:
    """
    Lower-triangular Cholesky factor L with L @ L.T == m.

    Raises:
        NotPositiveDefinite: if a pivot is not strictly positive.
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("Matrix has non-finite entries")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"Matrix is not positive definite: {exc}") from exc


def psd_floor(m: ArrayLike, floor: float = 0.0) -> NDArray[np.float64]:
    """
    Clip the eigenvalues of a symmetric matrix from below at ``floor``.

    A matrix whose spectrum already sits above the floor comes back
    symmetrized but otherwise untouched.
    """
    if floor < 0:
        raise ValueError(f"floor must be non-negative, got {floor}")
    m = symmetrize(m)
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite("Matrix has non-finite entries")
    eigvals, eigvecs = np.linalg.eigh(m)
    if eigvals.min() >= floor:
        return m
    clipped = np.maximum(eigvals, floor)
    deficit = float(np.max(clipped - eigvals))
    if deficit > REPAIR_WARN_THRESHOLD:
        logger.warning(f"Covariance repair clipped an eigenvalue by {deficit:.3e}")
    return symmetrize((eigvecs * clipped) @ eigvecs.T)


def repair_covariance(m: ArrayLike) -> NDArray[np.float64]:
    """Post-update hygiene: symmetrize, then clip negative eigenvalues at zero."""
    return psd_floor(symmetrize(m), 0.0)


def sqrt_factor(cov: ArrayLike) -> NDArray[np.float64]:
    """
    Square-root factor S with S @ S.T == cov.

    Tries Cholesky first; semidefinite matrices (zero or rank-deficient
    covariances) fall back to the eigen factor of the floored matrix.
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return cholesky(cov)
    except NotPositiveDefinite:
        repaired = psd_floor(cov, 0.0)
        eigvals, eigvecs = np.linalg.eigh(repaired)
        factor = eigvecs * np.sqrt(np.maximum(eigvals, 0.0))
        if not np.all(np.isfinite(factor)):
            raise
        return factor


def sample_mvn(
    mean: ArrayLike,
    cov: ArrayLike,
    rng: RngStream,
    size: Optional[int] = None,
) -> NDArray[np.float64]:
    """
    Draw from N(mean, cov) as mean + L z.

    Args:
        mean: Mean vector of length n.
        cov: n x n positive semidefinite covariance.
        rng: Caller-owned random stream.
        size: Number of draws; None returns a single vector.

    Returns:
        Array of shape (n,) or (size, n).
    """
    mean = np.asarray(mean, dtype=float)
    factor = sqrt_factor(cov)
    n = mean.shape[0]
    if size is None:
        z = rng.standard_normal(n)
        return mean + factor @ z
    z = rng.standard_normal((size, n))
    return mean + z @ factor.T


def kalman_gain(pxy: ArrayLike, s: ArrayLike) -> NDArray[np.float64]:
    """
    Gain K = Pxy S^-1, computed by a linear solve.

    Raises:
        SingularInnovation: if S is singular or numerically close to it.
    """
    pxy = np.asarray(pxy, dtype=float)
    s = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(s)):
        raise SingularInnovation("Innovation covariance has non-finite entries")
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(float).eps:
        raise SingularInnovation(f"Innovation covariance is singular (cond={cond:.3e})")
    return np.linalg.solve(s.T, pxy.T).T


def min_eigenvalue(m: ArrayLike) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(m))[0])


def weighted_moments(
    points: NDArray[np.float64],
    mean_weights: NDArray[np.float64],
    cov_weights: Union[NDArray[np.float64], None] = None,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Weighted mean and covariance of row-stacked points."""
    cov_weights = mean_weights if cov_weights is None else cov_weights
    mean = mean_weights @ points
    dev = points - mean
    cov = (dev * cov_weights[:, None]).T @ dev
    return mean, symmetrize(cov)


def check_covariance(name: str, m: NDArray[np.float64]) -> None:
    """
    Validate a configured covariance: square, finite, symmetric, PSD.

    Raises:
        ValueError: naming the offending setting.
    """
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    if not np.array_equal(m, m.T):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(m)[0] < -1e-12 * max(1.0, float(np.trace(m))):
        raise ValueError(f"{name} must be positive semidefinite")
