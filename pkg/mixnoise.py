"""
Mixture Noise Module for the DSE Toolkit

Gaussian-sum measurement noise: a weighted list of normal components used
both to corrupt clean PMU power channels and, through its first two
moments, to set the Gaussian noise level the filters assume.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from matstat import RngStream

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    mean: float
    variance: float


@dataclass(frozen=True)
class GaussianMixture:
    """p(x) = sum_i w_i N(mu_i, sigma_i^2), immutable after construction."""

    components: Tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("A mixture needs at least one component")
        for c in self.components:
            if not (math.isfinite(c.weight) and c.weight > 0):
                raise ValueError(f"Component weight must be positive, got {c.weight}")
            if not (math.isfinite(c.variance) and c.variance > 0):
                raise ValueError(f"Component variance must be positive, got {c.variance}")
            if not math.isfinite(c.mean):
                raise ValueError(f"Component mean must be finite, got {c.mean}")
        total = math.fsum(c.weight for c in self.components)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"Mixture weights must sum to 1, got {total!r}")

    @classmethod
    def from_triples(cls, triples: Iterable[Sequence[float]]) -> "GaussianMixture":
        """Build from (weight, mean, variance) triples."""
        return cls(tuple(MixtureComponent(float(w), float(m), float(v)) for w, m, v in triples))

    def as_triples(self) -> Tuple[Tuple[float, float, float], ...]:
        return tuple((c.weight, c.mean, c.variance) for c in self.components)

    @property
    def weights(self) -> NDArray[np.float64]:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> NDArray[np.float64]:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> NDArray[np.float64]:
        return np.array([c.variance for c in self.components])


@dataclass(frozen=True)
class NoiseSpec:
    """
    Per-channel noise laws, independent across channels and time.

    ``vt`` is only applied when the terminal-voltage noise extension is on.
    """

    p: GaussianMixture
    q: GaussianMixture
    vt: Optional[GaussianMixture] = None


def sample(g: GaussianMixture, rng: RngStream, size: Optional[int] = None) -> Union[float, NDArray[np.float64]]:
    """
    Draw a component index by weight, then a normal deviate from it.

    Returns a float when ``size`` is None, otherwise an array of draws.
    """
    n = 1 if size is None else size
    idx = rng.choice(len(g.components), size=n, p=g.weights)
    z = rng.standard_normal(n)
    draws = g.means[idx] + np.sqrt(g.variances[idx]) * z
    return float(draws[0]) if size is None else draws


def sample_with_labels(g: GaussianMixture, rng: RngStream, size: int) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    """Like ``sample`` but also returns the component index of each draw."""
    idx = rng.choice(len(g.components), size=size, p=g.weights)
    z = rng.standard_normal(size)
    return g.means[idx] + np.sqrt(g.variances[idx]) * z, idx


def pdf(g: GaussianMixture, x: ArrayLike) -> Union[float, NDArray[np.float64]]:
    """Mixture density sum_i w_i N(x; mu_i, sigma_i^2)."""
    x_arr = np.asarray(x, dtype=float)
    dens = stats.norm.pdf(x_arr[..., None], loc=g.means, scale=np.sqrt(g.variances)) @ g.weights
    return float(dens) if x_arr.ndim == 0 else dens


def moments(g: GaussianMixture) -> Tuple[float, float]:
    """Mean and variance of the mixture."""
    w, mu, var = g.weights, g.means, g.variances
    mean = float(w @ mu)
    variance = float(w @ (var + mu * mu) - mean * mean)
    return mean, variance


def matched_gaussian(g: GaussianMixture) -> GaussianMixture:
    """Single Gaussian with the same mean and variance as ``g``."""
    mean, variance = moments(g)
    return GaussianMixture((MixtureComponent(1.0, mean, variance),))


def bimodal_pmu_noise() -> GaussianMixture:
    """Zero-mean bimodal mixture: weights 0.9/0.1, variances 1e-4/1e-3."""
    return GaussianMixture.from_triples([(0.9, 0.0, 1e-4), (0.1, 0.0, 1e-3)])


def default_noise_spec() -> NoiseSpec:
    return NoiseSpec(p=bimodal_pmu_noise(), q=bimodal_pmu_noise())


def parse_mixture(text: str) -> GaussianMixture:
    """
    Parse ``"w,m,v; w,m,v"`` into a mixture.

    Raises:
        ValueError: on a malformed triple or invalid mixture.
    """
    triples = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [s.strip() for s in chunk.split(",")]
        if len(parts) != 3:
            raise ValueError(f"Mixture component must be 'weight,mean,variance', got '{chunk}'")
        triples.append(tuple(float(s) for s in parts))
    return GaussianMixture.from_triples(triples)


def format_mixture(g: GaussianMixture) -> str:
    return "; ".join(f"{w!r},{m!r},{v!r}" for w, m, v in g.as_triples())
