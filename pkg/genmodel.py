"""
Generator Model Module for the DSE Toolkit

Fourth-order synchronous machine against a terminal-voltage reference:
stator currents, the P/Q output map, the swing/flux dynamics and a
fixed-step RK4 integrator. Every function accepts a single state of shape
(4,) or a stack of states of shape (N, 4) and broadcasts over the stack,
so sigma sets and ensembles propagate in one call.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize

logger = logging.getLogger(__name__)

STATE_NAMES = ("delta", "domega", "eq_p", "ed_p")
MEASUREMENT_NAMES = ("pt", "qt")
INPUT_FIELDS = ("tm", "efd", "vt")

EQUILIBRIUM_TOL = 1e-10
EQUILIBRIUM_MAX_ITER = 200


class NonFiniteState(ArithmeticError):
    """Raised when integration produces NaN/inf; ``members`` lists offending rows."""

    def __init__(self, message: str, members: Tuple[int, ...] = ()):
        super().__init__(message)
        self.members = members

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.members))


class NoConvergence(RuntimeError):
    """Raised when the equilibrium search does not settle."""


@dataclass(frozen=True)
class GeneratorParams:
    """Machine constants (per-unit reactances, seconds for time constants)."""

    omega0: float = 2.0 * math.pi * 60.0
    inertia_j: float = 6.4
    damping_d: float = 2.0
    xd: float = 1.72
    xq: float = 1.66
    xd_p: float = 0.23
    xq_p: float = 0.38
    td0_p: float = 8.0
    tq0_p: float = 0.4

    def __post_init__(self):
        values = {name: getattr(self, name) for name in self.__dataclass_fields__}
        for name, value in values.items():
            if not math.isfinite(value):
                raise ValueError(f"GeneratorParams.{name} must be finite, got {value}")
        for name in ("omega0", "inertia_j", "xd", "xq", "xd_p", "xq_p", "td0_p", "tq0_p"):
            if values[name] <= 0:
                raise ValueError(f"GeneratorParams.{name} must be positive, got {values[name]}")
        if self.damping_d < 0:
            raise ValueError(f"GeneratorParams.damping_d must be non-negative, got {self.damping_d}")
        if self.xd < self.xd_p:
            raise ValueError(f"xd ({self.xd}) must not be below xd_p ({self.xd_p})")
        if self.xq < self.xq_p:
            raise ValueError(f"xq ({self.xq}) must not be below xq_p ({self.xq_p})")


@dataclass(frozen=True)
class GenInput:
    """Mechanical torque, exciter voltage and the exogenous terminal voltage."""

    tm: float
    efd: float
    vt: float

    def __post_init__(self):
        for name in INPUT_FIELDS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"GenInput.{name} must be finite")
        if self.vt <= 0:
            raise ValueError(f"GenInput.vt must be positive, got {self.vt}")


@dataclass(frozen=True)
class GenState:
    """Named view of the state vector [delta, domega, eq_p, ed_p]."""

    delta: float
    domega: float
    eq_p: float
    ed_p: float

    def __array__(self, dtype=None, copy=None):
        return np.array([self.delta, self.domega, self.eq_p, self.ed_p], dtype=dtype)

    def to_array(self) -> NDArray[np.float64]:
        return np.asarray(self, dtype=float)

    @classmethod
    def from_array(cls, x: ArrayLike) -> "GenState":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class Measurement:
    pt: float
    qt: float

    def __array__(self, dtype=None, copy=None):
        return np.array([self.pt, self.qt], dtype=dtype)

    @classmethod
    def from_array(cls, y: ArrayLike) -> "Measurement":
        y = np.asarray(y, dtype=float)
        return cls(float(y[0]), float(y[1]))


def _split(x: ArrayLike):
    x = np.asarray(x, dtype=float)
    return x, x[..., 0], x[..., 1], x[..., 2], x[..., 3]


def currents(x: ArrayLike, u: GenInput, p: GeneratorParams) -> Tuple[NDArray, NDArray]:
    """
    Stator currents (id, iq) in the rotor frame.

    id = (eq_p - vt cos delta) / xd_p, iq = vt sin delta / xq; these are the
    definitions under which v_d i_d + v_q i_q and v_q i_d - v_d i_q reproduce
    the P/Q output map exactly.
    """
    _, delta, _, eq_p, _ = _split(x)
    i_d = (eq_p - u.vt * np.cos(delta)) / p.xd_p
    i_q = u.vt * np.sin(delta) / p.xq
    return i_d, i_q


def measure(x: ArrayLike, u: GenInput, p: GeneratorParams) -> NDArray[np.float64]:
    """Active and reactive power [pt, qt]; shape (..., 2)."""
    _, delta, _, eq_p, _ = _split(x)
    vt = u.vt
    sin_d = np.sin(delta)
    cos_d = np.cos(delta)
    pt = (vt / p.xd_p) * eq_p * sin_d + (vt * vt / 2.0) * (1.0 / p.xq - 1.0 / p.xd_p) * np.sin(2.0 * delta)
    qt = (vt / p.xd_p) * eq_p * cos_d - vt * vt * (sin_d * sin_d / p.xq + cos_d * cos_d / p.xd_p)
    return np.stack([pt, qt], axis=-1)


def dynamics_rhs(x: ArrayLike, u: GenInput, p: GeneratorParams) -> NDArray[np.float64]:
    """Time derivatives of [delta, domega, eq_p, ed_p] in per-second units."""
    x, delta, domega, eq_p, ed_p = _split(x)
    i_d, i_q = currents(x, u, p)
    te = measure(x, u, p)[..., 0]
    d_delta = p.omega0 * domega
    d_domega = (u.tm - te - p.damping_d * domega) / p.inertia_j
    d_eq = (u.efd - eq_p - (p.xd - p.xd_p) * i_d) / p.td0_p
    d_ed = (-ed_p + (p.xq - p.xq_p) * i_q) / p.tq0_p
    return np.stack([d_delta, d_domega, d_eq, d_ed], axis=-1)


def step_rk4(
    x: ArrayLike,
    u: GenInput,
    p: GeneratorParams,
    dt: float,
    substeps: int = 4,
) -> NDArray[np.float64]:
    """
    Advance the state by ``dt`` seconds with classical RK4.

    The interval is split into ``substeps`` equal steps; ``u`` is held
    constant over the whole interval (zero-order hold).

    Raises:
        NonFiniteState: if any component becomes NaN or infinite.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substeps < 1:
        raise ValueError(f"substeps must be at least 1, got {substeps}")
    x = np.array(x, dtype=float)
    h = dt / substeps
    for _ in range(substeps):
        k1 = dynamics_rhs(x, u, p)
        k2 = dynamics_rhs(x + 0.5 * h * k1, u, p)
        k3 = dynamics_rhs(x + 0.5 * h * k2, u, p)
        k4 = dynamics_rhs(x + h * k3, u, p)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    finite = np.isfinite(x)
    if not finite.all():
        if x.ndim == 1:
            raise NonFiniteState("Integrated state became non-finite")
        bad = tuple(int(i) for i in np.flatnonzero(~finite.all(axis=-1)))
        raise NonFiniteState(f"Integrated state became non-finite for members {list(bad)}", bad)
    return x


def find_equilibrium(
    u: GenInput,
    p: GeneratorParams,
    guess: Optional[ArrayLike] = None,
) -> NDArray[np.float64]:
    """
    Operating point with all four derivatives at zero.

    Uses MINPACK's hybrid Powell method (damped Newton steps on a
    finite-difference Jacobian) and then checks the residual itself.

    Raises:
        NoConvergence: if the residual stays above 1e-10 within 200 iterations.
    """
    if guess is None:
        guess = np.array([0.3, 0.0, u.efd, 0.0])
    guess = np.asarray(guess, dtype=float)

    def residual(x):
        return dynamics_rhs(x, u, p)

    sol = optimize.root(
        residual,
        guess,
        method="hybr",
        options={"xtol": 1e-14, "maxfev": EQUILIBRIUM_MAX_ITER * (guess.size + 1)},
    )
    x = np.asarray(sol.x, dtype=float)
    res = float(np.max(np.abs(residual(x)))) if np.all(np.isfinite(x)) else math.inf
    logger.debug(f"Equilibrium search: nfev={sol.nfev}, residual={res:.3e}, message={sol.message}")
    if not res <= EQUILIBRIUM_TOL:
        raise NoConvergence(
            f"No equilibrium for tm={u.tm}, efd={u.efd}, vt={u.vt} (residual {res:.3e}: {sol.message})"
        )
    if x[2] <= 0:
        logger.warning(f"Equilibrium has non-positive eq_p={x[2]:.4f}")
    return x


def check_trajectory(states: NDArray[np.float64]) -> None:
    """Log soft warnings for non-physical stretches of a trajectory."""
    states = np.atleast_2d(states)
    if np.any(states[:, 2] <= 0):
        logger.warning("Trajectory has non-positive eq_p samples")
    if np.any(np.abs(states[:, 0]) >= math.pi):
        logger.warning("Rotor angle left (-pi, pi); angles are not wrapped")
