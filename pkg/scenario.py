"""
Scenario Module for the DSE Toolkit

Builds the truth side of an experiment: integrates the machine from its
equilibrium through a scripted list of input steps, samples clean P/Q at
the PMU rate, corrupts the power channels with mixture noise, and reads
and writes the resulting CSV streams.
"""

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

import genmodel
import mixnoise
from genmodel import GeneratorParams, GenInput, INPUT_FIELDS, STATE_NAMES
from matstat import RngStream
from mixnoise import NoiseSpec

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

SUPPORTED_PMU_RATES = (30, 60)
RECORD_COLUMNS = ("t", "pt", "qt", "vt")
TRUTH_COLUMNS = ("t",) + STATE_NAMES + ("pt", "qt", "vt")
FLOAT_FORMAT = "%.17g"


class RecordParseError(ValueError):
    """Malformed record file; ``line`` is 1-based (header is line 1)."""

    def __init__(self, path: PathLike, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class InputEvent:
    """Step change of one GenInput field at ``time`` seconds."""

    time: float
    field: str
    value: float

    def __post_init__(self):
        if self.field not in INPUT_FIELDS:
            raise ValueError(f"Event field must be one of {INPUT_FIELDS}, got '{self.field}'")
        if not (math.isfinite(self.time) and math.isfinite(self.value)):
            raise ValueError("Event time and value must be finite")


def default_events() -> Tuple[InputEvent, ...]:
    # Load rejection at 3.5 s, seen by the machine as a terminal-voltage rise
    return (InputEvent(3.5, "vt", 1.05),)


@dataclass(frozen=True)
class ScenarioConfig:
    params: GeneratorParams = field(default_factory=GeneratorParams)
    initial_inputs: GenInput = field(default_factory=lambda: GenInput(tm=0.7, efd=2.2, vt=1.0))
    events: Tuple[InputEvent, ...] = field(default_factory=default_events)
    duration: float = 10.0
    pmu_rate: int = 60
    substeps: int = 4
    noise: NoiseSpec = field(default_factory=mixnoise.default_noise_spec)
    seed: int = 20190101
    allow_any_rate: bool = False
    vt_noise: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError(f"duration must be non-negative, got {self.duration}")
        if not self.pmu_rate > 0:
            raise ValueError(f"pmu_rate must be positive, got {self.pmu_rate}")
        if self.pmu_rate not in SUPPORTED_PMU_RATES and not self.allow_any_rate:
            raise ValueError(
                f"pmu_rate {self.pmu_rate} is not one of {SUPPORTED_PMU_RATES}; set allow_any_rate to override"
            )
        if self.pmu_rate not in SUPPORTED_PMU_RATES:
            logger.warning(f"Non-standard PMU rate {self.pmu_rate} SPS")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be a positive integer, got {self.substeps}")
        times = [e.time for e in self.events]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"Event times must be strictly increasing, got {times}")
        if any(t < 0 or t > self.duration for t in times):
            raise ValueError(f"Event times must lie within [0, {self.duration}], got {times}")
        if self.vt_noise and self.noise.vt is None:
            raise ValueError("vt_noise is on but the noise spec has no vt mixture")

    @property
    def dt(self) -> float:
        return 1.0 / self.pmu_rate

    @property
    def n_ticks(self) -> int:
        # last tick at or before duration
        return math.floor(self.duration * self.pmu_rate + 1e-9) + 1


@dataclass(frozen=True)
class PmuRecord:
    t: float
    pt: float
    qt: float
    vt: float


@dataclass
class TruthTrajectory:
    """Truth states and clean outputs at each PMU tick, with the inputs in effect."""

    times: NDArray[np.float64]
    states: NDArray[np.float64]
    clean_measurements: NDArray[np.float64]
    inputs: NDArray[np.float64]

    def __post_init__(self):
        k = len(self.times)
        if not (len(self.states) == len(self.clean_measurements) == len(self.inputs) == k):
            raise ValueError("Truth trajectory arrays must have equal lengths")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def vt(self) -> NDArray[np.float64]:
        return self.inputs[:, 2]


def _apply_events(u: GenInput, events: Sequence[InputEvent], next_event: int, t: float) -> Tuple[GenInput, int]:
    while next_event < len(events) and t >= events[next_event].time:
        ev = events[next_event]
        u = replace(u, **{ev.field: ev.value})
        logger.info(f"Event at t={t:.4f}s: {ev.field} -> {ev.value}")
        next_event += 1
    return u, next_event


def simulate_truth(cfg: ScenarioConfig) -> TruthTrajectory:
    """
    Integrate the machine from equilibrium through the event list.

    Events take effect at the first internal step whose start time is at or
    after the event time; inputs are held constant within each step.

    Raises:
        NoConvergence: if the initial operating point has no equilibrium.
        NonFiniteState: if the integration blows up.
    """
    p = cfg.params
    x = genmodel.find_equilibrium(cfg.initial_inputs, p)
    u = cfg.initial_inputs
    events = cfg.events
    next_event = 0
    steps_per_second = cfg.pmu_rate * cfg.substeps
    h = 1.0 / steps_per_second

    n = cfg.n_ticks
    times = np.arange(n) / cfg.pmu_rate
    states = np.empty((n, 4))
    inputs = np.empty((n, 3))
    clean = np.empty((n, 2))

    for k in range(n):
        u, next_event = _apply_events(u, events, next_event, times[k])
        states[k] = x
        inputs[k] = (u.tm, u.efd, u.vt)
        clean[k] = genmodel.measure(x, u, p)
        if k == n - 1:
            break
        for j in range(cfg.substeps):
            t_step = (k * cfg.substeps + j) / steps_per_second
            u, next_event = _apply_events(u, events, next_event, t_step)
            x = genmodel.step_rk4(x, u, p, h, 1)

    genmodel.check_trajectory(states)
    logger.info(f"Simulated {n} PMU ticks at {cfg.pmu_rate} SPS over {cfg.duration}s")
    return TruthTrajectory(times=times, states=states, clean_measurements=clean, inputs=inputs)


def corrupt(
    traj: TruthTrajectory,
    noise: NoiseSpec,
    rng: RngStream,
    vt_noise: bool = False,
) -> List[PmuRecord]:
    """
    Add independent mixture noise to the P and Q channels.

    V_t passes through clean unless ``vt_noise`` is set.
    """
    n = len(traj)
    p_noise = mixnoise.sample(noise.p, rng, size=n)
    q_noise = mixnoise.sample(noise.q, rng, size=n)
    vt = traj.vt.copy()
    if vt_noise:
        vt = vt + mixnoise.sample(noise.vt, rng, size=n)
    pt = traj.clean_measurements[:, 0] + p_noise
    qt = traj.clean_measurements[:, 1] + q_noise
    return [
        PmuRecord(float(t), float(a), float(b), float(v))
        for t, a, b, v in zip(traj.times, pt, qt, vt)
    ]


def clean_records(traj: TruthTrajectory) -> List[PmuRecord]:
    """Noise-free record stream of a trajectory."""
    return [
        PmuRecord(float(t), float(y[0]), float(y[1]), float(v))
        for t, y, v in zip(traj.times, traj.clean_measurements, traj.vt)
    ]


def records_checksum(records: Sequence[PmuRecord]) -> str:
    """SHA-256 of the stream's float64 bytes."""
    data = np.array([(r.t, r.pt, r.qt, r.vt) for r in records], dtype=np.float64)
    return hashlib.sha256(data.tobytes()).hexdigest()


# ==============================================================================
# CSV TABLES
# ==============================================================================

def write_table(rows: Sequence[Sequence[float]], columns: Sequence[str], path: PathLike) -> None:
    """Write a float table with 17 significant digits and LF line endings."""
    df = pd.DataFrame(list(rows), columns=list(columns), dtype=float)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")


def read_table(path: PathLike, columns: Sequence[str], monotone: str = "t") -> NDArray[np.float64]:
    """
    Read a float table written by ``write_table``.

    Raises:
        RecordParseError: on a wrong header, wrong field count, unparsable
            value, or a non-increasing ``monotone`` column.
    """
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise RecordParseError(path, 1, "missing header") from exc
    except pd.errors.ParserError as exc:
        raise RecordParseError(path, _line_from_parser_error(exc), str(exc)) from exc

    if tuple(df.columns) != tuple(columns):
        raise RecordParseError(path, 1, f"expected header {','.join(columns)}, got {','.join(df.columns)}")

    values = np.empty((len(df), len(columns)))
    for i, row in enumerate(df.itertuples(index=False)):
        for j, cell in enumerate(row):
            if not isinstance(cell, str):
                raise RecordParseError(path, i + 2, f"missing field {columns[j]}")
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise RecordParseError(path, i + 2, f"cannot parse {columns[j]}='{cell}'") from None

    if monotone in columns and len(values) > 1:
        col = values[:, list(columns).index(monotone)]
        bad = np.flatnonzero(~(np.diff(col) > 0))
        if bad.size:
            raise RecordParseError(path, int(bad[0]) + 3, f"{monotone} is not increasing")
    return values


def _line_from_parser_error(exc: Exception) -> int:
    # pandas reports "Expected 4 fields in line 7, saw 5"
    text = str(exc)
    marker = "line "
    if marker in text:
        digits = text.split(marker, 1)[1].split(",")[0].strip()
        if digits.isdigit():
            return int(digits)
    return 0


def write_records(records: Sequence[PmuRecord], path: PathLike) -> None:
    write_table([(r.t, r.pt, r.qt, r.vt) for r in records], RECORD_COLUMNS, path)
    logger.info(f"Wrote {len(records)} records to {path}")


def read_records(path: PathLike) -> List[PmuRecord]:
    values = read_table(path, RECORD_COLUMNS)
    return [PmuRecord(*(float(v) for v in row)) for row in values]


def write_truth(traj: TruthTrajectory, path: PathLike) -> None:
    rows = np.column_stack([traj.times, traj.states, traj.clean_measurements, traj.vt])
    write_table(rows, TRUTH_COLUMNS, path)
    logger.info(f"Wrote truth trajectory ({len(traj)} ticks) to {path}")


def read_truth(path: PathLike) -> TruthTrajectory:
    """
    Load a truth file. Only V_t is persisted among the inputs; T_m and E_fd
    come back as NaN.
    """
    values = read_table(path, TRUTH_COLUMNS)
    n = len(values)
    inputs = np.full((n, 3), np.nan)
    inputs[:, 2] = values[:, 7]
    return TruthTrajectory(
        times=values[:, 0],
        states=values[:, 1:5],
        clean_measurements=values[:, 5:7],
        inputs=inputs,
    )


def describe(cfg: ScenarioConfig) -> Dict[str, float]:
    """Headline numbers of a scenario for logs and the dashboard."""
    _, p_var = mixnoise.moments(cfg.noise.p)
    _, q_var = mixnoise.moments(cfg.noise.q)
    return {
        "duration": cfg.duration,
        "pmu_rate": float(cfg.pmu_rate),
        "ticks": float(cfg.n_ticks),
        "events": float(len(cfg.events)),
        "p_noise_var": p_var,
        "q_noise_var": q_var,
    }
