"""
Experiment Harness Module for the DSE Toolkit

This module runs the filters over PMU record streams, scores them against
the truth trajectory, and organises seeded Monte-Carlo comparisons of the
unscented and ensemble filters, including the reports written to disk.
"""

import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

import enkf
import genmodel
import mixnoise
import scenario
import ukf
from enkf import EnkfConfig
from genmodel import STATE_NAMES
from matstat import RngStream, check_covariance, make_rng, trial_streams
from mixnoise import NoiseSpec
from scenario import FLOAT_FORMAT, PathLike, PmuRecord, ScenarioConfig, TruthTrajectory
from ukf import BeliefState, UkfConfig

logger = logging.getLogger(__name__)

FILTER_KINDS = ("ukf", "enkf")
ESTIMATE_COLUMNS = ("t",) + STATE_NAMES + tuple(f"var_{name}" for name in STATE_NAMES)
STEP_BUDGET_MS = 1000.0 / 60.0


class LengthMismatch(ValueError):
    """Estimate and truth sequences are not aligned."""


class FilterStepError(RuntimeError):
    """A filter failed at a given record; the original error is the cause."""

    def __init__(self, message: str, kind: str, step: int):
        super().__init__(message)
        self.kind = kind
        self.step = step

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.kind, self.step))


class TrialError(RuntimeError):
    """An error raised inside one Monte-Carlo trial."""

    def __init__(self, message: str, trial: int):
        super().__init__(message)
        self.trial = trial

    def __reduce__(self):
        return (self.__class__, (self.args[0], self.trial))


def default_prior_offset() -> NDArray[np.float64]:
    return np.array([0.1, 0.001, 0.05, 0.05])


def default_prior_cov() -> NDArray[np.float64]:
    return np.diag([1e-2, 1e-4, 1e-2, 1e-2])


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    ukf: UkfConfig = field(default_factory=UkfConfig)
    enkf: EnkfConfig = field(default_factory=EnkfConfig)
    trials: int = 11
    prior_mean_offset: NDArray[np.float64] = field(default_factory=default_prior_offset)
    prior_cov: NDArray[np.float64] = field(default_factory=default_prior_cov)
    warmup: float = 1.0
    workers: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        self.prior_mean_offset = np.array(self.prior_mean_offset, dtype=float)
        self.prior_cov = np.array(self.prior_cov, dtype=float)
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")
        self.trials = int(self.trials)
        if self.prior_mean_offset.shape != (4,) or not np.all(np.isfinite(self.prior_mean_offset)):
            raise ValueError(f"prior_mean_offset must be 4 finite values, got {self.prior_mean_offset}")
        if self.prior_cov.shape != (4, 4):
            raise ValueError(f"prior_cov must be 4x4, got shape {self.prior_cov.shape}")
        check_covariance("prior_cov", self.prior_cov)
        if not (math.isfinite(self.warmup) and self.warmup >= 0):
            raise ValueError(f"warmup must be non-negative, got {self.warmup}")
        if self.workers < 0:
            raise ValueError(f"workers must be >= 0, got {self.workers}")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    def resolved_workers(self) -> int:
        """Pool width; 0 means the number of available cores."""
        return self.workers or (os.cpu_count() or 1)


@dataclass
class FilterRun:
    """Per-record output of one filter over one stream."""

    kind: str
    times: NDArray[np.float64]
    beliefs: List[BeliefState]
    predicted_measurements: NDArray[np.float64]
    step_seconds: NDArray[np.float64]
    updated: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.beliefs)

    def means(self) -> NDArray[np.float64]:
        if not self.beliefs:
            return np.empty((0, 4))
        return np.array([b.mean for b in self.beliefs])

    def variances(self) -> NDArray[np.float64]:
        if not self.beliefs:
            return np.empty((0, 4))
        return np.array([np.diag(b.cov) for b in self.beliefs])


@dataclass
class MseReport:
    """Median per-state MSE and per-step timing of each filter over all trials."""

    filters: Tuple[str, ...]
    mse: Dict[str, NDArray[np.float64]]
    per_trial: Dict[str, NDArray[np.float64]]
    timing: Dict[str, Tuple[float, float]]
    trials: int
    seed: int
    checksums: List[str] = field(default_factory=list)
    noise_label: str = "mixture"
    example_runs: Dict[str, FilterRun] = field(default_factory=dict)
    example_truth: Optional[TruthTrajectory] = None


@dataclass
class TrialResult:
    index: int
    checksum: str
    mse: Dict[str, NDArray[np.float64]]
    step_seconds: Dict[str, NDArray[np.float64]]
    runs: Dict[str, FilterRun] = field(default_factory=dict)


# ==============================================================================
# SINGLE RUNS
# ==============================================================================

def initial_prior(truth: TruthTrajectory, cfg: ExperimentConfig) -> BeliefState:
    """True initial state shifted by the configured offsets."""
    return BeliefState(mean=truth.states[0] + cfg.prior_mean_offset, cov=cfg.prior_cov.copy())


def run_filter(
    records: Sequence[PmuRecord],
    kind: str,
    cfg: ExperimentConfig,
    prior: BeliefState,
    rng: Optional[RngStream] = None,
) -> FilterRun:
    """
    Run one filter over a record stream.

    The first record is assimilated into the prior directly. Every later
    record is preceded by a prediction over the gap since the previous
    record, holding the previous record's V_t for the whole interval. A
    record whose P or Q is NaN is treated as missing: the step keeps the
    predicted belief.

    Args:
        records: Time-ordered PMU records. The prediction into record k
            holds record k-1's V_t over the interval (zero-order hold, as
            in the truth integration); record k's own V_t is used only for
            its measurement map.
        kind: "ukf" or "enkf".
        cfg: Experiment configuration (model, filter tuning).
        prior: Belief at the first record time.
        rng: Stream for the ensemble draws; defaults to one seeded from cfg.

    Raises:
        FilterStepError: wrapping the first filter failure.
    """
    if kind not in FILTER_KINDS:
        raise ValueError(f"Unknown filter kind '{kind}', expected one of {FILTER_KINDS}")
    times = np.array([r.t for r in records], dtype=float)
    if len(times) > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("Record times must be strictly increasing")

    params = cfg.scenario.params
    base = cfg.scenario.initial_inputs
    substeps = cfg.scenario.substeps

    beliefs: List[BeliefState] = []
    predicted = np.empty((len(records), 2))
    seconds = np.empty(len(records))
    updated = np.zeros(len(records), dtype=bool)
    if not records:
        return FilterRun(kind, times, beliefs, predicted, seconds, updated)

    ensemble = None
    if kind == "enkf":
        ensemble = enkf.enkf_init(prior, cfg.enkf, rng if rng is not None else make_rng(cfg.seed))
    belief = prior

    for k, rec in enumerate(records):
        start = time.perf_counter()
        try:
            u_now = replace(base, vt=rec.vt)
            if k > 0:
                prev = records[k - 1]
                u_prev = replace(base, vt=prev.vt)
                dt = rec.t - prev.t
                if kind == "ukf":
                    belief = ukf.ukf_predict(belief, u_prev, params, cfg.ukf, dt, substeps)
                else:
                    ensemble = enkf.enkf_predict(ensemble, u_prev, params, cfg.enkf, dt, substeps)

            mean_now = belief.mean if kind == "ukf" else ensemble.members.mean(axis=0)
            predicted[k] = genmodel.measure(mean_now, u_now, params)

            if math.isfinite(rec.pt) and math.isfinite(rec.qt):
                y = (rec.pt, rec.qt)
                if kind == "ukf":
                    belief = ukf.ukf_update(belief, y, u_now, params, cfg.ukf)
                else:
                    ensemble = enkf.enkf_update(ensemble, y, u_now, params, cfg.enkf)
                updated[k] = True

            if kind == "enkf":
                belief = enkf.ensemble_stats(ensemble)
        except Exception as exc:
            raise FilterStepError(f"{kind} failed at step {k} (t={rec.t:.6g}s): {exc}", kind, k) from exc
        seconds[k] = time.perf_counter() - start
        beliefs.append(belief)

    skipped = int((~updated).sum())
    if skipped:
        logger.info(f"{kind}: {skipped} records without P/Q ran as prediction-only steps")
    return FilterRun(kind, times, beliefs, predicted, seconds, updated)


def mse(
    estimates: Sequence[BeliefState],
    truth: TruthTrajectory,
    warmup: float = 1.0,
) -> NDArray[np.float64]:
    """
    Per-state mean of (estimate - truth)^2 over ticks with t >= warmup.

    Raises:
        LengthMismatch: if the sequences differ in length.
        ValueError: if no tick lies after the warmup.
    """
    if len(estimates) != len(truth):
        raise LengthMismatch(f"{len(estimates)} estimates for {len(truth)} truth ticks")
    mask = truth.times >= warmup
    if not mask.any():
        raise ValueError(f"No ticks at or after warmup={warmup}s")
    means = np.array([b.mean for b in estimates])
    err = means[mask] - truth.states[mask]
    return np.mean(err * err, axis=0)


def squared_errors(run: FilterRun, truth: TruthTrajectory) -> NDArray[np.float64]:
    """Per-tick squared error of each state, shape (K, 4)."""
    if len(run) != len(truth):
        raise LengthMismatch(f"{len(run)} estimates for {len(truth)} truth ticks")
    err = run.means() - truth.states
    return err * err


# ==============================================================================
# EXPERIMENTS
# ==============================================================================

def _run_trial(
    cfg: ExperimentConfig,
    truth: TruthTrajectory,
    index: int,
    filters: Tuple[str, ...],
    noise: NoiseSpec,
    keep_runs: bool,
) -> TrialResult:
    try:
        noise_rng, ensemble_rng = trial_streams(cfg.seed, index, 2)
        records = scenario.corrupt(truth, noise, noise_rng, cfg.scenario.vt_noise)
        checksum = scenario.records_checksum(records)
        prior = initial_prior(truth, cfg)

        result = TrialResult(index=index, checksum=checksum, mse={}, step_seconds={})
        for kind in filters:
            run = run_filter(records, kind, cfg, prior, ensemble_rng if kind == "enkf" else None)
            result.mse[kind] = mse(run.beliefs, truth, cfg.warmup)
            result.step_seconds[kind] = run.step_seconds
            if keep_runs:
                result.runs[kind] = run
    except Exception as exc:
        raise TrialError(f"trial {index}: {exc}", index) from exc
    logger.info(f"Trial {index} done ({checksum[:12]})")
    return result


def run_experiment(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    filters: Tuple[str, ...] = FILTER_KINDS,
    noise: Optional[NoiseSpec] = None,
    noise_label: str = "mixture",
) -> MseReport:
    """
    Simulate the truth once, then run ``cfg.trials`` seeded trials.

    Every trial draws one corrupted stream from its own seed and feeds it
    to all requested filters from the same prior. Trials may run in a
    process pool; results are joined in trial order, so the report does not
    depend on the pool width.
    """
    noise = cfg.scenario.noise if noise is None else noise
    width = cfg.resolved_workers() if workers is None else max(1, int(workers) or (os.cpu_count() or 1))
    width = min(width, cfg.trials)
    logger.info(
        f"Experiment: {cfg.trials} trials, filters={','.join(filters)}, noise={noise_label}, "
        f"seed={cfg.seed}, workers={width}"
    )
    truth = scenario.simulate_truth(cfg.scenario)

    if width > 1:
        with ProcessPoolExecutor(max_workers=width) as pool:
            futures = [
                pool.submit(_run_trial, cfg, truth, i, filters, noise, i == 0)
                for i in range(cfg.trials)
            ]
            results = [f.result() for f in futures]
    else:
        results = [_run_trial(cfg, truth, i, filters, noise, i == 0) for i in range(cfg.trials)]

    per_trial = {kind: np.array([r.mse[kind] for r in results]) for kind in filters}
    report = MseReport(
        filters=tuple(filters),
        mse={kind: np.median(per_trial[kind], axis=0) for kind in filters},
        per_trial=per_trial,
        timing={kind: timing_stats(np.concatenate([r.step_seconds[kind] for r in results])) for kind in filters},
        trials=cfg.trials,
        seed=cfg.seed,
        checksums=[r.checksum for r in results],
        noise_label=noise_label,
        example_runs=results[0].runs,
        example_truth=truth,
    )
    for kind in filters:
        mean_ms, p95_ms = report.timing[kind]
        logger.info(f"{kind}: median MSE {report.mse[kind]}, step {mean_ms:.3f} ms mean / {p95_ms:.3f} ms p95")
        if p95_ms > STEP_BUDGET_MS:
            logger.warning(f"{kind}: p95 step time {p95_ms:.2f} ms exceeds the 60 SPS interval")
    return report


def timing_stats(step_seconds: NDArray[np.float64]) -> Tuple[float, float]:
    """Mean and 95th percentile of step times, in milliseconds."""
    if step_seconds.size == 0:
        return 0.0, 0.0
    ms = step_seconds * 1000.0
    return float(np.mean(ms)), float(np.percentile(ms, 95))


def gaussian_noise_spec(noise: NoiseSpec) -> NoiseSpec:
    """Each channel replaced by its moment-matched Gaussian."""
    return NoiseSpec(
        p=mixnoise.matched_gaussian(noise.p),
        q=mixnoise.matched_gaussian(noise.q),
        vt=None if noise.vt is None else mixnoise.matched_gaussian(noise.vt),
    )


def run_noise_comparison(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    labels: Sequence[str] = ("mixture", "gaussian"),
) -> Dict[str, MseReport]:
    """Run the experiment under the mixture noise and under its matched Gaussian."""
    reports = {}
    for label in labels:
        if label == "mixture":
            noise = cfg.scenario.noise
        elif label == "gaussian":
            noise = gaussian_noise_spec(cfg.scenario.noise)
        else:
            raise ValueError(f"Unknown noise label '{label}'")
        reports[label] = run_experiment(cfg, workers=workers, noise=noise, noise_label=label)
    return reports


def sweep_ensemble_size(
    cfg: ExperimentConfig,
    sizes: Sequence[int],
    workers: Optional[int] = None,
) -> pd.DataFrame:
    """
    EnKF median MSE and step timing for each ensemble size.

    Returns:
        DataFrame with columns ensemble_size, state, mse, mean_ms, p95_ms.
    """
    if not sizes:
        raise ValueError("At least one ensemble size is required")
    rows = []
    for size in sizes:
        sized = replace(cfg, enkf=replace(cfg.enkf, ensemble_size=int(size)))
        report = run_experiment(sized, workers=workers, filters=("enkf",))
        mean_ms, p95_ms = report.timing["enkf"]
        for name, value in zip(STATE_NAMES, report.mse["enkf"]):
            rows.append({"ensemble_size": int(size), "state": name, "mse": float(value),
                         "mean_ms": mean_ms, "p95_ms": p95_ms})
    return pd.DataFrame(rows, columns=["ensemble_size", "state", "mse", "mean_ms", "p95_ms"])


def compare_filters(report: MseReport, reference: str = "ukf", candidate: str = "enkf") -> List[Dict[str, object]]:
    """
    Per-state verdict of ``candidate`` against ``reference``.

    Returns:
        One dict per state with both MSEs, the reference/candidate ratio
        and the better filter.
    """
    rows = []
    for i, name in enumerate(STATE_NAMES):
        ref = float(report.mse[reference][i])
        cand = float(report.mse[candidate][i])
        ratio = ref / cand if cand > 0 else math.inf
        rows.append({
            "state": name,
            reference: ref,
            candidate: cand,
            "ratio": ratio,
            "better": candidate if cand < ref else reference,
        })
    return rows


# ==============================================================================
# REPORT FILES
# ==============================================================================

def _require_dir(path: PathLike) -> Path:
    out = Path(path)
    if not out.is_dir():
        raise FileNotFoundError(f"Output directory does not exist: {out}")
    return out


def _write_csv(df: pd.DataFrame, path: Path) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {path}")


def emit_report(r: MseReport, path: PathLike) -> List[Path]:
    """
    Write mse.csv, mse_trials.csv and timing.csv into directory ``path``.

    Only mse.csv and mse_trials.csv are deterministic; wall-clock numbers
    go to timing.csv alone.

    Raises:
        FileNotFoundError: if the directory is missing.
    """
    out = _require_dir(path)
    mse_rows = [
        {"filter": kind, "state": name, "mse": float(value), "trials": r.trials, "seed": r.seed}
        for kind in r.filters
        for name, value in zip(STATE_NAMES, r.mse[kind])
    ]
    trial_rows = [
        {"filter": kind, "trial": t, "state": name, "mse": float(value)}
        for kind in r.filters
        for t, row in enumerate(r.per_trial[kind])
        for name, value in zip(STATE_NAMES, row)
    ]
    timing_rows = [
        {"filter": kind, "mean_ms": r.timing[kind][0], "p95_ms": r.timing[kind][1]}
        for kind in r.filters
    ]
    files = [out / "mse.csv", out / "mse_trials.csv", out / "timing.csv"]
    _write_csv(pd.DataFrame(mse_rows, columns=["filter", "state", "mse", "trials", "seed"]), files[0])
    _write_csv(pd.DataFrame(trial_rows, columns=["filter", "trial", "state", "mse"]), files[1])
    _write_csv(pd.DataFrame(timing_rows, columns=["filter", "mean_ms", "p95_ms"]), files[2])
    return files


def write_timing(runs: Sequence[FilterRun], path: PathLike) -> None:
    rows = [{"filter": run.kind, "mean_ms": m, "p95_ms": p}
            for run in runs for m, p in [timing_stats(run.step_seconds)]]
    _write_csv(pd.DataFrame(rows, columns=["filter", "mean_ms", "p95_ms"]), Path(path))


def write_estimates(run: FilterRun, path: PathLike) -> None:
    """Persist belief means and marginal variances per tick."""
    rows = np.column_stack([run.times, run.means(), run.variances()]) if len(run) else []
    scenario.write_table(rows, ESTIMATE_COLUMNS, path)
    logger.info(f"Wrote {len(run)} {run.kind} estimates to {path}")


def read_estimates(path: PathLike, kind: str = "") -> FilterRun:
    """
    Load an estimates file. Off-diagonal covariance terms are not stored and
    come back as zero; timings and predicted measurements as NaN.
    """
    values = scenario.read_table(path, ESTIMATE_COLUMNS)
    beliefs = [BeliefState(mean=row[1:5], cov=np.diag(row[5:9])) for row in values]
    n = len(values)
    return FilterRun(
        kind=kind or Path(path).stem.replace("estimates_", ""),
        times=values[:, 0],
        beliefs=beliefs,
        predicted_measurements=np.full((n, 2), np.nan),
        step_seconds=np.full(n, np.nan),
        updated=np.ones(n, dtype=bool),
    )
