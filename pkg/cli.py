"""
Command Line Interface for the DSE Toolkit

    python cli.py [--seed U64] [--log-level LEVEL] <command> ...

Commands: simulate, estimate, compare, plot, sweep. Each writes its files
into ``--out`` (or the configured output directory) and exits non-zero
with a one-line diagnostic on any failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import genmodel
import harness
import scenario
import svg_plots
from config_manager import ConfigManager, load_config
from matstat import trial_streams
from ukf import BeliefState

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _parse_seed(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got '{text}'") from None
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64), got {seed}")
    return seed


def _parse_sizes(text: str) -> List[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"sizes must be comma-separated integers, got '{text}'") from None
    if not sizes or min(sizes) < 2:
        raise argparse.ArgumentTypeError("every ensemble size must be >= 2")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description="Dynamic state estimation of a synchronous machine from PMU data: UKF vs EnKF.",
    )
    parser.add_argument("--seed", type=_parse_seed, default=None, help="Override experiment.seed")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="key = value config file (defaults apply when omitted)")
        p.add_argument("--out", default=None, help="Output directory (overrides config and DSE_OUTPUT_DIR)")

    p = sub.add_parser("simulate", help="Write truth.csv and records.csv")
    common(p)

    p = sub.add_parser("estimate", help="Run one filter over a record file")
    common(p)
    p.add_argument("--filter", required=True, choices=harness.FILTER_KINDS)
    p.add_argument("--records", required=True)
    p.add_argument("--truth", default=None, help="Truth file; sets the prior and logs the MSE")

    p = sub.add_parser("compare", help="Seeded UKF vs EnKF trials")
    common(p)
    p.add_argument("--noise", default="mixture", choices=["mixture", "gaussian", "both"])
    p.add_argument("--workers", type=int, default=None, help="Pool width, 0 = available cores")

    p = sub.add_parser("plot", help="SVG figures from truth and estimate files")
    p.add_argument("--truth", required=True)
    p.add_argument("--est", required=True, nargs="+")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="EnKF accuracy and cost against ensemble size")
    common(p)
    p.add_argument("--sizes", type=_parse_sizes, default=[10, 25, 50, 100, 200])
    p.add_argument("--workers", type=int, default=None)
    return parser


def _output_dir(args: argparse.Namespace, manager: Optional[ConfigManager]) -> Path:
    out = Path(args.out) if args.out else Path(manager.output_dir())
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args: argparse.Namespace) -> List[Path]:
    manager = load_config(args.config)
    cfg = manager.build_scenario_config(args.seed)
    out = _output_dir(args, manager)
    truth = scenario.simulate_truth(cfg)
    noise_rng, _ = trial_streams(cfg.seed, 0, 2)
    records = scenario.corrupt(truth, cfg.noise, noise_rng, cfg.vt_noise)
    files = [out / "truth.csv", out / "records.csv"]
    scenario.write_truth(truth, files[0])
    scenario.write_records(records, files[1])
    logger.info(f"records checksum {scenario.records_checksum(records)}")
    return files


def cmd_estimate(args: argparse.Namespace) -> List[Path]:
    manager = load_config(args.config)
    cfg = manager.build_experiment_config(args.seed)
    out = _output_dir(args, manager)
    records = scenario.read_records(args.records)
    truth = scenario.read_truth(args.truth) if args.truth else None

    if truth is not None:
        prior = harness.initial_prior(truth, cfg)
    else:
        x0 = genmodel.find_equilibrium(cfg.scenario.initial_inputs, cfg.scenario.params)
        prior = BeliefState(mean=x0 + cfg.prior_mean_offset, cov=cfg.prior_cov)

    _, ensemble_rng = trial_streams(cfg.seed, 0, 2)
    run = harness.run_filter(records, args.filter, cfg, prior, ensemble_rng)
    files = [out / f"estimates_{args.filter}.csv", out / "timing.csv"]
    harness.write_estimates(run, files[0])
    harness.write_timing([run], files[1])
    if truth is not None:
        logger.info(f"{args.filter} MSE after {cfg.warmup}s: {harness.mse(run.beliefs, truth, cfg.warmup)}")
    return files


def cmd_compare(args: argparse.Namespace) -> List[Path]:
    manager = load_config(args.config)
    cfg = manager.build_experiment_config(args.seed)
    out = _output_dir(args, manager)
    labels = ["mixture", "gaussian"] if args.noise == "both" else [args.noise]
    reports = harness.run_noise_comparison(cfg, workers=args.workers, labels=labels)

    files = []
    for label, report in reports.items():
        target = out if len(reports) == 1 else out / label
        target.mkdir(exist_ok=True)
        files.extend(harness.emit_report(report, target))
        files.extend(svg_plots.emit_plots(report.example_truth, report.example_runs, target))
        for row in harness.compare_filters(report):
            logger.info(
                f"[{label}] {row['state']}: UKF {row['ukf']:.3e} / EnKF {row['enkf']:.3e} "
                f"= {row['ratio']:.2f} ({row['better']} better)"
            )
    return files


def cmd_plot(args: argparse.Namespace) -> List[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = scenario.read_truth(args.truth)
    estimates = {}
    for path in args.est:
        run = harness.read_estimates(path)
        estimates[run.kind] = run
    return svg_plots.emit_plots(truth, estimates, out)


def cmd_sweep(args: argparse.Namespace) -> List[Path]:
    manager = load_config(args.config)
    cfg = manager.build_experiment_config(args.seed)
    out = _output_dir(args, manager)
    table = harness.sweep_ensemble_size(cfg, args.sizes, workers=args.workers)
    path = out / "sweep.csv"
    table.to_csv(path, index=False, float_format=scenario.FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {path}")
    return [path]


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "plot": cmd_plot,
    "sweep": cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        files = COMMANDS[args.command](args)
    except Exception as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
