"""Command-line surface: calibrate once, predict, evaluate, and reason
about what the calibration size buys.

Every successful run prints a single JSON document on stdout; diagnostics
go to stderr. Exit codes: 0 success, 2 usage error, 3 input/validation
error, 4 planner found no qualifying calibration size.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fileio
from .core import (
    LabelSpace,
    calibrate,
    evaluate_coverage,
    predict_set,
    score_record,
)
from .errors import ConfigurationError, InputError
from .guarantees import (
    GuaranteeQuery,
    PlanSpec,
    coverage_law,
    marginal_coverage_exact,
    plan_min_m,
    shortfall_probability,
    vovk_delta,
)
from .simulation import (
    SAMPLING_MODES,
    WITHOUT_REPLACEMENT,
    EmpiricalPoolSource,
    SimulationConfig,
    SyntheticUniformSource,
    run_simulation,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NOT_FOUND = 4

_EXIT_EPILOG = (
    "exit codes: 0 success; 2 usage error; 3 input/validation error; "
    "4 planner found no qualifying m"
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {getattr(exc, 'filename', '')}", file=sys.stderr)
        return EXIT_INPUT


def _emit(doc) -> None:
    sys.stdout.write(fileio.render_json(doc).decode("utf-8"))


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_calibrate(args: argparse.Namespace) -> int:
    records = fileio.parse_probability_file(_read(args.scores))
    unlabeled = [i + 2 for i, r in enumerate(records) if r.label is None]
    if unlabeled:
        rows = ", ".join(str(r) for r in unlabeled)
        raise InputError(f"calibration requires labeled rows; rows without label: {rows}")
    if not records:
        raise InputError(f"no data rows in {args.scores}")
    scores = [score_record(r, r.label) for r in records]
    predictor = calibrate(
        scores,
        args.alpha,
        jitter=args.jitter if args.jitter is not None else 0.0,
        jitter_seed=args.seed,
    )
    if predictor.ties_warning:
        print(
            "warning: duplicate calibration scores; exactness results assume "
            "continuous scores (consider --jitter)",
            file=sys.stderr,
        )
    if predictor.covers_all:
        print(
            f"note: calibration size {predictor.m} is too small for "
            f"alpha={args.alpha}; prediction sets will contain every class",
            file=sys.stderr,
        )
    payload = fileio.serialize_predictor(predictor)
    Path(args.out).write_bytes(payload)
    sys.stdout.write(payload.decode("utf-8"))
    return EXIT_OK


def _cmd_predict(args: argparse.Namespace) -> int:
    predictor = fileio.parse_predictor(_read(args.model))
    records = fileio.parse_probability_file(_read(args.scores))
    if not records:
        raise InputError(f"no data rows in {args.scores}")
    space = LabelSpace(records[0].num_classes)
    lines = ["id,set_size,labels"]
    n_empty = 0
    n_forced = 0
    total_size = 0
    for record in records:
        pset = predict_set(record, predictor, label_space=space)
        if pset.set_size == 0:
            n_empty += 1
            if args.force_nonempty:
                pset = predict_set(
                    record, predictor, label_space=space, force_nonempty=True
                )
                n_forced += 1
        total_size += pset.set_size
        labels = ";".join(str(c) for c in sorted(pset.labels))
        lines.append(f"{record.id},{pset.set_size},{labels}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(
        {
            "rows": len(records),
            "mean_set_size": total_size / len(records),
            "n_empty": n_empty,
            "n_forced": n_forced,
            "out": args.out,
        }
    )
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    predictor = fileio.parse_predictor(_read(args.model))
    records = fileio.parse_probability_file(_read(args.scores))
    if not records:
        raise InputError(f"no data rows in {args.scores}")
    unlabeled = [i + 2 for i, r in enumerate(records) if r.label is None]
    if unlabeled:
        rows = ", ".join(str(r) for r in unlabeled)
        raise InputError(f"evaluation requires labeled rows; rows without label: {rows}")
    space = LabelSpace(records[0].num_classes)
    report = evaluate_coverage(records, predictor, label_space=space)
    doc = {
        "n_eval": report.n_eval,
        "empirical_coverage": report.empirical_coverage,
        "mean_set_size": report.mean_set_size,
    }
    if args.force_nonempty:
        forced = evaluate_coverage(
            records, predictor, label_space=space, force_nonempty=True
        )
        doc["empirical_coverage_forced"] = forced.empirical_coverage
        doc["mean_set_size_forced"] = forced.mean_set_size
    _emit(doc)
    return EXIT_OK


def _cmd_bound(args: argparse.Namespace) -> int:
    query = GuaranteeQuery(m=args.m, alpha=args.alpha, epsilon=args.epsilon)
    _emit(
        {
            "m": query.m,
            "alpha": query.alpha,
            "epsilon": query.epsilon,
            "alpha_tilde": query.alpha_tilde,
            "delta": vovk_delta(query),
        }
    )
    return EXIT_OK


def _cmd_coverage_dist(args: argparse.Namespace) -> int:
    law = coverage_law(args.m, args.alpha)
    doc = {
        "m": law.m,
        "alpha": law.alpha,
        "degenerate": law.degenerate,
        "a": None if law.degenerate else law.a,
        "b": None if law.degenerate else law.b,
        "mean": law.mean,
        "marginal_coverage": marginal_coverage_exact(args.m, args.alpha),
    }
    if args.threshold is not None:
        doc["threshold"] = args.threshold
        doc["shortfall_probability"] = shortfall_probability(law, args.threshold)
    _emit(doc)
    return EXIT_OK


def _cmd_plan(args: argparse.Namespace) -> int:
    spec = PlanSpec(
        alpha=args.alpha,
        epsilon=args.epsilon,
        delta_target=args.delta,
        m_max=args.m_max,
    )
    result = plan_min_m(spec)
    _emit(
        {
            "found": result.found,
            "m_min": result.m_min,
            "delta_at_m_min": result.delta_at_m_min,
            "scanned_up_to": result.scanned_up_to,
        }
    )
    if not result.found:
        print(
            f"no m <= {spec.m_max} meets delta <= {spec.delta_target}; "
            "raise --m-max or relax the target",
            file=sys.stderr,
        )
        return EXIT_NOT_FOUND
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    if args.pool is not None:
        records = fileio.parse_probability_file(_read(args.pool))
        source = EmpiricalPoolSource.from_records(records)
    else:
        source = SyntheticUniformSource(num_classes=args.classes)
    config = SimulationConfig(
        m=args.m,
        alpha=args.alpha,
        trials=args.trials,
        eval_size=args.eval,
        seed=args.seed,
        shortfall_threshold=args.threshold,
        sampling=args.sampling,
        histogram_bins=args.bins,
    )
    report = run_simulation(config, source, n_jobs=args.jobs)
    files = fileio.write_report(report)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, payload in files.items():
        (out_dir / name).write_bytes(payload)
    sys.stdout.write(files[fileio.REPORT_JSON_NAME].decode("utf-8"))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitcp",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "calibrate",
        help="select a conformal threshold from a labeled score file",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--scores", required=True, metavar="FILE", help="probability table; every row must be labeled")
    p.add_argument("--alpha", required=True, type=float, help="miscoverage level in (0, 1)")
    p.add_argument(
        "--jitter",
        nargs="?",
        type=float,
        const=1e-9,
        default=None,
        metavar="MAG",
        help="add Uniform[0, MAG) noise to break score ties (default MAG 1e-9)",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for the jitter noise stream")
    p.add_argument("--out", required=True, metavar="FILE", help="where to write the predictor document")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser(
        "predict",
        help="apply one frozen predictor to many rows",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--model", required=True, metavar="FILE", help="predictor document")
    p.add_argument("--scores", required=True, metavar="FILE", help="probability table (labels optional)")
    p.add_argument(
        "--force-nonempty",
        action="store_true",
        help="replace empty prediction sets with the single lowest-score class (reported, never silent)",
    )
    p.add_argument("--out", required=True, metavar="FILE", help="where to write the id,set_size,labels table")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser(
        "evaluate",
        help="empirical coverage of a predictor on labeled rows",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--model", required=True, metavar="FILE", help="predictor document")
    p.add_argument("--scores", required=True, metavar="FILE", help="probability table; every row must be labeled")
    p.add_argument(
        "--force-nonempty",
        action="store_true",
        help="also report coverage with empty sets replaced by the lowest-score class",
    )
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser(
        "bound",
        help="conditional-validity delta for (m, alpha, epsilon)",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--m", required=True, type=int, help="calibration size")
    p.add_argument("--alpha", required=True, type=float, help="miscoverage level in (0, 1)")
    p.add_argument("--epsilon", required=True, type=float, help="coverage slack > 0")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser(
        "coverage-dist",
        help="exact law of calibration-conditional coverage",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--m", required=True, type=int, help="calibration size")
    p.add_argument("--alpha", required=True, type=float, help="miscoverage level in (0, 1)")
    p.add_argument(
        "--threshold",
        type=float,
        default=None,
        help="also report the probability of conditional coverage below this value",
    )
    p.set_defaults(func=_cmd_coverage_dist)

    p = sub.add_parser(
        "plan",
        help="smallest calibration size meeting an (alpha, epsilon, delta) target",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--alpha", required=True, type=float, help="miscoverage level in (0, 1)")
    p.add_argument("--epsilon", required=True, type=float, help="coverage slack > 0")
    p.add_argument("--delta", required=True, type=float, help="target failure probability in (0, 1]")
    p.add_argument("--m-max", type=int, default=1000, help="scan cap (default 1000)")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser(
        "simulate",
        help="Monte Carlo over calibration draws; writes report.json + histogram.csv",
        epilog=_EXIT_EPILOG,
    )
    p.add_argument("--m", required=True, type=int, help="calibration size per trial")
    p.add_argument("--alpha", required=True, type=float, help="miscoverage level in (0, 1)")
    p.add_argument("--trials", type=int, default=10000, help="number of calibration draws (default 10000)")
    p.add_argument("--eval", type=int, default=1000, help="held-out draws per trial (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="64-bit master seed (default 0)")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--pool", metavar="FILE", help="labeled probability table to subsample per trial"
    )
    source.add_argument(
        "--synthetic",
        choices=["uniform"],
        help="tie-free synthetic score source with uniform conformity scores",
    )
    p.add_argument("--classes", type=int, default=2, help="class count for the synthetic source (default 2)")
    p.add_argument(
        "--threshold",
        type=float,
        default=0.85,
        help="shortfall threshold on conditional coverage (default 0.85)",
    )
    p.add_argument(
        "--sampling",
        choices=list(SAMPLING_MODES),
        default=WITHOUT_REPLACEMENT,
        help="pool sampling mode (default without-replacement; never falls back silently)",
    )
    p.add_argument("--bins", type=int, default=40, help="histogram bin count (default 40)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads for trials (default 1)")
    p.add_argument("--out", required=True, metavar="DIR", help="directory for report.json and histogram.csv")
    p.set_defaults(func=_cmd_simulate)

    return parser


if __name__ == "__main__":
    sys.exit(main())
