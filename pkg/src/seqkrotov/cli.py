"""Command-line entry point.

Commands::

    seqkrotov run --config RUN.json [--out DIR] [--seed N]
    seqkrotov study NAME [--config STUDY.json] [--out DIR] [--seed N] [--jobs N] [--full-scale]
    seqkrotov fit-rate TRACE.csv [--out DIR]
    seqkrotov validate-config RUN.json [--study NAME]

Exit status: 0 on success, 2 for usage or configuration errors, 3 when a run
aborts on a non-finite fidelity (the trace up to the last finite record is
still written).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from seqkrotov import studies
from seqkrotov.config import (
    ConfigError,
    build_run,
    load_json,
    resolve_run,
    resolve_study,
    validate_run,
    validate_study,
)
from seqkrotov.io import read_trace_csv, write_json, write_trace_csv
from seqkrotov.optimizer import NumericalFailure, OptimizationTrace
from seqkrotov.problems import Problem1Config
from seqkrotov.rates import RateFitError, fit_rate_model

log = logging.getLogger("seqkrotov")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _seed(text):
    from seqkrotov.seeding import check_seed

    try:
        return check_seed(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _parser():
    p = argparse.ArgumentParser(prog="seqkrotov", description="Sequential-update optimal control runs and studies.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one optimization from a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--seed", type=_seed)

    st = sub.add_parser("study", help="run a named reproduction study")
    st.add_argument("name", choices=studies.STUDIES)
    st.add_argument("--config", type=Path)
    st.add_argument("--out", type=Path, default=Path("out"))
    st.add_argument("--seed", type=_seed)
    st.add_argument("--jobs", type=int, default=1)
    st.add_argument("--full-scale", action="store_true", help="use the 5-qubit problem")

    fr = sub.add_parser("fit-rate", help="fit the convergence-rate model to a trace CSV")
    fr.add_argument("trace", type=Path)
    fr.add_argument("--out", type=Path)

    vc = sub.add_parser("validate-config", help="check a config file against the schema")
    vc.add_argument("config", type=Path)
    vc.add_argument("--study", choices=studies.STUDIES)
    return p


class _Guard:
    """Callback keeping finite records and stopping at the first non-finite fidelity."""

    def __init__(self):
        self.trace = OptimizationTrace()

    def __call__(self, record, field):
        if not math.isfinite(record.fidelity) or not np.all(np.isfinite(field)):
            raise NumericalFailure(f"non-finite fidelity at iteration {record.n}")
        self.trace.append(record)


def cmd_run(args):
    cfg = resolve_run(load_json(args.config), seed=args.seed)
    problem, est = build_run(cfg)
    name = cfg["output"]["name"]
    out = args.out
    guard = _Guard()
    status, error = EXIT_OK, None
    try:
        est.fit(problem, callback=guard)
        trace = est.trace_
        summary = {
            "status": "ok",
            "stop_reason": est.stop_reason_,
            "n_iter": est.n_iter_,
            "fidelity": est.fidelity_,
            "infidelity": 1.0 - est.fidelity_,
        }
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        # the initial record is never seen by the callback
        trace = OptimizationTrace()
        if getattr(est, "trace_", None) is not None and len(est.trace_):
            trace.append(est.trace_[0])
        for rec in guard.trace:
            trace.append(rec)
        status, error = EXIT_NUMERIC, str(exc)
        last = trace[-1] if len(trace) else None
        summary = {
            "status": "aborted",
            "error": error,
            "n_iter": last.n if last else None,
            "fidelity": last.fidelity if last else None,
        }
    csv_path = write_trace_csv(out / f"{name}.csv", trace)
    summary.update(config=cfg, trace=str(csv_path))
    json_path = write_json(out / f"{name}.json", summary)
    if error:
        log.error("run aborted: %s (trace up to the last finite record in %s)", error, csv_path)
    else:
        log.info("fidelity %.12g after %d iterations (%s); wrote %s and %s",
                 est.fidelity_, est.n_iter_, est.stop_reason_, csv_path, json_path)
    return status


_STUDY_FUNCS = {
    "grad-overlap": studies.gradient_overlap_study,
    "strategies": studies.strategy_comparison_study,
    "hessian-scalar": studies.hessian_scalarization_study,
    "penalty": studies.penalty_study,
}


def cmd_study(args):
    doc = load_json(args.config) if args.config else {}
    resolved = resolve_study(args.name, doc, seed=args.seed, full_scale=args.full_scale)
    cfg = Problem1Config(seed=resolved["seed"], **resolved["problem"])
    params = resolved["params"]
    if args.name == "rate-fit":
        trace_path = params.pop("trace", None)
        if trace_path is not None:
            report = studies.rate_fit_study(errors=read_trace_csv(trace_path)["infidelity"])
            report.parameters["trace"] = trace_path
        else:
            report = studies.rate_fit_study(cfg=cfg, **params)
    else:
        if args.name == "strategies":
            params["jobs"] = args.jobs
        report = _STUDY_FUNCS[args.name](cfg, **params)
    report.parameters["jobs"] = args.jobs
    path = report.write(args.out)
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_fit_rate(args):
    data = read_trace_csv(args.trace)
    fit = fit_rate_model(data["infidelity"], n=data["n"])
    result = {"trace": str(args.trace), **fit}
    if args.out:
        write_json(Path(args.out) / "rate_fit.json", result)
    print(" ".join(f"{k}={v!r}" for k, v in fit.items()))
    return EXIT_OK


def cmd_validate(args):
    doc = load_json(args.config)
    if args.study:
        validate_study(args.study, doc)
    else:
        validate_run(doc)
    print(f"{args.config}: valid")
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "study": cmd_study, "fit-rate": cmd_fit_rate, "validate-config": cmd_validate}


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RateFitError as exc:
        print(f"rate fit failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
