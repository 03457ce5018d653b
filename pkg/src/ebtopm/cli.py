"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 input or data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .estimation import GridSpec, default_atom_grid, default_scale_grid, fit_normal, fit_npmle, fit_scale_mixture
from .ingestion import empirical_sigma_distribution, format_observations_csv, ingest, read_observations_csv
from .priors import dumps_prior, loads_prior, posterior_moments
from .selection import score_units, top_m_indices
from .simulation import (
    SharpnessConfig,
    StudyConfig,
    fmt_float,
    run_scaling_study,
    run_sharpness_study,
    write_summary,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _read_json(path):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _write_bytes(path, data: bytes):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _print_json(doc):
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")


def cmd_ingest(args):
    ids, obs, report = ingest(_read_bytes(args.input), args.min_impressions, args.min_clicks)
    _write_bytes(args.output, format_observations_csv(ids, obs).encode("utf-8"))
    if args.sigma_prior:
        sigma_law = empirical_sigma_distribution(obs)
        _write_bytes(args.sigma_prior, dumps_prior(sigma_law).encode("utf-8"))
    _print_json(report.to_dict())


def cmd_fit(args):
    _, obs = read_observations_csv(_read_bytes(args.observations))
    if len(obs) < 2:
        raise InputError("fitting needs at least 2 observations")
    if args.family == "normal":
        prior, diag = fit_normal(obs)
    elif args.family == "nsm":
        grid = default_scale_grid(obs)
        if args.grid_size is not None:
            grid = GridSpec("scale_grid", args.grid_size, grid.lower, grid.upper, "geometric")
        prior, diag = fit_scale_mixture(obs, grid)
    else:
        grid = default_atom_grid(obs)
        if args.grid_size is not None:
            grid = GridSpec("atom_grid", args.grid_size, grid.lower, grid.upper, "linear")
        prior, diag = fit_npmle(obs, grid)
    _write_bytes(args.output, dumps_prior(prior).encode("utf-8"))
    _print_json(diag.to_dict())
    if not diag.converged and len(diag.ll_trace) >= 2:
        step = diag.ll_trace[-1] - diag.ll_trace[-2]
        if step > 1e-6 * len(obs):
            raise NumericalError(f"EM stopped at the iteration cap with last step {step:.3g}")


def cmd_select(args):
    ids, obs = read_observations_csv(_read_bytes(args.observations))
    prior = loads_prior(_read_bytes(args.prior).decode("utf-8"))
    n = len(obs)
    m = args.m if args.m is not None else math.floor(args.alpha * n)
    if not 1 <= m < n:
        raise UsageError(f"need 1 <= m < n (m={m}, n={n})")
    scores = score_units(prior, obs)
    chosen = np.zeros(n, dtype=bool)
    chosen[top_m_indices(scores, m, np.random.default_rng(args.seed))] = True
    order = sorted(range(n), key=lambda i: (-scores[i], not chosen[i], i))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("experiment_id", "x", "sigma", "posterior_mean", "selected"))
    for i in order:
        w.writerow((ids[i], fmt_float(obs[i].x), fmt_float(obs[i].sigma),
                    fmt_float(scores[i]), int(chosen[i])))
    if args.output:
        _write_bytes(args.output, buf.getvalue().encode("utf-8"))
    else:
        sys.stdout.write(buf.getvalue())


def _check_iterations(doc):
    it = doc.get("iterations") if isinstance(doc, dict) else None
    if isinstance(it, (int, float)) and it < 1:
        raise UsageError("iterations must be at least 1")


def cmd_simulate(args):
    doc = _read_json(args.config)
    _check_iterations(doc)
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    cfg = StudyConfig.from_dict(doc)

    def log(msg):
        print(msg, file=sys.stderr)

    summary = run_scaling_study(cfg, workers=args.threads, log=log)
    write_summary(summary, args.output_dir)
    _print_json(summary.slopes_dict())


def cmd_sharpness(args):
    doc = _read_json(args.config)
    _check_iterations(doc)
    if not isinstance(doc, dict):
        raise InputError("config must be a JSON object")
    cfg = SharpnessConfig.from_dict(doc)
    table = run_sharpness_study(cfg)
    _write_bytes(args.output, table.to_csv().encode("utf-8"))
    _print_json({"threshold": table.threshold, "swap_violations": table.swap_violations,
                 "bound_violations": table.bound_violations})


def cmd_posterior(args):
    if not (math.isfinite(args.sigma) and args.sigma > 0):
        raise InputError("--sigma must be positive")
    prior = loads_prior(_read_bytes(args.prior).decode("utf-8"))
    _, pm, pv = posterior_moments(prior, args.sigma, args.x)
    _print_json({"posterior_mean": float(pm), "posterior_variance": float(pv)})


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebtopm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="A/B counts CSV -> observations CSV")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--min-impressions", type=int, default=1000)
    s.add_argument("--min-clicks", type=int, default=100)
    s.add_argument("--sigma-prior", help="also write the empirical sigma law as prior JSON")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("fit", help="fit a prior to observations")
    s.add_argument("--observations", required=True)
    s.add_argument("--family", required=True, choices=["normal", "nsm", "npmle"])
    s.add_argument("--grid-size", type=_positive_int)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("select", help="top-m selection by posterior mean")
    s.add_argument("--observations", required=True)
    s.add_argument("--prior", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--m", type=int)
    g.add_argument("--alpha", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("simulate", help="regret scaling study")
    s.add_argument("--config", required=True)
    s.add_argument("--output-dir", required=True)
    s.add_argument("--threads", type=_positive_int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sharpness", help="two-noise-level sharpness study")
    s.add_argument("--config", required=True)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_sharpness)

    s = sub.add_parser("posterior", help="posterior mean and variance for one observation")
    s.add_argument("--prior", required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--x", type=float, required=True)
    s.set_defaults(func=cmd_posterior)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"ebtopm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"ebtopm {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"ebtopm {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
