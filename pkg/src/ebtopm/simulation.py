"""Monte Carlo studies: the semi-synthetic regret scaling study and the sharpness example.

Every iteration draws its randomness from a ``SeedSequence`` keyed by its
coordinates, so the grid of iterations can run in any order or in parallel
and produce identical numbers.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .errors import DegeneratePriorError, InputError
from .estimation import fit_normal, fit_npmle, fit_scale_mixture, mle_location
from .priors import (
    DiscretePrior,
    NormalPrior,
    Prior,
    prior_from_dict,
    prior_to_dict,
    sample_prior,
    wasserstein1,
)
from .selection import RegretReport, decompose, score_units, top_m_indices

METHODS = ("EB-NN", "EB-NSM", "EB-NPMLE", "UN", "ORACLE")
FITTED = ("EB-NN", "EB-NSM", "EB-NPMLE")
METRICS = ("regret", "prop_mistakes", "max_shrinkage_error", "w1")
CSV_COLUMNS = ("n", "multiplier", "method", "metric", "mean", "p99", "ci_halfwidth", "iterations")
EM_SLACK = 1e-9

# SeedSequence stream tags
_TAG_SCALING = 0
_TAG_SHARPNESS = 1
_TAG_PILOT = 2


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def nearest_rank(values, q: float) -> float:
    """Nearest-rank percentile: the ceil(q * N)-th smallest value."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    if vals.size == 0:
        return math.nan
    k = max(1, math.ceil(q * vals.size - 1e-12))
    return float(vals[k - 1])


def ci_halfwidth(values) -> float:
    vals = np.asarray(values, dtype=np.float64)
    if vals.size < 2:
        return 0.0
    return float(1.96 * np.std(vals, ddof=1) / math.sqrt(vals.size))


def loglog_slope(ns, means):
    """Least-squares slope of log(mean) on log(n); None if fewer than 2 positive means."""
    pts = [(n, m) for n, m in zip(ns, means) if m is not None and m > 0 and math.isfinite(m)]
    if len(pts) < 2:
        return None
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    return float(np.polyfit(lx, ly, 1)[0])


def _seed_sequence(master_seed: int, *coords) -> np.random.SeedSequence:
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(c) for c in coords]
    return np.random.SeedSequence(entropy)


def _count_em_violations(trace) -> int:
    t = np.asarray(trace, dtype=np.float64)
    if t.size < 2:
        return 0
    return int(np.sum(np.diff(t) < -EM_SLACK))


# -- scaling study ------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    n_grid: tuple
    alpha: float
    iterations: int
    noise_multipliers: tuple
    methods: tuple
    g0: Prior
    h0: DiscretePrior
    master_seed: int

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "noise_multipliers", tuple(float(m) for m in self.noise_multipliers))
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.n_grid:
            raise InputError("n_grid must be nonempty")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        for n in self.n_grid:
            m = math.floor(self.alpha * n)
            if not 1 <= m < n:
                raise InputError(f"floor(alpha * n) must be in [1, n) for n={n}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InputError("iterations must be a positive integer")
        if not self.noise_multipliers or any(
            not (math.isfinite(m) and m > 0) for m in self.noise_multipliers
        ):
            raise InputError("noise multipliers must be positive")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise InputError(f"methods must be drawn from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise InputError("duplicate methods")
        if getattr(self.g0, "is_degenerate", True):
            raise DegeneratePriorError("g0 must be a nondegenerate prior")
        if not isinstance(self.h0, DiscretePrior) or self.h0.atoms[0] <= 0:
            raise InputError("h0 must be a discrete law on positive sigma values")
        if int(self.master_seed) != self.master_seed:
            raise InputError("master_seed must be an integer")

    @classmethod
    def from_dict(cls, doc: dict) -> "StudyConfig":
        try:
            return cls(
                n_grid=doc["n_grid"],
                alpha=float(doc.get("alpha", 0.1)),
                iterations=doc["iterations"],
                noise_multipliers=doc.get("noise_multipliers", [1.0]),
                methods=doc["methods"],
                g0=prior_from_dict(doc["g0"]),
                h0=prior_from_dict(doc["h0"]),
                master_seed=doc["master_seed"],
            )
        except KeyError as exc:
            raise InputError(f"study config missing field {exc}") from exc
        except TypeError as exc:
            raise InputError(f"malformed study config: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "n_grid": list(self.n_grid),
            "alpha": self.alpha,
            "iterations": self.iterations,
            "noise_multipliers": list(self.noise_multipliers),
            "methods": list(self.methods),
            "g0": prior_to_dict(self.g0),
            "h0": prior_to_dict(self.h0),
            "master_seed": self.master_seed,
        }


@dataclass(frozen=True)
class MethodResult:
    report: RegretReport | None
    w1: float | None
    flagged: bool = False
    reason: str = ""
    em_violations: int = 0


def _fit(method, x, s, g0):
    if method == "EB-NN":
        return fit_normal((x, s))
    if method == "EB-NSM":
        return fit_scale_mixture((x, s))
    if method == "EB-NPMLE":
        return fit_npmle((x, s))
    return g0, None


def draw_units(cfg: StudyConfig, n: int, multiplier: float, iteration: int):
    """Return ``(mu, sigma, x, tie_seed)`` for one iteration.

    The stream depends on (master_seed, n, iteration) only; sigma is scaled by
    the multiplier afterwards, so all multipliers share mu, the base sigma and
    the standardized noise.
    """
    ss = _seed_sequence(cfg.master_seed, _TAG_SCALING, n, iteration)
    mu_ss, sig_ss, z_ss, tie_ss = ss.spawn(4)
    mu = sample_prior(cfg.g0, n, np.random.default_rng(mu_ss))
    sigma = multiplier * sample_prior(cfg.h0, n, np.random.default_rng(sig_ss))
    z = np.random.default_rng(z_ss).standard_normal(n)
    return mu, sigma, mu + sigma * z, tie_ss


def run_iteration(cfg: StudyConfig, n: int, multiplier: float, iteration: int) -> dict:
    """One replicate of the selection simulation; returns method -> MethodResult."""
    mu, sigma, x, tie_ss = draw_units(cfg, n, multiplier, iteration)
    m = math.floor(cfg.alpha * n)
    theta = score_units(cfg.g0, (x, sigma))
    j_bayes = top_m_indices(theta, m, np.random.default_rng(tie_ss))
    out = {}
    for method in cfg.methods:
        violations = 0
        w1 = None
        if method == "UN":
            scores = x
        else:
            prior, diag = _fit(method, x, sigma, cfg.g0)
            if diag is not None:
                violations = _count_em_violations(diag.ll_trace)
            if getattr(prior, "is_degenerate", False):
                out[method] = MethodResult(None, None, True, "degenerate fit", violations)
                continue
            scores = score_units(prior, (x, sigma))
            if method in FITTED:
                w1 = wasserstein1(prior, cfg.g0)
        j_alt = top_m_indices(scores, m, np.random.default_rng(tie_ss))
        report = decompose(theta, scores, j_bayes, j_alt)
        out[method] = MethodResult(report, w1, False, "", violations)
    return out


@dataclass(frozen=True)
class SummaryRow:
    n: int
    multiplier: float
    method: str
    metric: str
    mean: float
    p99: float
    ci_halfwidth: float
    iterations: int


@dataclass
class ScalingSummary:
    rows: list
    slopes: dict
    flagged: dict
    em_violations: int
    decompose_calls: int
    bound_violations: int
    per_iteration: list = field(default_factory=list, repr=False)

    def row(self, n, multiplier, method, metric) -> SummaryRow:
        for r in self.rows:
            if (r.n, r.multiplier, r.method, r.metric) == (n, float(multiplier), method, metric):
                return r
        raise KeyError((n, multiplier, method, metric))

    def slope(self, method, multiplier, metric):
        return self.slopes.get(f"{method}|{fmt_float(multiplier)}|{metric}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.n, fmt_float(r.multiplier), r.method, r.metric,
                        fmt_float(r.mean), fmt_float(r.p99), fmt_float(r.ci_halfwidth),
                        r.iterations])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "rows": [r.__dict__ for r in self.rows],
            "flagged": self.flagged,
            "em_violations": self.em_violations,
            "decompose_calls": self.decompose_calls,
            "bound_violations": self.bound_violations,
        }

    def slopes_dict(self) -> dict:
        out = []
        for key, val in self.slopes.items():
            method, mult, metric = key.split("|")
            out.append({"method": method, "multiplier": float(mult), "metric": metric,
                        "slope": val})
        return {"slopes": out}


def _task(cfg, coords):
    n, multiplier, iteration = coords
    return coords, run_iteration(cfg, n, multiplier, iteration)


def _bound_ok(rep: RegretReport) -> bool:
    if rep.n_mistakes == 0:
        return rep.regret == 0.0
    return rep.regret <= rep.two_parts_bound


def run_scaling_study(cfg: StudyConfig, workers: int = 1, log=None) -> ScalingSummary:
    """Run every (n, multiplier, iteration) cell and aggregate per method and metric."""
    tasks = [(n, mult, it) for n in cfg.n_grid for mult in cfg.noise_multipliers
             for it in range(cfg.iterations)]
    fn = partial(_task, cfg)
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [fn(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    per_iter = []
    flagged = {}
    em_viol = 0
    calls = 0
    bound_viol = 0
    values = {}
    for (n, mult, it), res in results:
        for method in cfg.methods:
            mr = res[method]
            em_viol += mr.em_violations
            if mr.flagged:
                key = f"{n}|{fmt_float(mult)}|{method}"
                flagged[key] = flagged.get(key, 0) + 1
                continue
            rep = mr.report
            calls += 1
            if not _bound_ok(rep):
                bound_viol += 1
            metrics = {"regret": rep.regret, "prop_mistakes": rep.prop_mistakes,
                       "max_shrinkage_error": rep.max_shrinkage_error}
            if mr.w1 is not None:
                metrics["w1"] = mr.w1
            per_iter.append({"n": n, "multiplier": mult, "iteration": it, "method": method,
                             **metrics, "n_mistakes": rep.n_mistakes})
            for metric, v in metrics.items():
                values.setdefault((n, mult, method, metric), []).append(v)
        if log is not None and it == cfg.iterations - 1:
            log(f"finished n={n} multiplier={fmt_float(mult)}")

    rows = []
    for n in cfg.n_grid:
        for mult in cfg.noise_multipliers:
            for method in cfg.methods:
                for metric in METRICS:
                    vals = values.get((n, mult, method, metric))
                    if not vals:
                        continue
                    rows.append(SummaryRow(n, mult, method, metric, float(np.mean(vals)),
                                           nearest_rank(vals, 0.99), ci_halfwidth(vals),
                                           len(vals)))
    slopes = {}
    for method in cfg.methods:
        for mult in cfg.noise_multipliers:
            for metric in METRICS:
                pts = [(r.n, r.mean) for r in rows
                       if r.method == method and r.multiplier == mult and r.metric == metric]
                if not pts:
                    continue
                slopes[f"{method}|{fmt_float(mult)}|{metric}"] = loglog_slope(
                    [p[0] for p in pts], [p[1] for p in pts])
    return ScalingSummary(rows, slopes, flagged, em_viol, calls, bound_viol, per_iter)


# -- sharpness study ----------------------------------------------------------

@dataclass(frozen=True)
class SharpnessConfig:
    n_grid: tuple
    iterations: int
    alpha: float
    master_seed: int
    eta0: float = 0.0
    sigma_values: tuple = (1.0, 2.0)
    threshold: float | None = None
    pilot_n: int = 1024
    pilot_quantile: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "sigma_values", tuple(float(s) for s in self.sigma_values))
        if not self.n_grid:
            raise InputError("n_grid must be nonempty")
        if not 0.0 < self.alpha < 1.0:
            raise InputError("alpha must lie in (0, 1)")
        for n in self.n_grid + (self.pilot_n,):
            m = math.floor(self.alpha * n)
            if not 1 <= m < n:
                raise InputError(f"floor(alpha * n) must be in [1, n) for n={n}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise InputError("iterations must be a positive integer")
        if not self.sigma_values or any(not (math.isfinite(s) and s > 0) for s in self.sigma_values):
            raise InputError("sigma_values must be positive")
        if not math.isfinite(self.eta0):
            raise InputError("eta0 must be finite")
        if not 0.0 < self.pilot_quantile < 1.0:
            raise InputError("pilot_quantile must lie in (0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "SharpnessConfig":
        known = {"n_grid", "iterations", "alpha", "master_seed", "eta0", "sigma_values",
                 "threshold", "pilot_n", "pilot_quantile"}
        extra = set(doc) - known
        if extra:
            raise InputError(f"unknown sharpness config fields {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise InputError(f"malformed sharpness config: {exc}") from exc


def sharpness_iteration(cfg: SharpnessConfig, n: int, iteration: int, tag: int = _TAG_SHARPNESS,
                        eta_hat_override: float | None = None) -> dict:
    """One replicate of the two-noise-level location example.

    ``eta_hat_override`` replaces the fitted location (test hook).
    """
    ss = _seed_sequence(cfg.master_seed, tag, n, iteration)
    sig_ss, mu_ss, z_ss, tie_ss = ss.spawn(4)
    sv = np.array(cfg.sigma_values)
    sigma = sv[np.random.default_rng(sig_ss).integers(0, sv.size, n)]
    mu = cfg.eta0 + np.random.default_rng(mu_ss).standard_normal(n)
    x = mu + sigma * np.random.default_rng(z_ss).standard_normal(n)
    eta_hat = mle_location((x, sigma)) if eta_hat_override is None else float(eta_hat_override)
    theta = score_units(NormalPrior(cfg.eta0, 1.0), (x, sigma))
    theta_hat = score_units(NormalPrior(eta_hat, 1.0), (x, sigma))
    m = math.floor(cfg.alpha * n)
    j_bayes = top_m_indices(theta, m, np.random.default_rng(tie_ss))
    j_eb = top_m_indices(theta_hat, m, np.random.default_rng(tie_ss))
    rep = decompose(theta, theta_hat, j_bayes, j_eb)
    in_bayes = np.zeros(n, dtype=bool)
    in_bayes[j_bayes] = True
    in_eb = np.zeros(n, dtype=bool)
    in_eb[j_eb] = True
    swap_ok = True
    if eta_hat > 0:
        lo, hi = sv.min(), sv.max()
        swap_ok = bool(np.all(sigma[in_eb & ~in_bayes] == hi) and
                       np.all(sigma[in_bayes & ~in_eb] == lo))
    return {"n_regret": n * rep.regret, "eta_hat": eta_hat, "report": rep, "swap_ok": swap_ok}


@dataclass
class SharpnessTable:
    rows: list
    threshold: float
    swap_violations: int
    decompose_calls: int
    bound_violations: int
    samples: dict = field(default_factory=dict, repr=False)

    columns = ("n", "iterations", "mean_nR", "p10_nR", "p50_nR", "p90_nR", "threshold",
               "freq_above_threshold")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([r["n"], r["iterations"]] + [fmt_float(r[c]) for c in self.columns[2:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": self.rows, "threshold": self.threshold,
                "swap_violations": self.swap_violations,
                "decompose_calls": self.decompose_calls,
                "bound_violations": self.bound_violations}


def calibrate_threshold(cfg: SharpnessConfig) -> float:
    """Pilot run at ``cfg.pilot_n`` on its own seed stream; returns the pilot quantile of n*R."""
    vals = [sharpness_iteration(cfg, cfg.pilot_n, it, tag=_TAG_PILOT)["n_regret"]
            for it in range(cfg.iterations)]
    return nearest_rank(vals, cfg.pilot_quantile)


def run_sharpness_study(cfg: SharpnessConfig) -> SharpnessTable:
    c = cfg.threshold if cfg.threshold is not None else calibrate_threshold(cfg)
    rows = []
    swaps = 0
    calls = 0
    bound_viol = 0
    samples = {}
    for n in cfg.n_grid:
        vals = []
        for it in range(cfg.iterations):
            res = sharpness_iteration(cfg, n, it)
            vals.append(res["n_regret"])
            swaps += 0 if res["swap_ok"] else 1
            calls += 1
            bound_viol += 0 if _bound_ok(res["report"]) else 1
        arr = np.array(vals)
        samples[n] = arr
        rows.append({
            "n": n,
            "iterations": cfg.iterations,
            "mean_nR": float(np.mean(arr)),
            "p10_nR": nearest_rank(arr, 0.1),
            "p50_nR": nearest_rank(arr, 0.5),
            "p90_nR": nearest_rank(arr, 0.9),
            "threshold": float(c),
            "freq_above_threshold": float(np.mean(arr > c)),
        })
    return SharpnessTable(rows, float(c), swaps, calls, bound_viol, samples)


def write_summary(summary: ScalingSummary, out_dir) -> None:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_bytes(summary.to_csv().encode("utf-8"))
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n",
                                      encoding="utf-8")
    (out / "slopes.json").write_text(json.dumps(summary.slopes_dict(), indent=2) + "\n",
                                     encoding="utf-8")
