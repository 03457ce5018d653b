"""Marginal maximum likelihood fits of the three prior families.

The scale-mixture and NPMLE fits fix their component grid up front, which
turns each fit into a concave problem over the weight simplex solved by EM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import InputError
from .priors import (
    DiscretePrior,
    NormalPrior,
    Observation,
    Prior,
    ScaleMixturePrior,
    posterior_moments,
)

_LOG_2PI = math.log(2.0 * math.pi)
_WEIGHT_FLOOR = 1e-10
_EM_MAX_ITER = 2000
_NORMAL_MAX_ITER = 500
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def as_arrays(obs):
    """Return ``(x, sigma)`` float arrays from observations.

    Accepts a sequence of :class:`Observation` or an ``(x, sigma)`` pair of
    arrays (the fast path used by the simulation harness).
    """
    if isinstance(obs, tuple) and len(obs) == 2 and isinstance(obs[0], np.ndarray):
        x = np.asarray(obs[0], dtype=np.float64)
        s = np.asarray(obs[1], dtype=np.float64)
        if x.shape != s.shape or x.ndim != 1:
            raise InputError("x and sigma arrays must be 1-d and the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s) & (s > 0))):
            raise InputError("observations need finite x and positive finite sigma")
        return x, s
    obs = list(obs)
    for o in obs:
        if not isinstance(o, Observation):
            raise InputError("expected Observation instances")
    return (np.array([o.x for o in obs], dtype=np.float64),
            np.array([o.sigma for o in obs], dtype=np.float64))


@dataclass(frozen=True)
class GridSpec:
    """A fixed grid of component scales (``scale_grid``) or atoms (``atom_grid``).

    For a scale grid the values are component standard deviations and a zero
    (point mass at the origin) is always prepended, so ``size`` counts it.
    """

    kind: str
    size: int
    lower: float
    upper: float
    spacing: str = "geometric"

    def __post_init__(self):
        if self.kind not in ("scale_grid", "atom_grid"):
            raise InputError(f"unknown grid kind {self.kind!r}")
        if self.spacing not in ("geometric", "linear"):
            raise InputError(f"unknown grid spacing {self.spacing!r}")
        min_size = 2 if self.kind == "scale_grid" else 1
        if int(self.size) != self.size or self.size < min_size:
            raise InputError(f"{self.kind} needs size >= {min_size}")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise InputError("grid bounds must be finite")
        if self.size > 1 and not self.lower < self.upper:
            raise InputError("grid needs lower < upper")
        if self.kind == "scale_grid" and self.lower <= 0:
            raise InputError("scale grid lower bound must be positive")

    def values(self) -> np.ndarray:
        n = self.size - 1 if self.kind == "scale_grid" else self.size
        if n == 1:
            pts = np.array([float(self.lower)])
        elif self.spacing == "geometric":
            pts = np.geomspace(self.lower, self.upper, n)
        else:
            pts = np.linspace(self.lower, self.upper, n)
        if self.kind == "scale_grid":
            return np.concatenate([[0.0], pts])
        return pts


@dataclass(frozen=True)
class FitDiagnostics:
    final_log_likelihood: float
    iterations: int
    converged: bool
    ll_trace: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "final_log_likelihood": self.final_log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def log_likelihood(prior: Prior, obs) -> float:
    """Sum of marginal log densities of the observations under ``prior``."""
    x, s = as_arrays(obs)
    if x.size == 0:
        return 0.0
    return float(np.sum(posterior_moments(prior, s, x)[0]))


def _normal_ll(x, s2, m, v):
    tot = v + s2
    r = x - m
    return float(-0.5 * np.sum(_LOG_2PI + np.log(tot) + r * r / tot))


def _golden_max(f, lo, hi, tol):
    """Maximize a unimodal ``f`` on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def fit_normal(obs):
    """Fit N(m_g, v_g) by coordinate ascent on the marginal likelihood.

    The mean step is the exact precision-weighted mean; the variance step is
    a golden-section search on [0, max x^2 + max sigma^2]. ``v_g = 0`` is a
    legitimate (degenerate) answer.
    """
    x, s = as_arrays(obs)
    n = x.size
    if n < 2:
        raise InputError("fit_normal needs at least 2 observations")
    s2 = s * s
    vmax = float(np.max(x * x) + np.max(s2))
    tol = 1e-13 * max(1.0, vmax)

    v = max(float(np.var(x) - np.mean(s2)), 0.0)
    m = float(np.mean(x))
    ll = _normal_ll(x, s2, m, v)
    trace = [ll]
    converged = False
    it = 0
    while it < _NORMAL_MAX_ITER:
        it += 1
        prec = 1.0 / (v + s2)
        m = float(np.sum(x * prec) / np.sum(prec))
        cands = [(v, _normal_ll(x, s2, m, v)), (0.0, _normal_ll(x, s2, m, 0.0))]
        cands.append(_golden_max(lambda t: _normal_ll(x, s2, m, t), 0.0, vmax, tol))
        # first maximum wins so ties keep the current value
        v, ll_new = max(cands, key=lambda c: c[1])
        trace.append(ll_new)
        if ll_new - ll < 1e-10:
            ll = ll_new
            converged = True
            break
        ll = ll_new
    prior = NormalPrior(m, v)
    return prior, FitDiagnostics(ll, it, converged, tuple(trace))


def mle_location(obs) -> float:
    """MLE of eta in the location model mu ~ N(eta, 1): X_i ~ N(eta, 1 + sigma_i^2)."""
    x, s = as_arrays(obs)
    if x.size == 0:
        raise InputError("mle_location needs at least one observation")
    w = 1.0 / (1.0 + s * s)
    return float(np.sum(w * x) / np.sum(w))


def scale_grid_bounds(obs):
    """Smallest and largest nonzero component sd targeted by the default grid."""
    x, s = as_arrays(obs)
    if x.size == 0:
        raise InputError("need at least one observation")
    s_min = float(np.min(s)) / 10.0
    excess = float(np.max(x * x - s * s))
    s_max = 2.0 * math.sqrt(max(excess, s_min * s_min))
    return s_min, s_max


def default_scale_grid(obs) -> GridSpec:
    """{0} plus a ratio-sqrt(2) geometric ladder from min(sigma)/10 up past s_max."""
    s_min, s_max = scale_grid_bounds(obs)
    steps = max(1, math.ceil(math.log(s_max / s_min) / math.log(math.sqrt(2.0)) - 1e-9))
    upper = s_min * math.sqrt(2.0) ** steps
    return GridSpec("scale_grid", steps + 2, s_min, upper, "geometric")


def default_atom_grid(obs) -> GridSpec:
    x, _ = as_arrays(obs)
    n = x.size
    if n == 0:
        raise InputError("need at least one observation")
    lo, hi = float(np.min(x)), float(np.max(x))
    if lo == hi:
        return GridSpec("atom_grid", 1, lo, hi, "linear")
    size = max(2, math.ceil(min(math.sqrt(n) * math.log(n), 300.0)))
    return GridSpec("atom_grid", size, lo, hi, "linear")


def _em(x, s2, means, variances):
    n = x.size
    tot = variances[None, :] + s2[:, None]
    r = x[:, None] - means[None, :]
    logl = -0.5 * (_LOG_2PI + np.log(tot)) - 0.5 * r * r / tot
    shift = logl.max(axis=1)
    lik = np.exp(logl - shift[:, None])
    k = means.size
    w0 = np.full(k, 1.0 / k)
    return _backend.em_weights(lik, shift, w0, 1e-10 * n, _EM_MAX_ITER)


def fit_scale_mixture(obs, grid: GridSpec | None = None):
    """EM over the weights of a zero-mean normal scale mixture on a fixed grid."""
    x, s = as_arrays(obs)
    if x.size == 0:
        raise InputError("fit_scale_mixture needs observations")
    if grid is None:
        grid = default_scale_grid((x, s))
    if not isinstance(grid, GridSpec) or grid.kind != "scale_grid":
        raise InputError("fit_scale_mixture needs a scale_grid GridSpec")
    variances = grid.values() ** 2
    w, trace, it, converged = _em(x, s * s, np.zeros_like(variances), variances)
    w = np.maximum(w, _WEIGHT_FLOOR)
    w = w / np.sum(w)
    prior = ScaleMixturePrior(tuple(variances), tuple(w))
    ll = log_likelihood(prior, (x, s))
    return prior, FitDiagnostics(ll, int(it), bool(converged), tuple(trace.tolist()))


def fit_npmle(obs, grid: GridSpec | None = None):
    """Discrete prior on a fixed atom grid maximizing the mixture likelihood (EM)."""
    x, s = as_arrays(obs)
    if x.size == 0:
        raise InputError("fit_npmle needs observations")
    if grid is None:
        grid = default_atom_grid((x, s))
    if not isinstance(grid, GridSpec) or grid.kind != "atom_grid":
        raise InputError("fit_npmle needs an atom_grid GridSpec")
    atoms = grid.values()
    if atoms[0] > np.min(x) or atoms[-1] < np.max(x):
        raise InputError("atom grid must cover [min x, max x]")
    w, trace, it, converged = _em(x, s * s, atoms, np.zeros_like(atoms))
    keep = w >= _WEIGHT_FLOOR
    w = w[keep] / np.sum(w[keep])
    prior = DiscretePrior(tuple(atoms[keep]), tuple(w))
    ll = log_likelihood(prior, (x, s))
    return prior, FitDiagnostics(ll, int(it), bool(converged), tuple(trace.tolist()))
