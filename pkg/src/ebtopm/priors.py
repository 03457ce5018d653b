"""Prior families, posterior moments under Gaussian noise, CDFs and W1.

All three supported families are finite Gaussian mixtures: a normal prior is
one component, a zero-mean scale mixture has components N(0, v_k), and a
discrete prior has point-mass components N(a_j, 0). Posterior moments for
every family go through a single mixture kernel evaluated with log-sum-exp.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate, optimize, special

from . import _backend
from .errors import DomainError, InputError, NumericalError

_WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Observation:
    """A noisy measurement ``x`` of one unit with known noise sd ``sigma``."""

    x: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.x):
            raise DomainError(f"x must be finite, got {self.x!r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError(f"sigma must be positive and finite, got {self.sigma!r}")


def _as_float_tuple(values, name):
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name} must be a sequence of numbers") from exc
    if not all(math.isfinite(v) for v in out):
        raise InputError(f"{name} must be finite")
    return out


def _check_weights(weights, size):
    if len(weights) != size:
        raise InputError("weights must have the same length as the support")
    if size == 0:
        raise InputError("a prior needs at least one component")
    if any(w < 0.0 or w > 1.0 for w in weights):
        raise InputError("weights must lie in [0, 1]")
    if abs(math.fsum(weights) - 1.0) > _WEIGHT_SUM_TOL:
        raise InputError(f"weights must sum to 1, got {math.fsum(weights)!r}")


def _check_ascending(values, name):
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InputError(f"{name} must be strictly ascending")


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))
        if not math.isfinite(self.mean):
            raise InputError("mean must be finite")
        if not (math.isfinite(self.variance) and self.variance >= 0):
            raise InputError("variance must be nonnegative and finite")

    @property
    def is_degenerate(self):
        return self.variance == 0.0

    def components(self):
        return np.array([self.mean]), np.array([self.variance]), np.zeros(1)


@dataclass(frozen=True)
class ScaleMixturePrior:
    """Mixture of N(0, v_k); a zero variance is a point mass at zero."""

    variances: tuple
    weights: tuple

    def __post_init__(self):
        variances = _as_float_tuple(self.variances, "variances")
        weights = _as_float_tuple(self.weights, "weights")
        if any(v < 0 for v in variances):
            raise InputError("variances must be nonnegative")
        _check_ascending(variances, "variances")
        _check_weights(weights, len(variances))
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)

    @property
    def is_degenerate(self):
        return all(w == 0.0 for v, w in zip(self.variances, self.weights) if v > 0)

    def components(self):
        v = np.array(self.variances)
        with np.errstate(divide="ignore"):
            logw = np.log(np.array(self.weights))
        return np.zeros_like(v), v, logw


@dataclass(frozen=True)
class DiscretePrior:
    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = _as_float_tuple(self.atoms, "atoms")
        weights = _as_float_tuple(self.weights, "weights")
        _check_ascending(atoms, "atoms")
        _check_weights(weights, len(atoms))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @property
    def is_degenerate(self):
        return sum(1 for w in self.weights if w > 0) <= 1

    def components(self):
        a = np.array(self.atoms)
        with np.errstate(divide="ignore"):
            logw = np.log(np.array(self.weights))
        return a, np.zeros_like(a), logw


Prior = Union[NormalPrior, ScaleMixturePrior, DiscretePrior]
_PRIOR_TYPES = (NormalPrior, ScaleMixturePrior, DiscretePrior)


def _check_prior(prior):
    if not isinstance(prior, _PRIOR_TYPES):
        raise InputError(f"unsupported prior type {type(prior).__name__}")


def _check_args(sigma, x):
    sigma = np.asarray(sigma, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("x must be finite")
    if not np.all(np.isfinite(sigma) & (sigma > 0)):
        raise DomainError("sigma must be positive and finite")
    return np.broadcast_arrays(sigma, x)


def posterior_moments(prior: Prior, sigma, x):
    """Return ``(log marginal density, posterior mean, posterior variance)``.

    ``sigma`` and ``x`` broadcast against each other; outputs have their
    broadcast shape.
    """
    _check_prior(prior)
    sigma, x = _check_args(sigma, x)
    shape = x.shape
    means, variances, logw = prior.components()
    lm, pm, pv = _backend.mixture_moments(
        np.ascontiguousarray(x.ravel()),
        np.ascontiguousarray((sigma * sigma).ravel()),
        means,
        variances,
        logw,
    )
    return lm.reshape(shape), pm.reshape(shape), pv.reshape(shape)


def _maybe_scalar(arr):
    return float(arr) if arr.ndim == 0 else arr


def posterior_mean(prior: Prior, sigma, x):
    """Posterior mean of mu given X = x under ``prior`` and N(0, sigma^2) noise."""
    return _maybe_scalar(posterior_moments(prior, sigma, x)[1])


def posterior_variance(prior: Prior, sigma, x):
    return _maybe_scalar(posterior_moments(prior, sigma, x)[2])


def marginal_log_density(prior: Prior, sigma, x):
    """Log density at ``x`` of the prior convolved with N(0, sigma^2)."""
    return _maybe_scalar(posterior_moments(prior, sigma, x)[0])


def _point_masses(prior):
    """Locations and weights of the prior's atoms (possibly empty)."""
    if isinstance(prior, DiscretePrior):
        return np.array(prior.atoms), np.array(prior.weights)
    if isinstance(prior, NormalPrior):
        if prior.variance == 0.0:
            return np.array([prior.mean]), np.ones(1)
        return np.empty(0), np.empty(0)
    zero = [w for v, w in zip(prior.variances, prior.weights) if v == 0.0 and w > 0]
    if zero:
        return np.zeros(1), np.array(zero)
    return np.empty(0), np.empty(0)


def prior_cdf(prior: Prior, t):
    """P(mu <= t) under ``prior``; vectorized over ``t``."""
    _check_prior(prior)
    t = np.asarray(t, dtype=np.float64)
    if isinstance(prior, DiscretePrior):
        cum = np.concatenate([[0.0], np.cumsum(prior.weights)])
        out = cum[np.searchsorted(prior.atoms, t, side="right")]
        return _maybe_scalar(np.minimum(out, 1.0))
    if isinstance(prior, NormalPrior):
        if prior.variance == 0.0:
            return _maybe_scalar((t >= prior.mean).astype(np.float64))
        return _maybe_scalar(special.ndtr((t - prior.mean) / math.sqrt(prior.variance)))
    out = np.zeros_like(t)
    for v, w in zip(prior.variances, prior.weights):
        if w == 0.0:
            continue
        if v == 0.0:
            out = out + w * (t >= 0.0)
        else:
            out = out + w * special.ndtr(t / math.sqrt(v))
    return _maybe_scalar(np.minimum(out, 1.0))


def _cdf_left(prior, t):
    """Left limit P(mu < t)."""
    out = np.asarray(prior_cdf(prior, t), dtype=np.float64)
    locs, w = _point_masses(prior)
    for a, wa in zip(locs, w):
        out = out - wa * (t == a)
    return np.maximum(out, 0.0)


def prior_quantile(prior: Prior, p: float) -> float:
    """Smallest t with P(mu <= t) >= p, for p in (0, 1)."""
    _check_prior(prior)
    if not 0.0 < p < 1.0:
        raise InputError("p must lie in (0, 1)")
    if isinstance(prior, DiscretePrior):
        cum = np.cumsum(prior.weights)
        idx = min(int(np.searchsorted(cum, p, side="left")), len(cum) - 1)
        return prior.atoms[idx]
    if isinstance(prior, NormalPrior):
        return prior.mean + math.sqrt(prior.variance) * float(special.ndtri(p))
    sd = math.sqrt(max(prior.variances))
    if sd == 0.0:
        return 0.0
    # The widest component bounds every quantile of the mixture.
    bound = sd * max(abs(float(special.ndtri(p))), 1.0) * 1.01
    if prior_cdf(prior, 0.0) >= p and prior_cdf(prior, -1e-300) < p:
        return 0.0
    return optimize.brentq(lambda t: prior_cdf(prior, t) - p, -bound, bound, xtol=1e-14)


def sample_prior(prior: Prior, count: int, rng) -> np.ndarray:
    """Draw ``count`` i.i.d. values from ``prior``.

    ``rng`` is a ``numpy.random.Generator`` or anything ``default_rng`` accepts.
    """
    _check_prior(prior)
    if count < 1:
        raise InputError("count must be at least 1")
    rng = np.random.default_rng(rng)
    if isinstance(prior, NormalPrior):
        return prior.mean + math.sqrt(prior.variance) * rng.standard_normal(count)
    weights = np.array(prior.weights)
    comp = rng.choice(len(weights), size=count, p=weights / weights.sum())
    if isinstance(prior, DiscretePrior):
        return np.array(prior.atoms)[comp]
    sds = np.sqrt(np.array(prior.variances))
    return sds[comp] * rng.standard_normal(count)


def _w1_discrete(p, q):
    pts = np.union1d(p.atoms, q.atoms)
    diff = np.abs(prior_cdf(p, pts[:-1]) - prior_cdf(q, pts[:-1]))
    return float(np.sum(diff * np.diff(pts)))


_W1_REL_TOL = 1e-6
_W1_MAX_NODES = 2**20


def wasserstein1(p: Prior, q: Prior) -> float:
    """1-Wasserstein distance, the integral of |F_p - F_q|.

    Exact for two discrete priors. Otherwise a trapezoid rule over the range
    between the 1e-4 and 1 - 1e-4 quantiles, split at every atom so each
    piece has a continuous integrand, with dyadic refinement until two
    successive estimates agree to 1e-6 relative.
    """
    _check_prior(p)
    _check_prior(q)
    if isinstance(p, DiscretePrior) and isinstance(q, DiscretePrior):
        return _w1_discrete(p, q)
    lo = min(prior_quantile(p, 1e-4), prior_quantile(q, 1e-4))
    hi = max(prior_quantile(p, 1 - 1e-4), prior_quantile(q, 1 - 1e-4))
    if not hi > lo:
        return 0.0
    atoms = np.concatenate([_point_masses(p)[0], _point_masses(q)[0]])
    breaks = np.unique(np.concatenate([[lo, hi], atoms[(atoms > lo) & (atoms < hi)]]))
    left, right = breaks[:-1], breaks[1:]
    n_seg = len(left)

    def estimate(per_seg):
        frac = np.linspace(0.0, 1.0, per_seg + 1)
        nodes = left[:, None] + (right - left)[:, None] * frac[None, :]
        vals = np.abs(np.asarray(prior_cdf(p, nodes)) - np.asarray(prior_cdf(q, nodes)))
        end = right
        vals[:, -1] = np.abs(_cdf_left(p, end) - _cdf_left(q, end))
        h = (right - left) / per_seg
        return float(np.sum(h * (vals[:, 1:-1].sum(axis=1) + 0.5 * (vals[:, 0] + vals[:, -1]))))

    per_seg = 16
    prev = estimate(per_seg)
    while n_seg * (2 * per_seg + 1) <= _W1_MAX_NODES:
        per_seg *= 2
        cur = estimate(per_seg)
        if abs(cur - prev) <= _W1_REL_TOL * abs(cur):
            prev = cur
            break
        prev = cur
    if not math.isfinite(prev):
        raise NumericalError("non-finite Wasserstein integral")
    return prev


# -- independent quadrature oracle ------------------------------------------

def _normal_logpdf(z, mean, var):
    return -0.5 * math.log(2.0 * math.pi * var) - 0.5 * (z - mean) ** 2 / var


def _continuous_pieces(prior):
    if isinstance(prior, NormalPrior):
        return [(prior.mean, prior.variance, 1.0)] if prior.variance > 0 else []
    if isinstance(prior, ScaleMixturePrior):
        return [(0.0, v, w) for v, w in zip(prior.variances, prior.weights) if v > 0 and w > 0]
    return []


def _quad_terms(prior, sigma, x):
    """Pieces of the posterior integrals as (weight, log-integrand fn, lo, hi, centre) or atoms."""
    s2 = sigma * sigma
    pieces = []
    for m_k, v_k, w_k in _continuous_pieces(prior):
        lw = math.log(w_k)

        def logf(mu, m_k=m_k, v_k=v_k, lw=lw):
            return lw + _normal_logpdf(x, mu, s2) + _normal_logpdf(mu, m_k, v_k)

        grid = np.linspace(min(x, m_k), max(x, m_k), 4001) if x != m_k else np.array([x])
        vals = [logf(float(g)) for g in grid]
        j = int(np.argmax(vals))
        centre = float(grid[j])
        width = min(sigma, math.sqrt(v_k))
        pieces.append((logf, centre, width, vals[j]))
    atoms = []
    locs, ws = _point_masses(prior)
    for a, w in zip(locs, ws):
        if w > 0:
            atoms.append((float(a), math.log(w) + _normal_logpdf(x, float(a), s2)))
    return pieces, atoms


def _integrate(fn, centre, width):
    # epsrel=1e-13 sits at the roundoff floor; callers check the error estimate
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(
            fn, centre - 40 * width, centre + 40 * width, points=[centre],
            epsabs=0.0, epsrel=1e-13, limit=400,
        )
    return val, err


def posterior_moments_quadrature(prior: Prior, sigma: float, x: float):
    """Posterior ``(mean, variance, log marginal density)`` by numerical integration.

    Continuous parts are integrated adaptively against the unnormalised
    posterior density and atoms are summed directly; nothing is shared with
    the closed-form mixture kernel. Intended as a test oracle.
    """
    _check_prior(prior)
    sigma = float(sigma)
    x = float(x)
    if not (math.isfinite(x) and math.isfinite(sigma) and sigma > 0):
        raise DomainError("need finite x and positive finite sigma")
    pieces, atoms = _quad_terms(prior, sigma, x)
    scale = max([p[3] for p in pieces] + [a[1] for a in atoms])

    def moment(power, about):
        total, errs = [], []
        for logf, centre, width, _ in pieces:
            val, err = _integrate(
                lambda mu: (mu - about) ** power * math.exp(logf(mu) - scale), centre, width
            )
            total.append(val)
            errs.append(err)
        for a, la in atoms:
            total.append((a - about) ** power * math.exp(la - scale))
        return math.fsum(total), math.fsum(errs)

    den, den_err = moment(0, 0.0)
    if den_err > 1e-11 * den:
        raise NumericalError("quadrature did not converge for the normalising constant")
    num, _ = moment(1, 0.0)
    mean = num / den
    second, _ = moment(2, mean)
    var = second / den
    return mean, var, scale + math.log(den)


def posterior_mean_quadrature(prior: Prior, sigma: float, x: float) -> float:
    return posterior_moments_quadrature(prior, sigma, x)[0]


# -- JSON --------------------------------------------------------------------

def prior_to_dict(prior: Prior) -> dict:
    _check_prior(prior)
    if isinstance(prior, NormalPrior):
        return {"family": "normal", "mean": prior.mean, "variance": prior.variance}
    if isinstance(prior, ScaleMixturePrior):
        return {"family": "scale_mixture", "variances": list(prior.variances),
                "weights": list(prior.weights)}
    return {"family": "discrete", "atoms": list(prior.atoms), "weights": list(prior.weights)}


def prior_from_dict(doc: dict) -> Prior:
    if not isinstance(doc, dict):
        raise InputError("prior document must be a JSON object")
    family = doc.get("family")
    try:
        if family == "normal":
            return NormalPrior(doc["mean"], doc["variance"])
        if family == "scale_mixture":
            return ScaleMixturePrior(doc["variances"], doc["weights"])
        if family == "discrete":
            return DiscretePrior(doc["atoms"], doc["weights"])
    except KeyError as exc:
        raise InputError(f"prior document missing field {exc}") from exc
    except TypeError as exc:
        raise InputError(f"malformed prior document: {exc}") from exc
    raise InputError(f"unknown prior family {family!r}")


def dumps_prior(prior: Prior) -> str:
    # repr-based float output round-trips every double exactly
    return json.dumps(prior_to_dict(prior), indent=2) + "\n"


def loads_prior(text: str) -> Prior:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid prior JSON: {exc}") from exc
    return prior_from_dict(doc)
