"""Top-m choice sets, regret against the oracle choice set, and its two-factor bound."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegeneratePriorError, InputError
from .estimation import as_arrays
from .priors import Prior, posterior_moments


@dataclass(frozen=True)
class SelectionOutcome:
    selected: frozenset
    scores: tuple
    threshold_score: float


@dataclass(frozen=True)
class RegretReport:
    regret: float
    n_mistakes: int
    prop_mistakes: float
    max_shrinkage_error: float
    two_parts_bound: float
    n: int

    def to_dict(self):
        return asdict(self)


def top_m_indices(scores, m: int, rng) -> np.ndarray:
    """Indices of the ``m`` largest scores, ties broken by a random permutation.

    Array-level variant of :func:`select_top_m` used in the simulation loops.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= m < n:
        raise InputError(f"need 1 <= m < n, got m={m}, n={n}")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores must be finite")
    rng = np.random.default_rng(rng)
    tiebreak = rng.permutation(n)
    order = np.lexsort((tiebreak, -scores))
    return np.sort(order[:m])


def select_top_m(scores, m: int, rng) -> SelectionOutcome:
    """Choose the ``m`` units with the highest scores.

    Exact ties are broken by a uniform random permutation drawn from ``rng``
    (a ``numpy.random.Generator`` or seed), so the result is deterministic
    given the seed.
    """
    idx = top_m_indices(scores, m, rng)
    scores = np.asarray(scores, dtype=np.float64)
    threshold = float(np.sort(scores)[::-1][m - 1])
    return SelectionOutcome(frozenset(int(i) for i in idx), tuple(scores.tolist()), threshold)


def _indicator(indices, n):
    ind = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(i) for i in indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise InputError("index out of range")
    if np.unique(idx).size != idx.size:
        raise InputError("duplicate indices in choice set")
    ind[idx] = True
    return ind


def regret(theta_oracle, j_bayes, j_alt) -> float:
    """(1/n) sum_i (1[i in j_bayes] - 1[i in j_alt]) * theta_i."""
    theta = np.asarray(theta_oracle, dtype=np.float64)
    n = theta.size
    a = _indicator(j_bayes, n)
    b = _indicator(j_alt, n)
    if a.sum() != b.sum():
        raise InputError("choice sets must have the same size")
    return float(np.sum(theta[a & ~b]) - np.sum(theta[b & ~a])) / n


def decompose(theta, theta_hat, j_bayes, j_eb) -> RegretReport:
    """Regret plus the proportion of mistakes and the largest shrinkage error among them."""
    theta = np.asarray(theta, dtype=np.float64)
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    n = theta.size
    if theta_hat.size != n:
        raise InputError("theta and theta_hat must have equal length")
    a = _indicator(j_bayes, n)
    b = _indicator(j_eb, n)
    if a.sum() != b.sum():
        raise InputError("choice sets must have the same size")
    missed = a & ~b
    extra = b & ~a
    n_mistakes = int(missed.sum())
    r = float(np.sum(theta[missed]) - np.sum(theta[extra])) / n
    sym = missed | extra
    max_err = float(np.max(np.abs(theta[sym] - theta_hat[sym]))) if sym.any() else 0.0
    prop = n_mistakes / n
    return RegretReport(r, n_mistakes, prop, max_err, 2.0 * prop * max_err, n)


def score_units(prior: Prior, obs) -> np.ndarray:
    """Posterior means of every unit under ``prior``, in input order."""
    if getattr(prior, "is_degenerate", False):
        raise DegeneratePriorError("scoring requires a nondegenerate prior")
    x, s = as_arrays(obs)
    if x.size == 0:
        return np.empty(0)
    return posterior_moments(prior, s, x)[1]
