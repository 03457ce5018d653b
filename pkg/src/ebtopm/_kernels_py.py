"""Pure-numpy versions of the hot loops.

Used when the compiled ``_kernels`` extension is unavailable or when
``EBTOPM_PURE_PYTHON=1`` is set. Signatures and return conventions match the
extension exactly.
"""

import numpy as np

_LOG_2PI = np.log(2.0 * np.pi)


def mixture_moments(x, s2, means, variances, logw):
    """Marginal log density, posterior mean and variance under a Gaussian mixture prior.

    Component ``k`` is N(means[k], variances[k]) with log weight ``logw[k]``;
    unit ``i`` is observed as N(mu, s2[i]). A zero variance is a point mass.
    """
    x = np.asarray(x, dtype=np.float64)[:, None]
    s2 = np.asarray(s2, dtype=np.float64)[:, None]
    tot = variances[None, :] + s2
    resid = x - means[None, :]
    lp = logw[None, :] - 0.5 * (_LOG_2PI + np.log(tot)) - 0.5 * resid * resid / tot
    shift = lp.max(axis=1, keepdims=True)
    e = np.exp(lp - shift)
    z = e.sum(axis=1, keepdims=True)
    post = e / z
    shrink = variances[None, :] / tot
    cm = means[None, :] + shrink * resid
    cv = shrink * s2
    pmean = (post * cm).sum(axis=1)
    dev = cm - pmean[:, None]
    pvar = (post * (cv + dev * dev)).sum(axis=1)
    logmarg = shift[:, 0] + np.log(z[:, 0])
    return logmarg, pmean, pvar


def em_weights(lik, shift, w0, tol, max_iter):
    """Fixed-component EM on the mixture weights.

    ``lik`` is the n-by-K component likelihood matrix with row ``i`` divided
    by ``exp(shift[i])`` so that every row maximum is 1. Returns
    ``(weights, ll_trace, iterations, converged)``; ``ll_trace[t]`` is the
    log-likelihood of the t-th iterate and the returned weights are the last
    iterate whose likelihood was recorded.
    """
    lik = np.asarray(lik, dtype=np.float64)
    n = lik.shape[0]
    w = np.array(w0, dtype=np.float64)
    shift_total = float(np.sum(shift))
    trace = []
    converged = False
    it = 0
    while True:
        denom = (lik * w[None, :]).sum(axis=1)
        ll = float(np.sum(np.log(denom))) + shift_total
        trace.append(ll)
        if it > 0 and ll - trace[-2] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        acc = (lik / denom[:, None]).sum(axis=0)
        w = w * acc / n
        it += 1
    return w, np.array(trace), it, converged
