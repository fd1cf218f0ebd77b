"""Batched first-order minimization on softmax-parametrized simplices.

All exponent optimizations share the same skeleton: a batch of restarts,
each a free logit vector mapped through a normalized exponential onto the
(masked) probability simplex, driven by gradient descent with Armijo
backtracking on a smooth penalized objective.  The batch dimension keeps
the whole multi-start search inside vectorized numpy.
"""

from __future__ import annotations

import numpy as np

LOG2E = 1.0 / np.log(2.0)

__all__ = ["LOG2E", "softmax_rows", "group_entropy", "minimize_batch"]


def softmax_rows(theta: np.ndarray) -> np.ndarray:
    """Row-wise softmax of (B, K) logits."""
    z = theta - theta.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def group_entropy(pf: np.ndarray, axes: tuple[int, ...]):
    """Entropy (bits) of the marginal of ``pf`` on ``axes``, plus gradient.

    ``pf`` has shape (B, dims...); ``axes`` index into dims (0-based, batch
    excluded).  Returns (H (B,), grad broadcastable to pf.shape); the
    gradient of H with respect to each cell is -(log2 m + log2 e) evaluated
    at the cell's projection.
    """
    nd = pf.ndim - 1
    comp = tuple(i + 1 for i in range(nd) if i not in axes)
    m = pf.sum(axis=comp, keepdims=True) if comp else pf
    logm = np.where(m > 0.0, np.log2(np.where(m > 0.0, m, 1.0)), 0.0)
    h = -(m * logm).sum(axis=tuple(range(1, pf.ndim)))
    grad = -(logm + LOG2E)
    return h, grad


def minimize_batch(
    value_and_grad,
    value_only,
    theta0: np.ndarray,
    *,
    max_iters: int,
    tol: float,
    step0: float = 1.0,
    patience: int = 6,
    armijo: float = 1e-4,
):
    """Gradient descent with per-restart backtracking line search.

    ``value_and_grad(theta) -> (f (B,), g (B, K))`` and ``value_only`` must
    accept any leading batch size.  A restart is frozen once its improvement
    stays below ``tol * (1 + |f|)`` for ``patience`` consecutive steps.
    Returns (theta, f).
    """
    theta = np.array(theta0, dtype=float)
    nb = theta.shape[0]
    f, g = value_and_grad(theta)
    step = np.full(nb, step0)
    stall = np.zeros(nb, dtype=int)
    active = np.ones(nb, dtype=bool)

    for _ in range(max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gi = g[idx]
        gnorm2 = (gi * gi).sum(axis=1)
        s = step[idx].copy()
        f_new = f[idx].copy()
        theta_new = theta[idx].copy()
        todo = np.ones(idx.size, dtype=bool)
        for _bt in range(45):
            t = np.flatnonzero(todo)
            if t.size == 0:
                break
            cand = theta[idx[t]] - s[t, None] * gi[t]
            fc = value_only(cand)
            ok = fc <= f[idx[t]] - armijo * s[t] * gnorm2[t] + 1e-15
            acc = t[ok]
            theta_new[acc] = cand[ok]
            f_new[acc] = fc[ok]
            todo[acc] = False
            rej = t[~ok]
            s[rej] *= 0.5
            dead = rej[s[rej] < 1e-18]
            todo[dead] = False  # stuck: keep the old point
        improve = f[idx] - f_new
        still = improve <= tol * (1.0 + np.abs(f_new))
        stall[idx] = np.where(still, stall[idx] + 1, 0)
        theta[idx] = theta_new
        f[idx] = f_new
        step[idx] = np.minimum(s * 2.0, 1e4)
        active[idx[stall[idx] >= patience]] = False
        live = np.flatnonzero(active)
        if live.size:
            f_live, g_live = value_and_grad(theta[live])
            f[live] = f_live
            g[live] = g_live
    return theta, f
