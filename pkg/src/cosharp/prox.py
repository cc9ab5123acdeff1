"""Projections and proximal maps used by the primal-dual solver."""
from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatch, InfeasibleBudget


def _ksimplex_excess(x, mu, K):
    return np.clip(x - mu, 0.0, 1.0).sum() - K


def ksimplex_threshold(x, K, mu0=None, max_iter=200):
    """Root ``mu`` of ``phi(mu) = sum(clip(x - mu, 0, 1)) - K``.

    ``phi`` is piecewise linear and non-increasing with slope ``-|I|`` where
    ``I = {i : 0 <= x_i - mu <= 1}``. Newton steps are taken on that slope
    and replaced by bisection whenever the slope vanishes or the step
    leaves the current bracket. ``mu0`` is an optional starting guess; it
    only affects speed, never the resulting projection.
    """
    x = np.asarray(x, dtype=float)
    p = x.size
    if not 0 < K <= p:
        raise InfeasibleBudget(f"budget K={K} must satisfy 0 < K <= p={p}")
    lo, hi = x.min() - 1.0, x.max()
    f_lo, f_hi = _ksimplex_excess(x, lo, K), _ksimplex_excess(x, hi, K)
    assert f_lo >= 0.0 >= f_hi, (f_lo, f_hi)
    if f_lo == 0.0:
        return lo
    ftol = 1e-12 * max(1.0, K)
    mu, f = hi, f_hi
    if mu0 is not None and lo < mu0 < hi:
        mu, f = mu0, _ksimplex_excess(x, mu0, K)
        if f > 0:
            lo = mu0
        else:
            hi = mu0
    for _ in range(max_iter):
        if abs(f) <= ftol or hi - lo <= 1e-14:
            break
        d = x - mu
        slope = np.count_nonzero((d >= 0.0) & (d <= 1.0))
        step = mu + f / slope if slope else np.nan
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        mu = step
        f = _ksimplex_excess(x, mu, K)
        if f > 0:
            lo = mu
        else:
            hi = mu
    return mu


def project_ksimplex(x, K):
    """Euclidean projection onto ``{z : sum(z) = K, 0 <= z <= 1}``.

    Parameters
    ----------
    x : array_like, shape (p,)
    K : float
        Budget, ``0 < K <= p``.

    Returns
    -------
    ndarray, shape (p,)
        ``clip(x - mu, 0, 1)`` with ``mu`` from :func:`ksimplex_threshold`.

    Raises
    ------
    InfeasibleBudget
        If ``K <= 0`` or ``K > p``.
    """
    x = np.asarray(x, dtype=float)
    return _project_ksimplex(x, K)[0]


def _project_ksimplex(x, K, mu0=None):
    mu = ksimplex_threshold(x, K, mu0)
    return np.clip(x - mu, 0.0, 1.0), mu


def prox_conj_misfit(v, step, y):
    """Prox of ``step * f*`` where ``f = ||. - y||``.

    ``f*`` is ``w -> y^T w`` on the unit ball and ``+inf`` outside, so the
    prox shifts by ``-step * y`` and rescales into the unit ball.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    if v.shape != y.shape:
        raise DimensionMismatch(f"v has shape {v.shape} but y has shape {y.shape}")
    if not step > 0:
        raise ValueError("step must be positive")
    w = v - step * y
    return w / max(1.0, float(np.linalg.norm(w)))


def project_l1_ball(x, K):
    """Euclidean projection onto ``{z : ||z||_1 <= K}`` (sort and soft-threshold)."""
    x = np.asarray(x, dtype=float)
    if not K > 0:
        raise ValueError("radius K must be positive")
    a = np.abs(x)
    if a.sum() <= K:
        return x.copy()
    srt = np.sort(a)[::-1]
    css = np.cumsum(srt) - K
    ks = np.arange(1, a.size + 1)
    rho = np.nonzero(srt - css / ks > 0)[0][-1]
    lam = css[rho] / (rho + 1)
    return np.sign(x) * np.maximum(a - lam, 0.0)
