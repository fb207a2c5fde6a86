"""Compiled inner loops for the likelihood sweeps and the linear-Bayes
recursion, with numpy fallbacks when numba is unavailable.

Both kernels are parallel over particles and strictly sequential over panel
entries, so results are independent of thread count. Overflowing linear
predictors saturate the log likelihood to -inf; exp arguments below -708
(denormal range) are flushed to zero.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap

    prange = range

ETA_MAX = 709.0
ETA_MIN = -708.0


@njit(parallel=True, cache=True)
def _loglik_numba(betas, zd, z_exposed, t_exposed):
    n_rows, dim = betas.shape
    m = z_exposed.shape[0]
    out = np.empty(n_rows)
    for b in prange(n_rows):
        s = 0.0
        for d in range(dim):
            s += betas[b, d] * zd[d]
        acc = 0.0
        overflow = False
        for i in range(m):
            eta = 0.0
            for d in range(dim):
                eta += betas[b, d] * z_exposed[i, d]
            if eta > ETA_MAX:
                overflow = True
                break
            if eta >= ETA_MIN:
                acc += math.exp(eta) * t_exposed[i]
        out[b] = -np.inf if overflow else s - acc
    return out


def _loglik_numpy(betas, zd, z_exposed, t_exposed):
    out = betas @ zd
    if z_exposed.shape[0]:
        eta = betas @ z_exposed.T
        np.maximum(eta, ETA_MIN, out=eta)
        with np.errstate(over="ignore"):
            np.exp(eta, out=eta)
            out = out - eta @ t_exposed
    return out


def loglik(betas, zd, z_exposed, t_exposed):
    """Sum_i [d_i * z_i'beta - t_i * exp(z_i'beta)] for each row of betas."""
    betas = np.ascontiguousarray(np.atleast_2d(betas))
    if HAVE_NUMBA:
        return _loglik_numba(betas, zd, z_exposed, t_exposed)
    return _loglik_numpy(betas, zd, z_exposed, t_exposed)


@njit(parallel=True, cache=True)
def _lb_forward_numba(m0, c0, z, t, d, q_min):
    n, dim = z.shape
    n_rows = m0.shape[0]
    c = c0.copy()
    a_all = np.empty((n, dim))
    q_all = np.empty(n)
    lognum = np.empty(n)
    logtq = np.empty(n)
    clamped = 0
    for i in range(n):
        q = 0.0
        for r in range(dim):
            s = 0.0
            for cc in range(dim):
                s += c[r, cc] * z[i, cc]
            a_all[i, r] = s
        for r in range(dim):
            q += a_all[i, r] * z[i, r]
        if q <= q_min:
            q = q_min
            clamped += 1
        q_all[i] = q
        lognum[i] = math.log1p(q) if d[i] == 1 else 0.0
        logtq[i] = math.log(t[i] * q) if t[i] > 0.0 else 0.0
        if d[i] == 1:
            f = 1.0 / (1.0 + q)
            for r in range(dim):
                for cc in range(dim):
                    c[r, cc] -= a_all[i, r] * a_all[i, cc] * f

    mm = m0.copy()
    for k in prange(n_rows):
        for i in range(n):
            if t[i] > 0.0:
                eta = 0.0
                for dd in range(dim):
                    eta += mm[k, dd] * z[i, dd]
                arg = eta + logtq[i]
                if arg < -700.0:
                    den = 0.0
                elif arg > 40.0:
                    den = arg
                else:
                    den = math.log1p(math.exp(arg))
                g = (lognum[i] - den) / q_all[i]
            else:
                g = lognum[i] / q_all[i]
            if g != 0.0:
                for dd in range(dim):
                    mm[k, dd] += a_all[i, dd] * g
    return mm, c, clamped


def _lb_forward_numpy(m0, c0, z, t, d, q_min):
    m = m0.copy()
    c = c0.copy()
    coef = np.empty(m.shape[0])
    clamped = 0
    for i in range(len(t)):
        z_row = z[i]
        a_vec = c @ z_row
        q = float(z_row @ a_vec)
        if q <= q_min:
            q = q_min
            clamped += 1
        if t[i] > 0.0:
            np.matmul(m, z_row, out=coef)
            coef += np.log(t[i] * q)
            np.maximum(coef, -700.0, out=coef)
            np.logaddexp(0.0, coef, out=coef)
            np.negative(coef, out=coef)
        else:
            coef.fill(0.0)
        if d[i] == 1:
            coef += np.log1p(q)
        coef /= q
        m += a_vec[None, :] * coef[:, None]
        if d[i] == 1:
            c = c - np.outer(a_vec, a_vec) / (1.0 + q)
    return m, c, clamped


def lb_forward(m0, c0, z, t, d, q_min):
    """Linear-Bayes recursion over one interval's entries.

    Returns (per-ancestor means, shared covariance, clamp count)."""
    m0 = np.ascontiguousarray(m0, dtype=float)
    c0 = np.ascontiguousarray(c0, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    d = np.ascontiguousarray(d, dtype=np.int8)
    if HAVE_NUMBA:
        return _lb_forward_numba(m0, c0, z, t, d, q_min)
    return _lb_forward_numpy(m0, c0, z, t, d, q_min)
