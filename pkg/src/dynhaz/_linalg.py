"""Small dense linear-algebra and log-weight helpers used by the filters.

Everything here operates on plain ndarrays. Coefficient dimension D = P + 1
is small (a handful), so single Cholesky factors plus vectorized
triangular solves beat any batched-factorization scheme.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegeneracyError, NumericalError

LOG_2PI = float(np.log(2.0 * np.pi))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def chol_with_jitter(mat: np.ndarray, diagnostics=None, label: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, with a one-shot diagonal jitter on failure.

    Jitter is 1e-8 * trace/dim added once; a second failure raises
    NumericalError carrying the offending matrix.
    """
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    dim = mat.shape[0]
    jitter = 1e-8 * float(np.trace(mat)) / dim
    if jitter <= 0.0:
        jitter = 1e-12
    repaired = mat + jitter * np.eye(dim)
    if diagnostics is not None:
        diagnostics.count(f"jitter:{label}")
    try:
        return np.linalg.cholesky(repaired)
    except np.linalg.LinAlgError:
        raise NumericalError(f"{label} is not positive definite after jitter", matrix=mat)


def chol_logdet(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Log density of N(mean, L L') evaluated at x.

    `x` and `mean` broadcast against each other on the leading axis;
    the trailing axis is the coefficient dimension. The triangular solve is
    done by multiplying with the (tiny) inverse factor, which is much cheaper
    than per-call LAPACK for the small dimensions used here.
    """
    diff = np.atleast_2d(x - mean)
    dim = chol.shape[0]
    inv_factor = solve_triangular(chol, np.eye(dim), lower=True, check_finite=False)
    sol = diff @ inv_factor.T
    quad = np.sum(sol * sol, axis=1)
    out = -0.5 * (dim * LOG_2PI + chol_logdet(chol) + quad)
    return out if out.size > 1 else float(out[0])


def sample_mvn(rng: np.random.Generator, means: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Draw one N(mean_i, L L') vector per row of `means` (shared covariance)."""
    eps = rng.standard_normal(means.shape)
    return means + eps @ chol.T


def normalize_log_weights(log_w: np.ndarray) -> tuple[np.ndarray, float]:
    """Max-shift normalization; returns (weights summing to 1, log normalizer)."""
    log_w = np.asarray(log_w, dtype=float)
    shift = np.max(log_w)
    if not np.isfinite(shift):
        raise DegeneracyError("all log-weights are -inf")
    # floor at -708 to keep exp out of the (slow) denormal range
    w = np.exp(np.maximum(log_w - shift, -708.0))
    total = w.sum()
    return w / total, float(shift + np.log(total))


def ess_of(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    return 1.0 / float(np.sum(weights * weights))


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q) -> np.ndarray:
    """Weighted quantile: smallest value whose cumulative weight reaches q."""
    order = np.argsort(values)
    v = values[order]
    cw = np.cumsum(weights[order])
    cw /= cw[-1]
    return np.interp(np.atleast_1d(q), cw, v, left=v[0], right=v[-1])
