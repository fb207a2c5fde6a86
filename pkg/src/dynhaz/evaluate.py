"""Posterior-predictive evaluation: WAIC, survival prediction, the expected
discrimination measure, and effective-sample-size diagnostics.

Expectations over the fitted posterior are self-normalized importance
estimates over the complete coefficient paths and their weights
(see SmootherOutput.paths / path_log_weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import normalize_log_weights
from .data import expand_exposures
from .errors import Diagnostics, DomainError, NumericalError
from .sim import PiecewisePaths
from .smoother import SmootherOutput

LOGL_FLOOR = -1e15  # replaces -inf path log likelihoods in variance terms


def posterior_expectation(g, paths: np.ndarray, path_log_weights: np.ndarray) -> float:
    """Self-normalized posterior expectation of g over weighted paths.

    `g` is either a callable mapping the (S, J, D) path array to S values, or
    the values themselves.
    """
    values = np.asarray(g(paths) if callable(g) else g, dtype=float)
    w, _ = normalize_log_weights(np.asarray(path_log_weights, dtype=float))
    return float(values @ (w / w.sum()))


def _subject_matrices(records, partition, diagnostics=None):
    """Per-subject exposure and event matrices (n, J) plus design rows."""
    panel = expand_exposures(records, partition, diagnostics)
    n, n_int = panel.n_subjects, panel.n_intervals
    expo = np.zeros((n, n_int))
    evnt = np.zeros((n, n_int))
    dim = panel.slices[0].z.shape[1] if panel.slices else 1
    z = np.zeros((n, dim))
    for j, sl in enumerate(panel.slices):
        expo[sl.subjects, j] = sl.exposure
        evnt[sl.subjects, j] = sl.events
        z[sl.subjects] = sl.z
    return z, expo, evnt, panel.truncated


def path_log_likelihoods(paths: np.ndarray, z: np.ndarray, expo: np.ndarray,
                         evnt: np.ndarray, chunk: int = 64) -> np.ndarray:
    """(S, n) log likelihood of each subject under each coefficient path."""
    s = len(paths)
    n = len(z)
    out = np.empty((s, n))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        eta = paths @ z[lo:hi].T  # (S, J, b)
        event_part = np.einsum("sjb,bj->sb", eta, evnt[lo:hi])
        np.maximum(eta, -708.0, out=eta)
        with np.errstate(over="ignore", invalid="ignore"):
            lam = np.exp(eta, out=eta)
            block = event_part - np.einsum("sjb,bj->sb", lam, expo[lo:hi])
        block = np.where(np.isnan(block), -np.inf, block)
        out[:, lo:hi] = block
    return out


@dataclass(frozen=True)
class WaicResult:
    """Both orientations of the criterion: `raw` is the penalized log
    predictive density (larger is better); `deviance` is -2 * raw (lower is
    better), the scale used for model comparison tables."""

    deviance: float
    raw: float
    lppd: float
    penalty: float
    n_test: int
    truncated: int

    def __float__(self) -> float:
        return self.deviance


def waic(test_records, output: SmootherOutput, partition,
         diagnostics: Diagnostics | None = None) -> WaicResult:
    """Watanabe-Akaike criterion on an out-of-sample test set.

    Per subject: lppd_i = log E_post[L(t_i* | beta_paths)] and the
    effective-parameter penalty p_i = V_post[log L(t_i* | beta_paths)], both
    estimated with the full-path smoothing weights. Test times beyond the
    last cut are truncated there with a warning.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    z, expo, evnt, truncated = _subject_matrices(test_records, partition, diagnostics)
    if truncated:
        diagnostics.warn(f"waic: {truncated} test subjects truncated at the last cut")

    log_l = path_log_likelihoods(output.paths, z, expo, evnt)
    log_w = output.path_log_weights  # normalized
    # lppd_i = logsumexp(log w + log L_i)
    stacked = log_w[:, None] + log_l
    shift = stacked.max(axis=0)
    lppd = shift + np.log(np.sum(np.exp(stacked - shift), axis=0))

    w = output.path_weights()
    floored = np.maximum(log_l, LOGL_FLOOR)
    n_floored = int(np.sum(~np.isfinite(log_l)))
    if n_floored:
        diagnostics.count("waic_floored_loglik", n_floored)
    mean_logl = w @ floored
    penalty = w @ (floored - mean_logl) ** 2

    raw = float(np.sum(lppd - penalty))
    return WaicResult(deviance=-2.0 * raw, raw=raw, lppd=float(lppd.sum()),
                      penalty=float(penalty.sum()), n_test=len(test_records),
                      truncated=truncated)


def predict_survival(output: SmootherOutput, partition, x_star: np.ndarray, t: float) -> float:
    """Posterior predictive survival probability at time t for covariates x."""
    cuts = partition.cuts if hasattr(partition, "cuts") else np.asarray(partition, dtype=float)
    if t < 0 or t > cuts[-1]:
        raise DomainError(f"time {t} outside [0, {cuts[-1]}]")
    z = np.concatenate([[1.0], np.asarray(x_star, dtype=float)])
    lam = np.exp(output.paths @ z)  # (S, J)
    widths = np.clip(np.minimum(t, cuts[1:]) - cuts[:-1], 0.0, None)
    cum = lam @ widths
    return float(output.path_weights() @ np.exp(np.maximum(-cum, -708.0)))


class _PredictiveModel:
    """Grid evaluator of the posterior predictive density/survival of a fit."""

    def __init__(self, output: SmootherOutput):
        self.cuts = output.cuts
        self.paths = output.paths
        self.weights = output.path_weights()

    def _grids(self, x: np.ndarray, times: np.ndarray):
        z = np.concatenate([[1.0], np.asarray(x, dtype=float)])
        lam = np.exp(self.paths @ z)  # (S, J)
        cum_cuts = np.concatenate(
            [np.zeros((len(lam), 1)), np.cumsum(lam * np.diff(self.cuts), axis=1)], axis=1)
        idx = np.clip(np.searchsorted(self.cuts, times, side="right") - 1,
                      0, len(self.cuts) - 2)
        cum = cum_cuts[:, idx] + lam[:, idx] * (times - self.cuts[idx])
        sf = np.exp(np.maximum(-cum, -708.0))
        return lam[:, idx], sf

    def survival_grid(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        _, sf = self._grids(x, times)
        return self.weights @ sf

    def density_grid(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        lam, sf = self._grids(x, times)
        return self.weights @ (lam * sf)


class _ExactModel:
    """Grid evaluator of a fixed piecewise-hazard trajectory."""

    def __init__(self, paths: PiecewisePaths):
        self.model = paths
        self.cuts = paths.cuts

    def survival_grid(self, x, times):
        return self.model.survival_grid(x, times)

    def density_grid(self, x, times):
        return self.model.hazard_grid(x, times) * self.model.survival_grid(x, times)


def _grid_model(obj):
    if isinstance(obj, SmootherOutput):
        return _PredictiveModel(obj)
    if isinstance(obj, PiecewisePaths):
        return _ExactModel(obj)
    return obj  # anything exposing survival_grid / density_grid / cuts


def edm(true_model, fitted, test_covariates, horizon: float | None = None,
        grid_size: int = 400, literal_denominator: bool = False,
        diagnostics: Diagnostics | None = None) -> float:
    """Expected discrimination between the true and fitted past-life densities.

    For each covariate row x the inner integral of
    (f(u|x)/F(t|x)) * log[(f(u|x)/F(t|x)) / (fhat(u|x)/Fhat(t|x))] over [0, t]
    is evaluated by the trapezoidal rule on a uniform grid; the result is
    averaged over the test covariates. `literal_denominator` switches the
    fitted ratio's denominator from Fhat(t|x) to Fhat(u|x).

    Grid nodes with a nonpositive density ratio are skipped and counted; more
    than 5% skipped nodes raises.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    truth = _grid_model(true_model)
    fit = _grid_model(fitted)
    t_end = float(truth.cuts[-1] if horizon is None else horizon)
    if t_end <= 0 or t_end > truth.cuts[-1] or t_end > fit.cuts[-1]:
        raise DomainError(f"horizon {t_end} outside the common partition range")
    grid = np.linspace(0.0, t_end, grid_size + 1)

    test_covariates = np.atleast_2d(np.asarray(test_covariates, dtype=float))
    total, skipped, seen = 0.0, 0, 0
    for x in test_covariates:
        sf_true = truth.survival_grid(x, grid)
        f_true = truth.density_grid(x, grid)
        cdf_true_end = 1.0 - sf_true[-1]
        if cdf_true_end <= 0.0:
            raise DomainError("true CDF at the horizon is zero for a test covariate")
        f_fit = fit.density_grid(x, grid)
        if literal_denominator:
            denom_fit = 1.0 - fit.survival_grid(x, grid)
            denom_fit[0] = np.nan  # F(0) = 0: the literal ratio is undefined there
        else:
            denom_fit = 1.0 - fit.survival_grid(x, grid[-1:])
        ratio_true = f_true / cdf_true_end
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio_fit = f_fit / denom_fit
            valid = (ratio_true > 0) & (ratio_fit > 0) & np.isfinite(ratio_fit)
            integrand = np.where(valid, ratio_true * np.log(ratio_true / ratio_fit), 0.0)
        seen += len(grid)
        skipped += int(np.sum(~valid))
        total += np.trapezoid(integrand, grid)

    if skipped:
        diagnostics.count("edm_skipped_nodes", skipped)
    if skipped > 0.05 * seen:
        raise NumericalError(f"EDM skipped {skipped}/{seen} grid nodes")
    return float(total / len(test_covariates))


@dataclass(frozen=True, eq=False)
class EssReport:
    """Across-run effective sample size per interval and coefficient."""

    mean_estimate: np.ndarray   # across-run mean of posterior means (J, D)
    avg_variance: np.ndarray    # across-run average posterior variance (J, D)
    mse: np.ndarray             # across-run squared deviation of the means (J, D)
    ess: np.ndarray             # avg_variance / mse, +inf where mse == 0 (J, D)
    m_runs: int
    degenerate: np.ndarray      # mask of +inf sentinels
    cpu_seconds: float | None = None
    ess_per_sec: np.ndarray | None = None

    def to_dict(self) -> dict:
        payload = {
            "mean_estimate": self.mean_estimate.tolist(),
            "avg_variance": self.avg_variance.tolist(),
            "mse": self.mse.tolist(),
            "ess": self.ess.tolist(),
            "m_runs": self.m_runs,
            "degenerate": self.degenerate.tolist(),
        }
        if self.cpu_seconds is not None:
            payload["cpu_seconds"] = self.cpu_seconds
            payload["ess_per_sec"] = self.ess_per_sec.tolist()
        return payload


def ess(replicate_means: np.ndarray, replicate_variances: np.ndarray,
        cpu_seconds=None) -> EssReport:
    """ESS = (average posterior variance) / (MSE of the posterior mean),
    estimated from M independent runs; optionally scaled per CPU second."""
    means = np.asarray(replicate_means, dtype=float)
    variances = np.asarray(replicate_variances, dtype=float)
    if means.ndim != 3 or means.shape != variances.shape:
        raise DomainError("expected matching (M, J, D) mean and variance arrays")
    m_runs = means.shape[0]
    if m_runs < 2:
        raise DomainError("need at least 2 replicates")

    center = means.mean(axis=0)
    mse = np.mean((means - center) ** 2, axis=0)
    avg_var = variances.mean(axis=0)
    degenerate = mse == 0.0
    with np.errstate(divide="ignore"):
        ratio = np.where(degenerate, np.inf, avg_var / np.where(degenerate, 1.0, mse))

    secs = None
    per_sec = None
    if cpu_seconds is not None:
        secs = float(np.mean(cpu_seconds))
        per_sec = ratio / secs
    return EssReport(mean_estimate=center, avg_variance=avg_var, mse=mse, ess=ratio,
                     m_runs=m_runs, degenerate=degenerate, cpu_seconds=secs,
                     ess_per_sec=per_sec)
