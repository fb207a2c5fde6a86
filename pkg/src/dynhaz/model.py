"""Piecewise exponential hazard likelihood, survival function, and the
random-walk / discount-factor prior.

Within interval j the hazard for subject i is lambda_ij = exp(z_i' beta_j)
with z_i = (1, x_i'), so the interval log likelihood over the at-risk entries
is

    log L_j(beta) = sum_i [ d_ij * z_i' beta - t_ij * exp(z_i' beta) ].

All weight-bearing math is done in log space; an overflowing exp saturates the
log likelihood to -inf instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._linalg import chol_with_jitter, mvn_logpdf, symmetrize
from .errors import DomainError, NumericalError


@dataclass(frozen=True)
class DiscountPrior:
    """Random-walk prior with discounted evolution variance.

    The evolution covariance for interval j is U_j = (1/phi - 1) * Sigma_{j-1}
    where Sigma_{j-1} is the posterior covariance of the previous interval.
    The initial coefficient distribution is N(initial_mean,
    initial_variance * I).
    """

    phi: float
    initial_mean: np.ndarray
    initial_variance: float = 100.0

    def __post_init__(self):
        if not (0.0 < self.phi < 1.0):
            raise DomainError(f"phi must lie in (0,1), got {self.phi}")
        if self.initial_variance <= 0:
            raise DomainError("initial variance must be positive")
        object.__setattr__(self, "initial_mean", np.asarray(self.initial_mean, dtype=float))


@dataclass(frozen=True, eq=False)
class LikelihoodTerms:
    """Precomputed design pieces for fast batched interval log likelihoods.

    zd collapses the event part (sum_i d_ij z_i); the exposure part keeps only
    rows with positive exposure so that t=0 entries can never produce 0 * inf.
    """

    zd: np.ndarray        # (D,)
    z_exposed: np.ndarray  # (m, D)
    t_exposed: np.ndarray  # (m,)
    n_entries: int
    dim: int

    @classmethod
    def from_slice(cls, sl) -> "LikelihoodTerms":
        if len(sl) == 0:
            raise ValueError("empty slice has no design; handle n_j = 0 upstream")
        zd = sl.z.T @ sl.events.astype(float)
        pos = sl.exposure > 0
        return cls(zd=zd, z_exposed=np.ascontiguousarray(sl.z[pos]),
                   t_exposed=sl.exposure[pos], n_entries=len(sl), dim=sl.z.shape[1])


def batch_interval_log_likelihood(terms: LikelihoodTerms | None, betas: np.ndarray) -> np.ndarray:
    """log L_j for each row of `betas`; an empty interval contributes 0."""
    betas = np.atleast_2d(betas)
    if terms is None:
        return np.zeros(len(betas))
    return _kernels.loglik(betas, terms.zd, terms.z_exposed, terms.t_exposed)


def interval_log_likelihood(sl, beta: np.ndarray) -> float:
    """log L_j(t_j | beta) over one interval slice (0 for an empty slice)."""
    if sl is None or len(sl) == 0:
        return 0.0
    return float(batch_interval_log_likelihood(LikelihoodTerms.from_slice(sl), beta)[0])


def cumulative_hazard(beta_path: np.ndarray, cuts: np.ndarray, t: float, x: np.ndarray) -> float:
    """Integrated hazard on [0, t] for covariates x under a coefficient path."""
    if t < 0 or t > cuts[-1]:
        raise DomainError(f"time {t} outside [0, {cuts[-1]}]")
    z = np.concatenate([[1.0], np.asarray(x, dtype=float)])
    lam = np.exp(beta_path @ z)
    widths = np.minimum(t, cuts[1:]) - cuts[:-1]
    return float(lam @ np.clip(widths, 0.0, None))


def survival_probability(beta_path: np.ndarray, partition, t: float, x: np.ndarray) -> float:
    """S(t | x) = exp(-integral of the piecewise-constant hazard up to t)."""
    cuts = partition.cuts if hasattr(partition, "cuts") else np.asarray(partition)
    return float(np.exp(-cumulative_hazard(np.atleast_2d(beta_path), cuts, t, x)))


def discount_variance(sigma_prev: np.ndarray, phi: float) -> np.ndarray:
    """Evolution covariance U_j = (1/phi - 1) * Sigma_{j-1}."""
    if not (0.0 < phi < 1.0):
        raise DomainError(f"phi must lie in (0,1), got {phi}")
    sigma_prev = np.asarray(sigma_prev, dtype=float)
    if not np.all(np.isfinite(sigma_prev)):
        raise NumericalError("previous covariance has non-finite entries", matrix=sigma_prev)
    return symmetrize((1.0 / phi - 1.0) * sigma_prev)


def rw_transition_logdensity(beta_to: np.ndarray, beta_from: np.ndarray, u_cov: np.ndarray) -> float:
    """Gaussian random-walk step density: N(beta_to - beta_from; 0, U)."""
    chol = chol_with_jitter(np.asarray(u_cov, dtype=float), label="transition covariance")
    return float(mvn_logpdf(np.atleast_2d(beta_to), np.atleast_2d(beta_from), chol))
