"""Linear-Bayes proposal machinery for the particle filters.

The forward proposal treats each at-risk entry in turn. For entry i the
hazard parameter lambda has a conjugate Gamma(alpha, psi) prior whose
hyperparameters are matched to the current coefficient belief through the
linear predictor eta = z' beta:

    ln(alpha) - ln(psi) = z' beta_prev,      1 / alpha = z' U z.

The Laplace-approximate posterior of eta after seeing (t, d) has

    E[eta | t] = ln((alpha + d) / (psi + t)),   V[eta | t] = 1 / (alpha + d),

and propagating these moments back to beta gives the recursive update

    m <- beta + (A / Q) * ln[(1 + Q d) / (1 + t Q e^a)]
    C <- U - A A' * d / (1 + d Q)

with a = z' beta, A = U z, Q = z' U z; the pair (m, C) then plays the role of
(beta, U) for the next entry. Note the covariance chain never involves the
coefficient value, so C is shared across all ancestor particles of one
interval while the means are tracked per ancestor.

Backward and smoothing proposals follow from conditioning the joint Gaussian
of (beta_j, beta_{j+1}) under the discount prior:

    mean = (1 - phi) * m + phi * beta_next,    cov = (1 - phi) * C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._linalg import symmetrize
from .errors import ConfigurationError, Diagnostics

Q_MIN = 1e-12


@dataclass(frozen=True, eq=False)
class GaussianSummary:
    """Mean vector and covariance matrix of a Gaussian belief."""

    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class GammaHyper:
    alpha: float
    psi: float

    def __post_init__(self):
        if self.alpha <= 0 or self.psi <= 0:
            raise ConfigurationError("Gamma hyperparameters must be positive")


def gamma_hyperparameters(beta_prev: np.ndarray, u_cov: np.ndarray, z: np.ndarray,
                          diagnostics: Diagnostics | None = None) -> GammaHyper:
    """Moment-matched Gamma(alpha, psi) hyperparameters for one entry.

    Q = z'Uz is clamped below at 1e-12 (with a diagnostics counter) because
    alpha = 1/Q explodes when a covariate direction has no prior variance.
    """
    z = np.asarray(z, dtype=float)
    q = float(z @ np.asarray(u_cov, dtype=float) @ z)
    if q <= Q_MIN:
        q = Q_MIN
        if diagnostics is not None:
            diagnostics.count("q_clamped")
    alpha = 1.0 / q
    psi = alpha * np.exp(-float(np.asarray(beta_prev, dtype=float) @ z))
    return GammaHyper(alpha=alpha, psi=psi)


def eta_log_posterior(hyper: GammaHyper, t: float, d: int, eta) -> np.ndarray:
    """Unnormalized log posterior of the linear predictor given (t, d)."""
    eta = np.asarray(eta, dtype=float)
    return eta * (hyper.alpha + d) - (hyper.psi + t) * np.exp(eta)


def eta_log_posterior_derivatives(hyper: GammaHyper, t: float, d: int, eta) -> tuple:
    """First and second derivatives of the eta log posterior (for testing)."""
    eta = np.asarray(eta, dtype=float)
    expo = (hyper.psi + t) * np.exp(eta)
    return hyper.alpha + d - expo, -expo


def laplace_eta_moments(hyper: GammaHyper, t: float, d: int) -> tuple:
    """Laplace mean/variance of eta: (ln((a+d)/(p+t)), 1/(a+d))."""
    a, p = hyper.alpha + d, hyper.psi + t
    if a <= 0 or p <= 0:
        raise ConfigurationError("alpha + d and psi + t must be positive")
    return float(np.log(a / p)), 1.0 / a


def forward_moments_batch(prev: np.ndarray, u_cov: np.ndarray, sl,
                          diagnostics: Diagnostics | None = None):
    """Run the forward-proposal recursion for a batch of ancestor vectors.

    Returns (M, C): per-ancestor means (K, D) and the shared covariance (D, D)
    after consuming all entries of the slice in panel order. An empty slice
    returns the inputs unchanged.
    """
    m = np.array(prev, dtype=float, copy=True)
    if m.ndim == 1:
        m = m[None, :]
    c = symmetrize(np.array(u_cov, dtype=float, copy=True))
    if sl is None or len(sl) == 0:
        return m, c

    m, c, clamped = _kernels.lb_forward(m, c, sl.z, sl.exposure, sl.events, Q_MIN)
    if clamped and diagnostics is not None:
        diagnostics.count("q_clamped", clamped)
    return m, symmetrize(c)


def forward_proposal_moments(beta_prev: np.ndarray, u_cov: np.ndarray, sl,
                             diagnostics: Diagnostics | None = None) -> GaussianSummary:
    """Forward proposal moments (m_j, C_j) for a single ancestor."""
    m, c = forward_moments_batch(np.atleast_2d(beta_prev), u_cov, sl, diagnostics)
    return GaussianSummary(mean=m[0], cov=c)


def artificial_prior(mu_prev: np.ndarray, sigma_prev: np.ndarray, phi: float) -> GaussianSummary:
    """Artificial prior gamma_j = N(mu_{j-1}, Sigma_{j-1} / phi).

    Equals the moment-matched predictive prior: Sigma/phi = Sigma + (1/phi - 1) Sigma.
    """
    if not (0.0 < phi < 1.0):
        raise ConfigurationError(f"phi must lie in (0,1), got {phi}")
    return GaussianSummary(mean=np.asarray(mu_prev, dtype=float),
                           cov=symmetrize(np.asarray(sigma_prev, dtype=float) / phi))


def backward_proposal_moments(mu_fwd: np.ndarray, sigma_fwd: np.ndarray,
                              beta_next: np.ndarray, phi: float) -> GaussianSummary:
    """Backward proposal: N((1-phi) mu_j + phi beta_{j+1}, (1-phi) Sigma_j)."""
    if not (0.0 < phi < 1.0):
        raise ConfigurationError(f"phi must lie in (0,1), got {phi}")
    mean = (1.0 - phi) * np.asarray(mu_fwd, dtype=float) + phi * np.asarray(beta_next, dtype=float)
    return GaussianSummary(mean=mean, cov=symmetrize((1.0 - phi) * np.asarray(sigma_fwd, dtype=float)))


def smoothing_proposal_moments(fwd: GaussianSummary, beta_next: np.ndarray,
                               phi: float) -> GaussianSummary:
    """Smoothing proposal: the backward formulas with (m_j, C_j) substituted."""
    return backward_proposal_moments(fwd.mean, fwd.cov, beta_next, phi)
