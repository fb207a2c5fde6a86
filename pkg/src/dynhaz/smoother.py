"""Two-filter particle smoother: forward APF, backward information filter,
and the combining smoothing filter.

The forward filter targets the filtering posteriors p(beta_j | t_{1:j}); the
backward filter targets artificial posteriors proportional to
p(t_{j:J} | beta_j) * gamma_j(beta_j), where the artificial prior gamma_j is
the Gaussian approximation of the predictive prior built from cached forward
moments; the smoothing filter pairs a forward ancestor at j-1 with a backward
partner at j+1 and draws S = R * K particles per interval from the combined
proposal.

Weight algebra (all in log space). A forward particle proposed from ancestor
a through density q carries

    log w = log L_j(new) + log p(new | prev_a) - log L_j(prev_a) - log q(new),

the -log L_j(prev_a) being the ancestor-selection tilt nu^a ~ L_j(prev_a) w^a
cancelling against the ancestor's weight. Backward and smoothing weights
follow the same pattern with the artificial-prior ratio
gamma_j(new) / gamma_{j+1}(partner) and, for the smoother, the transition
density to the backward partner.

Boundary conventions: the "forward side" of interval 1 is the initial
distribution, kept as a particle set of its own; at j = J the smoothing step
has no backward partner and reduces exactly to a forward importance step with
S draws (its target is the forward filter posterior), which is also how the
single-interval case collapses. The backward pass starts from
uniform-weighted draws of gamma_J, so the interval-J likelihood enters at the
first backward step through the ancestor-selection mechanism.

Ancestor resampling is multinomial, matching the pairing in the weight
expressions; degeneracy is reported through diagnostics, never auto-repaired.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import PHASE_BACKWARD, PHASE_FORWARD, PHASE_SMOOTH, stream
from ._linalg import (chol_with_jitter, ess_of, mvn_logpdf, normalize_log_weights,
                      sample_mvn, symmetrize)
from .errors import ConfigurationError, Diagnostics
from .model import LikelihoodTerms, batch_interval_log_likelihood, discount_variance
from .proposals import GaussianSummary, forward_moments_batch

LINEAR_BAYES = "linear-bayes"
BOOTSTRAP = "bootstrap"
_PROPOSALS = (LINEAR_BAYES, BOOTSTRAP)


@dataclass(eq=False)
class ParticleSet:
    """Weighted particles for one interval.

    `log_weights` are stored normalized (their logsumexp is zero) and
    `weights` caches the corresponding probabilities. `ancestors` indexes the
    set this one was proposed from (-1 for initial draws).
    """

    particles: np.ndarray
    log_weights: np.ndarray
    ancestors: np.ndarray
    interval: int
    weights: np.ndarray = field(init=False)
    ess: float = field(init=False)

    def __post_init__(self):
        w, log_norm = normalize_log_weights(self.log_weights)
        w = w / w.sum()
        self.weights = w
        self.log_weights = np.asarray(self.log_weights, dtype=float) - log_norm
        self.ess = ess_of(w)

    @property
    def size(self) -> int:
        return len(self.particles)


def weighted_moments(pset: ParticleSet) -> GaussianSummary:
    """Weighted mean and covariance of a particle set (covariance symmetrized)."""
    w = pset.weights
    mean = w @ pset.particles
    centered = pset.particles - mean
    cov = (centered * w[:, None]).T @ centered
    return GaussianSummary(mean=mean, cov=symmetrize(cov))


@dataclass(eq=False)
class FilterCache:
    """Per-interval quantities shared between the three passes.

    Entry j refers to interval j (1-based); index 0 holds the moments of the
    initial distribution's particle set. The forward-proposal means are per
    ancestor; the covariance chain is ancestor-independent, so a single matrix
    per interval.
    """

    phi: float
    mu: list
    sigma: list
    u_cov: list
    u_chol: list
    prop_mean: list
    prop_cov: list
    prop_chol: list
    fwd_nu_log: list
    fwd_prev_loglik: list
    bwd_nu_log: list
    bwd_next_loglik: list
    bwd_target_logw: list
    gamma_chol: list

    @classmethod
    def empty(cls, n_intervals: int, phi: float) -> "FilterCache":
        def slot():
            return [None] * (n_intervals + 1)

        return cls(phi=phi, mu=slot(), sigma=slot(), u_cov=slot(), u_chol=slot(),
                   prop_mean=slot(), prop_cov=slot(), prop_chol=slot(),
                   fwd_nu_log=slot(), fwd_prev_loglik=slot(), bwd_nu_log=slot(),
                   bwd_next_loglik=slot(), bwd_target_logw=slot(), gamma_chol=slot())

    def set_moments(self, j: int, moments: GaussianSummary) -> None:
        self.mu[j], self.sigma[j] = moments.mean, moments.cov

    def gamma(self, j: int) -> GaussianSummary:
        """Artificial prior gamma_j = N(mu_{j-1}, Sigma_{j-1} / phi)."""
        return GaussianSummary(mean=self.mu[j - 1], cov=self.sigma[j - 1] / self.phi)

    def gamma_logpdf(self, j: int, x: np.ndarray, diagnostics=None) -> np.ndarray:
        if self.gamma_chol[j] is None:
            self.gamma_chol[j] = chol_with_jitter(self.sigma[j - 1] / self.phi,
                                                  diagnostics, f"gamma_{j}")
        return mvn_logpdf(x, self.mu[j - 1], self.gamma_chol[j])


@dataclass(eq=False)
class SmootherOutput:
    """Per-interval smoothing particles, posterior summaries, and the complete
    coefficient paths with their weights (the WAIC inputs)."""

    cuts: np.ndarray
    phi: float
    n_particles: int
    replication: int
    smoothing_sets: list
    summaries: list
    paths: np.ndarray
    path_log_weights: np.ndarray
    forward_sets: list
    backward_sets: list
    filter_summaries: list
    cache: FilterCache
    diagnostics: Diagnostics
    proposal: str
    seed: int

    @property
    def n_intervals(self) -> int:
        return len(self.smoothing_sets)

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def path_weights(self) -> np.ndarray:
        w = np.exp(self.path_log_weights)
        return w / w.sum()


def _record_set(diag: Diagnostics, phase: str, pset: ParticleSet) -> None:
    diag.record(f"ess:{phase}", round(pset.ess, 3))
    if pset.ess < 2.0:
        diag.warn(f"{phase} filter degenerate at interval {pset.interval} "
                  f"(ESS={pset.ess:.2f})")


def _terms(sl) -> LikelihoodTerms | None:
    return LikelihoodTerms.from_slice(sl) if sl is not None and len(sl) else None


def _forward_kernel(prev: ParticleSet, terms, interval: int, u_chol, prop_mean,
                    prop_chol, prev_loglik, nu_log, n_out: int, rng,
                    proposal: str) -> ParticleSet:
    """One APF step: resample ancestors by nu, propose, weight.

    Shared by the forward pass and the smoothing step at interval J; drawing
    order (ancestors, then proposal normals) is fixed for reproducibility.
    """
    nu_w, _ = normalize_log_weights(nu_log)
    ancestors = rng.choice(prev.size, size=n_out, p=nu_w / nu_w.sum())
    if proposal == LINEAR_BAYES:
        means, chol = prop_mean[ancestors], prop_chol
    else:
        means, chol = prev.particles[ancestors], u_chol
    new = sample_mvn(rng, means, chol)
    new_ll = batch_interval_log_likelihood(terms, new)
    log_trans = mvn_logpdf(new, prev.particles[ancestors], u_chol)
    log_q = mvn_logpdf(new, means, chol)
    log_w = new_ll + log_trans - log_q + prev.log_weights[ancestors] - nu_log[ancestors]
    return ParticleSet(particles=new, log_weights=np.atleast_1d(log_w),
                       ancestors=ancestors, interval=interval)


def forward_step(prev: ParticleSet, sl, prior, cache: FilterCache, rng,
                 n_out: int | None = None, proposal: str = LINEAR_BAYES,
                 diagnostics: Diagnostics | None = None) -> ParticleSet:
    """Advance the forward filter one interval.

    Requires cache.mu/sigma filled through `prev.interval`; stores the
    evolution covariance, proposal moments, and ancestor tilts of the new
    interval so the backward and smoothing passes can reuse them.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    j = prev.interval + 1
    n_out = prev.size if n_out is None else n_out
    u_cov = discount_variance(cache.sigma[j - 1], prior.phi)
    u_chol = chol_with_jitter(u_cov, diagnostics, f"U_{j}")
    terms = _terms(sl)

    prev_ll = batch_interval_log_likelihood(terms, prev.particles)
    if proposal == LINEAR_BAYES:
        nu_log = prev_ll + prev.log_weights
        prop_mean, prop_cov = forward_moments_batch(prev.particles, u_cov, sl, diagnostics)
        prop_chol = chol_with_jitter(prop_cov, diagnostics, f"C_{j}")
    else:
        nu_log = prev.log_weights.copy()
        prop_mean, prop_cov, prop_chol = prev.particles, u_cov, u_chol

    cache.u_cov[j], cache.u_chol[j] = u_cov, u_chol
    cache.prop_mean[j], cache.prop_cov[j], cache.prop_chol[j] = prop_mean, prop_cov, prop_chol
    cache.fwd_nu_log[j], cache.fwd_prev_loglik[j] = nu_log, prev_ll

    out = _forward_kernel(prev, terms, j, u_chol, prop_mean, prop_chol, prev_ll,
                          nu_log, n_out, rng, proposal)
    _record_set(diagnostics, "forward", out)
    return out


def backward_step(nxt: ParticleSet, sl, cache: FilterCache, rng,
                  proposal: str = LINEAR_BAYES,
                  diagnostics: Diagnostics | None = None,
                  target_log_weights: np.ndarray | None = None) -> ParticleSet:
    """One backward information-filter step from interval j+1 down to j.

    `target_log_weights` are the weights under which the j+1 set represents
    its artificial posterior. They coincide with the stored weights except for
    the initialization set (uniform gamma_J draws by convention), whose
    interval-J likelihood is supplied here and enters through the ancestor
    tilt.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    j = nxt.interval - 1
    phi = cache.phi
    terms = _terms(sl)

    next_ll = batch_interval_log_likelihood(terms, nxt.particles)
    logw_target = nxt.log_weights if target_log_weights is None else target_log_weights
    if proposal == LINEAR_BAYES:
        nu_log = next_ll + logw_target
    else:
        nu_log = nxt.log_weights.copy()
    cache.bwd_nu_log[j] = nu_log
    cache.bwd_next_loglik[j] = next_ll
    cache.bwd_target_logw[j] = logw_target

    nu_w, _ = normalize_log_weights(nu_log)
    ancestors = rng.choice(nxt.size, size=nxt.size, p=nu_w / nu_w.sum())
    partners = nxt.particles[ancestors]

    if proposal == LINEAR_BAYES:
        means = (1.0 - phi) * cache.mu[j] + phi * partners
        chol = chol_with_jitter(symmetrize((1.0 - phi) * cache.sigma[j]),
                                diagnostics, f"Ctilde_{j}")
    else:
        means = np.broadcast_to(cache.mu[j - 1], partners.shape)
        chol = chol_with_jitter(cache.sigma[j - 1] / phi, diagnostics, f"gamma_{j}")
    new = sample_mvn(rng, means, chol)

    new_ll = batch_interval_log_likelihood(terms, new)
    log_trans = mvn_logpdf(partners, new, cache.u_chol[j + 1])
    log_gamma_j = cache.gamma_logpdf(j, new, diagnostics)
    log_gamma_next = cache.gamma_logpdf(j + 1, partners, diagnostics)
    log_q = mvn_logpdf(new, means, chol)
    log_w = (new_ll + log_trans + log_gamma_j - log_q - log_gamma_next
             + logw_target[ancestors] - nu_log[ancestors])

    out = ParticleSet(particles=new, log_weights=np.atleast_1d(log_w),
                      ancestors=ancestors, interval=j)
    _record_set(diagnostics, "backward", out)
    return out


def smoothing_step(fwd_prev: ParticleSet, bwd_next: ParticleSet | None, sl,
                   cache: FilterCache, n_out: int, rng,
                   proposal: str = LINEAR_BAYES,
                   diagnostics: Diagnostics | None = None) -> ParticleSet:
    """Combine forward ancestors at j-1 with backward partners at j+1.

    With `bwd_next=None` (interval J) the step is a plain forward importance
    step targeting the forward filter posterior.
    """
    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    j = fwd_prev.interval + 1
    phi = cache.phi
    terms = _terms(sl)

    if bwd_next is None:
        out = _forward_kernel(fwd_prev, terms, j, cache.u_chol[j], cache.prop_mean[j],
                              cache.prop_chol[j], cache.fwd_prev_loglik[j],
                              cache.fwd_nu_log[j], n_out, rng, proposal)
        _record_set(diagnostics, "smoothing", out)
        return out

    nu_log = cache.fwd_nu_log[j]
    nu_t_log = cache.bwd_nu_log[j]
    nu_w, _ = normalize_log_weights(nu_log)
    nu_t_w, _ = normalize_log_weights(nu_t_log)
    k_idx = rng.choice(fwd_prev.size, size=n_out, p=nu_w / nu_w.sum())
    h_idx = rng.choice(bwd_next.size, size=n_out, p=nu_t_w / nu_t_w.sum())
    anchors = fwd_prev.particles[k_idx]
    partners = bwd_next.particles[h_idx]

    if proposal == LINEAR_BAYES:
        means = (1.0 - phi) * cache.prop_mean[j][k_idx] + phi * partners
        chol = math.sqrt(1.0 - phi) * cache.prop_chol[j]
    else:
        means, chol = anchors, cache.u_chol[j]
    new = sample_mvn(rng, means, chol)

    new_ll = batch_interval_log_likelihood(terms, new)
    log_p_prev = mvn_logpdf(new, anchors, cache.u_chol[j])
    log_p_next = mvn_logpdf(partners, new, cache.u_chol[j + 1])
    log_gamma_next = cache.gamma_logpdf(j + 1, partners, diagnostics)
    log_q = mvn_logpdf(new, means, chol)
    # tilt corrections reduce to -log L_j at each partner in linear-Bayes mode
    log_w = (log_p_prev + new_ll + log_p_next - log_q - log_gamma_next
             + fwd_prev.log_weights[k_idx] - nu_log[k_idx]
             + cache.bwd_target_logw[j][h_idx] - nu_t_log[h_idx])

    out = ParticleSet(particles=new, log_weights=np.atleast_1d(log_w),
                      ancestors=k_idx, interval=j)
    _record_set(diagnostics, "smoothing", out)
    return out


def initial_particle_set(prior, n_particles: int, rng) -> ParticleSet:
    """Uniformly weighted draws from the initial coefficient distribution."""
    dim = len(prior.initial_mean)
    scale = math.sqrt(prior.initial_variance)
    particles = prior.initial_mean + scale * rng.standard_normal((n_particles, dim))
    return ParticleSet(particles=particles, log_weights=np.zeros(n_particles),
                       ancestors=np.full(n_particles, -1), interval=0)


def _trace_paths(forward_sets: list, last_set: ParticleSet) -> np.ndarray:
    """Complete coefficient paths by following forward ancestry from the
    interval-J smoothing particles."""
    n_intervals = len(forward_sets) - 1
    s, dim = last_set.particles.shape
    paths = np.empty((s, n_intervals, dim))
    paths[:, n_intervals - 1] = last_set.particles
    idx = last_set.ancestors
    for j in range(n_intervals - 1, 0, -1):
        paths[:, j - 1] = forward_sets[j].particles[idx]
        idx = forward_sets[j].ancestors[idx]
    return paths


def run_two_filter_smoother(panel, partition, prior, n_particles: int,
                            replication: int = 2, seed: int = 0,
                            proposal: str = LINEAR_BAYES,
                            diagnostics: Diagnostics | None = None) -> SmootherOutput:
    """Run the three passes and assemble per-interval and path-space output.

    Deterministic for a fixed seed: every sampling site uses its own
    counter-based stream keyed by (seed, phase, interval).
    """
    if n_particles < 2:
        raise ConfigurationError("need at least 2 particles")
    if replication < 1:
        raise ConfigurationError("replication factor must be >= 1")
    if proposal not in _PROPOSALS:
        raise ConfigurationError(f"unknown proposal mode {proposal!r}")
    if not np.array_equal(panel.cuts, partition.cuts):
        raise ConfigurationError("panel was expanded on a different partition")
    dim = panel.slices[0].z.shape[1] if panel.slices else len(prior.initial_mean)
    if len(prior.initial_mean) != dim:
        raise ConfigurationError(
            f"prior dimension {len(prior.initial_mean)} != covariate dimension {dim}")

    diagnostics = diagnostics if diagnostics is not None else Diagnostics()
    n_intervals = panel.n_intervals
    cache = FilterCache.empty(n_intervals, prior.phi)

    # forward pass
    init = initial_particle_set(prior, n_particles, stream(seed, PHASE_FORWARD, 0))
    cache.set_moments(0, weighted_moments(init))
    forward_sets = [init]
    for j in range(1, n_intervals + 1):
        fs = forward_step(forward_sets[j - 1], panel.slices[j - 1], prior, cache,
                          stream(seed, PHASE_FORWARD, j), proposal=proposal,
                          diagnostics=diagnostics)
        cache.set_moments(j, weighted_moments(fs))
        forward_sets.append(fs)

    # backward pass, initialized from gamma_J
    backward_sets = [None] * (n_intervals + 1)
    rng_init = stream(seed, PHASE_BACKWARD, n_intervals)
    gamma_end = cache.gamma(n_intervals)
    draws = sample_mvn(rng_init,
                       np.broadcast_to(gamma_end.mean, (n_particles, dim)),
                       chol_with_jitter(gamma_end.cov, diagnostics, "gamma_J"))
    backward_sets[n_intervals] = ParticleSet(particles=draws,
                                             log_weights=np.zeros(n_particles),
                                             ancestors=np.full(n_particles, -1),
                                             interval=n_intervals)
    end_terms = _terms(panel.slices[n_intervals - 1])
    end_target = backward_sets[n_intervals].log_weights + batch_interval_log_likelihood(
        end_terms, draws)
    for j in range(n_intervals - 1, 0, -1):
        target = end_target if j + 1 == n_intervals else None
        backward_sets[j] = backward_step(backward_sets[j + 1], panel.slices[j - 1],
                                         cache, stream(seed, PHASE_BACKWARD, j),
                                         proposal=proposal, diagnostics=diagnostics,
                                         target_log_weights=target)

    # smoothing pass
    n_smooth = replication * n_particles
    smoothing_sets = []
    for j in range(1, n_intervals + 1):
        bwd_next = backward_sets[j + 1] if j < n_intervals else None
        ss = smoothing_step(forward_sets[j - 1], bwd_next, panel.slices[j - 1],
                            cache, n_smooth, stream(seed, PHASE_SMOOTH, j),
                            proposal=proposal, diagnostics=diagnostics)
        smoothing_sets.append(ss)

    summaries = [weighted_moments(ss) for ss in smoothing_sets]
    filter_summaries = [GaussianSummary(mean=cache.mu[j], cov=cache.sigma[j])
                        for j in range(n_intervals + 1)]
    paths = _trace_paths(forward_sets, smoothing_sets[-1])

    return SmootherOutput(cuts=np.asarray(panel.cuts, dtype=float), phi=prior.phi,
                          n_particles=n_particles, replication=replication,
                          smoothing_sets=smoothing_sets, summaries=summaries,
                          paths=paths,
                          path_log_weights=smoothing_sets[-1].log_weights.copy(),
                          forward_sets=forward_sets, backward_sets=backward_sets,
                          filter_summaries=filter_summaries, cache=cache,
                          diagnostics=diagnostics, proposal=proposal, seed=seed)
