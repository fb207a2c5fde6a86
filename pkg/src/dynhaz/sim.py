"""Data-generating process for the simulation studies.

Event times are drawn from a piecewise exponential hazard by inverting the
piecewise-linear cumulative hazard at an exponential deviate (closed-form,
segment by segment). Covariate coefficients follow a Gaussian random walk
started at zero; the intercept follows the deterministic rule
beta_0(j) = offset + log(j). Censoring indicators are Bernoulli(1 - p_c) and
are applied by flipping the event flag of the sampled time; times beyond the
last cut are truncated there with the event flag forced to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurvivalRecord
from .errors import ConfigurationError
from .rng import PHASE_SIM, stream


@dataclass(frozen=True)
class DgpConfig:
    covariate_dim: int
    n_subjects: int
    n_intervals: int
    interval_width: float = 20.0
    censor_prop: float = 0.1
    rw_sd: float = 0.5
    baseline_offset: float = -11.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_intervals < 1 or self.covariate_dim < 0:
            raise ConfigurationError("n_subjects, n_intervals must be >= 1; covariate_dim >= 0")
        if not (0.0 <= self.censor_prop < 1.0):
            raise ConfigurationError("censoring proportion must lie in [0, 1)")
        if self.interval_width <= 0 or self.rw_sd < 0:
            raise ConfigurationError("interval width must be positive, rw sd nonnegative")


@dataclass(frozen=True, eq=False)
class PiecewisePaths:
    """A fixed coefficient trajectory on a cut grid; the ground truth model.

    `beta` has one row per interval, intercept first. Doubles as the exact
    reference model in discrimination measures.
    """

    cuts: np.ndarray
    beta: np.ndarray  # (J, P+1)

    @property
    def n_intervals(self) -> int:
        return len(self.cuts) - 1

    def _interval_index(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cuts, times, side="right") - 1
        return np.clip(idx, 0, self.n_intervals - 1)

    def hazard_grid(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        z = np.concatenate([[1.0], np.asarray(x, dtype=float)])
        lam = np.exp(self.beta @ z)
        return lam[self._interval_index(times)]

    def cumhaz_grid(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        z = np.concatenate([[1.0], np.asarray(x, dtype=float)])
        lam = np.exp(self.beta @ z)
        cum_cuts = np.concatenate([[0.0], np.cumsum(lam * np.diff(self.cuts))])
        idx = self._interval_index(times)
        return cum_cuts[idx] + lam[idx] * (times - self.cuts[idx])

    def survival_grid(self, x: np.ndarray, times: np.ndarray) -> np.ndarray:
        return np.exp(-self.cumhaz_grid(x, times))


@dataclass(frozen=True, eq=False)
class DgpTruth:
    paths: PiecewisePaths
    config: DgpConfig

    def to_dict(self) -> dict:
        return {
            "cuts": self.paths.cuts.tolist(),
            "beta": self.paths.beta.tolist(),
            "config": {
                "covariate_dim": self.config.covariate_dim,
                "n_subjects": self.config.n_subjects,
                "n_intervals": self.config.n_intervals,
                "interval_width": self.config.interval_width,
                "censor_prop": self.config.censor_prop,
                "rw_sd": self.config.rw_sd,
                "baseline_offset": self.config.baseline_offset,
                "seed": self.config.seed,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DgpTruth":
        return cls(paths=PiecewisePaths(cuts=np.array(payload["cuts"], dtype=float),
                                        beta=np.array(payload["beta"], dtype=float)),
                   config=DgpConfig(**payload["config"]))


def invert_piecewise_cumhaz(cuts: np.ndarray, rates: np.ndarray, target) -> np.ndarray:
    """Solve cumulative_hazard(t) = target for t, segment by segment.

    `rates` holds one hazard per interval; targets beyond the total hazard of
    the grid return the final cut (the truncation sentinel).
    """
    cuts = np.asarray(cuts, dtype=float)
    rates = np.atleast_2d(rates)
    target = np.atleast_1d(np.asarray(target, dtype=float))
    cum = np.concatenate([np.zeros((len(rates), 1)), np.cumsum(rates * np.diff(cuts), axis=1)],
                         axis=1)
    h = np.maximum((cum < target[:, None]).sum(axis=1), 1)  # 1-based segment
    inside = h <= len(cuts) - 1
    hc = np.clip(h, 1, len(cuts) - 1)
    rows = np.arange(len(rates))
    t = cuts[hc - 1] + (target - cum[rows, hc - 1]) / rates[rows, hc - 1]
    return np.where(inside, t, cuts[-1])


def coefficient_paths(config: DgpConfig, rng) -> PiecewisePaths:
    """Intercept rule plus random-walk covariate coefficients."""
    j_idx = np.arange(1, config.n_intervals + 1)
    intercepts = config.baseline_offset + np.log(j_idx)
    steps = config.rw_sd * rng.standard_normal((config.n_intervals, config.covariate_dim))
    coefs = np.cumsum(steps, axis=0)
    cuts = np.arange(config.n_intervals + 1, dtype=float) * config.interval_width
    return PiecewisePaths(cuts=cuts, beta=np.column_stack([intercepts, coefs]))


def simulate_dgp(config: DgpConfig) -> tuple:
    """Simulate (records, truth) from the piecewise exponential DGP."""
    rng = stream(config.seed, PHASE_SIM, 0)
    paths = coefficient_paths(config, rng)
    x = rng.standard_normal((config.n_subjects, config.covariate_dim))

    eta = paths.beta[:, 0][None, :] + x @ paths.beta[:, 1:].T  # (n, J)
    rates = np.exp(eta)
    deviates = -np.log1p(-rng.random(config.n_subjects))  # Exp(1), strictly finite
    times = invert_piecewise_cumhaz(paths.cuts, rates, deviates)
    truncated = times >= paths.cuts[-1]
    events = np.where(truncated, 0, 1)

    keep_event = rng.random(config.n_subjects) < (1.0 - config.censor_prop)
    events = np.where(keep_event, events, 0)

    records = [SurvivalRecord(id=str(i), time=float(times[i]), event=int(events[i]),
                              covariates=x[i].copy())
               for i in range(config.n_subjects)]
    return records, DgpTruth(paths=paths, config=config)


def draw_test_covariates(config: DgpConfig, n_test: int, seed_offset: int = 1) -> np.ndarray:
    """Out-of-sample covariates from the same marginal p(x) = N(0, I)."""
    rng = stream(config.seed, PHASE_SIM, seed_offset)
    return rng.standard_normal((n_test, config.covariate_dim))
