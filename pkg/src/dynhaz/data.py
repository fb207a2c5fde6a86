"""Survival data ingestion, interval partitions, and exposure expansion.

A subject with observed time t and cuts tau_0 < ... < tau_J contributes, for
every interval j, the exposure

    t_ij = max(0, min(t - tau_{j-1}, tau_j - tau_{j-1}))

and an event flag d_ij that is 1 only in the terminal interval of an observed
event. Boundary convention: a time landing exactly on a cut belongs to the
earlier interval, so exposures always sum to min(t, tau_J) without
zero-exposure event entries. Entries with t_ij = 0 and d_ij = 0 are dropped
(their likelihood factor is 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, Diagnostics, RowValidationError, SchemaError


@dataclass(frozen=True, eq=False)
class SurvivalRecord:
    """One subject: observed time, event indicator (1=event, 0=censored), covariates."""

    id: str
    time: float
    event: int
    covariates: np.ndarray


@dataclass(frozen=True, eq=False)
class IntervalPartition:
    """Strictly increasing cuts tau_0=0 < tau_1 < ... < tau_J and their policy."""

    cuts: np.ndarray
    policy: str = "custom"

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=float)
        object.__setattr__(self, "cuts", cuts)
        if cuts.ndim != 1 or len(cuts) < 2:
            raise ConfigurationError("partition needs at least two cuts")
        if cuts[0] != 0.0:
            raise ConfigurationError("first cut must be 0")
        if np.any(np.diff(cuts) <= 0):
            raise ConfigurationError("cuts must be strictly increasing")

    @property
    def n_intervals(self) -> int:
        return len(self.cuts) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.cuts)

    def locate(self, times) -> np.ndarray:
        """1-based terminal interval; times on a cut map to the earlier interval."""
        idx = np.searchsorted(self.cuts, np.asarray(times, dtype=float), side="left")
        return np.clip(idx, 1, self.n_intervals)


@dataclass(frozen=True, eq=False)
class IntervalSlice:
    """All at-risk entries of one interval (panel order = input record order)."""

    subjects: np.ndarray   # indices into the record list
    exposure: np.ndarray   # t_ij, strictly according to the exposure formula
    events: np.ndarray     # d_ij in {0, 1}
    z: np.ndarray          # (n_j, P+1) covariate rows with leading intercept 1

    def __len__(self) -> int:
        return len(self.subjects)


@dataclass(frozen=True, eq=False)
class ExpandedPanel:
    slices: tuple
    cuts: np.ndarray
    n_subjects: int
    truncated: int = 0

    @property
    def n_intervals(self) -> int:
        return len(self.slices)

    @property
    def n_at_risk(self) -> np.ndarray:
        return np.array([len(s) for s in self.slices])


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for survival CSV files.

    `center` lists covariate columns to mean-center after parsing (continuous
    covariates are commonly centered before fitting).
    """

    id: str = "id"
    time: str = "time"
    event: str = "event"
    covariates: tuple = ()
    center: tuple = ()


def parse_survival_csv(path, schema: CsvSchema) -> list:
    """Read survival records from a comma-separated UTF-8 file with a header.

    Raises SchemaError for missing columns and RowValidationError (naming the
    1-based data row) for negative times or non-binary event flags.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, header required")
        header = [name.strip() for name in reader.fieldnames]
        needed = [schema.id, schema.time, schema.event, *schema.covariates]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}")
        for col in schema.center:
            if col not in schema.covariates:
                raise SchemaError(f"centering column {col!r} is not a covariate")

        records = []
        for rownum, row in enumerate(reader, start=1):
            row = {(k.strip() if k else k): v for k, v in row.items()}
            try:
                time = float(row[schema.time])
            except (TypeError, ValueError):
                raise RowValidationError(rownum, f"time {row.get(schema.time)!r} is not a number")
            if not np.isfinite(time) or time < 0:
                raise RowValidationError(rownum, f"time {time} must be a finite nonnegative real")
            raw_event = (row[schema.event] or "").strip()
            if raw_event not in ("0", "1"):
                raise RowValidationError(rownum, f"event {raw_event!r} must be 0 or 1")
            try:
                covs = np.array([float(row[c]) for c in schema.covariates], dtype=float)
            except (TypeError, ValueError):
                raise RowValidationError(rownum, "covariate value is not a number")
            if covs.size and not np.all(np.isfinite(covs)):
                raise RowValidationError(rownum, "covariate value is not finite")
            records.append(SurvivalRecord(id=str(row[schema.id]), time=time,
                                          event=int(raw_event), covariates=covs))

    if schema.center and records:
        cols = [schema.covariates.index(c) for c in schema.center]
        mat = np.array([r.covariates for r in records])
        means = mat[:, cols].mean(axis=0)
        mat[:, cols] -= means
        records = [
            SurvivalRecord(id=r.id, time=r.time, event=r.event, covariates=mat[i])
            for i, r in enumerate(records)
        ]
    return records


def build_partition(records, policy: str, width: float | None = None,
                    events_per_interval: int | None = None) -> IntervalPartition:
    """Construct the time grid.

    policy="event-times":  one cut at each distinct observed event time.
    policy="equidistant":  cuts at multiples of `width` covering the maximum time.
    policy="equal-events": cuts at the E-th, 2E-th, ... sorted event times with
        the final cut extended to the maximum observed time, so every interval
        except the last contains exactly E events.
    """
    if not records:
        raise ConfigurationError("no records supplied")
    times = np.array([r.time for r in records])
    event_times = np.sort(times[np.array([r.event for r in records], dtype=bool)])
    max_time = float(times.max())

    if policy == "equidistant":
        if width is None or width <= 0:
            raise ConfigurationError("equidistant policy requires a positive width")
        n = max(1, int(np.ceil(max_time / width)))
        cuts = np.arange(n + 1, dtype=float) * width
        return IntervalPartition(cuts=cuts, policy="equidistant")

    if len(event_times) == 0:
        raise ConfigurationError(f"policy {policy!r} requires at least one event")

    if policy == "event-times":
        cuts = np.concatenate([[0.0], np.unique(event_times)])
        return IntervalPartition(cuts=cuts, policy="event-times")

    if policy == "equal-events":
        if events_per_interval is None or events_per_interval < 1:
            raise ConfigurationError("equal-events policy requires a positive event count")
        e = int(events_per_interval)
        n_full = len(event_times) // e
        if n_full == 0:
            raise ConfigurationError(
                f"events per interval ({e}) exceeds total events ({len(event_times)})")
        cuts = [0.0] + [float(event_times[k * e - 1]) for k in range(1, n_full + 1)]
        # remainder events (and any later censored exposure) land in the last interval
        cuts[-1] = max(cuts[-1], max_time)
        if len(set(cuts)) != len(cuts):
            raise ConfigurationError("tied event times produced duplicate cuts; lower E")
        return IntervalPartition(cuts=np.array(cuts), policy="equal-events")

    raise ConfigurationError(f"unknown partition policy {policy!r}")


def design_matrix(records) -> np.ndarray:
    """(n, P+1) matrix of covariate rows with a leading column of ones."""
    n = len(records)
    p = len(records[0].covariates) if n else 0
    z = np.ones((n, p + 1))
    for i, r in enumerate(records):
        z[i, 1:] = r.covariates
    return z


def expand_exposures(records, partition: IntervalPartition,
                     diagnostics: Diagnostics | None = None) -> ExpandedPanel:
    """Expand records into per-interval exposures and event flags.

    Times beyond tau_J are right-truncated at tau_J with the event flag forced
    to 0; the number of truncated records is reported on the panel and the
    diagnostics channel.
    """
    cuts = partition.cuts
    n = len(records)
    times = np.array([r.time for r in records])
    events = np.array([r.event for r in records], dtype=np.int8)
    z = design_matrix(records)

    tau_end = cuts[-1]
    truncated_mask = times > tau_end
    truncated = int(truncated_mask.sum())
    if truncated and diagnostics is not None:
        diagnostics.count("truncated_records", truncated)
    eff_times = np.minimum(times, tau_end)
    eff_events = np.where(truncated_mask, 0, events).astype(np.int8)

    # exposure matrix (n, J) by the clipped-difference formula
    exposure = np.clip(
        np.minimum(eff_times[:, None], cuts[None, 1:]) - cuts[None, :-1], 0.0, None
    )
    terminal = partition.locate(eff_times)  # 1-based

    slices = []
    for j in range(1, partition.n_intervals + 1):
        t_j = exposure[:, j - 1]
        d_j = ((terminal == j) & (eff_events == 1)).astype(np.int8)
        keep = (t_j > 0) | (d_j == 1)
        idx = np.nonzero(keep)[0]
        slices.append(IntervalSlice(subjects=idx, exposure=t_j[idx],
                                    events=d_j[idx], z=z[idx]))
    return ExpandedPanel(slices=tuple(slices), cuts=cuts, n_subjects=n, truncated=truncated)
