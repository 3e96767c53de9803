"""Gap-aware regular time series plus the error statistics used everywhere else.

Timestamps are UTC epoch seconds on a fixed-interval grid. Gaps are explicit
NaN markers in the value array; nothing in this module fills one in unless the
caller asked for interpolation. All statistics drop incomplete rows first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AlignmentError, DegenerateSeriesError, SeriesError

__all__ = [
    "Unit",
    "TimeSeries",
    "AlignedFrame",
    "resample",
    "align",
    "rmse",
    "rmspe",
    "mpe",
    "pearson",
]


class Unit(Enum):
    DEG_F = "degF"
    CFM = "cfm"
    PERCENT = "percent"
    FRACTION = "fraction"
    MMBTU_HR = "mmbtu_hr"
    BOOL = "bool"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """One point's samples on a regular grid.

    start is the epoch second of the first sample, interval_s the grid step.
    values is a float array with NaN where the sample is missing. The array is
    frozen on construction; derive new series instead of mutating.
    """

    point_id: str
    start: int
    interval_s: int
    unit: Unit
    values: np.ndarray

    def __post_init__(self):
        if self.interval_s <= 0:
            raise SeriesError(
                f"{self.point_id}: interval must be positive, got {self.interval_s}"
            )
        vals = np.array(self.values, dtype=float)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "interval_s", int(self.interval_s))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> int:
        """Epoch second one interval past the last sample (half-open span)."""
        return self.start + len(self.values) * self.interval_s

    def timestamps(self) -> np.ndarray:
        return self.start + self.interval_s * np.arange(len(self.values), dtype=np.int64)

    def gap_count(self) -> int:
        return int(np.isnan(self.values).sum())

    def coverage(self) -> float:
        """Fraction of grid slots holding a value."""
        if len(self.values) == 0:
            return 0.0
        return 1.0 - self.gap_count() / len(self.values)

    def slice(self, start: int, end: int) -> "TimeSeries":
        """Sub-series on [start, end), snapped inward to the grid."""
        if end <= start:
            raise SeriesError(f"{self.point_id}: empty slice window [{start}, {end})")
        i0 = max(0, math.ceil((start - self.start) / self.interval_s))
        i1 = min(len(self.values), math.ceil((end - self.start) / self.interval_s))
        i1 = max(i0, i1)
        return TimeSeries(
            point_id=self.point_id,
            start=self.start + i0 * self.interval_s,
            interval_s=self.interval_s,
            unit=self.unit,
            values=self.values[i0:i1],
        )


@dataclass(frozen=True, eq=False)
class AlignedFrame:
    """Several series on one shared grid. Columns keep their NaN gaps."""

    start: int
    interval_s: int
    columns: dict

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    @property
    def end(self) -> int:
        return self.start + self.n_rows * self.interval_s

    def timestamps(self) -> np.ndarray:
        return self.start + self.interval_s * np.arange(self.n_rows, dtype=np.int64)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    def complete_mask(self, names=None) -> np.ndarray:
        """True where every requested column holds a value."""
        names = list(self.columns) if names is None else list(names)
        mask = np.ones(self.n_rows, dtype=bool)
        for name in names:
            mask &= ~np.isnan(self.columns[name])
        return mask


def resample(
    series: TimeSeries,
    target_interval_s: int,
    policy: str = "mean",
    max_gap_s: int | None = None,
) -> TimeSeries:
    """Move a series onto an epoch-aligned grid of target_interval_s seconds.

    policy "mean" averages the in-bucket samples, "last" keeps the final one,
    "interp" linearly interpolates between neighbours no further than max_gap_s
    apart. mean/last only coarsen; a bucket with no values stays a gap.
    """
    if target_interval_s <= 0:
        raise SeriesError(f"target interval must be positive, got {target_interval_s}")
    if len(series) == 0:
        raise SeriesError(f"{series.point_id}: cannot resample an empty series")

    if policy in ("mean", "last"):
        if target_interval_s < series.interval_s:
            raise SeriesError(
                f"{series.point_id}: policy '{policy}' cannot upsample "
                f"{series.interval_s}s data to {target_interval_s}s; use 'interp'"
            )
        ts = series.timestamps()
        first_bucket = (series.start // target_interval_s) * target_interval_s
        last_bucket = ((series.end - 1) // target_interval_s) * target_interval_s
        n_out = (last_bucket - first_bucket) // target_interval_s + 1
        idx = (ts - first_bucket) // target_interval_s
        out = np.full(n_out, np.nan)
        valid = ~np.isnan(series.values)
        if policy == "mean":
            sums = np.zeros(n_out)
            counts = np.zeros(n_out)
            np.add.at(sums, idx[valid], series.values[valid])
            np.add.at(counts, idx[valid], 1.0)
            nonzero = counts > 0
            out[nonzero] = sums[nonzero] / counts[nonzero]
        else:
            # later samples overwrite earlier ones within a bucket
            out[idx[valid]] = series.values[valid]
        return TimeSeries(series.point_id, int(first_bucket), int(target_interval_s), series.unit, out)

    if policy == "interp":
        if max_gap_s is None:
            raise SeriesError("policy 'interp' requires max_gap_s")
        ts = series.timestamps().astype(float)
        valid = ~np.isnan(series.values)
        if not valid.any():
            raise SeriesError(f"{series.point_id}: no values to interpolate from")
        known_t = ts[valid]
        known_v = series.values[valid]
        first_out = math.ceil(known_t[0] / target_interval_s) * target_interval_s
        last_out = math.floor(known_t[-1] / target_interval_s) * target_interval_s
        if last_out < first_out:
            raise SeriesError(f"{series.point_id}: span too short for {target_interval_s}s grid")
        out_t = np.arange(first_out, last_out + 1, target_interval_s, dtype=np.int64)
        right = np.searchsorted(known_t, out_t, side="left")
        right = np.clip(right, 0, len(known_t) - 1)
        left = np.clip(right - 1, 0, len(known_t) - 1)
        exact = known_t[right] == out_t
        left[exact] = right[exact]
        span = known_t[right] - known_t[left]
        frac = np.zeros(len(out_t))
        interp_rows = span > 0
        frac[interp_rows] = (out_t[interp_rows] - known_t[left][interp_rows]) / span[interp_rows]
        out = known_v[left] + frac * (known_v[right] - known_v[left])
        out[span > max_gap_s] = np.nan
        return TimeSeries(series.point_id, int(first_out), int(target_interval_s), series.unit, out)

    raise SeriesError(f"unsupported resample policy '{policy}'")


def align(series_by_name: dict) -> AlignedFrame:
    """Cut a set of same-interval series down to their common span.

    Raises AlignmentError on mixed intervals, mismatched grid phase, or when
    the spans do not overlap at all.
    """
    if not series_by_name:
        raise AlignmentError("nothing to align")
    intervals = {s.interval_s for s in series_by_name.values()}
    if len(intervals) != 1:
        raise AlignmentError(f"mixed intervals {sorted(intervals)}; resample first")
    interval = intervals.pop()
    phases = {s.start % interval for s in series_by_name.values()}
    if len(phases) != 1:
        raise AlignmentError("grid phase mismatch between series; resample first")
    lo = max(s.start for s in series_by_name.values())
    hi = min(s.end for s in series_by_name.values())
    if hi <= lo:
        raise AlignmentError("no temporal overlap between series")
    cols = {}
    for name, s in series_by_name.items():
        i0 = (lo - s.start) // interval
        i1 = (hi - s.start) // interval
        cols[name] = s.values[i0:i1]
    return AlignedFrame(start=int(lo), interval_s=int(interval), columns=cols)


def _paired(a, b, what: str):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise SeriesError(f"{what}: length mismatch {a.shape} vs {b.shape}")
    keep = ~(np.isnan(a) | np.isnan(b))
    if not keep.any():
        raise DegenerateSeriesError(f"{what}: no overlapping samples")
    return a[keep], b[keep]


def rmse(a, b) -> float:
    """Root mean square difference over complete rows. Symmetric in a and b."""
    x, y = _paired(a, b, "rmse")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def rmspe(measured, reference, eps: float = 1e-9) -> float:
    """Root mean square percentage error of measured against reference.

    Rows with |reference| < eps are excluded so near-zero denominators cannot
    blow up the statistic; pick eps in the unit of the reference (1 CFM for
    flows, 0.5 degF for temperatures). More than half the rows excluded means
    the reference is too close to zero to be a meaningful base.
    """
    m, r = _paired(measured, reference, "rmspe")
    ok = np.abs(r) >= eps
    if ok.sum() * 2 < len(r):
        raise DegenerateSeriesError(
            f"rmspe: reference degenerate, {len(r) - int(ok.sum())} of {len(r)} rows below eps={eps}"
        )
    pct = (m[ok] - r[ok]) / r[ok] * 100.0
    return float(np.sqrt(np.mean(pct**2)))


def mpe(measured, reference, eps: float = 1e-9) -> float:
    """Signed mean percentage error; sign tells which way measured is biased."""
    m, r = _paired(measured, reference, "mpe")
    ok = np.abs(r) >= eps
    if ok.sum() * 2 < len(r):
        raise DegenerateSeriesError(
            f"mpe: reference degenerate, {len(r) - int(ok.sum())} of {len(r)} rows below eps={eps}"
        )
    return float(np.mean((m[ok] - r[ok]) / r[ok]) * 100.0)


def pearson(a, b) -> float:
    """Pearson correlation over complete rows.

    Raises DegenerateSeriesError when either side is constant; a flatlined
    sensor has no correlation, and callers must decide what that means.
    """
    x, y = _paired(a, b, "pearson")
    if len(x) < 2:
        raise DegenerateSeriesError("pearson: need at least 2 complete rows")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx**2)))
    sy = float(np.sqrt(np.sum(dy**2)))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeriesError("pearson: constant series")
    return float(np.sum(dx * dy) / (sx * sy))
