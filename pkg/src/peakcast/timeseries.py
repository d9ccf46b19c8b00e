"""Daily admission series: ingestion, smoothing, derivative estimation.

The smoothing pipeline is a centered moving average followed by an
ensemble of Savitzky-Golay fits under several window/order settings; the
aggregated result is a differentiable daily curve with first and second
derivative tracks (per-day units).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import savgol_coeffs

from .errors import ConfigurationError, EmptySeriesError, ParseError

EDGE_TRUNCATE = "truncate-window"
EDGE_MIRROR = "mirror"
EDGE_POLICIES = (EDGE_TRUNCATE, EDGE_MIRROR)

# Window/order pairs spanning the locality/smoothness trade-off around the
# 15-day scale of the moving average.
DEFAULT_SG_CONFIGS = ((11, 2), (15, 2), (15, 3), (21, 3))


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Gap-free daily admission counts for one facility.

    ``counts[k]`` is the number of admissions on ``start_date + k`` days.
    Counts are stored as floats (>= 0) even though raw inputs are integers,
    so the same type carries smoothed values.
    """

    facility_id: str
    start_date: date
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 1 or counts.size == 0:
            raise EmptySeriesError("a DailySeries needs at least one day of data")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValueError("admission counts must be finite and non-negative")
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return self.counts.size

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    @property
    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=k) for k in range(len(self))]

    def index_of(self, day: date) -> int:
        return (day - self.start_date).days

    def date_at(self, index: int) -> date:
        return self.start_date + timedelta(days=index)


@dataclass(frozen=True)
class SmoothingConfig:
    """Settings for the two-stage smoothing pipeline."""

    ma_window: int = 15
    sg_configs: tuple[tuple[int, int], ...] = DEFAULT_SG_CONFIGS
    edge_policy: str = EDGE_TRUNCATE

    def __post_init__(self):
        if self.ma_window < 3 or self.ma_window % 2 == 0:
            raise ConfigurationError("ma_window must be an odd integer >= 3")
        if not self.sg_configs:
            raise ConfigurationError("at least one Savitzky-Golay configuration is required")
        for window, order in self.sg_configs:
            if window < 5 or window % 2 == 0:
                raise ConfigurationError(f"SG window {window} must be odd and >= 5")
            if order < 2 or order >= window:
                raise ConfigurationError(f"SG order {order} must satisfy 2 <= order < window")
        if self.edge_policy not in EDGE_POLICIES:
            raise ConfigurationError(f"edge_policy must be one of {EDGE_POLICIES}")
        object.__setattr__(self, "sg_configs", tuple(tuple(c) for c in self.sg_configs))

    @property
    def max_window(self) -> int:
        return max(w for w, _ in self.sg_configs)


@dataclass(frozen=True, eq=False)
class SmoothedCurve:
    """Smoothed daily curve H with per-day first and second derivatives."""

    start_date: date
    h: np.ndarray
    dh: np.ndarray
    d2h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        for name in ("h", "dh", "d2h"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != h.shape or arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be a finite 1-d array matching h")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.h.size

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    @property
    def dates(self) -> list[date]:
        return [self.start_date + timedelta(days=k) for k in range(len(self))]

    def index_of(self, day: date) -> int:
        return (day - self.start_date).days

    def date_at(self, index: int) -> date:
        return self.start_date + timedelta(days=index)


def parse_records(
    lines: Iterable[str],
    facility_filter: str | None = None,
    age_max: int | None = None,
    excluded_years: frozenset[int] | set[int] = frozenset(),
    facility_id: str | None = None,
) -> DailySeries:
    """Parse admission records from CSV text into a gap-free DailySeries.

    Accepted schemas (header row required): ``date,facility,age,count`` or
    the minimal ``date,count``.  A missing/empty count cell means one
    admission event.  Missing dates are filled with count 0; rows falling in
    ``excluded_years`` are dropped before gap-filling.  ``age_max`` is the
    inclusive upper age bound (e.g. 14 keeps patients younger than 15).
    """
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("file is empty") from None
    columns = {name.strip().lower(): k for k, name in enumerate(header)}
    if "date" not in columns:
        raise ParseError("header must contain a 'date' column", line_number=1)
    if facility_filter is not None and "facility" not in columns:
        raise ConfigurationError("facility filter given but no 'facility' column present")
    if age_max is not None and "age" not in columns:
        raise ConfigurationError("age filter given but no 'age' column present")

    def cell(row: list[str], name: str) -> str | None:
        k = columns.get(name)
        if k is None or k >= len(row):
            return None
        value = row[k].strip()
        return value if value else None

    totals: dict[date, float] = {}
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        raw_date = cell(row, "date")
        if raw_date is None:
            raise ParseError("missing date", line_number=line_no)
        try:
            day = date.fromisoformat(raw_date)
        except ValueError:
            raise ParseError(f"bad date {raw_date!r} (expected YYYY-MM-DD)", line_number=line_no) from None
        if facility_filter is not None and cell(row, "facility") != facility_filter:
            continue
        if age_max is not None:
            raw_age = cell(row, "age")
            if raw_age is not None:
                try:
                    age = int(raw_age)
                except ValueError:
                    raise ParseError(f"bad age {raw_age!r}", line_number=line_no) from None
                if age > age_max:
                    continue
        if day.year in excluded_years:
            continue
        raw_count = cell(row, "count")
        if raw_count is None:
            count = 1.0
        else:
            try:
                count = float(raw_count)
            except ValueError:
                raise ParseError(f"bad count {raw_count!r}", line_number=line_no) from None
            if count < 0:
                raise ParseError(f"negative count {raw_count!r}", line_number=line_no)
        totals[day] = totals.get(day, 0.0) + count

    if not totals:
        raise EmptySeriesError("no rows left after filtering")
    first, last = min(totals), max(totals)
    n_days = (last - first).days + 1
    counts = np.zeros(n_days)
    for day, value in totals.items():
        counts[(day - first).days] = value
    name = facility_id if facility_id is not None else (facility_filter or "")
    return DailySeries(facility_id=name, start_date=first, counts=counts)


def load_records(
    path: str | Path,
    facility_filter: str | None = None,
    age_max: int | None = None,
    excluded_years: frozenset[int] | set[int] = frozenset(),
) -> DailySeries:
    """Load a daily admission CSV file (see :func:`parse_records`)."""
    with open(path, newline="", encoding="utf-8") as handle:
        return parse_records(
            handle,
            facility_filter=facility_filter,
            age_max=age_max,
            excluded_years=excluded_years,
        )


def _windowed_means(values: np.ndarray, window: int) -> np.ndarray:
    """Centered mean with the window clipped to the array bounds."""
    n = values.size
    half = window // 2
    csum = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(n)
    lo = np.maximum(0, idx - half)
    hi = np.minimum(n - 1, idx + half)
    return (csum[hi + 1] - csum[lo]) / (hi + 1 - lo)


def moving_average(series: DailySeries, window: int, edge_policy: str = EDGE_TRUNCATE) -> DailySeries:
    """Centered moving average over an odd window.

    Under ``truncate-window`` the window is clipped to the available days,
    so at the right edge only current and past days contribute (the live
    monitoring case).  Under ``mirror`` the series is reflected about its
    endpoints before averaging.
    """
    if window < 3 or window % 2 == 0:
        raise ConfigurationError("moving-average window must be an odd integer >= 3")
    if edge_policy not in EDGE_POLICIES:
        raise ConfigurationError(f"edge_policy must be one of {EDGE_POLICIES}")
    values = series.counts
    half = window // 2
    if edge_policy == EDGE_MIRROR and len(series) > 1:
        pad = min(half, len(series) - 1)
        padded = np.pad(values, pad, mode="reflect")
        if pad < half:
            padded = np.pad(padded, half - pad, mode="edge")
        smoothed = np.convolve(padded, np.full(window, 1.0 / window), mode="valid")
    else:
        smoothed = _windowed_means(values, window)
    return DailySeries(series.facility_id, series.start_date, np.maximum(smoothed, 0.0))


def _fit_local_poly(values: np.ndarray, offsets: np.ndarray, order: int, deriv: int) -> float:
    """Least-squares polynomial over one clipped window, derivative at offset 0."""
    local_order = min(order, values.size - 1)
    if deriv > local_order:
        return 0.0
    design = np.vander(offsets.astype(float), local_order + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    scale = 1.0
    for k in range(1, deriv + 1):
        scale *= k
    return float(coef[deriv] * scale)


def savitzky_golay(
    values: Sequence[float] | np.ndarray,
    window: int,
    order: int,
    deriv: int = 0,
    edge_policy: str = EDGE_TRUNCATE,
) -> np.ndarray:
    """Savitzky-Golay filter on a uniform daily grid.

    At each point, fits a degree-``order`` polynomial over the window and
    returns the ``deriv``-th derivative at the point, in per-day units.
    Interior points use the classical fixed convolution coefficients;
    edges are handled per ``edge_policy`` (clipped-window refits, or a
    mirrored extension).
    """
    values = np.asarray(values, dtype=float)
    if window % 2 == 0 or window < 5:
        raise ConfigurationError("SG window must be odd and >= 5")
    if order >= window or order < deriv:
        raise ConfigurationError("need deriv <= order < window")
    if window > values.size:
        raise ConfigurationError(f"SG window {window} longer than series of length {values.size}")
    if edge_policy not in EDGE_POLICIES:
        raise ConfigurationError(f"edge_policy must be one of {EDGE_POLICIES}")

    half = window // 2
    coeffs = savgol_coeffs(window, order, deriv=deriv, delta=1.0, use="dot")
    if edge_policy == EDGE_MIRROR:
        padded = np.pad(values, half, mode="reflect")
        windows = np.lib.stride_tricks.sliding_window_view(padded, window)
        return windows @ coeffs

    out = np.empty_like(values)
    windows = np.lib.stride_tricks.sliding_window_view(values, window)
    out[half : values.size - half] = windows @ coeffs
    offsets = np.arange(values.size)
    for i in range(half):
        lo, hi = 0, min(values.size - 1, i + half)
        out[i] = _fit_local_poly(values[lo : hi + 1], offsets[lo : hi + 1] - i, order, deriv)
    for i in range(values.size - half, values.size):
        lo, hi = max(0, i - half), values.size - 1
        out[i] = _fit_local_poly(values[lo : hi + 1], offsets[lo : hi + 1] - i, order, deriv)
    return out


def ensemble_smooth(series: DailySeries, cfg: SmoothingConfig | None = None) -> SmoothedCurve:
    """Two-stage smoothing: moving average, then averaged SG realizations.

    Each SG configuration produces an (h, dh, d2h) realization from the
    moving-averaged series; the returned curve is their pointwise mean.
    """
    cfg = cfg or SmoothingConfig()
    if len(series) < cfg.max_window:
        raise ConfigurationError(
            f"series of length {len(series)} shorter than largest SG window {cfg.max_window}"
        )
    base = moving_average(series, cfg.ma_window, cfg.edge_policy).counts
    tracks = np.zeros((3, base.size))
    for window, order in cfg.sg_configs:
        for d in range(3):
            tracks[d] += savitzky_golay(base, window, order, deriv=d, edge_policy=cfg.edge_policy)
    tracks /= len(cfg.sg_configs)
    return SmoothedCurve(series.start_date, h=tracks[0], dh=tracks[1], d2h=tracks[2])


def truncate_to(series: DailySeries, day: date) -> DailySeries:
    """Prefix of the series ending at ``day``.

    This is the only sanctioned way the forecasting pipeline sees data:
    everything downstream of a truncation is a function of the past only.
    """
    if day < series.start_date:
        raise EmptySeriesError(f"truncation day {day} precedes series start {series.start_date}")
    end = min(day, series.end_date)
    n = (end - series.start_date).days + 1
    return DailySeries(series.facility_id, series.start_date, series.counts[:n].copy())


def split_by_year(series: DailySeries) -> dict[int, DailySeries]:
    """One sub-series per calendar year covered by the series."""
    out: dict[int, DailySeries] = {}
    for year in range(series.start_date.year, series.end_date.year + 1):
        lo = max(series.index_of(date(year, 1, 1)), 0)
        hi = min(series.index_of(date(year, 12, 31)), len(series) - 1)
        if lo > hi:
            continue
        out[year] = DailySeries(
            series.facility_id, series.date_at(lo), series.counts[lo : hi + 1].copy()
        )
    return out
