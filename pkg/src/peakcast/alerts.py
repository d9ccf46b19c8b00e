"""Turning-point detection on the smoothed hospitalization curve.

Three alerts are tracked on the daily grid:

* onset ``t0``      -- first day with positive, accelerating growth above
  the low-incidence gate ``mu``;
* acceleration ``tmin`` -- day the second derivative peaks while the curve
  is still rising; triggers peak-date forecasting;
* inflection ``t1`` -- day the second derivative crosses to non-positive
  on the ascent; gates peak-magnitude forecasting.

A candidate for ``tmin``/``t1`` is only confirmed after its defining
condition has held for ``CONFIRMATION_LAG_DAYS`` further days; the first
confirmed candidate is kept, so a later, larger wave does not retroactively
move an already-fired alert.  Derivative estimates from the youngest
``edge_guard_days`` of a live curve are treated as provisional (one-sided
smoothing windows systematically bend there) and never feed a detection,
which keeps fired alerts stable as new data arrive.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

from .errors import ConfigurationError
from .timeseries import SmoothedCurve

CONFIRMATION_LAG_DAYS = 5

# Days at the live end of the curve whose derivative estimates are still
# dominated by one-sided smoothing windows.
DEFAULT_EDGE_GUARD_DAYS = 8

DEFAULT_SEASON_START = (3, 1)
DEFAULT_SEASON_END = (12, 31)

# Low-incidence gate, as a fraction of the historical mean peak magnitude.
MU_FRACTION_OF_PEAK = 0.15


@dataclass(frozen=True)
class AlertConfig:
    """Gate and search window for alert detection within one season."""

    mu: float
    season_start: date
    season_end: date
    edge_guard_days: int = DEFAULT_EDGE_GUARD_DAYS

    def __post_init__(self):
        if self.mu < 0:
            raise ConfigurationError("mu must be >= 0")
        if self.season_start >= self.season_end:
            raise ConfigurationError("season_start must precede season_end")
        if self.edge_guard_days < 0:
            raise ConfigurationError("edge_guard_days must be >= 0")

    @classmethod
    def for_year(cls, year: int, mu: float) -> "AlertConfig":
        return cls(
            mu=mu,
            season_start=date(year, *DEFAULT_SEASON_START),
            season_end=date(year, *DEFAULT_SEASON_END),
        )


@dataclass(frozen=True)
class AlertState:
    """Detected alert triple for a given monitoring day."""

    evaluated_at: date
    t0: date | None = None
    tmin: date | None = None
    t1: date | None = None

    def __post_init__(self):
        if self.tmin is not None and self.t0 is None:
            raise ValueError("tmin cannot be set without t0")
        if self.t1 is not None and self.tmin is None:
            raise ValueError("t1 cannot be set without tmin")
        chain = [d for d in (self.t0, self.tmin, self.t1) if d is not None]
        if any(a > b for a, b in zip(chain, chain[1:])):
            raise ValueError("alerts must be ordered t0 <= tmin <= t1")
        if any(d > self.evaluated_at for d in chain):
            raise ValueError("alert dates cannot postdate the evaluation day")


def _window_indices(curve: SmoothedCurve, start: date, end: date) -> range:
    lo = max(0, curve.index_of(start))
    hi = min(len(curve) - 1, curve.index_of(end))
    return range(lo, hi + 1)


def detect_onset(
    curve: SmoothedCurve, cfg: AlertConfig, evaluated_at: date | None = None
) -> date | None:
    """Earliest in-season day with dh > 0, d2h > 0 and h above the gate.

    The guard is measured from the evaluation day (by the pipeline
    contract the curve ends there; an explicit earlier ``evaluated_at``
    restricts the scan accordingly).
    """
    last = len(curve) - 1
    if evaluated_at is not None:
        last = min(last, curve.index_of(evaluated_at))
    guard_last = last - cfg.edge_guard_days
    for k in _window_indices(curve, cfg.season_start, cfg.season_end):
        if k > guard_last:
            break
        if curve.dh[k] > 0 and curve.d2h[k] > 0 and curve.h[k] > cfg.mu:
            return curve.date_at(k)
    return None


def detect_acceleration(
    curve: SmoothedCurve,
    t0: date,
    evaluated_at: date,
    lag: int = CONFIRMATION_LAG_DAYS,
    edge_guard: int = DEFAULT_EDGE_GUARD_DAYS,
) -> date | None:
    """Confirmed argmax of d2h on the rising phase after onset.

    Walks the monitoring days forward, tracking the running argmax of d2h
    over days with dh > 0; the candidate is confirmed once it has stayed
    the argmax for ``lag`` further settled days, and is then frozen.
    """
    last = min(curve.index_of(evaluated_at), len(curve) - 1) - edge_guard
    first = curve.index_of(t0)
    if first < 0 or first > last:
        return None
    best_k = -1
    best_value = float("-inf")
    for k in range(first, last + 1):
        if curve.dh[k] > 0 and curve.d2h[k] > best_value:
            best_value = curve.d2h[k]
            best_k = k
        if best_k >= 0 and best_value > 0 and k - best_k >= lag:
            return curve.date_at(best_k)
    return None


def detect_inflection(
    curve: SmoothedCurve,
    tmin: date,
    evaluated_at: date,
    lag: int = CONFIRMATION_LAG_DAYS,
    edge_guard: int = DEFAULT_EDGE_GUARD_DAYS,
) -> date | None:
    """First confirmed positive-to-non-positive crossing of d2h after tmin.

    The crossing day is the later day of the pair ``d2h[k-1] > 0 >= d2h[k]``
    with dh still positive; it is confirmed once at least ``lag`` further
    settled days exist and d2h has stayed non-positive for the remainder of
    the ascent (through the settled edge, or through the peak if the curve
    has already turned).  A crossing followed by renewed settled
    acceleration on the ascent was noise, not the inflection.
    """
    last = min(curve.index_of(evaluated_at), len(curve) - 1) - edge_guard
    first = curve.index_of(tmin) + 1
    if first < 1:
        return None
    for k in range(first, last + 1):
        if not (curve.d2h[k - 1] > 0 >= curve.d2h[k] and curve.dh[k] > 0):
            continue
        if k + lag > last:
            return None
        stop = last
        for j in range(k, last + 1):
            if curve.dh[j] <= 0:
                stop = j
                break
        if all(curve.d2h[j] <= 0 for j in range(k, stop + 1)):
            return curve.date_at(k)
    return None


def alert_state(curve: SmoothedCurve, cfg: AlertConfig, evaluated_at: date) -> AlertState:
    """Compose the three detectors on a curve truncated at ``evaluated_at``."""
    t0 = detect_onset(curve, cfg, evaluated_at)
    tmin = (
        detect_acceleration(curve, t0, evaluated_at, edge_guard=cfg.edge_guard_days)
        if t0 is not None
        else None
    )
    t1 = (
        detect_inflection(curve, tmin, evaluated_at, edge_guard=cfg.edge_guard_days)
        if tmin is not None
        else None
    )
    return AlertState(evaluated_at=evaluated_at, t0=t0, tmin=tmin, t1=t1)


def merge_alert_states(prior: AlertState | None, current: AlertState) -> AlertState:
    """Freeze-on-fire: an alert keeps its first detected date forever.

    Unfired fields take the fresh detection; ordering is restored by
    clamping in the degenerate case where a later detection lands before an
    already-frozen earlier alert.
    """
    if prior is None:
        return current
    t0 = prior.t0 if prior.t0 is not None else current.t0
    tmin = prior.tmin if prior.tmin is not None else current.tmin
    t1 = prior.t1 if prior.t1 is not None else current.t1
    if t0 is not None and tmin is not None and tmin < t0:
        tmin = t0
    if tmin is not None and t1 is not None and t1 < tmin:
        t1 = tmin
    return AlertState(evaluated_at=current.evaluated_at, t0=t0, tmin=tmin, t1=t1)


def replay_alerts(
    series,
    smoothing,
    cfg: AlertConfig,
    prior: AlertState | None = None,
) -> AlertState:
    """Accumulated alert state after monitoring the series day by day.

    Replays daily truncations from where ``prior`` left off (or from the
    first day the curve is long enough) and merges each day's detections
    with freeze-on-fire semantics.  The result is a pure function of the
    series prefix, so fired alerts never un-fire as the season extends and
    recomputing from a longer, re-truncated series gives the same state.
    """
    from datetime import timedelta

    from .timeseries import ensemble_smooth, truncate_to

    begin = series.start_date + timedelta(days=smoothing.max_window - 1)
    if prior is not None:
        begin = max(begin, prior.evaluated_at + timedelta(days=1))
    state = prior
    day = begin
    while day <= series.end_date:
        curve = ensemble_smooth(truncate_to(series, day), smoothing)
        state = merge_alert_states(state, alert_state(curve, cfg, day))
        day += timedelta(days=1)
    if state is None or state.evaluated_at != series.end_date:
        base = state or AlertState(evaluated_at=series.end_date)
        state = AlertState(
            evaluated_at=series.end_date, t0=base.t0, tmin=base.tmin, t1=base.t1
        )
    return state
