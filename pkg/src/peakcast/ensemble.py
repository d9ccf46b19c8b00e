"""Daily combined forecasts of peak date and magnitude.

Pipeline per monitoring day: smooth the truncated series, evaluate the
alert triple, and once the acceleration alert has fired blend a historical
mobile prediction of the peak date with the calibrated model's peak, with
the mobile influence strongest right after the alert.  The magnitude
forecast is withheld until the curve has passed its inflection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from datetime import date, timedelta

import numpy as np

from . import sir
from .alerts import (
    DEFAULT_SEASON_END,
    DEFAULT_SEASON_START,
    MU_FRACTION_OF_PEAK,
    AlertConfig,
    AlertState,
    alert_state,
    replay_alerts,
)
from .calibrate import CalibrationResult, DeConfig, LossConfig, fit
from .errors import ConfigurationError, HistoryEmptyError
from .timeseries import (
    EDGE_MIRROR,
    DailySeries,
    SmoothedCurve,
    SmoothingConfig,
    ensemble_smooth,
)

logger = logging.getLogger(__name__)

WEIGHT_PROSE = "prose"
WEIGHT_VERBATIM = "verbatim-eq2"
WEIGHT_CONVENTIONS = (WEIGHT_PROSE, WEIGHT_VERBATIM)


@dataclass(frozen=True)
class SeasonRecord:
    """One historical season: acceleration alert, peak day, peak height."""

    year: int
    tmin: date
    t_peak: date
    h_peak: float


@dataclass(frozen=True)
class SeasonHistory:
    """Usable historical seasons and the statistics derived from them."""

    records: tuple[SeasonRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise HistoryEmptyError("no usable historical seasons")
        object.__setattr__(self, "records", tuple(self.records))

    @property
    def years(self) -> list[int]:
        return [rec.year for rec in self.records]

    @property
    def offsets_days(self) -> np.ndarray:
        return np.array([(rec.t_peak - rec.tmin).days for rec in self.records], dtype=float)

    @property
    def mean_offset(self) -> float:
        return float(np.mean(self.offsets_days))

    @property
    def offset_std(self) -> float:
        """Sample standard deviation of the alert-to-peak offsets (0 for one year)."""
        if len(self.records) < 2:
            logger.warning("single-year history: date uncertainty degenerates to zero")
            return 0.0
        return float(np.std(self.offsets_days, ddof=1))

    @property
    def h0(self) -> float:
        return float(np.mean([rec.h_peak for rec in self.records]))

    @property
    def mean_peak_doy(self) -> float:
        return float(np.mean([rec.t_peak.timetuple().tm_yday for rec in self.records]))

    def t_max_date(self, year: int) -> date:
        """Historical mean peak date placed into ``year``."""
        return date(year, 1, 1) + timedelta(days=round(self.mean_peak_doy) - 1)


@dataclass(frozen=True)
class ForecastConfig:
    """Blending inputs derived from history."""

    t_max_doy: float
    offset_std: float
    h0: float
    weight_convention: str = WEIGHT_PROSE

    def __post_init__(self):
        if self.weight_convention not in WEIGHT_CONVENTIONS:
            raise ConfigurationError(f"weight_convention must be one of {WEIGHT_CONVENTIONS}")
        if self.offset_std < 0:
            raise ConfigurationError("offset_std must be >= 0")

    @classmethod
    def from_history(cls, hist: SeasonHistory, convention: str = WEIGHT_PROSE) -> "ForecastConfig":
        return cls(
            t_max_doy=hist.mean_peak_doy,
            offset_std=hist.offset_std,
            h0=hist.h0,
            weight_convention=convention,
        )


@dataclass(frozen=True)
class DailyForecast:
    """Dated forecast output for one monitoring day."""

    evaluated_at: date
    alert: AlertState
    t_hat: date | None = None
    t_interval: tuple[date, date] | None = None
    h_hat: float | None = None
    h_interval: tuple[float, float] | None = None
    t_sir: date | None = None
    t_m: date | None = None
    omega_mobile: float | None = None

    def __post_init__(self):
        if (self.t_hat is not None) != (self.alert.tmin is not None):
            raise ValueError("t_hat must be present exactly when the acceleration alert is")
        if self.h_hat is not None and (
            self.alert.t1 is None or self.evaluated_at <= self.alert.t1
        ):
            raise ValueError("h_hat is only available after the inflection alert")
        if self.t_hat is not None and self.t_interval is not None:
            lo, hi = self.t_interval
            if not (lo <= self.t_hat <= hi):
                raise ValueError("date interval must contain t_hat")
        if self.h_hat is not None and self.h_interval is not None:
            lo, hi = self.h_interval
            if not (lo <= self.h_hat <= hi):
                raise ValueError("magnitude interval must contain h_hat")

    def to_json_dict(self) -> dict:
        iso = lambda d: d.isoformat() if d is not None else None
        return {
            "date": self.evaluated_at.isoformat(),
            "t0": iso(self.alert.t0),
            "tmin": iso(self.alert.tmin),
            "t1": iso(self.alert.t1),
            "t_hat": iso(self.t_hat),
            "t_lo": iso(self.t_interval[0]) if self.t_interval else None,
            "t_hi": iso(self.t_interval[1]) if self.t_interval else None,
            "h_hat": self.h_hat,
            "h_lo": self.h_interval[0] if self.h_interval else None,
            "h_hi": self.h_interval[1] if self.h_interval else None,
            "t_sir": iso(self.t_sir),
            "t_m": iso(self.t_m),
            "omega_mobile": self.omega_mobile,
        }


@dataclass(frozen=True)
class RunSettings:
    """Everything run_day needs besides the data and the history."""

    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    lam: float = 0.998
    rho: float = 0.9
    mu: float | None = None  # None: MU_FRACTION_OF_PEAK * historical mean peak
    season_start: tuple[int, int] = DEFAULT_SEASON_START
    season_end: tuple[int, int] = DEFAULT_SEASON_END
    weight_convention: str = WEIGHT_PROSE
    de: DeConfig = field(default_factory=DeConfig)
    constants: sir.SirConstants = field(default_factory=sir.SirConstants)

    def __post_init__(self):
        if self.weight_convention not in WEIGHT_CONVENTIONS:
            raise ConfigurationError(f"weight_convention must be one of {WEIGHT_CONVENTIONS}")
        if not (0.0 <= self.lam <= 1.0) or self.rho < 0:
            raise ConfigurationError("lam must lie in [0, 1] and rho must be >= 0")

    def alert_config(self, year: int, hist: SeasonHistory | None) -> AlertConfig:
        if self.mu is not None:
            mu = self.mu
        elif hist is not None:
            mu = MU_FRACTION_OF_PEAK * hist.h0
        else:
            raise ConfigurationError("mu must be given when no history is available")
        return AlertConfig(
            mu=mu,
            season_start=date(year, *self.season_start),
            season_end=date(year, *self.season_end),
        )


def build_history(
    past_seasons: list[DailySeries],
    smoothing: SmoothingConfig | None = None,
    mu: float | None = None,
    season_start: tuple[int, int] = DEFAULT_SEASON_START,
    season_end: tuple[int, int] = DEFAULT_SEASON_END,
) -> SeasonHistory:
    """Extract per-year alert/peak records from full past seasons.

    The peak date and magnitude of each year come from the retrospectively
    smoothed curve (mirrored edges); the acceleration alert is recovered by
    replaying the season's daily truncations with the live smoothing, so
    historical offsets measure the same firing behavior the live system
    exhibits.  Years without a confirmed alert, or where the alert
    postdates the peak, are dropped with a warning.  With ``mu=None`` the
    onset gate for each year is MU_FRACTION_OF_PEAK times that year's own
    smoothed peak.
    """
    smoothing = smoothing or SmoothingConfig()
    retro_smoothing = replace(smoothing, edge_policy=EDGE_MIRROR)
    records = []
    for season in past_seasons:
        year = season.start_date.year
        try:
            curve = ensemble_smooth(season, retro_smoothing)
        except ConfigurationError:
            logger.warning("season %s: too short to smooth, dropped", year)
            continue
        peak_idx = int(np.argmax(curve.h))
        h_peak = float(curve.h[peak_idx])
        t_peak = curve.date_at(peak_idx)
        mu_year = mu if mu is not None else MU_FRACTION_OF_PEAK * h_peak
        cfg = AlertConfig(
            mu=mu_year,
            season_start=date(year, *season_start),
            season_end=date(year, *season_end),
        )
        state = replay_alerts(season, smoothing, cfg)
        if state.tmin is None:
            logger.warning("season %s: no confirmed acceleration alert, dropped", year)
            continue
        if state.tmin > t_peak:
            logger.warning("season %s: alert after the peak, dropped", year)
            continue
        records.append(SeasonRecord(year=year, tmin=state.tmin, t_peak=t_peak, h_peak=h_peak))
    if not records:
        raise HistoryEmptyError("no season produced a usable alert/peak record")
    return SeasonHistory(records=tuple(records))


def mobile_prediction(tmin: date, hist: SeasonHistory) -> date:
    """Alert day plus the mean historical alert-to-peak offset."""
    return tmin + timedelta(days=round(hist.mean_offset))


def weight(t: date, tmin: date, t_max: date, convention: str = WEIGHT_PROSE) -> float:
    """Blending coefficient applied to the mobile prediction.

    Under the default ``prose`` convention the mobile influence starts at 1
    on the alert day and decays linearly to 0 at the historical mean peak
    date; ``verbatim-eq2`` is the reversed ramp.
    """
    if convention not in WEIGHT_CONVENTIONS:
        raise ConfigurationError(f"weight_convention must be one of {WEIGHT_CONVENTIONS}")
    if t_max <= tmin:
        raise ConfigurationError("t_max must fall after tmin")
    if t < tmin:
        raise ConfigurationError("weights are only defined from the alert day onward")
    ramp = min(1.0, (t - tmin).days / (t_max - tmin).days)
    return ramp if convention == WEIGHT_VERBATIM else 1.0 - ramp


def peak_date_forecast(t: date, t_m: date, t_sir: date, omega_mobile: float) -> date:
    """Convex day-number combination of the two peak-date estimators."""
    if not (0.0 <= omega_mobile <= 1.0):
        raise ConfigurationError("omega_mobile must lie in [0, 1]")
    combined = omega_mobile * t_m.toordinal() + (1.0 - omega_mobile) * t_sir.toordinal()
    return date.fromordinal(round(combined))


def peak_magnitude_forecast(alert: AlertState, t: date, fit_result: CalibrationResult) -> float | None:
    """Fitted peak height, withheld until after the inflection alert."""
    if alert.t1 is None or t <= alert.t1:
        return None
    return fit_result.peak.h_sir


def uncertainty_intervals(
    t_hat: date,
    hist: SeasonHistory,
    fit_result: CalibrationResult,
    observed: SmoothedCurve,
    alert: AlertState,
    constants: sir.SirConstants | None = None,
) -> tuple[tuple[date, date], tuple[float, float] | None]:
    """Descriptive half-width intervals for the two forecasts.

    The date half-width is the rounded sample standard deviation of the
    historical alert-to-peak offsets; the magnitude half-width (present
    only once the magnitude forecast is) is the mean absolute gap between
    the fitted and observed curves from onset to the evaluation day.
    """
    constants = constants or sir.SirConstants()
    half = timedelta(days=round(hist.offset_std))
    date_interval = (t_hat - half, t_hat + half)

    h_hat = peak_magnitude_forecast(alert, alert.evaluated_at, fit_result)
    if h_hat is None or alert.t0 is None:
        return date_interval, None
    sim_start = date(alert.t0.year, 1, 1)
    sim_end = max(date(alert.t0.year, 12, 31), alert.evaluated_at)
    trajectory = sir.integrate(fit_result.theta_star, constants, sim_start, sim_end)
    lo = observed.index_of(alert.t0)
    hi = observed.index_of(min(alert.evaluated_at, observed.end_date))
    sim_lo = trajectory.index_of(alert.t0)
    deviation = float(
        np.mean(np.abs(trajectory.h_sir[sim_lo : sim_lo + (hi - lo) + 1] - observed.h[lo : hi + 1]))
    )
    return date_interval, (h_hat - deviation, h_hat + deviation)


def _absent(evaluated_at: date, alert: AlertState | None = None) -> DailyForecast:
    return DailyForecast(
        evaluated_at=evaluated_at,
        alert=alert if alert is not None else AlertState(evaluated_at=evaluated_at),
    )


def run_day(
    series_up_to_t: DailySeries,
    hist: SeasonHistory,
    settings: RunSettings | None = None,
    seed: int | None = None,
    prior_alert: AlertState | None = None,
) -> DailyForecast:
    """Execute the full pipeline for one monitoring day.

    The series must already be truncated at the monitoring day; everything
    computed here is a deterministic function of that prefix, the history,
    the settings and the seed.  ``prior_alert`` (the accumulated state from
    the previous monitoring day) is an optimization only: omitted, the
    accumulation is replayed from the start of the series with an
    identical result.  Quiet data (no alert yet) yields an alerts-only
    forecast rather than an error.
    """
    settings = settings or RunSettings()
    t = series_up_to_t.end_date
    if len(series_up_to_t) < settings.smoothing.max_window:
        return _absent(t)

    curve = ensemble_smooth(series_up_to_t, settings.smoothing)
    alert_cfg = settings.alert_config(t.year, hist)
    alert = replay_alerts(series_up_to_t, settings.smoothing, alert_cfg, prior=prior_alert)
    if alert.tmin is None:
        return _absent(t, alert)

    t_m = mobile_prediction(alert.tmin, hist)
    t_max = hist.t_max_date(t.year)
    convention = settings.weight_convention
    if t_max <= alert.tmin:
        # Past the historical mean peak the ramp has fully decayed.
        omega = 1.0 if convention == WEIGHT_VERBATIM else 0.0
    else:
        omega = weight(t, alert.tmin, t_max, convention)

    de = settings.de if seed is None else replace(settings.de, seed=seed)
    loss_cfg = LossConfig(
        lam=settings.lam,
        rho=settings.rho,
        h0=hist.h0,
        t_m=t_m,
        fit_window=(alert.t0, t),
        peak_window=(alert.t0, date(t.year, *settings.season_end)),
    )
    fit_result = fit(curve, loss_cfg, de, settings.constants)

    t_hat = peak_date_forecast(t, t_m, fit_result.peak.t_sir, omega)
    h_hat = peak_magnitude_forecast(alert, t, fit_result)
    t_interval, h_interval = uncertainty_intervals(
        t_hat, hist, fit_result, curve, alert, settings.constants
    )
    return DailyForecast(
        evaluated_at=t,
        alert=alert,
        t_hat=t_hat,
        t_interval=t_interval,
        h_hat=h_hat,
        h_interval=h_interval,
        t_sir=fit_result.peak.t_sir,
        t_m=t_m,
        omega_mobile=omega,
    )
