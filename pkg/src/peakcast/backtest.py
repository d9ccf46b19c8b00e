"""Season replay under strict truncation, evaluation metrics, sweeps.

A backtest replays a full season day by day, handing the pipeline only the
prefix of data available on each monitoring day, then scores the forecast
stream against the retrospectively smoothed curve: when the peak-date
forecast settled (stabilization), how far ahead of the peak that was
(anticipation), and how far off the settled date and the last pre-peak
magnitude were.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, replace
from datetime import date, timedelta

import numpy as np

from . import sir
from .ensemble import DailyForecast, RunSettings, SeasonHistory, run_day
from .errors import ConfigurationError, EmptySeriesError
from .timeseries import (
    EDGE_MIRROR,
    DailySeries,
    SmoothingConfig,
    ensemble_smooth,
    truncate_to,
)

# A forecast has stabilized once it stays within this many days of its
# final pre-peak value.
STABILIZATION_BAND_DAYS = 3

# Snapshot horizons (days before the true peak) for the hit table.
ANTICIPATION_WINDOWS = (30, 14, 7)

# Near-miss classification widens the reported interval by this factor.
NEAR_MISS_FACTOR = 1.5

# Day-over-day relative change in the magnitude forecast counted as an
# outlier jump in the lambda sweep.
OUTLIER_JUMP_FRACTION = 0.5

DEFAULT_SYNTH_THETA = sir.SirParams(
    b0=70.0, b1=0.25, phi=3.456, alpha=192.0, i0=0.0015, r0=0.45
)


@dataclass(frozen=True)
class SeasonTruth:
    """Reference peak taken from the stabilized (smoothed) curve."""

    true_peak_date: date
    true_peak_magnitude: float

    def __post_init__(self):
        if self.true_peak_magnitude < 0:
            raise ValueError("peak magnitude must be >= 0")


@dataclass(frozen=True)
class StabilizationMetrics:
    """Headline metrics of one replayed season (None when unavailable)."""

    stabilization_day: date | None
    anticipation_days: int | None
    date_error_days: int | None
    magnitude_error: float | None

    @property
    def available(self) -> bool:
        return self.stabilization_day is not None


@dataclass(frozen=True, eq=False)
class SeasonReport:
    """Forecast stream and metrics for one leave-one-out season."""

    facility: str
    year: int
    truth: SeasonTruth
    forecasts: tuple[DailyForecast, ...]
    metrics: StabilizationMetrics

    @property
    def stabilization_day(self) -> date | None:
        return self.metrics.stabilization_day

    @property
    def anticipation_days(self) -> int | None:
        return self.metrics.anticipation_days

    @property
    def peak_date_error_days(self) -> int | None:
        return self.metrics.date_error_days

    @property
    def peak_magnitude_error(self) -> float | None:
        return self.metrics.magnitude_error


def derive_seed(base: int, *parts) -> int:
    """Stable 63-bit seed from a base seed and hashable context parts.

    Dates contribute their ordinal, strings a CRC32, ints themselves, so a
    (facility, year, day, lambda) tuple always maps to the same stream
    regardless of evaluation order.
    """
    keys = [int(base)]
    for part in parts:
        if isinstance(part, date):
            keys.append(part.toordinal())
        elif isinstance(part, str):
            keys.append(zlib.crc32(part.encode()))
        elif isinstance(part, float):
            keys.append(int(round(part * 1e9)))
        else:
            keys.append(int(part))
    state = np.random.SeedSequence(keys).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def true_peak(full_season: DailySeries, smoothing: SmoothingConfig | None = None) -> SeasonTruth:
    """Peak of the retrospectively smoothed season (ties to the earliest day)."""
    smoothing = replace(smoothing or SmoothingConfig(), edge_policy=EDGE_MIRROR)
    curve = ensemble_smooth(full_season, smoothing)
    k = int(np.argmax(curve.h))
    return SeasonTruth(true_peak_date=curve.date_at(k), true_peak_magnitude=float(curve.h[k]))


def stabilization_and_metrics(
    forecasts: list[DailyForecast] | tuple[DailyForecast, ...],
    truth: SeasonTruth,
) -> StabilizationMetrics:
    """Score a forecast stream against the season truth.

    Only forecasts issued strictly before the true peak participate: the
    stabilization day is the first monitoring day from which every
    subsequent pre-peak peak-date forecast stays within
    STABILIZATION_BAND_DAYS of the final pre-peak value.
    """
    pre_peak = [
        fc
        for fc in forecasts
        if fc.t_hat is not None and fc.evaluated_at < truth.true_peak_date
    ]
    if not pre_peak:
        return StabilizationMetrics(None, None, None, None)

    final = pre_peak[-1].t_hat
    stable_from = 0
    for k in range(len(pre_peak) - 1, -1, -1):
        if abs((pre_peak[k].t_hat - final).days) > STABILIZATION_BAND_DAYS:
            stable_from = k + 1
            break
    settled = pre_peak[stable_from]

    magnitude_error = None
    for fc in reversed(pre_peak):
        if fc.h_hat is not None:
            magnitude_error = abs(fc.h_hat - truth.true_peak_magnitude)
            break

    return StabilizationMetrics(
        stabilization_day=settled.evaluated_at,
        anticipation_days=(truth.true_peak_date - settled.evaluated_at).days,
        date_error_days=abs((settled.t_hat - truth.true_peak_date).days),
        magnitude_error=magnitude_error,
    )


def run_season(
    full_season: DailySeries,
    hist: SeasonHistory,
    settings: RunSettings | None = None,
    monitor_from: date | None = None,
    monitor_to: date | None = None,
    base_seed: int = 0,
) -> SeasonReport:
    """Replay one season day by day with leave-one-year-out history.

    Each monitoring day sees only the prefix of the season up to that day;
    the per-day optimizer seed is derived from (facility, year, day, lam)
    so days are independent, reorderable work units.
    """
    settings = settings or RunSettings()
    year = full_season.start_date.year
    if year in hist.years:
        raise ConfigurationError(f"history must exclude the season under test ({year})")

    truth = true_peak(full_season, settings.smoothing)
    start = monitor_from or date(year, *settings.season_start)
    start = max(start, full_season.start_date)
    end = min(monitor_to or full_season.end_date, full_season.end_date)
    if start > end:
        raise ConfigurationError("empty monitoring window")

    forecasts = []
    prior_alert = None
    day = start
    while day <= end:
        prefix = truncate_to(full_season, day)
        seed = derive_seed(base_seed, full_season.facility_id, year, day, settings.lam)
        forecast = run_day(prefix, hist, settings, seed=seed, prior_alert=prior_alert)
        prior_alert = forecast.alert
        forecasts.append(forecast)
        day += timedelta(days=1)

    metrics = stabilization_and_metrics(forecasts, truth)
    return SeasonReport(
        facility=full_season.facility_id,
        year=year,
        truth=truth,
        forecasts=tuple(forecasts),
        metrics=metrics,
    )


def alert_events(report: SeasonReport) -> list[dict]:
    """First-confirmation events for each alert level, as JSON-ready dicts."""
    events = []
    seen: dict[str, date] = {}
    for fc in report.forecasts:
        for name in ("t0", "tmin", "t1"):
            value = getattr(fc.alert, name)
            if value is not None and name not in seen:
                seen[name] = value
                events.append(
                    {
                        "facility": report.facility,
                        "alert": name,
                        "date": value.isoformat(),
                        "confirmed_at": fc.evaluated_at.isoformat(),
                    }
                )
    return events


def _classify(target: float, center: float | None, half_width: float | None) -> str:
    if center is None:
        return "--"
    gap = abs(target - center)
    if half_width is None:
        half_width = 0.0
    if gap <= half_width:
        return "green"
    if gap <= NEAR_MISS_FACTOR * half_width:
        return "yellow"
    return "red"


def anticipation_table(reports: list[SeasonReport] | tuple[SeasonReport, ...]) -> list[dict]:
    """Snapshot hits at fixed horizons before each season's true peak.

    For each report, the forecast issued exactly 30/14/7 days before the
    true peak is looked up (never recomputed) and classified green when the
    truth lies inside the reported interval, yellow inside the interval
    widened by half, red otherwise.  Missing entries distinguish
    "no-alert" (monitored, alert not fired) and "withheld" (magnitude
    deferred) from "--" (day not monitored).
    """
    if not reports:
        raise ConfigurationError("at least one season report is required")
    rows = []
    for report in reports:
        by_day = {fc.evaluated_at: fc for fc in report.forecasts}
        row: dict = {
            "facility": report.facility,
            "year": report.year,
            "true_peak_date": report.truth.true_peak_date.isoformat(),
            "true_peak_magnitude": round(report.truth.true_peak_magnitude, 2),
            "alert": _first_alert_date(report),
        }
        truth_ord = report.truth.true_peak_date.toordinal()
        for horizon in ANTICIPATION_WINDOWS:
            fc = by_day.get(report.truth.true_peak_date - timedelta(days=horizon))
            tag = f"m{horizon}"
            if fc is None:
                row.update(
                    {
                        f"date_pred_{tag}": "--",
                        f"date_hit_{tag}": "--",
                        f"mag_pred_{tag}": "--",
                        f"mag_hit_{tag}": "--",
                    }
                )
                continue
            if fc.t_hat is None:
                date_pred, date_hit = "no-alert", "no-alert"
            else:
                hw = (fc.t_interval[1] - fc.t_hat).days if fc.t_interval else 0
                date_pred = f"{fc.t_hat.isoformat()} +/- {hw}d"
                date_hit = _classify(truth_ord, float(fc.t_hat.toordinal()), float(hw))
            if fc.h_hat is None:
                mag_pred = "no-alert" if fc.t_hat is None else "withheld"
                mag_hit = mag_pred
            else:
                hw_m = fc.h_interval[1] - fc.h_hat if fc.h_interval else 0.0
                mag_pred = f"{fc.h_hat:.1f} +/- {hw_m:.1f}"
                mag_hit = _classify(report.truth.true_peak_magnitude, fc.h_hat, hw_m)
            row.update(
                {
                    f"date_pred_{tag}": date_pred,
                    f"date_hit_{tag}": date_hit,
                    f"mag_pred_{tag}": mag_pred,
                    f"mag_hit_{tag}": mag_hit,
                }
            )
        rows.append(row)
    return rows


def _first_alert_date(report: SeasonReport) -> str:
    for fc in report.forecasts:
        if fc.alert.tmin is not None:
            return fc.alert.tmin.isoformat()
    return "--"


@dataclass(frozen=True, eq=False)
class LambdaSweepResult:
    """Per-day forecasts and per-lambda summaries of a grid search."""

    rows: tuple[dict, ...]  # one per (lambda, monitoring day)
    summary: tuple[dict, ...]  # one per lambda


def grid_search_lambda(
    full_season: DailySeries,
    hist: SeasonHistory,
    lambda_grid: list[float],
    rho: float,
    settings: RunSettings | None = None,
    monitor_from: date | None = None,
    monitor_to: date | None = None,
    base_seed: int = 0,
) -> LambdaSweepResult:
    """Replay the season once per lambda and tabulate the four sweep panels:
    predicted date, date error, predicted magnitude, magnitude error per
    monitoring day, plus per-lambda summary metrics with an outlier count
    (day-over-day magnitude jumps above OUTLIER_JUMP_FRACTION).
    """
    if not lambda_grid:
        raise ConfigurationError("lambda grid must be nonempty")
    if any(not (0.0 <= lam <= 1.0) for lam in lambda_grid):
        raise ConfigurationError("lambda values must lie in [0, 1]")
    settings = settings or RunSettings()

    rows: list[dict] = []
    summary: list[dict] = []
    for lam in lambda_grid:
        cfg = replace(settings, lam=lam, rho=rho)
        report = run_season(
            full_season, hist, cfg, monitor_from=monitor_from, monitor_to=monitor_to,
            base_seed=base_seed,
        )
        truth = report.truth
        previous_h = None
        outliers = 0
        for fc in report.forecasts:
            rows.append(
                {
                    "lambda": lam,
                    "date": fc.evaluated_at.isoformat(),
                    "t_hat": fc.t_hat.isoformat() if fc.t_hat else None,
                    "date_error_days": (
                        (fc.t_hat - truth.true_peak_date).days if fc.t_hat else None
                    ),
                    "h_hat": fc.h_hat,
                    "magnitude_error": (
                        fc.h_hat - truth.true_peak_magnitude if fc.h_hat is not None else None
                    ),
                }
            )
            if fc.h_hat is not None:
                if previous_h is not None and previous_h > 0:
                    if abs(fc.h_hat - previous_h) > OUTLIER_JUMP_FRACTION * previous_h:
                        outliers += 1
                previous_h = fc.h_hat
        summary.append(
            {
                "lambda": lam,
                "stabilization_day": (
                    report.stabilization_day.isoformat() if report.stabilization_day else None
                ),
                "anticipation_days": report.anticipation_days,
                "date_error_days": report.peak_date_error_days,
                "magnitude_error": report.peak_magnitude_error,
                "outlier_jumps": outliers,
            }
        )
    return LambdaSweepResult(rows=tuple(rows), summary=tuple(summary))


def generate_synthetic_season(
    theta_true: sir.SirParams,
    constants: sir.SirConstants | None = None,
    noise_sigma_frac: float = 0.0,
    seed: int = 0,
    year: int = 2019,
    facility: str = "synthetic",
) -> tuple[DailySeries, SeasonTruth]:
    """One simulated calendar year of integer daily counts plus its truth.

    Gaussian noise with sigma = ``noise_sigma_frac`` times the noiseless
    peak is added independently per day, then counts are clipped at zero
    and rounded.  The returned truth is the noiseless peak, for use as a
    generator-side oracle.
    """
    if noise_sigma_frac < 0:
        raise ConfigurationError("noise fraction must be >= 0")
    constants = constants or sir.SirConstants()
    start, end = date(year, 1, 1), date(year, 12, 31)
    trajectory = sir.integrate(theta_true, constants, start, end)
    clean = trajectory.h_sir
    k = int(np.argmax(clean))
    truth = SeasonTruth(trajectory.date_at(k), float(clean[k]))

    rng = np.random.default_rng(seed)
    noisy = clean + rng.normal(0.0, noise_sigma_frac * truth.true_peak_magnitude, clean.size)
    counts = np.rint(np.clip(noisy, 0.0, None))
    return DailySeries(facility, start, counts), truth


def synthetic_corpus(
    years: list[int],
    theta_base: sir.SirParams | None = None,
    constants: sir.SirConstants | None = None,
    noise_sigma_frac: float = 0.05,
    base_seed: int = 0,
    facility: str = "synthetic",
) -> dict[int, tuple[DailySeries, SeasonTruth]]:
    """Multi-year corpus with mild per-year variation in phase and seeding."""
    theta_base = theta_base or DEFAULT_SYNTH_THETA
    corpus = {}
    for year in sorted(years):
        jitter_rng = np.random.default_rng(derive_seed(base_seed, facility, year, "theta"))
        theta = sir.SirParams(
            b0=theta_base.b0 * (1.0 + 0.02 * jitter_rng.uniform(-1, 1)),
            b1=theta_base.b1,
            phi=theta_base.phi + 0.02 * jitter_rng.uniform(-1, 1),
            alpha=theta_base.alpha * (1.0 + 0.05 * jitter_rng.uniform(-1, 1)),
            i0=theta_base.i0 * (1.0 + 0.2 * jitter_rng.uniform(-1, 1)),
            r0=theta_base.r0,
        )
        corpus[year] = generate_synthetic_season(
            theta,
            constants,
            noise_sigma_frac=noise_sigma_frac,
            seed=derive_seed(base_seed, facility, year, "noise"),
            year=year,
            facility=facility,
        )
    return corpus
