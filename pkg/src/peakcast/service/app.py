"""FastAPI application wrapping the forecasting engine.

Endpoints are pure request/response compute: clients send CSV content
inline and receive structured JSON; nothing is written server-side, so the
service is safe to share between facilities.
"""

from __future__ import annotations

from datetime import timedelta

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, backtest, sir
from ..calibrate import DEFAULT_PRESET, FACILITY_PRESETS
from ..ensemble import build_history, run_day
from ..errors import PeakcastError
from ..timeseries import (
    SmoothingConfig,
    ensemble_smooth,
    parse_records,
    split_by_year,
    truncate_to,
)
from . import schemas


def _load_series(csv_text: str, settings: schemas.SettingsModel):
    return parse_records(
        csv_text.splitlines(),
        facility_filter=settings.facility,
        excluded_years=set(settings.excluded_years),
        facility_id=settings.facility or "",
    )


def _history_from_csv(csv_text: str, settings: schemas.SettingsModel, run):
    series = _load_series(csv_text, settings)
    seasons = list(split_by_year(series).values())
    return build_history(
        seasons,
        smoothing=run.smoothing,
        mu=run.mu,
        season_start=run.season_start,
        season_end=run.season_end,
    )


def create_app() -> FastAPI:
    app = FastAPI(title="peakcast", version=__version__)

    @app.exception_handler(PeakcastError)
    async def engine_error(request: Request, exc: PeakcastError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.get("/presets", response_model=schemas.PresetsResponse)
    def presets():
        named = {
            name: {"lambda": lam, "rho": rho} for name, (lam, rho) in FACILITY_PRESETS.items()
        }
        lam, rho = DEFAULT_PRESET
        return schemas.PresetsResponse(presets=named, default={"lambda": lam, "rho": rho})

    @app.post("/forecast", response_model=schemas.ForecastResponse)
    def forecast(req: schemas.ForecastRequest):
        run = req.settings.to_run_settings()
        series = _load_series(req.series_csv, req.settings)
        if req.as_of is not None:
            series = truncate_to(series, req.as_of)
        hist = _history_from_csv(req.history_csv, req.settings, run)
        result = run_day(series, hist, run, seed=req.settings.de.seed)
        status = "ok" if result.t_hat is not None else "no-alert"
        return schemas.ForecastResponse(status=status, forecast=result.to_json_dict())

    @app.post("/backtest", response_model=schemas.BacktestResponse)
    def run_backtest(req: schemas.BacktestRequest):
        run = req.settings.to_run_settings()
        series = _load_series(req.seasons_csv, req.settings)
        by_year = split_by_year(series)
        if req.test_year not in by_year:
            raise PeakcastError(f"no data for test year {req.test_year}")
        hist = build_history(
            [s for y, s in by_year.items() if y != req.test_year],
            smoothing=run.smoothing,
            mu=run.mu,
            season_start=run.season_start,
            season_end=run.season_end,
        )
        report = backtest.run_season(
            by_year[req.test_year],
            hist,
            run,
            monitor_from=req.monitor_from,
            monitor_to=req.monitor_to,
            base_seed=req.base_seed,
        )
        return schemas.BacktestResponse(
            facility=report.facility,
            year=report.year,
            truth=schemas.TruthModel(
                true_peak_date=report.truth.true_peak_date,
                true_peak_magnitude=report.truth.true_peak_magnitude,
            ),
            metrics=schemas.MetricsModel(
                stabilization_day=report.metrics.stabilization_day,
                anticipation_days=report.metrics.anticipation_days,
                date_error_days=report.metrics.date_error_days,
                magnitude_error=report.metrics.magnitude_error,
            ),
            forecasts=[fc.to_json_dict() for fc in report.forecasts],
            events=backtest.alert_events(report),
            anticipation_row=backtest.anticipation_table([report])[0],
        )

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep(req: schemas.SweepRequest):
        run = req.settings.to_run_settings()
        series = _load_series(req.seasons_csv, req.settings)
        by_year = split_by_year(series)
        if req.test_year not in by_year:
            raise PeakcastError(f"no data for test year {req.test_year}")
        hist = build_history(
            [s for y, s in by_year.items() if y != req.test_year],
            smoothing=run.smoothing,
            mu=run.mu,
            season_start=run.season_start,
            season_end=run.season_end,
        )
        rho = req.rho if req.rho is not None else run.rho
        result = backtest.grid_search_lambda(
            by_year[req.test_year],
            hist,
            req.lambda_grid,
            rho,
            run,
            monitor_from=req.monitor_from,
            monitor_to=req.monitor_to,
            base_seed=req.base_seed,
        )
        return schemas.SweepResponse(rows=list(result.rows), summary=list(result.summary))

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        theta = req.theta.to_params() if req.theta else backtest.DEFAULT_SYNTH_THETA
        constants = sir.SirConstants(gamma=req.gamma, nu=req.nu)
        series, truth = backtest.generate_synthetic_season(
            theta,
            constants,
            noise_sigma_frac=req.noise_sigma_frac,
            seed=req.seed,
            year=req.year,
            facility=req.facility,
        )
        lines = ["date,facility,age,count"]
        for day, count in zip(series.dates, series.counts):
            lines.append(f"{day.isoformat()},{series.facility_id},0,{int(count)}")
        return schemas.SynthResponse(
            csv_text="\n".join(lines) + "\n",
            true_peak_date=truth.true_peak_date,
            true_peak_magnitude=truth.true_peak_magnitude,
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        constants = sir.SirConstants(gamma=req.gamma, nu=req.nu)
        traj = sir.integrate(req.theta.to_params(), constants, req.start, req.end, req.step_days)
        rows = [
            {
                "date": traj.date_at(k).isoformat(),
                "s": float(traj.s[k]),
                "i": float(traj.i[k]),
                "r": float(traj.r[k]),
                "h_sir": float(traj.h_sir[k]),
            }
            for k in range(len(traj))
        ]
        return schemas.SimulateResponse(rows=rows)

    @app.post("/smooth", response_model=schemas.SmoothResponse)
    def smooth(req: schemas.SmoothRequest):
        series = parse_records(req.series_csv.splitlines())
        cfg = SmoothingConfig(
            ma_window=req.ma_window,
            sg_configs=tuple(tuple(c) for c in req.sg_configs),
            edge_policy=req.edge_policy,
        )
        curve = ensemble_smooth(series, cfg)
        rows = [
            {
                "date": curve.date_at(k).isoformat(),
                "h": float(curve.h[k]),
                "dh": float(curve.dh[k]),
                "d2h": float(curve.d2h[k]),
            }
            for k in range(len(curve))
        ]
        return schemas.SmoothResponse(rows=rows)

    return app


app = create_app()
