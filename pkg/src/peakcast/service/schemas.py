"""Pydantic request/response models for the service endpoints."""

from __future__ import annotations

from datetime import date
from typing import Any, Optional

from pydantic import BaseModel, Field

from ..calibrate import DeConfig, preset_weights
from ..ensemble import WEIGHT_PROSE, RunSettings
from ..sir import SirConstants, SirParams
from ..timeseries import DEFAULT_SG_CONFIGS, EDGE_TRUNCATE, SmoothingConfig

DEFAULT_EXCLUDED_YEARS = (2020, 2021)


class ThetaModel(BaseModel):
    """SIR parameter vector."""

    b0: float = Field(..., gt=0, le=3000)
    b1: float = Field(..., ge=0, le=1)
    phi: float = Field(..., ge=0, le=6.2832)
    alpha: float = Field(..., gt=0, le=2000)
    i0: float = Field(..., ge=0, le=0.5)
    r0: float = Field(..., ge=0, le=0.5)

    def to_params(self) -> SirParams:
        return SirParams(self.b0, self.b1, self.phi, self.alpha, self.i0, self.r0)

    @classmethod
    def from_params(cls, p: SirParams) -> "ThetaModel":
        return cls(**p.to_dict())


class DeModel(BaseModel):
    """Differential-evolution settings."""

    population_size: Optional[int] = Field(default=None, ge=4)
    mutation_min: float = 0.5
    mutation_max: float = 1.0
    crossover_prob: float = Field(default=0.7, gt=0, le=1)
    max_generations: int = Field(default=300, ge=1)
    tolerance: float = Field(default=1e-6, ge=0)
    seed: int = 0

    def to_config(self) -> DeConfig:
        return DeConfig(
            population_size=self.population_size,
            mutation_range=(self.mutation_min, self.mutation_max),
            crossover_prob=self.crossover_prob,
            max_generations=self.max_generations,
            tolerance=self.tolerance,
            seed=self.seed,
        )


class SettingsModel(BaseModel):
    """Facility profile: loss weights, alert gate, smoothing, optimizer."""

    facility: Optional[str] = None
    preset: Optional[str] = None
    lam: Optional[float] = Field(default=None, ge=0, le=1, alias="lambda")
    rho: Optional[float] = Field(default=None, ge=0)
    mu: Optional[float] = Field(default=None, ge=0)
    season_start: str = "03-01"
    season_end: str = "12-31"
    ma_window: int = 15
    sg_configs: list[tuple[int, int]] = Field(default_factory=lambda: list(DEFAULT_SG_CONFIGS))
    edge_policy: str = EDGE_TRUNCATE
    weight_convention: str = WEIGHT_PROSE
    gamma: float = Field(default=1.8, gt=0)
    nu: float = Field(default=36.0, gt=0)
    de: DeModel = Field(default_factory=DeModel)
    excluded_years: list[int] = Field(default_factory=lambda: list(DEFAULT_EXCLUDED_YEARS))

    model_config = {"populate_by_name": True}

    def resolved_weights(self) -> tuple[float, float]:
        lam, rho = preset_weights(self.preset or self.facility)
        if self.lam is not None:
            lam = self.lam
        if self.rho is not None:
            rho = self.rho
        return lam, rho

    def to_run_settings(self) -> RunSettings:
        lam, rho = self.resolved_weights()
        month_day = lambda s: (int(s.split("-")[0]), int(s.split("-")[1]))
        return RunSettings(
            smoothing=SmoothingConfig(
                ma_window=self.ma_window,
                sg_configs=tuple(tuple(c) for c in self.sg_configs),
                edge_policy=self.edge_policy,
            ),
            lam=lam,
            rho=rho,
            mu=self.mu,
            season_start=month_day(self.season_start),
            season_end=month_day(self.season_end),
            weight_convention=self.weight_convention,
            de=self.de.to_config(),
            constants=SirConstants(gamma=self.gamma, nu=self.nu),
        )


class ForecastRequest(BaseModel):
    """One-day forecast from a series CSV and a multi-year history CSV."""

    series_csv: str
    history_csv: str
    as_of: Optional[date] = None
    settings: SettingsModel = Field(default_factory=SettingsModel)


class ForecastResponse(BaseModel):
    status: str  # "ok" or "no-alert"
    forecast: dict[str, Any]


class BacktestRequest(BaseModel):
    """Leave-one-year-out replay of one season."""

    seasons_csv: str
    test_year: int
    settings: SettingsModel = Field(default_factory=SettingsModel)
    monitor_from: Optional[date] = None
    monitor_to: Optional[date] = None
    base_seed: int = 0


class MetricsModel(BaseModel):
    stabilization_day: Optional[date] = None
    anticipation_days: Optional[int] = None
    date_error_days: Optional[int] = None
    magnitude_error: Optional[float] = None


class TruthModel(BaseModel):
    true_peak_date: date
    true_peak_magnitude: float


class BacktestResponse(BaseModel):
    facility: str
    year: int
    truth: TruthModel
    metrics: MetricsModel
    forecasts: list[dict[str, Any]]
    events: list[dict[str, Any]]
    anticipation_row: dict[str, Any]


class SweepRequest(BaseModel):
    """Loss-weight grid search over one season."""

    seasons_csv: str
    test_year: int
    lambda_grid: list[float]
    rho: Optional[float] = None
    settings: SettingsModel = Field(default_factory=SettingsModel)
    monitor_from: Optional[date] = None
    monitor_to: Optional[date] = None
    base_seed: int = 0


class SweepResponse(BaseModel):
    rows: list[dict[str, Any]]
    summary: list[dict[str, Any]]


class SynthRequest(BaseModel):
    """Synthetic season generation in the ingestion schema."""

    theta: Optional[ThetaModel] = None
    year: int = 2019
    noise_sigma_frac: float = Field(default=0.05, ge=0)
    seed: int = 0
    facility: str = "synthetic"
    gamma: float = Field(default=1.8, gt=0)
    nu: float = Field(default=36.0, gt=0)


class SynthResponse(BaseModel):
    csv_text: str
    true_peak_date: date
    true_peak_magnitude: float


class SimulateRequest(BaseModel):
    """Direct integration of the compartmental model."""

    theta: ThetaModel
    start: date
    end: date
    step_days: float = Field(default=1.0, gt=0, le=1)
    gamma: float = Field(default=1.8, gt=0)
    nu: float = Field(default=36.0, gt=0)


class SimulateResponse(BaseModel):
    rows: list[dict[str, Any]]  # date, s, i, r, h_sir


class SmoothRequest(BaseModel):
    """Two-stage smoothing of a series CSV."""

    series_csv: str
    ma_window: int = 15
    sg_configs: list[tuple[int, int]] = Field(default_factory=lambda: list(DEFAULT_SG_CONFIGS))
    edge_policy: str = EDGE_TRUNCATE


class SmoothResponse(BaseModel):
    rows: list[dict[str, Any]]  # date, h, dh, d2h


class PresetsResponse(BaseModel):
    presets: dict[str, dict[str, float]]
    default: dict[str, float]


class HealthResponse(BaseModel):
    status: str
    version: str
