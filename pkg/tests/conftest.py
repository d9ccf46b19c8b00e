"""Shared fixtures: analytic curves and seeded synthetic seasons."""

from __future__ import annotations

import math
from datetime import date, timedelta

import numpy as np
import pytest

from peakcast import backtest, sir
from peakcast.timeseries import DailySeries, SmoothedCurve

ACCEPTANCE_YEARS = (2015, 2016, 2017, 2018, 2019, 2022)
ACCEPTANCE_BASE_SEED = 99
ACCEPTANCE_NOISE = 0.05


def logistic_curve(
    length: int = 160,
    start: date = date(2019, 3, 1),
    cap: float = 30.0,
    rate: float = 0.12,
    midpoint_day: int = 90,
) -> tuple[SmoothedCurve, dict]:
    """Logistic wave with exact derivative tracks and its closed-form alerts."""
    t = np.arange(length, dtype=float)
    z = rate * (t - midpoint_day)
    s = 1.0 / (1.0 + np.exp(-z))
    h = cap * s
    dh = cap * rate * s * (1.0 - s)
    d2h = cap * rate * rate * s * (1.0 - s) * (1.0 - 2.0 * s)
    curve = SmoothedCurve(start, h=h, dh=dh, d2h=d2h)
    analytic = {
        "tmin": start + timedelta(days=midpoint_day - math.log(2.0 + math.sqrt(3.0)) / rate),
        "t1": start + timedelta(days=midpoint_day),
        "midpoint": start + timedelta(days=midpoint_day),
    }
    return curve, analytic


def curve_from_trajectory(traj: sir.Trajectory) -> SmoothedCurve:
    """SmoothedCurve view of a simulated hospitalization curve.

    Derivative tracks come from central differences, matching the daily
    grid semantics of the detectors.
    """
    dh = np.gradient(traj.h_sir)
    d2h = np.gradient(dh)
    return SmoothedCurve(traj.start_date, h=traj.h_sir.copy(), dh=dh, d2h=d2h)


@pytest.fixture(scope="session")
def default_constants() -> sir.SirConstants:
    return sir.SirConstants()


@pytest.fixture(scope="session")
def synthetic_season():
    """One noisy season plus generator truth (seeded)."""
    return backtest.generate_synthetic_season(
        backtest.DEFAULT_SYNTH_THETA, noise_sigma_frac=0.05, seed=7
    )


@pytest.fixture(scope="session")
def acceptance_corpus():
    """Six-season corpus used by the end-to-end acceptance criterion."""
    return backtest.synthetic_corpus(
        list(ACCEPTANCE_YEARS),
        noise_sigma_frac=ACCEPTANCE_NOISE,
        base_seed=ACCEPTANCE_BASE_SEED,
    )


def series_from_counts(counts, start: date = date(2019, 1, 1), facility: str = "test") -> DailySeries:
    return DailySeries(facility, start, np.asarray(counts, dtype=float))
