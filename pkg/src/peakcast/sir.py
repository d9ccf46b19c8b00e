"""Seasonal SIR dynamics and the derived hospitalization curve.

The compartmental system uses proportions (S + I + R = 1), a cosine-forced
transmission rate with a one-year period, and per-year rates throughout;
hospitalizations are alpha * I.  Internal time is measured in years from
January 1 of the season year, with one day = 1/365 year, so dates convert
exactly at the module boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np
from numba import njit

from .errors import ConfigurationError, NumericalBlowupError

DAYS_PER_YEAR = 365.0
STATE_TOL = 1e-6

# Loss-of-immunity and recovery rates (1/year) for aggregate pediatric
# respiratory dynamics; recovery 36/yr means ~10 days infectious.
DEFAULT_GAMMA = 1.8
DEFAULT_NU = 36.0

PARAM_NAMES = ("b0", "b1", "phi", "alpha", "i0", "r0")

# Box constraints for calibration: mean transmission rate, seasonal
# amplitude, phase, hospitalization scale, initial infected/recovered.
PARAM_BOUNDS = np.array(
    [
        [1e-9, 3000.0],
        [0.0, 1.0],
        [0.0, 2.0 * math.pi],
        [1e-9, 2000.0],
        [0.0, 0.5],
        [0.0, 0.5],
    ]
)


@dataclass(frozen=True)
class SirConstants:
    """Fixed rates of the model, per year."""

    gamma: float = DEFAULT_GAMMA
    nu: float = DEFAULT_NU

    def __post_init__(self):
        if self.gamma <= 0 or self.nu <= 0:
            raise ConfigurationError("gamma and nu must be positive rates")


@dataclass(frozen=True)
class SirParams:
    """Free parameter vector (b0, b1, phi, alpha, i0, r0)."""

    b0: float
    b1: float
    phi: float
    alpha: float
    i0: float
    r0: float

    def __post_init__(self):
        vec = self.as_array()
        if not np.all(np.isfinite(vec)):
            raise ConfigurationError("SIR parameters must be finite")
        if not (0 < self.b0 <= 3000):
            raise ConfigurationError("b0 must lie in (0, 3000]")
        if not (0 <= self.b1 <= 1):
            raise ConfigurationError("b1 must lie in [0, 1]")
        if not (0 <= self.phi <= 2 * math.pi):
            raise ConfigurationError("phi must lie in [0, 2*pi]")
        if not (0 < self.alpha <= 2000):
            raise ConfigurationError("alpha must lie in (0, 2000]")
        if not (0 <= self.i0 <= 0.5 and 0 <= self.r0 <= 0.5):
            raise ConfigurationError("i0 and r0 must lie in [0, 0.5]")

    def as_array(self) -> np.ndarray:
        return np.array([self.b0, self.b1, self.phi, self.alpha, self.i0, self.r0])

    @classmethod
    def from_array(cls, vec) -> "SirParams":
        return cls(*(float(v) for v in vec))

    def to_dict(self) -> dict[str, float]:
        return dict(zip(PARAM_NAMES, self.as_array().tolist()))


def beta(t: float | np.ndarray, p: SirParams) -> float | np.ndarray:
    """Seasonal transmission rate b0 * (1 + b1 * cos(2*pi*t + phi)), t in years."""
    return p.b0 * (1.0 + p.b1 * np.cos(2.0 * np.pi * np.asarray(t, dtype=float) + p.phi))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Daily-sampled solution of the seasonal SIR system."""

    start_date: date
    times: np.ndarray  # years from January 1 of the season year
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    h_sir: np.ndarray  # admissions/day, = alpha * i

    def __len__(self) -> int:
        return self.times.size

    @property
    def end_date(self) -> date:
        return self.start_date + timedelta(days=len(self) - 1)

    def index_of(self, day: date) -> int:
        return (day - self.start_date).days

    def date_at(self, index: int) -> date:
        return self.start_date + timedelta(days=index)

    def conservation_error(self) -> float:
        return float(np.max(np.abs(self.s + self.i + self.r - 1.0)))


@dataclass(frozen=True)
class PeakEstimate:
    """Location and height of the hospitalization-curve maximum."""

    t_sir: date
    h_sir: float

    def __post_init__(self):
        if self.h_sir < 0:
            raise ValueError("peak magnitude must be >= 0")


@njit(cache=True)
def _rk4_kernel(theta, gamma, nu, t_start, h, n_days, n_sub, out, bad_day):
    two_pi = 2.0 * math.pi
    hi_tol = 1.0 + STATE_TOL
    for b in range(theta.shape[0]):
        b0 = theta[b, 0]
        b1 = theta[b, 1]
        phi = theta[b, 2]
        s = 1.0 - theta[b, 4] - theta[b, 5]
        i = theta[b, 4]
        r = theta[b, 5]
        out[b, 0, 0] = s
        out[b, 0, 1] = i
        out[b, 0, 2] = r
        bad_day[b] = -1
        step = 0
        for d in range(n_days):
            for _ in range(n_sub):
                t = t_start + step * h

                bt = b0 * (1.0 + b1 * math.cos(two_pi * t + phi))
                inc = bt * s * i
                k1s = -inc + gamma * r
                k1i = inc - nu * i
                k1r = nu * i - gamma * r

                t2 = t + 0.5 * h
                bt_mid = b0 * (1.0 + b1 * math.cos(two_pi * t2 + phi))
                s2 = s + 0.5 * h * k1s
                i2 = i + 0.5 * h * k1i
                r2 = r + 0.5 * h * k1r
                inc = bt_mid * s2 * i2
                k2s = -inc + gamma * r2
                k2i = inc - nu * i2
                k2r = nu * i2 - gamma * r2

                s3 = s + 0.5 * h * k2s
                i3 = i + 0.5 * h * k2i
                r3 = r + 0.5 * h * k2r
                inc = bt_mid * s3 * i3
                k3s = -inc + gamma * r3
                k3i = inc - nu * i3
                k3r = nu * i3 - gamma * r3

                t4 = t + h
                s4 = s + h * k3s
                i4 = i + h * k3i
                r4 = r + h * k3r
                bt = b0 * (1.0 + b1 * math.cos(two_pi * t4 + phi))
                inc = bt * s4 * i4
                k4s = -inc + gamma * r4
                k4i = inc - nu * i4
                k4r = nu * i4 - gamma * r4

                s = s + h * (k1s + 2.0 * k2s + 2.0 * k3s + k4s) / 6.0
                i = i + h * (k1i + 2.0 * k2i + 2.0 * k3i + k4i) / 6.0
                r = r + h * (k1r + 2.0 * k2r + 2.0 * k3r + k4r) / 6.0
                step += 1
            out[b, d + 1, 0] = s
            out[b, d + 1, 1] = i
            out[b, d + 1, 2] = r
            ok = (
                s >= -STATE_TOL
                and s <= hi_tol
                and i >= -STATE_TOL
                and i <= hi_tol
                and r >= -STATE_TOL
                and r <= hi_tol
            )
            if not ok:
                bad_day[b] = d + 1
                break


@dataclass(frozen=True, eq=False)
class BatchTrajectories:
    """Daily compartment paths for a batch of parameter vectors."""

    start_date: date
    times: np.ndarray
    sir: np.ndarray  # shape (batch, n_days + 1, 3)
    h_sir: np.ndarray  # shape (batch, n_days + 1)
    bad_day: np.ndarray  # first inadmissible day per member, -1 if none

    @property
    def valid(self) -> np.ndarray:
        return self.bad_day < 0


def _steps_per_day(step_days: float) -> int:
    if not (0 < step_days <= 1):
        raise ConfigurationError("step_days must lie in (0, 1]")
    n_sub = max(1, round(1.0 / step_days))
    return n_sub


def year_fraction(day: date, origin_year: int) -> float:
    """Years elapsed since January 1 of ``origin_year`` (365-day years)."""
    return (day - date(origin_year, 1, 1)).days / DAYS_PER_YEAR


def integrate_batch(
    theta: np.ndarray,
    constants: SirConstants,
    t_start: date,
    t_end: date,
    step_days: float = 1.0,
) -> BatchTrajectories:
    """Integrate the system for each parameter row with fixed-step RK4.

    Rows whose state leaves [-1e-6, 1 + 1e-6] are flagged in ``bad_day``
    (their trailing samples are unspecified) instead of raising, so a
    calibration sweep can treat them as worst-loss candidates.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[1] != 6:
        raise ConfigurationError("theta must have six columns (b0, b1, phi, alpha, i0, r0)")
    if t_start >= t_end:
        raise ConfigurationError("t_start must precede t_end")
    n_sub = _steps_per_day(step_days)
    n_days = (t_end - t_start).days
    t0_years = year_fraction(t_start, t_start.year)
    h = 1.0 / (DAYS_PER_YEAR * n_sub)

    out = np.zeros((theta.shape[0], n_days + 1, 3))
    bad_day = np.full(theta.shape[0], -1, dtype=np.int64)
    _rk4_kernel(theta, constants.gamma, constants.nu, t0_years, h, n_days, n_sub, out, bad_day)

    times = t0_years + np.arange(n_days + 1) / DAYS_PER_YEAR
    h_sir = theta[:, 3:4] * out[:, :, 1]
    return BatchTrajectories(start_date=t_start, times=times, sir=out, h_sir=h_sir, bad_day=bad_day)


def integrate(
    p: SirParams,
    c: SirConstants,
    t_start: date,
    t_end: date,
    step_days: float = 1.0,
) -> Trajectory:
    """Single-trajectory integration; raises on numerical blowup."""
    batch = integrate_batch(p.as_array(), c, t_start, t_end, step_days)
    if batch.bad_day[0] >= 0:
        day = int(batch.bad_day[0])
        raise NumericalBlowupError(
            f"state left [0, 1] beyond tolerance on day {day} "
            f"({t_start + timedelta(days=day)}) at step {day * _steps_per_day(step_days)}"
        )
    return Trajectory(
        start_date=t_start,
        times=batch.times,
        s=batch.sir[0, :, 0],
        i=batch.sir[0, :, 1],
        r=batch.sir[0, :, 2],
        h_sir=batch.h_sir[0],
    )


def peak(traj: Trajectory, search_start: date, search_end: date) -> PeakEstimate:
    """Grid argmax of the hospitalization curve; ties go to the earliest day."""
    lo = traj.index_of(search_start)
    hi = traj.index_of(search_end)
    lo = max(lo, 0)
    hi = min(hi, len(traj) - 1)
    if lo > hi:
        raise ConfigurationError("empty peak-search window")
    window = traj.h_sir[lo : hi + 1]
    k = int(np.argmax(window))
    return PeakEstimate(t_sir=traj.date_at(lo + k), h_sir=float(window[k]))
