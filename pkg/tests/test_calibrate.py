"""Loss identities, optimizer benchmarks, and fit self-consistency."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from peakcast import backtest, sir
from peakcast.calibrate import (
    DeConfig,
    FACILITY_PRESETS,
    LossConfig,
    differential_evolution,
    fit,
    loss,
    preset_weights,
)
from peakcast.errors import ConfigurationError
from peakcast.timeseries import SmoothedCurve

YEAR_START, YEAR_END = date(2019, 1, 1), date(2019, 12, 31)
THETA = backtest.DEFAULT_SYNTH_THETA


def observed_from_theta(theta, constants, noise_frac=0.0, seed=0) -> SmoothedCurve:
    traj = sir.integrate(theta, constants, YEAR_START, YEAR_END)
    h = traj.h_sir.copy()
    if noise_frac > 0:
        rng = np.random.default_rng(seed)
        h = np.clip(h + rng.normal(0, noise_frac * h.max(), h.size), 0, None)
    zeros = np.zeros_like(h)
    return SmoothedCurve(YEAR_START, h=h, dh=zeros, d2h=zeros)


class TestLoss:
    def test_self_fit_is_zero(self, default_constants):
        observed = observed_from_theta(THETA, default_constants)
        cfg = LossConfig(
            lam=1.0,
            rho=0.0,
            h0=20.0,
            t_m=date(2019, 6, 10),
            fit_window=(date(2019, 4, 1), date(2019, 7, 31)),
        )
        assert loss(THETA, observed, cfg, default_constants) <= 1e-10

    def test_lambda_zero_is_pure_date_gap(self, default_constants):
        observed = observed_from_theta(THETA, default_constants)
        t_m = date(2019, 6, 1)
        cfg = LossConfig(
            lam=0.0, rho=5.0, h0=3.0, t_m=t_m, fit_window=(date(2019, 4, 1), date(2019, 7, 1))
        )
        traj = sir.integrate(THETA, default_constants, YEAR_START, YEAR_END)
        t_sir = sir.peak(traj, date(2019, 4, 1), YEAR_END).t_sir
        expected = float((t_sir - t_m).days) ** 2
        assert loss(THETA, observed, cfg, default_constants) == expected

        # independent of the observations entirely
        other = observed_from_theta(THETA, default_constants, noise_frac=0.3, seed=9)
        assert loss(THETA, other, cfg, default_constants) == expected

    def test_hand_computed_three_day_window(self, default_constants):
        rng = np.random.default_rng(23)
        h_obs = rng.uniform(5, 15, 365)
        observed = SmoothedCurve(YEAR_START, h_obs, np.zeros(365), np.zeros(365))
        window = (date(2019, 6, 1), date(2019, 6, 3))
        lam, rho, h0, t_m = 0.5, 1.0, 18.0, date(2019, 6, 20)
        cfg = LossConfig(lam=lam, rho=rho, h0=h0, t_m=t_m, fit_window=window,
                         peak_window=(date(2019, 4, 1), date(2019, 10, 1)))

        # independent arithmetic on a separately produced trajectory
        traj = sir.integrate(THETA, default_constants, YEAR_START, YEAR_END)
        i0 = traj.index_of(window[0])
        h_sim = traj.h_sir[i0 : i0 + 3]
        mse = float(np.mean((h_obs[i0 : i0 + 3] - h_sim) ** 2))
        est = sir.peak(traj, date(2019, 4, 1), date(2019, 10, 1))
        by_hand = lam * (mse + rho * (est.h_sir - h0) ** 2) + (1 - lam) * float(
            (est.t_sir - t_m).days
        ) ** 2
        assert loss(THETA, observed, cfg, default_constants) == pytest.approx(by_hand, abs=1e-12)

    def test_affine_in_lambda(self, default_constants):
        observed = observed_from_theta(THETA, default_constants, noise_frac=0.05, seed=2)
        base = dict(rho=0.7, h0=17.0, t_m=date(2019, 6, 5),
                    fit_window=(date(2019, 4, 15), date(2019, 6, 20)))
        at = {
            lam: loss(THETA, observed, LossConfig(lam=lam, **base), default_constants)
            for lam in (0.0, 0.5, 1.0)
        }
        assert at[0.5] == pytest.approx(0.5 * at[0.0] + 0.5 * at[1.0], rel=1e-12)

    def test_fit_window_must_be_covered(self, default_constants):
        observed = observed_from_theta(THETA, default_constants)
        cfg = LossConfig(lam=1.0, rho=0.0, h0=1.0, t_m=date(2019, 6, 1),
                         fit_window=(date(2019, 12, 1), date(2020, 2, 1)))
        with pytest.raises(ConfigurationError):
            loss(THETA, observed, cfg, default_constants)

    def test_empty_fit_window_rejected(self):
        with pytest.raises(ConfigurationError):
            LossConfig(lam=1.0, rho=0.0, h0=1.0, t_m=date(2019, 6, 1),
                       fit_window=(date(2019, 6, 10), date(2019, 6, 1)))


def sphere(x):
    return float(np.sum(x * x))


def rastrigin(x):
    return float(10 * x.size + np.sum(x * x - 10 * np.cos(2 * np.pi * x)))


class TestDifferentialEvolution:
    def test_sphere_reaches_global_minimum(self):
        bounds = [(-5.0, 5.0)] * 6
        result = differential_evolution(sphere, bounds, DeConfig(seed=42))
        assert result.fun <= 1e-6
        assert result.generations_used <= 300

    def test_rastrigin_beats_local_search(self):
        bounds = np.array([(-5.12, 5.12)] * 6)
        result = differential_evolution(rastrigin, bounds, DeConfig(seed=42))
        assert result.fun < 1.0

        from scipy.optimize import minimize

        x0 = np.random.default_rng(0).uniform(-5.12, 5.12, 6)
        local = minimize(rastrigin, x0, method="L-BFGS-B", bounds=bounds)
        assert result.fun < local.fun  # the local method strands in a local minimum

    def test_seeded_runs_are_bit_identical(self):
        bounds = [(-5.0, 5.0)] * 6
        a = differential_evolution(sphere, bounds, DeConfig(seed=7))
        b = differential_evolution(sphere, bounds, DeConfig(seed=7))
        assert np.array_equal(a.x, b.x)
        assert a.fun == b.fun
        assert a.generations_used == b.generations_used

    def test_every_evaluated_point_respects_bounds(self):
        bounds = np.array([(-2.0, 3.0), (0.5, 1.5), (-1.0, 0.0)])
        seen = []

        def instrumented(x):
            seen.append(x.copy())
            return sphere(x)

        differential_evolution(instrumented, bounds, DeConfig(seed=3, max_generations=40))
        points = np.array(seen)
        assert np.all(points >= bounds[:, 0] - 1e-15)
        assert np.all(points <= bounds[:, 1] + 1e-15)

    def test_sentinel_region_never_wins(self):
        def masked(x):
            return np.inf if x[0] > 0 else sphere(x)

        result = differential_evolution(masked, [(-5.0, 5.0)] * 4, DeConfig(seed=5))
        assert result.x[0] <= 0
        assert np.isfinite(result.fun)

    def test_best_loss_is_monotone(self):
        result = differential_evolution(rastrigin, [(-5.12, 5.12)] * 6, DeConfig(seed=11))
        assert np.all(np.diff(result.best_history) <= 0)

    def test_tolerance_declares_convergence(self):
        result = differential_evolution(
            sphere, [(-5.0, 5.0)] * 3, DeConfig(seed=1, max_generations=2000, tolerance=1e-3)
        )
        assert result.converged
        assert result.generations_used < 2000


class TestFit:
    def test_recovers_peak_from_own_curve(self, default_constants):
        observed = observed_from_theta(THETA, default_constants)
        truth = sir.peak(
            sir.integrate(THETA, default_constants, YEAR_START, YEAR_END),
            date(2019, 3, 1),
            YEAR_END,
        )
        cfg = LossConfig(
            lam=1.0, rho=0.0, h0=truth.h_sir, t_m=truth.t_sir,
            fit_window=(date(2019, 3, 1), date(2019, 8, 31)),
            peak_window=(date(2019, 3, 1), date(2019, 12, 31)),
        )
        result = fit(observed, cfg, DeConfig(seed=42, population_size=60, max_generations=200),
                     default_constants)
        assert abs((result.peak.t_sir - truth.t_sir).days) <= 1
        assert result.peak.h_sir == pytest.approx(truth.h_sir, rel=0.01)

    def test_noisy_curve_magnitude_within_ten_percent(self, default_constants):
        observed = observed_from_theta(THETA, default_constants, noise_frac=0.05, seed=31)
        truth = sir.peak(
            sir.integrate(THETA, default_constants, YEAR_START, YEAR_END),
            date(2019, 3, 1),
            YEAR_END,
        )
        cfg = LossConfig(
            lam=0.998, rho=0.9, h0=truth.h_sir, t_m=truth.t_sir,
            fit_window=(date(2019, 3, 1), date(2019, 8, 31)),
            peak_window=(date(2019, 3, 1), date(2019, 12, 31)),
        )
        result = fit(observed, cfg, DeConfig(seed=42, population_size=60, max_generations=200),
                     default_constants)
        assert result.peak.h_sir == pytest.approx(truth.h_sir, rel=0.10)

    def test_fit_is_seed_deterministic(self, default_constants):
        observed = observed_from_theta(THETA, default_constants, noise_frac=0.05, seed=1)
        cfg = LossConfig(
            lam=0.998, rho=0.9, h0=20.0, t_m=date(2019, 6, 10),
            fit_window=(date(2019, 4, 1), date(2019, 6, 10)),
        )
        de = DeConfig(seed=123, population_size=30, max_generations=40)
        a = fit(observed, cfg, de, default_constants)
        b = fit(observed, cfg, de, default_constants)
        assert np.array_equal(a.theta_star.as_array(), b.theta_star.as_array())
        assert a.loss_value == b.loss_value


def test_facility_presets_carry_published_weights():
    assert FACILITY_PRESETS["hlcm"] == (0.9981, 0.97)
    assert FACILITY_PRESETS["hegc"] == (0.998, 0.93)
    assert FACILITY_PRESETS["hfb"] == (0.9991, 0.8)
    assert FACILITY_PRESETS["hrdr"] == (0.9991, 0.2)
    assert preset_weights("HLCM") == (0.9981, 0.97)
    assert preset_weights("somewhere-new") == (0.998, 0.9)
    assert preset_weights(None) == (0.998, 0.9)
