"""Turning-point detection: closed-form oracles and stability properties."""

from __future__ import annotations

from datetime import date, timedelta

import numpy as np
import pytest

from peakcast import backtest, sir
from peakcast.alerts import (
    AlertConfig,
    AlertState,
    alert_state,
    detect_acceleration,
    detect_inflection,
    detect_onset,
    merge_alert_states,
    replay_alerts,
)
from peakcast.timeseries import SmoothedCurve, SmoothingConfig, truncate_to

from conftest import curve_from_trajectory, logistic_curve

SEASON = AlertConfig(mu=0.5, season_start=date(2019, 3, 1), season_end=date(2019, 12, 31))


def make_curve(h, dh, d2h, start=date(2019, 3, 1)):
    return SmoothedCurve(start, np.asarray(h, float), np.asarray(dh, float), np.asarray(d2h, float))


class TestOnset:
    def test_decreasing_curve_has_no_onset(self):
        n = 60
        h = np.linspace(30, 5, n)
        curve = make_curve(h, np.full(n, -0.5), np.zeros(n))
        assert detect_onset(curve, SEASON) is None

    def test_exponential_onset_at_gate_crossing(self):
        t = np.arange(120.0)
        h = 0.05 * np.exp(t / 20.0)
        curve = make_curve(h, h / 20.0, h / 400.0)
        mu = 2.0
        expected = next(curve.date_at(k) for k in range(len(curve)) if h[k] > mu)
        cfg = AlertConfig(mu=mu, season_start=SEASON.season_start, season_end=SEASON.season_end)
        assert detect_onset(curve, cfg) == expected

    def test_convex_but_below_gate_stays_silent(self):
        t = np.arange(80.0)
        h = 0.001 * np.exp(t / 25.0)  # stays far below mu
        curve = make_curve(h, h / 25.0, h / 625.0)
        assert detect_onset(curve, SEASON) is None


class TestAcceleration:
    def test_logistic_matches_closed_form(self):
        curve, analytic = logistic_curve()
        found = detect_acceleration(curve, curve.start_date, curve.end_date)
        assert abs((found - analytic["tmin"]).days) <= 1

    def test_linear_ramp_never_confirms(self):
        n = 80
        curve = make_curve(np.arange(n) * 0.5 + 1, np.full(n, 0.5), np.zeros(n))
        assert detect_acceleration(curve, curve.start_date, curve.end_date) is None

    def test_tie_breaks_to_the_earlier_day(self):
        n = 60
        d2h = np.zeros(n)
        d2h[20] = d2h[35] = 1.0  # two equal maxima
        curve = make_curve(np.linspace(1, 30, n), np.full(n, 0.5), d2h)
        found = detect_acceleration(curve, curve.start_date, curve.end_date)
        assert found == curve.date_at(20)


class TestInflection:
    def test_logistic_inflects_at_midpoint(self):
        curve, analytic = logistic_curve()
        tmin = detect_acceleration(curve, curve.start_date, curve.end_date)
        found = detect_inflection(curve, tmin, curve.end_date)
        assert abs((found - analytic["t1"]).days) <= 1

    def test_convex_curve_has_no_crossing(self):
        t = np.arange(80.0)
        h = np.exp(t / 20.0)
        curve = make_curve(h, h / 20.0, h / 400.0)
        assert detect_inflection(curve, curve.date_at(5), curve.end_date) is None

    def test_sir_curve_inflects_at_max_growth(self, default_constants):
        traj = sir.integrate(
            backtest.DEFAULT_SYNTH_THETA, default_constants, date(2019, 1, 1), date(2019, 12, 31)
        )
        curve = curve_from_trajectory(traj)
        dense = sir.integrate(
            backtest.DEFAULT_SYNTH_THETA,
            default_constants,
            date(2019, 1, 1),
            date(2019, 12, 31),
            step_days=0.1,
        )
        growth = np.gradient(dense.h_sir)
        max_growth_day = dense.date_at(int(np.argmax(growth)))
        tmin = detect_acceleration(curve, date(2019, 3, 1), curve.end_date)
        found = detect_inflection(curve, tmin, curve.end_date)
        assert found is not None
        assert abs((found - max_growth_day).days) <= 2


class TestAlertState:
    def test_quiet_curve_reports_nothing(self):
        n = 60
        curve = make_curve(np.full(n, 0.2), np.zeros(n), np.zeros(n))
        state = alert_state(curve, SEASON, curve.end_date)
        assert (state.t0, state.tmin, state.t1) == (None, None, None)

    def test_mid_ascent_has_no_inflection_yet(self):
        curve, analytic = logistic_curve()
        # past the acceleration alert's confirmation horizon (lag + guard)
        # but before the midpoint's
        eval_at = analytic["midpoint"] + timedelta(days=7)
        state = alert_state(curve, SEASON, eval_at)
        assert state.t0 is not None
        assert state.tmin is not None
        assert state.t1 is None

    def test_past_midpoint_reports_ordered_triple(self):
        curve, analytic = logistic_curve()
        eval_at = analytic["midpoint"] + timedelta(days=20)
        state = alert_state(curve, SEASON, eval_at)
        assert state.t0 <= state.tmin <= state.t1
        assert abs((state.tmin - analytic["tmin"]).days) <= 1
        assert abs((state.t1 - analytic["t1"]).days) <= 1

    def test_presence_is_monotone_on_a_fixed_curve(self):
        curve, analytic = logistic_curve()
        fired = {"t0": False, "tmin": False, "t1": False}
        day = curve.start_date
        while day <= curve.end_date:
            state = alert_state(curve, SEASON, day)
            for name in fired:
                if fired[name]:
                    assert getattr(state, name) is not None
                fired[name] = getattr(state, name) is not None
            day += timedelta(days=7)

    def test_gate_blocks_low_seasons_everywhere(self):
        curve, _ = logistic_curve(cap=3.0)
        cfg = AlertConfig(mu=5.0, season_start=SEASON.season_start, season_end=SEASON.season_end)
        for step in range(0, 160, 10):
            state = alert_state(curve, cfg, curve.start_date + timedelta(days=step))
            assert state.t0 is None

    def test_ordering_validation(self):
        with pytest.raises(ValueError):
            AlertState(evaluated_at=date(2019, 6, 1), t0=None, tmin=date(2019, 5, 1))


class TestReplay:
    def test_merge_freezes_first_detection(self):
        a = AlertState(evaluated_at=date(2019, 5, 10), t0=date(2019, 5, 1))
        b = AlertState(
            evaluated_at=date(2019, 5, 11),
            t0=date(2019, 5, 3),
            tmin=date(2019, 5, 6),
        )
        merged = merge_alert_states(a, b)
        assert merged.t0 == date(2019, 5, 1)  # frozen
        assert merged.tmin == date(2019, 5, 6)  # newly fired
        assert merged.evaluated_at == date(2019, 5, 11)

    def test_merge_restores_ordering_in_degenerate_case(self):
        a = AlertState(evaluated_at=date(2019, 5, 10), t0=date(2019, 5, 5))
        b = AlertState(
            evaluated_at=date(2019, 5, 11), t0=date(2019, 5, 1), tmin=date(2019, 5, 2)
        )
        merged = merge_alert_states(a, b)
        assert merged.t0 == date(2019, 5, 5)
        assert merged.tmin == date(2019, 5, 5)  # clamped to t0

    def test_accumulated_alerts_never_unfire_on_noisy_data(self, synthetic_season):
        series, truth = synthetic_season
        cfg = AlertConfig(
            mu=0.15 * truth.true_peak_magnitude,
            season_start=date(2019, 3, 1),
            season_end=date(2019, 12, 31),
        )
        smoothing = SmoothingConfig()
        prior = None
        day = date(2019, 4, 15)
        while day <= truth.true_peak_date + timedelta(days=15):
            state = replay_alerts(truncate_to(series, day), smoothing, cfg, prior=prior)
            if prior is not None:
                for name in ("t0", "tmin", "t1"):
                    before = getattr(prior, name)
                    if before is not None:
                        assert getattr(state, name) == before
            prior = state
            day += timedelta(days=1)
        assert prior.t0 <= prior.tmin <= prior.t1

    def test_replay_is_prefix_deterministic(self, synthetic_season):
        series, _ = synthetic_season
        cfg = AlertConfig(
            mu=3.0, season_start=date(2019, 3, 1), season_end=date(2019, 12, 31)
        )
        smoothing = SmoothingConfig()
        day = date(2019, 5, 25)
        direct = replay_alerts(truncate_to(series, day), smoothing, cfg)
        longer = truncate_to(series, day + timedelta(days=30))
        re_truncated = replay_alerts(truncate_to(longer, day), smoothing, cfg)
        assert direct == re_truncated
