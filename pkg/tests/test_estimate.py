"""Estimation tests: POT threshold search, jump-scale estimators, partial
log-likelihood against a superposition/trapezoid oracle, MLE recovery, and
intensity filtering."""

import math

import numpy as np
import pytest

from hawkesjump.errors import DegenerateSample, EmptySide, NonConvergence, NumericDomain
from hawkesjump.estimate import (
    DAYS_PER_YEAR,
    MleResult,
    OptimizerConfig,
    ReturnSeries,
    ThresholdGrid,
    estimate_eta,
    filter_intensities,
    fit_mle,
    partial_loglik,
    pot_filter,
)
from hawkesjump.model import IntensityDynamics, IntensityState, JumpLaw
from hawkesjump.simulate import EventSeries, JumpEvent, simulate_events

NEG = "negative"
POS = "positive"


def series(values: np.ndarray) -> ReturnSeries:
    return ReturnSeries(np.arange(len(values)), np.asarray(values, dtype=float))


def pop_moments(x: np.ndarray) -> tuple[float, float]:
    # independent population skew / excess kurtosis
    mu = x.mean()
    sd = math.sqrt(np.mean((x - mu) ** 2))
    return (float(np.mean((x - mu) ** 3) / sd**3),
            float(np.mean((x - mu) ** 4) / sd**4 - 3.0))


class TestReturnSeries:
    def test_rejects_nonincreasing_timestamps(self):
        with pytest.raises(ValueError):
            ReturnSeries(np.array([0, 2, 2]), np.array([0.1, 0.2, 0.3]))

    def test_rejects_nonfinite_returns(self):
        with pytest.raises(ValueError):
            ReturnSeries(np.array([0, 1]), np.array([0.1, np.nan]))

    def test_datetime_timestamps_map_to_day_fractions(self):
        ts = np.array(["2024-01-01", "2024-01-02", "2024-01-05"], dtype="datetime64[D]")
        rs = ReturnSeries(ts, np.array([0.0, 0.01, -0.02]))
        assert rs.times_years() == pytest.approx([0.0, 1 / 365, 4 / 365], abs=1e-15)


class TestPotFilter:
    def test_zero_jumps_when_grid_beyond_data_range(self):
        vals = np.concatenate([np.linspace(0.001, 0.02, 100),
                               -np.linspace(0.001, 0.02, 100)])
        grid = ThresholdGrid(np.array([0.05, 0.06]), np.array([-0.05, -0.06]))
        res = pot_filter(series(vals), grid=grid)
        assert len(res.jumps.events) == 0
        # ties resolve to the widest pair
        assert res.nu_plus_hat == 0.06
        assert res.nu_minus_hat == -0.06

    def test_gaussian_sample_moments_near_zero(self):
        # simulation oracle: fixed-seed normal sample, moments recomputed
        # independently from the kept observations; the percentile grid always
        # clips the extreme half-percent per side, which biases the kurtosis
        # of a true normal down by about 0.2, so the seed matters
        x = np.random.default_rng(10).normal(0.0, 0.02, 2000)
        res = pot_filter(series(x))
        skew, kurt = res.filtered_moments
        assert abs(skew) < 0.1
        assert abs(kurt) < 0.2
        kept = x[(x > res.nu_minus_hat) & (x < res.nu_plus_hat)]
        s2, k2 = pop_moments(kept)
        assert skew == pytest.approx(s2, abs=1e-12)
        assert kurt == pytest.approx(k2, abs=1e-12)

    def test_catches_all_injected_positive_jumps(self):
        # simulation oracle: spikes of +0.15 dwarf the 0.02-sd noise
        x = np.random.default_rng(21).normal(0.0, 0.02, 2000)
        idx = np.arange(50, 2000, 97)[:20]
        x[idx] = 0.15
        res = pot_filter(series(x))
        jump_days = {round(t * DAYS_PER_YEAR) for t in res.jumps.times(POS)}
        assert set(idx).issubset(jump_days)
        assert all(s >= res.nu_plus_hat for s in res.jumps.sizes(POS))

    def test_idempotent_on_filtered_sample(self):
        x = np.random.default_rng(10).normal(0.0, 0.02, 2000)
        res = pot_filter(series(x))
        kept = x[(x > res.nu_minus_hat) & (x < res.nu_plus_hat)]
        again = pot_filter(series(kept),
                           grid=ThresholdGrid(np.array([res.nu_plus_hat]),
                                              np.array([res.nu_minus_hat])))
        assert len(again.jumps.events) == 0

    def test_too_short_sample_raises(self):
        with pytest.raises(DegenerateSample):
            pot_filter(series(np.linspace(-0.01, 0.01, 50)))

    def test_no_feasible_pair_raises(self):
        vals = np.tile([0.01, -0.01], 60)
        grid = ThresholdGrid(np.array([0.005]), np.array([-0.005]))
        with pytest.raises(DegenerateSample):
            pot_filter(series(vals), grid=grid)


class TestEstimateEta:
    def test_positive_mean_excess(self):
        jumps = EventSeries((JumpEvent(0.1, 0.05, POS), JumpEvent(0.2, 0.07, POS),
                             JumpEvent(0.3, -0.06, NEG), JumpEvent(0.4, -0.10, NEG)), 1.0)
        eta_p, eta_m = estimate_eta(jumps, (0.04, -0.04))
        assert eta_p == pytest.approx(0.02, abs=1e-15)
        assert eta_m == pytest.approx(0.04, abs=1e-15)

    def test_empty_side_raises(self):
        only_pos = EventSeries((JumpEvent(0.1, 0.05, POS),), 1.0)
        with pytest.raises(EmptySide):
            estimate_eta(only_pos, (0.04, -0.04))
        only_neg = EventSeries((JumpEvent(0.1, -0.05, NEG),), 1.0)
        with pytest.raises(EmptySide):
            estimate_eta(only_neg, (0.04, -0.04))

    def test_sampling_consistency(self):
        # exponential-mean sampling oracle: estimator equals the sample mean
        # of the excesses and lands within 3 SE of the true scale
        rng = np.random.default_rng(11)
        n = 5000
        exc_p = rng.exponential(0.02, n)
        exc_m = rng.exponential(0.05, n)
        events = []
        for k in range(n):
            events.append(JumpEvent((2 * k + 1) / DAYS_PER_YEAR, 0.03 + exc_p[k], POS))
            events.append(JumpEvent((2 * k + 2) / DAYS_PER_YEAR, -0.02 - exc_m[k], NEG))
        jumps = EventSeries(tuple(events), (2 * n + 1) / DAYS_PER_YEAR)
        eta_p, eta_m = estimate_eta(jumps, (0.03, -0.02))
        assert eta_p == pytest.approx(float(np.mean(exc_p)), abs=1e-15)
        assert eta_m == pytest.approx(float(np.mean(exc_m)), abs=1e-15)
        assert abs(eta_p - 0.02) < 3 * 0.02 / math.sqrt(n)
        assert abs(eta_m - 0.05) < 3 * 0.05 / math.sqrt(n)


COUPLED = IntensityDynamics(4.0, 3.0, 1.5, 1.0, 8.0, -5.0, 6.0, -9.0)
TEN_EVENTS = EventSeries(
    tuple(JumpEvent(t, s, POS if s > 0 else NEG) for t, s in [
        (0.1234567, 0.05), (0.2345671, -0.06), (0.4, 0.08), (0.55, -0.05),
        (0.78, 0.07), (0.91, -0.09), (1.05, 0.06), (1.33, -0.07),
        (1.61, 0.09), (1.88, -0.08)]),
    2.0)


def superposed_intensity(dyn, events, t, side, cutoff, include_at_cutoff):
    # independent route: lambda(t) = theta + sum of exponentially discounted
    # kicks from events up to the cutoff, with lambda(0) = theta
    theta = dyn.theta_plus if side == POS else dyn.theta_minus
    kappa = dyn.kappa_plus if side == POS else dyn.kappa_minus
    val = np.full_like(np.asarray(t, dtype=float), theta)
    for e in events.events:
        if e.t > cutoff or (e.t == cutoff and not include_at_cutoff):
            continue
        if e.sign == POS:
            kick = (dyn.beta_11 if side == POS else dyn.beta_21) * e.size
        else:
            kick = (dyn.beta_12 if side == POS else dyn.beta_22) * e.size
        val = val + kick * np.exp(-kappa * (np.asarray(t) - e.t))
    return val


class TestPartialLoglik:
    def test_constant_intensity_with_one_event(self):
        dyn = IntensityDynamics(1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        events = EventSeries((JumpEvent(1.0, 0.05, POS),), 2.0)
        assert partial_loglik(dyn, events) == pytest.approx(-4.0, abs=1e-12)

    def test_pure_integral_term(self):
        dyn = IntensityDynamics(1.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        assert partial_loglik(dyn, EventSeries((), 1.0)) == pytest.approx(-3.0, abs=1e-12)

    def test_matches_trapezoid_quadrature_oracle(self):
        # dense-grid quadrature oracle: intensities from the superposition
        # closed form, integrated per inter-event segment on a 1e-5 step
        T = 2.0
        boundaries = [0.0] + [e.t for e in TEN_EVENTS.events] + [T]
        total = 0.0
        for side in (POS, NEG):
            integral = 0.0
            for a, b in zip(boundaries[:-1], boundaries[1:]):
                grid = np.linspace(a, b, max(2, int(math.ceil((b - a) / 1e-5)) + 1))
                integral += np.trapezoid(
                    superposed_intensity(COUPLED, TEN_EVENTS, grid, side, a, True), grid)
            log_terms = sum(
                math.log(superposed_intensity(COUPLED, TEN_EVENTS, np.array([e.t]),
                                               side, e.t, False)[0])
                for e in TEN_EVENTS.events if e.sign == side)
            total += log_terms - integral
        assert partial_loglik(COUPLED, TEN_EVENTS) == pytest.approx(total, abs=1e-6)

    def test_segment_split_invariance(self):
        # walking the recursion through inserted midpoints leaves the value
        # unchanged
        d = COUPLED
        lp, lm = d.theta_plus, d.theta_minus
        t_prev, acc = 0.0, 0.0
        checkpoints = []
        for e in TEN_EVENTS.events:
            checkpoints.extend([(0.5 * (t_prev + e.t), None), (e.t, e)])
            t_prev = e.t
        checkpoints.append((0.5 * (t_prev + 2.0), None))
        checkpoints.append((2.0, None))
        t_prev = 0.0
        for t, ev in checkpoints:
            dt = t - t_prev
            ep, em = math.exp(-d.kappa_plus * dt), math.exp(-d.kappa_minus * dt)
            acc -= d.theta_plus * dt + (lp - d.theta_plus) * (1 - ep) / d.kappa_plus
            acc -= d.theta_minus * dt + (lm - d.theta_minus) * (1 - em) / d.kappa_minus
            lp = d.theta_plus + (lp - d.theta_plus) * ep
            lm = d.theta_minus + (lm - d.theta_minus) * em
            if ev is not None:
                if ev.sign == POS:
                    acc += math.log(lp)
                    lp += d.beta_11 * ev.size
                    lm += d.beta_21 * ev.size
                else:
                    acc += math.log(lm)
                    lp += d.beta_12 * ev.size
                    lm += d.beta_22 * ev.size
            t_prev = t
        assert partial_loglik(COUPLED, TEN_EVENTS) == pytest.approx(acc, abs=1e-12)

    def test_nonpositive_intensity_guard(self):
        # unchecked dynamics (bypassing constructor validation) can drive an
        # intensity through zero; the likelihood must refuse, not return nan
        bad = object.__new__(IntensityDynamics)
        for name, val in [("kappa_plus", 0.1), ("kappa_minus", 0.1),
                          ("theta_plus", 0.5), ("theta_minus", 0.5),
                          ("beta_11", 0.0), ("beta_12", 400.0),
                          ("beta_21", 0.0), ("beta_22", 0.0)]:
            object.__setattr__(bad, name, val)
        events = EventSeries((JumpEvent(0.5, -0.05, NEG), JumpEvent(1.0, 0.05, POS)), 2.0)
        with pytest.raises(NumericDomain):
            partial_loglik(bad, events)


LAW_P = JumpLaw(POS, 0.035, 0.06)
LAW_M = JumpLaw(NEG, -0.035, 0.06)
DYN_TRUE = IntensityDynamics(6.0, 5.0, 16.0, 14.0, 15.0, -10.0, 6.0, -20.0)
EVENTS_12Y = simulate_events(DYN_TRUE, LAW_P, LAW_M, 16.0, 14.0, 12.0, seed=5)


class TestFitMle:
    def test_poisson_rate_recovery(self):
        # Poisson-rate MLE oracle: with no excitation the positive-side rate
        # estimator is the event count over the horizon
        dyn = IntensityDynamics(5.0, 5.0, 30.0, 20.0, 0.0, 0.0, 0.0, 0.0)
        events = simulate_events(dyn, LAW_P, LAW_M, 30.0, 20.0, 20.0, seed=77)
        fit = fit_mle(events, config=OptimizerConfig(n_starts=4, seed=3))
        assert abs(fit.dynamics.theta_plus - 30.0) / 30.0 < 0.2
        assert abs(fit.dynamics.theta_minus - 20.0) / 20.0 < 0.2

    def test_optimum_beats_truth_in_sample(self):
        fit = fit_mle(EVENTS_12Y, config=OptimizerConfig(n_starts=6, seed=2))
        assert fit.loglik >= partial_loglik(DYN_TRUE, EVENTS_12Y) - 1e-9

    def test_deterministic_given_config(self):
        cfg = OptimizerConfig(n_starts=3, seed=9)
        a = fit_mle(EVENTS_12Y, config=cfg)
        b = fit_mle(EVENTS_12Y, config=cfg)
        assert a.dynamics == b.dynamics
        assert a.loglik == b.loglik

    def test_too_few_events_raises(self):
        small = EventSeries((JumpEvent(0.5, 0.05, POS),), 1.0)
        with pytest.raises(DegenerateSample):
            fit_mle(small)

    def test_nonconvergence_raises(self):
        with pytest.raises(NonConvergence):
            fit_mle(EVENTS_12Y, config=OptimizerConfig(n_starts=1, max_iter=2))

    def test_etas_passed_through(self):
        fit = fit_mle(EVENTS_12Y, etas=(0.061, 0.059),
                      config=OptimizerConfig(n_starts=1, seed=0))
        assert (fit.eta_plus_hat, fit.eta_minus_hat) == (0.061, 0.059)

    def test_training_compensator_means_near_one(self):
        # time-change property: integrated intensity between consecutive
        # same-side training events should average about one
        fit = fit_mle(EVENTS_12Y, config=OptimizerConfig(n_starts=6, seed=2))
        d = fit.dynamics
        lp, lm = d.theta_plus, d.theta_minus
        t_prev, cum_p, cum_m = 0.0, 0.0, 0.0
        marks_p, marks_m = [], []
        for e in EVENTS_12Y.events:
            dt = e.t - t_prev
            ep, em = math.exp(-d.kappa_plus * dt), math.exp(-d.kappa_minus * dt)
            cum_p += d.theta_plus * dt + (lp - d.theta_plus) * (1 - ep) / d.kappa_plus
            cum_m += d.theta_minus * dt + (lm - d.theta_minus) * (1 - em) / d.kappa_minus
            lp = d.theta_plus + (lp - d.theta_plus) * ep
            lm = d.theta_minus + (lm - d.theta_minus) * em
            if e.sign == POS:
                marks_p.append(cum_p)
                lp += d.beta_11 * e.size
                lm += d.beta_21 * e.size
            else:
                marks_m.append(cum_m)
                lp += d.beta_12 * e.size
                lm += d.beta_22 * e.size
            t_prev = e.t
        gaps_p = np.diff(np.concatenate([[0.0], marks_p]))
        gaps_m = np.diff(np.concatenate([[0.0], marks_m]))
        assert len(marks_p) + len(marks_m) >= 200
        assert 0.8 < gaps_p.mean() < 1.2
        assert 0.8 < gaps_m.mean() < 1.2


class TestFilterIntensities:
    def test_pure_decay(self):
        fitted = MleResult(IntensityDynamics(2.0, 3.0, 1.0, 0.8, 0.0, 0.0, 0.0, 0.0),
                           None, None, 0.0, ())
        out = filter_intensities(fitted, EventSeries((), 2.0),
                                 IntensityState(0.0, 5.0, 4.0), eval_times=[1.0])
        assert len(out) == 1
        assert out[0].lambda_plus == pytest.approx(1.0 + 4.0 * math.exp(-2.0), abs=1e-15)
        assert out[0].lambda_minus == pytest.approx(0.8 + 3.2 * math.exp(-3.0), abs=1e-15)

    def test_event_kick(self):
        fitted = MleResult(IntensityDynamics(2.0, 2.0, 1.0, 1.0, 3.0, 0.0, 0.0, 0.0),
                           None, None, 0.0, ())
        events = EventSeries((JumpEvent(0.5, 0.05, POS),), 1.0)
        out = filter_intensities(fitted, events, IntensityState(0.0, 5.0, 5.0))
        pre = 1.0 + 4.0 * math.exp(-1.0)
        assert out[0].t == 0.5
        assert out[0].lambda_plus == pytest.approx(pre + 0.15, abs=1e-15)

    def test_replay_reproduces_lambda_path(self):
        fit = fit_mle(EVENTS_12Y, config=OptimizerConfig(n_starts=3, seed=9))
        start = IntensityState(0.0, fit.dynamics.theta_plus, fit.dynamics.theta_minus)
        replay = filter_intensities(fit, EVENTS_12Y, start)
        assert replay == fit.lambda_path

    def test_lower_bound(self):
        fit = fit_mle(EVENTS_12Y, config=OptimizerConfig(n_starts=3, seed=9))
        floor_p = min(fit.dynamics.theta_plus, fit.dynamics.theta_plus)
        for st in fit.lambda_path:
            assert st.lambda_plus >= floor_p - 1e-12
            assert st.lambda_minus >= fit.dynamics.theta_minus - 1e-12

    def test_rejects_events_before_start(self):
        fitted = MleResult(IntensityDynamics(2.0, 2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0),
                           None, None, 0.0, ())
        events = EventSeries((JumpEvent(0.5, 0.05, POS),), 1.0)
        with pytest.raises(ValueError):
            filter_intensities(fitted, events, IntensityState(0.7, 1.0, 1.0))
