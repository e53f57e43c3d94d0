"""Tests for time-change goodness-of-fit and HAC regression utilities."""

import math

import numpy as np
import pytest
from scipy import stats

from hawkesjump.analytics import (
    QqData,
    QqSide,
    RegressionReport,
    cost_of_carry,
    default_hac_lag,
    first_difference,
    hac_regression,
    ks_critical_value,
    ks_statistic,
    time_change_residuals,
)
from hawkesjump.errors import RankDeficient
from hawkesjump.model import NEGATIVE, POSITIVE, IntensityDynamics, JumpLaw
from hawkesjump.simulate import EventSeries, JumpEvent, simulate_events

COUPLED = IntensityDynamics(4.0, 3.0, 1.5, 1.0, 8.0, -5.0, 6.0, -9.0)
EVENTS = EventSeries((
    JumpEvent(0.1234567, 0.05, POSITIVE),
    JumpEvent(0.2345671, -0.06, NEGATIVE),
    JumpEvent(0.4, 0.08, POSITIVE),
    JumpEvent(0.55, -0.05, NEGATIVE),
    JumpEvent(0.78, 0.07, POSITIVE),
    JumpEvent(0.91, -0.09, NEGATIVE),
    JumpEvent(1.05, 0.06, POSITIVE),
    JumpEvent(1.33, -0.07, NEGATIVE),
    JumpEvent(1.61, 0.09, POSITIVE),
    JumpEvent(1.88, -0.08, NEGATIVE),
), horizon=2.0)


def constant_dynamics(theta_p, theta_m, kappa=1.0):
    return IntensityDynamics(kappa, kappa, theta_p, theta_m, 0.0, 0.0, 0.0, 0.0)


def superposed_intensity(dyn, events, t, side, cutoff, include_at_cutoff):
    """Intensity by direct superposition of exponentially decayed kicks from
    events up to the cutoff; independent of the recursion in the module."""
    if side == POSITIVE:
        kappa, theta = dyn.kappa_plus, dyn.theta_plus
        b_own, b_cross = dyn.beta_11, dyn.beta_12
    else:
        kappa, theta = dyn.kappa_minus, dyn.theta_minus
        b_own, b_cross = dyn.beta_21, dyn.beta_22
    lam = theta
    for e in events.events:
        before = e.t <= cutoff if include_at_cutoff else e.t < cutoff
        if not before:
            break
        b = b_own if e.sign == POSITIVE else b_cross
        lam += b * e.size * math.exp(-kappa * (t - e.t))
    return lam


def trapezoid_residuals(dyn, events, side):
    """Residuals by dense trapezoid integration of the superposed intensity,
    starting each side from theta (the module's default initial state)."""
    own = [e.t for e in events.events if e.sign == side]
    out = []
    prev = 0.0
    for t_next in own:
        total = 0.0
        segs = [prev] + [e.t for e in events.events if prev < e.t < t_next] + [t_next]
        for a, b in zip(segs[:-1], segs[1:]):
            grid = np.linspace(a, b, 3001)
            vals = [superposed_intensity(dyn, events, t, side, a, True) for t in grid]
            total += np.trapezoid(vals, grid)
        out.append(total)
        prev = t_next
    return np.array(out)


class TestTimeChangeResiduals:
    def test_constant_unit_intensity_gives_unit_residuals(self):
        dyn = constant_dynamics(1.0, 1.0)
        events = EventSeries(tuple(
            JumpEvent(float(k), 0.05, POSITIVE) for k in range(1, 11)),
            horizon=11.0)
        qq = time_change_residuals(dyn, events)
        assert np.all(qq.plus.samples == 1.0)
        assert qq.minus.samples.size == 0

    def test_matches_trapezoid_integration_of_superposed_intensity(self):
        qq = time_change_residuals(COUPLED, EVENTS)
        for side, got in ((POSITIVE, qq.plus.samples), (NEGATIVE, qq.minus.samples)):
            want = trapezoid_residuals(COUPLED, EVENTS, side)
            np.testing.assert_allclose(got, want, atol=5e-7)

    def test_custom_initial_state_enters_first_residual_only(self):
        # beta = 0, kappa = 2, theta = 1, lambda0 = 3, event at t = 1:
        # integral = 1 + 2 (1 - e^{-2}) / 2
        dyn = constant_dynamics(1.0, 1.0, kappa=2.0)
        events = EventSeries((JumpEvent(1.0, 0.05, POSITIVE),
                              JumpEvent(2.0, 0.04, POSITIVE)), horizon=2.0)
        qq = time_change_residuals(dyn, events, lambda0=(3.0, 1.0))
        assert qq.plus.samples[0] == pytest.approx(1.0 + (1.0 - math.exp(-2.0)),
                                                   rel=1e-14)
        assert qq.plus.samples[1] == pytest.approx(
            1.0 + 2.0 * math.exp(-2.0) * (1.0 - math.exp(-2.0)) / 2.0, rel=1e-13)

    def test_invariant_to_time_shift_with_matching_origin(self):
        shift = 3.7
        shifted = EventSeries(tuple(
            JumpEvent(e.t + shift, e.size, e.sign) for e in EVENTS.events),
            horizon=EVENTS.horizon + shift)
        base = time_change_residuals(COUPLED, EVENTS)
        moved = time_change_residuals(COUPLED, shifted, t0=shift)
        np.testing.assert_allclose(moved.plus.samples, base.plus.samples,
                                   rtol=1e-12)
        np.testing.assert_allclose(moved.minus.samples, base.minus.samples,
                                   rtol=1e-12)

    def test_simulated_events_under_true_model_are_unit_exponential(self):
        dyn = IntensityDynamics(6.0, 5.0, 16.0, 14.0, 15.0, -10.0, 6.0, -20.0)
        law_p = JumpLaw(POSITIVE, 0.035, 0.06)
        law_m = JumpLaw(NEGATIVE, -0.035, 0.06)
        events = simulate_events(dyn, law_p, law_m, 16.0, 14.0, 30.0, seed=42)
        qq = time_change_residuals(dyn, events)
        for side in (qq.plus, qq.minus):
            n = side.samples.size
            assert n > 500
            assert 0.9 < side.samples.mean() < 1.1
            assert ks_statistic(side.samples) < ks_critical_value(n, 0.01)

    def test_halved_theta_halves_the_residual_mean(self):
        true_dyn = constant_dynamics(2.0, 2.0)
        law_p = JumpLaw(POSITIVE, 0.035, 0.06)
        law_m = JumpLaw(NEGATIVE, -0.035, 0.06)
        events = simulate_events(true_dyn, law_p, law_m, 2.0, 2.0, 250.0, seed=7)
        qq = time_change_residuals(constant_dynamics(1.0, 1.0), events)
        for side in (qq.plus, qq.minus):
            n = side.samples.size
            se = side.samples.std() / math.sqrt(n)
            assert abs(side.samples.mean() - 0.5) < 3.0 * se

    def test_split_time_flags_follow_event_times(self):
        qq = time_change_residuals(COUPLED, EVENTS, split_time=1.0)
        # plus events at 0.1234567, 0.4, 0.78 are in sample; 1.05, 1.61 out
        by_sample = dict(zip(qq.plus.empirical.tolist(), qq.plus.in_sample.tolist()))
        chron = qq.plus.samples
        assert [by_sample[v] for v in chron] == [True, True, True, False, False]
        assert qq.split_time == 1.0

    def test_no_split_marks_everything_in_sample(self):
        qq = time_change_residuals(COUPLED, EVENTS)
        assert np.all(qq.plus.in_sample) and np.all(qq.minus.in_sample)

    def test_rejects_events_before_origin(self):
        with pytest.raises(ValueError, match="t0"):
            time_change_residuals(COUPLED, EVENTS, t0=0.5)

    def test_quantile_arrays_are_sorted_and_matched(self):
        qq = time_change_residuals(COUPLED, EVENTS)
        side = qq.plus
        n = side.samples.size
        np.testing.assert_array_equal(side.empirical, np.sort(side.samples))
        want = -np.log(1.0 - (np.arange(1, n + 1) - 0.5) / n)
        np.testing.assert_allclose(side.theoretical, want, rtol=1e-14)

    def test_side_validation_rejects_negative_samples(self):
        with pytest.raises(ValueError, match="finite"):
            QqSide(np.array([-0.1]), np.array([0.1]), np.array([0.1]),
                   np.array([True]))

    def test_side_validation_rejects_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            QqSide(np.array([0.1, 0.2]), np.array([0.1]), np.array([0.1]),
                   np.array([True]))


class TestKsHelpers:
    def test_statistic_agrees_with_scipy(self):
        rng = np.random.default_rng(3)
        samples = rng.exponential(size=400)
        want = stats.kstest(samples, "expon").statistic
        assert ks_statistic(samples) == pytest.approx(want, abs=1e-14)

    def test_critical_value_formula(self):
        # sqrt(-0.5 ln(0.005)) / sqrt(100) = 1.6276236307187292 / 10
        assert ks_critical_value(100, 0.01) == pytest.approx(
            0.16276236307187292, rel=1e-14)

    def test_critical_value_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            ks_critical_value(0, 0.01)
        with pytest.raises(ValueError):
            ks_critical_value(10, 1.5)


class TestCostOfCarry:
    def test_equal_prices_zero_carry(self):
        assert cost_of_carry(100.0, 100.0, 0.3) == 0.0

    def test_five_percent_premium_over_one_year(self):
        assert cost_of_carry(105.0, 100.0, 1.0) == pytest.approx(
            0.04879016416943205, rel=1e-14)

    def test_inverts_exponential_carry(self):
        tau = 0.7
        assert cost_of_carry(100.0 * math.exp(0.3 * tau), 100.0, tau) == \
            pytest.approx(0.3, rel=1e-12)

    def test_scale_invariant(self):
        assert cost_of_carry(105.0 * 7.3, 100.0 * 7.3, 0.5) == pytest.approx(
            cost_of_carry(105.0, 100.0, 0.5), rel=1e-14)

    def test_rejects_nonpositive_inputs(self):
        for bad in ((0.0, 100.0, 1.0), (100.0, 0.0, 1.0), (100.0, 100.0, 0.0)):
            with pytest.raises(ValueError):
                cost_of_carry(*bad)


def sim_regression(seed, n=120, k=3):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n)] + [rng.standard_normal(n)
                                        for _ in range(k - 1)])
    beta = np.arange(1, k + 1, dtype=float)
    y = x @ beta + rng.standard_normal(n)
    return y, x


class TestHacRegression:
    def test_exact_fit_through_origin(self):
        x = np.arange(1.0, 20.0)
        rep = hac_regression(2.0 * x, x, lag=0)
        assert rep.coefficients[0] == pytest.approx(2.0, rel=1e-12)
        assert rep.adj_r_squared == pytest.approx(1.0, abs=1e-12)
        assert rep.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_lag_zero_equals_white_sandwich(self):
        # oracle: White HC0 sandwich assembled from scratch
        y, x = sim_regression(11)
        rep = hac_regression(y, x, lag=0)
        beta = np.linalg.solve(x.T @ x, x.T @ y)
        u = y - x @ beta
        bread = np.linalg.inv(x.T @ x)
        meat = x.T @ np.diag(u ** 2) @ x
        want_se = np.sqrt(np.diag(bread @ meat @ bread))
        np.testing.assert_allclose(rep.hac_se, want_se, rtol=1e-12)
        np.testing.assert_allclose(rep.coefficients, beta, rtol=1e-12)

    def test_matches_statsmodels_newey_west(self):
        import statsmodels.api as sm

        y, x = sim_regression(5)
        for lag in (0, 3, 6):
            rep = hac_regression(y, x, lag=lag)
            fit = sm.OLS(y, x).fit(cov_type="HAC",
                                   cov_kwds={"maxlags": lag,
                                             "use_correction": False})
            np.testing.assert_allclose(rep.coefficients, fit.params, rtol=1e-10)
            np.testing.assert_allclose(rep.hac_se, fit.bse, rtol=1e-10)
            np.testing.assert_allclose(rep.t_stats, fit.tvalues, rtol=1e-10)
            assert rep.adj_r_squared == pytest.approx(fit.rsquared_adj, rel=1e-12)

    def test_iid_noise_hac_t_near_classical_t(self):
        # with iid errors HAC and classical inference agree on average
        ratios = []
        for seed in range(200):
            y, x = sim_regression(seed, n=200, k=2)
            rep = hac_regression(y, x, lag=0)
            beta = np.linalg.solve(x.T @ x, x.T @ y)
            u = y - x @ beta
            s2 = (u @ u) / (len(y) - x.shape[1])
            classical = beta / np.sqrt(np.diag(s2 * np.linalg.inv(x.T @ x)))
            ratios.append(np.abs(rep.t_stats) / np.abs(classical))
        mean_ratio = np.mean(ratios, axis=0)
        assert np.all(np.abs(mean_ratio - 1.0) < 0.05)

    def test_reordering_regressors_permutes_outputs(self):
        y, x = sim_regression(9)
        perm = [2, 0, 1]
        a = hac_regression(y, x, lag=2)
        b = hac_regression(y, x[:, perm], lag=2)
        np.testing.assert_allclose(b.coefficients, a.coefficients[perm], rtol=1e-12)
        np.testing.assert_allclose(b.hac_se, a.hac_se[perm], rtol=1e-12)
        assert b.adj_r_squared == pytest.approx(a.adj_r_squared, rel=1e-12)

    def test_rank_deficient_raises(self):
        y, x = sim_regression(4)
        x_dup = np.column_stack([x, x[:, 1]])
        with pytest.raises(RankDeficient):
            hac_regression(y, x_dup, lag=0)

    def test_requires_enough_rows(self):
        with pytest.raises(ValueError, match="n > k"):
            hac_regression(np.ones(4), np.ones((4, 2)), lag=0)

    def test_default_lag_rule(self):
        assert default_hac_lag(100) == 4
        assert default_hac_lag(50) == 3
        assert default_hac_lag(400) == 5
        y, x = sim_regression(2, n=100)
        assert hac_regression(y, x).lag == 4

    def test_report_t_equals_coef_over_se(self):
        y, x = sim_regression(8)
        rep = hac_regression(y, x, lag=1)
        np.testing.assert_allclose(rep.t_stats, rep.coefficients / rep.hac_se,
                                   rtol=1e-14)

    def test_report_rejects_inflated_r_squared(self):
        with pytest.raises(ValueError, match="R"):
            RegressionReport(np.array([1.0]), np.array([1.0]), np.array([1.0]),
                             1.5, 0, 10)

    def test_first_difference(self):
        arr = np.array([[1.0, 2.0], [4.0, 6.0], [9.0, 12.0]])
        np.testing.assert_array_equal(first_difference(arr),
                                      np.array([[3.0, 4.0], [5.0, 6.0]]))
        np.testing.assert_array_equal(first_difference([1.0, 3.0, 6.0]),
                                      np.array([2.0, 3.0]))
        with pytest.raises(ValueError):
            first_difference([1.0])
