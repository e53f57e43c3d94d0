"""Shared in-process operations behind the CLI and the HTTP service.

Each handler takes typed in-memory inputs and returns plain data (dicts,
row tuples, library records); file handling, flags, and transport live in
the front ends. Multi-stage operations tag propagated errors with the stage
that raised them.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .analytics import first_difference, hac_regression, time_change_residuals
from .calibrate import CalibConfig, QuoteSlice, StageOne, calibrate
from .errors import ConfigError, DataError, NumericError
from .estimate import (
    OptimizerConfig,
    ReturnSeries,
    estimate_eta,
    filter_intensities,
    fit_mle,
    pot_filter,
)
from .io import (
    calibration_to_dict,
    dynamics_from_dict,
    fit_to_dict,
    regression_to_dict,
    validate_fit_dict,
)
from .measure import RiskPremiumParams, jump_risk_premia, to_q_params
from .model import (
    DAYS_PER_YEAR,
    NEGATIVE,
    POSITIVE,
    IntensityState,
    ModelParams,
)
from .pricing import (
    CALL,
    DEFAULT_QUAD,
    PUT,
    OptionSpec,
    QuadratureConfig,
    implied_vol,
    price_option,
)
from .simulate import EventSeries, JumpEvent


@contextmanager
def stage(name: str):
    """Tag errors with the pipeline stage they came from."""
    try:
        yield
    except (ConfigError, DataError, NumericError) as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def grid_states(mle, events: EventSeries, from_state: IntensityState,
                grid: np.ndarray) -> list[IntensityState]:
    """Filtered intensity states at the grid times only.

    filter_intensities interleaves post-event states with grid states,
    putting the event entry first when times coincide; the grid entry for
    grid[j] therefore sits at index (number of events at or before grid[j])
    plus j.
    """
    grid = np.asarray(grid, dtype=float)
    merged = filter_intensities(mle, events, from_state, eval_times=grid)
    ev_times = events.times()
    return [merged[int(np.searchsorted(ev_times, g, side="right")) + j]
            for j, g in enumerate(grid)]


def fit_series(returns: ReturnSeries, config: OptimizerConfig):
    """Threshold filtering, tail-scale estimation, and dynamics MLE."""
    pot = pot_filter(returns)
    etas = estimate_eta(pot.jumps, (pot.nu_plus_hat, pot.nu_minus_hat))
    mle = fit_mle(pot.jumps, etas=etas, config=config)
    horizon = pot.jumps.horizon
    dyn = mle.dynamics
    start = IntensityState(0.0, dyn.theta_plus, dyn.theta_minus)
    last_state = grid_states(mle, pot.jumps, start, np.array([horizon]))[-1]
    return pot, mle, horizon, last_state


def classify_jumps(returns: ReturnSeries, nu_plus: float,
                   nu_minus: float) -> EventSeries:
    """Returns at or beyond the thresholds, as a jump event series."""
    times = returns.times_years()
    events = []
    for t, r in zip(times, returns.log_returns):
        if r >= nu_plus:
            events.append(JumpEvent(float(t), float(r), POSITIVE))
        elif r <= nu_minus:
            events.append(JumpEvent(float(t), float(r), NEGATIVE))
    return EventSeries(tuple(events), float(times[-1]))


def gof_qq(fit: dict, returns: ReturnSeries, split: float | None = None):
    """Time-change residual QQ data for a fitted-model record."""
    validate_fit_dict(fit)
    dynamics = dynamics_from_dict(fit["dynamics"])
    events = classify_jumps(returns, float(fit["pot"]["nu_plus_hat"]),
                            float(fit["pot"]["nu_minus_hat"]))
    return time_change_residuals(dynamics, events, split_time=split)


def price_rows(params: ModelParams, chi: RiskPremiumParams, rate: float,
               spot: float, maturities, strikes,
               quad: QuadratureConfig | None = None) -> list[tuple]:
    """Out-of-the-money prices and implied vols on a maturity-strike grid."""
    quad = quad or DEFAULT_QUAD
    q_params = to_q_params(params, chi, rate)
    rows = []
    for tau in maturities:
        for strike in strikes:
            kind = CALL if strike >= spot else PUT
            spec = OptionSpec(strike, tau, kind, spot, rate)
            price = price_option(q_params, spec, config=quad)
            rows.append((tau, strike, kind, price, implied_vol(price, spec)))
    return rows


def premia_rows(params: ModelParams, chi: RiskPremiumParams, rate: float,
                states) -> list[tuple]:
    """(t, gamma_plus, gamma_minus) along an intensity-state series."""
    rows = []
    for state in states:
        gamma_p, gamma_m = jump_risk_premia(params, chi, state=state, rate=rate)
        rows.append((state.t, gamma_p, gamma_m))
    return rows


def regression_payload(columns: dict, y_column: str, x_columns,
                       lag: int | None = None, difference: bool = False,
                       intercept: bool = True) -> dict:
    """HAC regression report over named data columns."""
    missing = [c for c in (y_column, *x_columns) if c not in columns]
    if missing:
        raise DataError(f"data is missing columns {missing}")
    try:
        y = np.asarray(columns[y_column], dtype=float)
        x = np.column_stack([np.asarray(columns[c], dtype=float)
                             for c in x_columns])
    except ValueError as exc:
        raise DataError(f"data columns must be equal-length numeric "
                        f"arrays: {exc}") from exc
    if len(y) != len(x):
        raise DataError("data columns must be equal-length numeric arrays")
    if difference:
        stacked = first_difference(np.column_stack([y, x]))
        y, x = stacked[:, 0], stacked[:, 1:]
    names = list(x_columns)
    if intercept:
        x = np.column_stack([np.ones(len(y)), x])
        names = ["intercept", *names]
    try:
        report = hac_regression(y, x, lag=lag)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return {"columns": names, **regression_to_dict(report)}


def as_of_day_offset(as_of: str, returns: ReturnSeries) -> float:
    """Quote timestamp as days since the first return observation."""
    stamps = returns.timestamps
    if np.issubdtype(stamps.dtype, np.datetime64):
        try:
            stamp = np.datetime64(as_of, "D")
        except ValueError as exc:
            raise DataError(f"quote as_of {as_of!r} is not an ISO date") from exc
        return float((stamp - stamps[0]) / np.timedelta64(1, "D"))
    try:
        return float(as_of) - float(stamps[0])
    except ValueError as exc:
        raise DataError(
            f"quote as_of {as_of!r} is not a numeric day offset while the "
            f"return timestamps are numeric") from exc


def pipeline_payloads(returns: ReturnSeries, as_of: str, quotes, spot: float,
                      rate: float, opt: OptimizerConfig,
                      calib_cfg: CalibConfig | None = None,
                      bands: dict | None = None) -> dict:
    """Two-stage fit: POT, MLE, filtering to the quote date, slice
    calibration, and premia along the filtered daily states.

    Returns {"fit": ..., "calibration": ..., "premia": rows}; errors carry
    the stage tag they arose in. Quotes dated before the final return are
    rejected, since calibrating to them would use information from after
    their own date.
    """
    with stage("quotes"):
        if not quotes:
            raise DataError("quote slice is empty")
        as_of_days = as_of_day_offset(as_of, returns)
        last_day = float(returns.day_offsets[-1])
        if as_of_days < last_day:
            raise DataError(
                f"quotes are as of day {as_of_days:g} but returns run "
                f"through day {last_day:g}; the calibration would look ahead")

    with stage("estimate"):
        pot, mle, horizon, last_state = fit_series(returns, opt)
        fit = fit_to_dict(pot, mle, horizon, last_state)

    with stage("filter"):
        as_of_years = as_of_days / DAYS_PER_YEAR
        grid = np.unique(np.append(returns.times_years(), as_of_years))
        dyn = mle.dynamics
        start = IntensityState(0.0, dyn.theta_plus, dyn.theta_minus)
        states = grid_states(mle, pot.jumps, start, grid)
        state_asof = states[int(np.searchsorted(grid, as_of_years))]

    with stage("calibrate"):
        stage_one = StageOne.from_estimates(pot, mle)
        try:
            slc = QuoteSlice(as_of, spot, rate, tuple(quotes), state_asof,
                             **(bands or {}))
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        result = calibrate(slc, stage_one, calib_cfg)
        calibration = calibration_to_dict(result, slc.quotes)

    with stage("premia"):
        chi = RiskPremiumParams(result.chi_plus_hat, result.chi_minus_hat)
        params = ModelParams(rate, result.sigma_hat, mle.dynamics,
                             stage_one.law_plus, stage_one.law_minus,
                             state_asof.lambda_plus, state_asof.lambda_minus)
        premia = premia_rows(params, chi, rate, states)

    return {"fit": fit, "calibration": calibration, "premia": premia}
