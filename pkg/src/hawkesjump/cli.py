"""Command-line interface.

Each subcommand reads explicit input files, computes through the shared
handlers, and writes its outputs atomically. Outputs embed the library
version and a hash of the resolved run configuration, all randomness comes
from explicit seeds, and nothing reads the wall clock, so identical
configurations and inputs produce byte-identical files. Exit codes: 0
success, 2 configuration or usage errors, 3 data errors, 4 numerical
failures. Pricing parallelism is capped by the HJP_THREADS environment
variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import click

from ._version import __version__
from .analytics import ks_critical_value, ks_statistic
from .calibrate import CalibConfig, QuoteSlice, StageOne
from .calibrate import calibrate as run_calibration
from .errors import ConfigError, DataError, NumericError
from .estimate import OptimizerConfig
from .handlers import (
    fit_series,
    gof_qq,
    pipeline_payloads,
    premia_rows,
    price_rows,
    regression_payload,
    stage,
)
from .io import (
    calibration_to_dict,
    config_hash,
    dynamics_from_dict,
    fit_to_dict,
    params_from_dict,
    read_json,
    read_quotes_csv,
    read_returns_csv,
    read_states_csv,
    read_table_csv,
    write_json,
    write_path_csv,
    write_premia_csv,
    write_prices_csv,
    write_qq_csv,
)
from .measure import RiskPremiumParams
from .model import (
    DAYS_PER_YEAR,
    NEGATIVE,
    POSITIVE,
    IntensityState,
    JumpLaw,
)
from .pricing import DEFAULT_QUAD
from .simulate import simulate_path


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one CLI invocation.

    Input paths must exist and output locations must be writable when the
    config is built, so path problems surface before any computation. The
    hash covers the semantic settings (subcommand, options, seed, day-count
    constant) but not the paths, so the same job writes the same bytes
    regardless of where its files live.
    """

    subcommand: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    options: dict = field(default_factory=dict)
    seed: int | None = None
    days_per_year: float = DAYS_PER_YEAR

    def __post_init__(self):
        for path in self.inputs:
            if not os.path.isfile(path):
                raise ConfigError(f"input file not found: {path}")
        for path in self.outputs:
            parent = os.path.dirname(os.path.abspath(path))
            if not os.path.isdir(parent):
                raise ConfigError(f"output directory does not exist: {parent}")

    def hash(self) -> str:
        return config_hash({
            "subcommand": self.subcommand,
            "options": self.options,
            "seed": self.seed,
            "days_per_year": self.days_per_year,
        })


def _log(message: str) -> None:
    # stderr keeps stdout clean for piping; content is deterministic
    click.echo(message, err=True)


def _require(payload: dict, key: str, source: str):
    if key not in payload:
        raise ConfigError(f"{source} is missing required key {key!r}")
    return payload[key]


def _number(value, key: str, source: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{source}: {key!r} must be a number")
    return float(value)


def _number_list(value, key: str, source: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{source}: {key!r} must be a non-empty list")
    return [_number(v, key, source) for v in value]


def _take(payload: dict, allowed: dict, source: str) -> dict:
    """Keyword overrides from a config mapping, rejecting unknown keys."""
    unknown = sorted(set(payload) - set(allowed))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    out = {}
    for key, value in payload.items():
        try:
            out[key] = allowed[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from exc
    return out


_OPTIMIZER_KEYS = {
    "n_starts": int, "seed": int, "max_iter": int, "xatol": float,
    "fatol": float, "min_events": int, "start_scale": float, "refine": bool,
}


def _optimizer_config(payload: dict, seed: int, tol: float | None,
                      source: str) -> OptimizerConfig:
    overrides = _take(payload, _OPTIMIZER_KEYS, source)
    overrides.setdefault("seed", seed)
    if tol is not None:
        overrides["xatol"] = tol
    return OptimizerConfig(**overrides)


_CALIB_KEYS = {
    "sigma_bounds": lambda v: (float(v[0]), float(v[1])),
    "chi_cap": float, "margin_frac": float, "max_iter": int,
    "xatol": float, "fatol": float,
}
_BAND_KEYS = {
    "moneyness_band": lambda v: (float(v[0]), float(v[1])),
    "tau_band": lambda v: (float(v[0]), float(v[1])),
}


def _calib_config(payload: dict, tol: float | None, source: str) -> CalibConfig:
    overrides = _take(payload, _CALIB_KEYS, source)
    if tol is not None:
        overrides["xatol"] = tol
    return CalibConfig(**overrides)


def _stage_one_from_dict(d: dict, source: str) -> StageOne:
    for key in ("nu_plus", "eta_plus", "nu_minus", "eta_minus"):
        _require(d, key, source)
    try:
        return StageOne(
            dynamics=dynamics_from_dict(d),
            law_plus=JumpLaw(POSITIVE, float(d["nu_plus"]), float(d["eta_plus"])),
            law_minus=JumpLaw(NEGATIVE, float(d["nu_minus"]), float(d["eta_minus"])),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def _state_from_dict(d: dict, source: str) -> IntensityState:
    for key in ("t", "lambda_plus", "lambda_minus"):
        _require(d, key, source)
    try:
        return IntensityState(float(d["t"]), float(d["lambda_plus"]),
                              float(d["lambda_minus"]))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


@click.group(name="hawkesjump")
@click.version_option(__version__, prog_name="hawkesjump")
def cli():
    """Clustered-jump asset-price toolkit: simulation, estimation, pricing,
    calibration, and risk-premium extraction."""


@cli.command(name="simulate")
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON file with flat model parameters.")
@click.option("--T", "horizon", required=True, type=float,
              help="Horizon in years.")
@click.option("--grid-step", default=1.0 / DAYS_PER_YEAR, show_default=True,
              type=float, help="Grid spacing in years.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--measure", default="P", show_default=True,
              type=click.Choice(["P", "Q"]))
@click.option("--rate", default=None, type=float,
              help="Short rate; required with --measure Q.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
def cmd_simulate(params_path, horizon, grid_step, seed, measure, rate, out_path):
    """Simulate one path and write it as CSV (t,X,lambda_plus,lambda_minus)."""
    cfg = RunConfig("simulate", inputs=(params_path,), outputs=(out_path,),
                    options={"T": horizon, "grid_step": grid_step,
                             "measure": measure, "rate": rate}, seed=seed)
    if not horizon > 0:
        raise ConfigError(f"--T must be positive, got {horizon}")
    if not grid_step > 0:
        raise ConfigError(f"--grid-step must be positive, got {grid_step}")
    if measure == "Q" and rate is None:
        raise ConfigError("--rate is required with --measure Q")
    params = params_from_dict(read_json(params_path))
    path = simulate_path(params, horizon, grid_step, seed, measure=measure,
                         rate=rate)
    write_path_csv(out_path, path, cfg.hash())
    _log(f"simulate: {len(path.grid)} grid points, "
         f"{len(path.events.events)} events -> {out_path}")


@cli.command(name="estimate")
@click.option("--returns", "returns_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of (timestamp,log_return) daily observations.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with optimizer overrides.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--tol", default=None, type=float,
              help="Optimizer simplex tolerance override.")
def cmd_estimate(returns_path, out_path, config_path, seed, tol):
    """Fit thresholds, jump scales, and intensity dynamics; write fit JSON."""
    payload = read_json(config_path) if config_path else {}
    payload.pop("meta", None)
    inputs = (returns_path,) + ((config_path,) if config_path else ())
    cfg = RunConfig("estimate", inputs=inputs, outputs=(out_path,),
                    options={"config": payload, "tol": tol}, seed=seed)
    opt = _optimizer_config(payload, seed, tol, config_path or "--config")
    returns = read_returns_csv(returns_path)
    pot, mle, horizon, last_state = fit_series(returns, opt)
    write_json(out_path, fit_to_dict(pot, mle, horizon, last_state), cfg.hash())
    _log(f"estimate: {len(pot.jumps.events)} jumps over {horizon:.3f} years, "
         f"loglik {mle.loglik:.4f} -> {out_path}")


@cli.command(name="price")
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON pricing job: params, chi_plus, chi_minus, rate, "
                   "spot, maturities, strikes.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--tol", default=None, type=float,
              help="Pricing quadrature relative tolerance override.")
def cmd_price(params_path, out_path, tol):
    """Price a maturity-by-strike grid; write CSV (maturity,strike,type,price,iv)."""
    payload = read_json(params_path)
    payload.pop("meta", None)
    cfg = RunConfig("price", inputs=(params_path,), outputs=(out_path,),
                    options={"job": payload, "tol": tol})
    params = params_from_dict(_require(payload, "params", params_path))
    chi = RiskPremiumParams(
        _number(_require(payload, "chi_plus", params_path), "chi_plus", params_path),
        _number(_require(payload, "chi_minus", params_path), "chi_minus", params_path))
    rate = _number(_require(payload, "rate", params_path), "rate", params_path)
    spot = _number(_require(payload, "spot", params_path), "spot", params_path)
    maturities = _number_list(_require(payload, "maturities", params_path),
                              "maturities", params_path)
    strikes = _number_list(_require(payload, "strikes", params_path),
                           "strikes", params_path)
    quad = DEFAULT_QUAD if tol is None else replace(DEFAULT_QUAD, rel_tol=tol)
    rows = price_rows(params, chi, rate, spot, maturities, strikes, quad)
    write_prices_csv(out_path, rows, cfg.hash())
    _log(f"price: {len(rows)} options -> {out_path}")


@cli.command(name="calibrate")
@click.option("--quotes", "quotes_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of quotes (as_of,tau,strike,type,iv[,vega]).")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with spot, rate, stage_one, state, and optional "
                   "optimizer overrides.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--tol", default=None, type=float,
              help="Calibration simplex tolerance override.")
def cmd_calibrate(quotes_path, config_path, out_path, tol):
    """Calibrate (sigma, chi_plus, chi_minus) to an IV slice; write JSON."""
    payload = read_json(config_path)
    payload.pop("meta", None)
    cfg = RunConfig("calibrate", inputs=(quotes_path, config_path),
                    outputs=(out_path,),
                    options={"config": payload, "tol": tol})
    spot = _number(_require(payload, "spot", config_path), "spot", config_path)
    rate = _number(_require(payload, "rate", config_path), "rate", config_path)
    stage_one = _stage_one_from_dict(
        _require(payload, "stage_one", config_path), config_path)
    state = _state_from_dict(_require(payload, "state", config_path), config_path)
    bands = _take(payload.get("bands", {}), _BAND_KEYS, config_path)
    calib_cfg = _calib_config(payload.get("optimizer", {}), tol, config_path)
    as_of, quotes = read_quotes_csv(quotes_path)
    try:
        slc = QuoteSlice(as_of, spot, rate, tuple(quotes), state, **bands)
    except ValueError as exc:
        raise DataError(f"{quotes_path}: {exc}") from exc
    result = run_calibration(slc, stage_one, calib_cfg)
    write_json(out_path, calibration_to_dict(result, slc.quotes), cfg.hash())
    _log(f"calibrate: sigma {result.sigma_hat:.6f}, chi ({result.chi_plus_hat:.4f}, "
         f"{result.chi_minus_hat:.4f}), objective {result.objective:.3e} "
         f"-> {out_path}")


@cli.command(name="premia")
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with flat model parameters plus chi_plus, chi_minus, "
                   "and optional rate.")
@click.option("--states", "states_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="CSV of intensity states (t,lambda_plus,lambda_minus).")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
def cmd_premia(params_path, states_path, out_path):
    """Evaluate jump risk premia along a state series; write CSV."""
    payload = read_json(params_path)
    payload.pop("meta", None)
    cfg = RunConfig("premia", inputs=(params_path, states_path),
                    outputs=(out_path,), options={"job": payload})
    params = params_from_dict(payload)
    chi = RiskPremiumParams(
        _number(_require(payload, "chi_plus", params_path), "chi_plus", params_path),
        _number(_require(payload, "chi_minus", params_path), "chi_minus", params_path))
    rate = _number(payload.get("rate", 0.0), "rate", params_path)
    states = read_states_csv(states_path)
    rows = premia_rows(params, chi, rate, states)
    write_premia_csv(out_path, rows, cfg.hash())
    _log(f"premia: {len(rows)} states -> {out_path}")


@cli.command(name="gof")
@click.option("--params", "fit_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Fitted-model JSON from the estimate subcommand.")
@click.option("--returns", "returns_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
@click.option("--split", default=None, type=float,
              help="In-sample cutoff in years for the QQ flags.")
def cmd_gof(fit_path, returns_path, out_path, split):
    """Time-change residual QQ data for a fitted model; write CSV."""
    fit = read_json(fit_path)
    fit.pop("meta", None)
    cfg = RunConfig("gof", inputs=(fit_path, returns_path),
                    outputs=(out_path,), options={"fit": fit, "split": split})
    returns = read_returns_csv(returns_path)
    qq = gof_qq(fit, returns, split)
    write_qq_csv(out_path, qq, cfg.hash())
    for name, side in (("plus", qq.plus), ("minus", qq.minus)):
        n = len(side.samples)
        if n == 0:
            _log(f"gof {name}: no events")
            continue
        stat = ks_statistic(side.samples)
        _log(f"gof {name}: n {n}, KS {stat:.4f}, "
             f"1% critical {ks_critical_value(n, 0.01):.4f}")
    _log(f"gof: -> {out_path}")


@cli.command(name="analyze")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with data_csv, y_column, x_columns, and options "
                   "lag, first_difference, add_intercept.")
@click.option("--out", "out_path", required=True,
              type=click.Path(dir_okay=False))
def cmd_analyze(config_path, out_path):
    """HAC-robust regression on CSV columns; write a report JSON."""
    payload = read_json(config_path)
    payload.pop("meta", None)
    cfg = RunConfig("analyze", inputs=(config_path,), outputs=(out_path,),
                    options={"config": payload})
    data_csv = _require(payload, "data_csv", config_path)
    y_col = _require(payload, "y_column", config_path)
    x_cols = _require(payload, "x_columns", config_path)
    if not isinstance(x_cols, list) or not x_cols:
        raise ConfigError(f"{config_path}: x_columns must be a non-empty list")
    lag = payload.get("lag")
    if lag is not None and (isinstance(lag, bool) or not isinstance(lag, int)):
        raise ConfigError(f"{config_path}: lag must be an integer")
    columns = read_table_csv(data_csv, [y_col, *x_cols])
    report = regression_payload(
        columns, y_col, x_cols, lag=lag,
        difference=bool(payload.get("first_difference", False)),
        intercept=bool(payload.get("add_intercept", True)))
    write_json(out_path, report, cfg.hash())
    _log(f"analyze: n {report['n']}, lag {report['lag']}, "
         f"adj R^2 {report['adj_r_squared']:.4f} -> {out_path}")


@cli.command(name="pipeline")
@click.option("--returns", "returns_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--quotes", "quotes_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False))
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with spot, rate, and optional optimizer and "
                   "calibration overrides.")
@click.option("--seed", default=0, show_default=True, type=int)
def cmd_pipeline(returns_path, quotes_path, out_dir, config_path, seed):
    """Two-stage fit from returns and quotes: writes fit.json,
    calibration.json, and premia.csv into the output directory."""
    payload = read_json(config_path) if config_path else {}
    payload.pop("meta", None)
    inputs = (returns_path, quotes_path)
    if config_path:
        inputs += (config_path,)
    cfg = RunConfig("pipeline", inputs=inputs,
                    options={"config": payload}, seed=seed)
    source = config_path or "--config"
    spot = _number(_require(payload, "spot", source), "spot", source)
    rate = _number(_require(payload, "rate", source), "rate", source)
    opt = _optimizer_config(payload.get("optimizer", {}), seed, None, source)
    calib_cfg = _calib_config(payload.get("calibration", {}), None, source)
    bands = _take(payload.get("bands", {}), _BAND_KEYS, source)
    os.makedirs(out_dir, exist_ok=True)
    cfg_hash = cfg.hash()

    with stage("returns"):
        returns = read_returns_csv(returns_path)
    with stage("quotes"):
        as_of, quotes = read_quotes_csv(quotes_path)

    payloads = pipeline_payloads(returns, as_of, quotes, spot, rate, opt,
                                 calib_cfg, bands)
    fit, calibration = payloads["fit"], payloads["calibration"]
    write_json(os.path.join(out_dir, "fit.json"), fit, cfg_hash)
    write_json(os.path.join(out_dir, "calibration.json"), calibration, cfg_hash)
    write_premia_csv(os.path.join(out_dir, "premia.csv"), payloads["premia"],
                     cfg_hash)
    _log(f"pipeline estimate: {fit['pot']['n_jumps_plus'] + fit['pot']['n_jumps_minus']} "
         f"jumps, loglik {fit['loglik']:.4f}")
    _log(f"pipeline calibrate: sigma {calibration['sigma_hat']:.6f}, "
         f"chi ({calibration['chi_plus_hat']:.4f}, "
         f"{calibration['chi_minus_hat']:.4f})")
    _log(f"pipeline premia: {len(payloads['premia'])} states -> {out_dir}")


def main(argv=None) -> int:
    """Entry point mapping library errors to exit codes."""
    try:
        cli.main(args=argv, prog_name="hawkesjump", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(exc.format_message(), err=True)
        ctx = exc.ctx
        usage = ctx.get_usage() if ctx is not None else cli.get_usage(
            click.Context(cli, info_name="hawkesjump"))
        click.echo(usage, err=True)
        return ConfigError.exit_code
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return ConfigError.exit_code
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return DataError.exit_code
    except NumericError as exc:
        click.echo(f"numerical error: {exc}", err=True)
        return NumericError.exit_code
    return 0


run = main


if __name__ == "__main__":
    raise SystemExit(main())
