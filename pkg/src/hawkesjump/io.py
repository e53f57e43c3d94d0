"""Deterministic CSV/JSON serialization with atomic writes.

JSON carries results and parameter records (flat snake_case keys); CSV
carries series. Every writer embeds the library version and a caller-supplied
config hash so outputs are traceable and byte-reproducible: floats render via
repr (shortest round trip) and nothing depends on wall-clock state.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from typing import Any

import numpy as np

from ._version import __version__
from .calibrate import CalibrationResult, Quote
from .errors import ConfigError, DataError
from .estimate import MleResult, PotResult, ReturnSeries
from .measure import QParams
from .model import (
    NEGATIVE,
    POSITIVE,
    IntensityDynamics,
    IntensityState,
    JumpLaw,
    ModelParams,
)
from .simulate import EventSeries, JumpEvent, SimPath

_PARAM_KEYS = (
    "mu", "sigma", "kappa_plus", "kappa_minus", "theta_plus", "theta_minus",
    "beta_11", "beta_12", "beta_21", "beta_22", "nu_plus", "eta_plus",
    "nu_minus", "eta_minus", "lambda0_plus", "lambda0_minus",
)
_DYNAMICS_KEYS = ("kappa_plus", "kappa_minus", "theta_plus", "theta_minus",
                  "beta_11", "beta_12", "beta_21", "beta_22")


def config_hash(config: Any) -> str:
    """Stable 12-hex digest of a JSON-serializable configuration object."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def atomic_write_text(path: str, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a
    partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".hjp-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta(cfg_hash: str) -> dict:
    return {"library_version": __version__, "config_hash": cfg_hash}


def write_json(path: str, payload: dict, cfg_hash: str) -> None:
    body = {"meta": _meta(cfg_hash)}
    body.update(payload)
    atomic_write_text(path, json.dumps(body, sort_keys=True, indent=2) + "\n")


def read_json(path: str) -> dict:
    try:
        with open(path) as handle:
            return json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {path}: {exc}") from exc


def _csv_text(header: str, rows, cfg_hash: str) -> str:
    lines = [f"# library_version={__version__} config_hash={cfg_hash}", header]
    # float() strips numpy scalar wrappers so repr is the shortest round trip
    lines.extend(",".join(repr(float(v)) if isinstance(v, float) else str(v)
                          for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path: str, header: str, rows, cfg_hash: str) -> None:
    atomic_write_text(path, _csv_text(header, rows, cfg_hash))


def _read_csv_rows(path: str, expected_columns: tuple[str, ...],
                   optional: tuple[str, ...] = ()) -> list[dict]:
    try:
        with open(path) as handle:
            lines = [ln.strip() for ln in handle]
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise DataError(f"{path} contains no header row")
    header = [c.strip() for c in lines[0].split(",")]
    missing = [c for c in expected_columns if c not in header]
    if missing:
        raise DataError(f"{path} is missing columns {missing}; found {header}")
    known = set(expected_columns) | set(optional)
    rows = []
    for ln in lines[1:]:
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != len(header):
            raise DataError(f"{path}: row has {len(cells)} cells, header has "
                            f"{len(header)}")
        rows.append({k: v for k, v in zip(header, cells) if k in known})
    return rows


def _float(value: str, where: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise DataError(f"{where}: {value!r} is not a number") from exc


# parameter records


def params_to_dict(params: ModelParams | QParams) -> dict:
    d = params.dynamics
    return {
        "mu": params.mu, "sigma": params.sigma,
        "kappa_plus": d.kappa_plus, "kappa_minus": d.kappa_minus,
        "theta_plus": d.theta_plus, "theta_minus": d.theta_minus,
        "beta_11": d.beta_11, "beta_12": d.beta_12,
        "beta_21": d.beta_21, "beta_22": d.beta_22,
        "nu_plus": params.law_plus.nu, "eta_plus": params.law_plus.eta,
        "nu_minus": params.law_minus.nu, "eta_minus": params.law_minus.eta,
        "lambda0_plus": params.lambda0_plus,
        "lambda0_minus": params.lambda0_minus,
    }


def params_from_dict(d: dict) -> ModelParams:
    missing = [k for k in _PARAM_KEYS if k not in d]
    if missing:
        raise DataError(f"parameter record is missing keys {missing}")
    try:
        vals = {k: float(d[k]) for k in _PARAM_KEYS}
    except (TypeError, ValueError) as exc:
        raise DataError(f"parameter record has non-numeric values: {exc}") from exc
    try:
        return ModelParams(
            vals["mu"], vals["sigma"],
            IntensityDynamics(*(vals[k] for k in _DYNAMICS_KEYS)),
            JumpLaw(POSITIVE, vals["nu_plus"], vals["eta_plus"]),
            JumpLaw(NEGATIVE, vals["nu_minus"], vals["eta_minus"]),
            vals["lambda0_plus"], vals["lambda0_minus"])
    except ValueError as exc:
        raise DataError(f"invalid parameter record: {exc}") from exc


def dynamics_to_dict(dynamics: IntensityDynamics) -> dict:
    return {k: getattr(dynamics, k) for k in _DYNAMICS_KEYS}


def dynamics_from_dict(d: dict) -> IntensityDynamics:
    missing = [k for k in _DYNAMICS_KEYS if k not in d]
    if missing:
        raise DataError(f"dynamics record is missing keys {missing}")
    try:
        return IntensityDynamics(*(float(d[k]) for k in _DYNAMICS_KEYS))
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid dynamics record: {exc}") from exc


# series


def path_to_rows(path: SimPath):
    for t, x, lp, lm in zip(path.grid, path.x, path.lambda_plus,
                            path.lambda_minus):
        yield float(t), float(x), float(lp), float(lm)


def write_path_csv(path: str, sim_path: SimPath, cfg_hash: str) -> None:
    write_csv(path, "t,X,lambda_plus,lambda_minus", path_to_rows(sim_path),
              cfg_hash)


def write_events_csv(path: str, events: EventSeries, cfg_hash: str) -> None:
    rows = ((float(e.t), float(e.size), e.sign) for e in events.events)
    write_csv(path, "t,size,sign", rows, cfg_hash)


def read_events_csv(path: str, horizon: float | None = None) -> EventSeries:
    rows = _read_csv_rows(path, ("t", "size", "sign"))
    events = []
    for row in rows:
        sign = row["sign"]
        if sign not in (POSITIVE, NEGATIVE):
            raise DataError(f"{path}: sign must be {POSITIVE!r} or {NEGATIVE!r}")
        events.append(JumpEvent(_float(row["t"], path), _float(row["size"], path),
                                sign))
    if horizon is None:
        horizon = events[-1].t if events else 0.0
    try:
        return EventSeries(tuple(events), horizon)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_returns_csv(path: str, returns: ReturnSeries, cfg_hash: str) -> None:
    rows = zip((str(t) for t in returns.timestamps),
               (float(r) for r in returns.log_returns))
    write_csv(path, "timestamp,log_return", rows, cfg_hash)


def read_returns_csv(path: str) -> ReturnSeries:
    rows = _read_csv_rows(path, ("timestamp", "log_return"))
    if not rows:
        raise DataError(f"{path} contains no observations")
    stamps_raw = [row["timestamp"] for row in rows]
    values = np.array([_float(row["log_return"], path) for row in rows])
    try:
        stamps = np.array([float(s) for s in stamps_raw])
    except ValueError:
        try:
            stamps = np.array(stamps_raw, dtype="datetime64[D]")
        except ValueError as exc:
            raise DataError(f"{path}: timestamps must be numeric day offsets or "
                            f"ISO dates: {exc}") from exc
    try:
        return ReturnSeries(stamps, values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_quotes_csv(path: str) -> tuple[str, list[Quote]]:
    """Quote rows plus the single as_of stamp they must share."""
    rows = _read_csv_rows(path, ("as_of", "tau", "strike", "type", "iv"),
                          optional=("vega",))
    if not rows:
        raise DataError(f"{path} contains no quotes")
    as_of = {row["as_of"] for row in rows}
    if len(as_of) != 1:
        raise DataError(f"{path}: all quotes must share one as_of, got {sorted(as_of)}")
    quotes = []
    for row in rows:
        weight = None
        if row.get("vega") not in (None, ""):
            weight = _float(row["vega"], path)
        try:
            quotes.append(Quote(tau=_float(row["tau"], path),
                                strike=_float(row["strike"], path),
                                kind=row["type"],
                                iv=_float(row["iv"], path),
                                weight=weight))
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
    return as_of.pop(), quotes


def write_quotes_csv(path: str, as_of: str, quotes, cfg_hash: str) -> None:
    rows = ((as_of, float(q.tau), float(q.strike), q.kind, float(q.iv),
             float(q.weight)) for q in quotes)
    write_csv(path, "as_of,tau,strike,type,iv,vega", rows, cfg_hash)


def write_premia_csv(path: str, rows, cfg_hash: str) -> None:
    """rows of (t, gamma_plus, gamma_minus)."""
    write_csv(path, "t,gamma_plus,gamma_minus",
              ((float(t), float(gp), float(gm)) for t, gp, gm in rows), cfg_hash)


def write_prices_csv(path: str, rows, cfg_hash: str) -> None:
    """rows of (maturity, strike, type, price, iv)."""
    write_csv(path, "maturity,strike,type,price,iv",
              ((float(m), float(k), kind, float(p), float(iv))
               for m, k, kind, p, iv in rows), cfg_hash)


def read_states_csv(path: str) -> list[IntensityState]:
    rows = _read_csv_rows(path, ("t", "lambda_plus", "lambda_minus"))
    if not rows:
        raise DataError(f"{path} contains no states")
    try:
        return [IntensityState(_float(r["t"], path),
                               _float(r["lambda_plus"], path),
                               _float(r["lambda_minus"], path)) for r in rows]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def read_table_csv(path: str, columns) -> dict[str, np.ndarray]:
    """Named numeric columns from a CSV that may carry extra columns."""
    rows = _read_csv_rows(path, tuple(columns))
    if not rows:
        raise DataError(f"{path} contains no rows")
    return {c: np.array([_float(r[c], path) for r in rows]) for c in columns}


def qq_to_rows(qq) -> list[tuple]:
    rows = []
    for side_name, side in (("plus", qq.plus), ("minus", qq.minus)):
        for theo, emp, flag in zip(side.theoretical, side.empirical,
                                   side.in_sample):
            rows.append((side_name, float(theo), float(emp), int(flag)))
    return rows


def write_qq_csv(path: str, qq, cfg_hash: str) -> None:
    write_csv(path, "side,theoretical,empirical,in_sample", qq_to_rows(qq),
              cfg_hash)


# fitted-model records


def fit_to_dict(pot: PotResult, mle: MleResult, horizon: float,
                last_state: IntensityState) -> dict:
    return {
        "pot": {
            "nu_plus_hat": pot.nu_plus_hat,
            "nu_minus_hat": pot.nu_minus_hat,
            "n_jumps_plus": len(pot.jumps.times(POSITIVE)),
            "n_jumps_minus": len(pot.jumps.times(NEGATIVE)),
            "filtered_skewness": pot.filtered_moments[0],
            "filtered_excess_kurtosis": pot.filtered_moments[1],
        },
        "dynamics": dynamics_to_dict(mle.dynamics),
        "eta_plus_hat": mle.eta_plus_hat,
        "eta_minus_hat": mle.eta_minus_hat,
        "loglik": mle.loglik,
        "horizon_years": horizon,
        "last_state": {
            "t": last_state.t,
            "lambda_plus": last_state.lambda_plus,
            "lambda_minus": last_state.lambda_minus,
        },
    }


def validate_fit_dict(d: dict) -> None:
    """Schema check for a fitted-model JSON record; raises DataError."""

    def need(mapping, key, kinds, where):
        if key not in mapping:
            raise DataError(f"fit record is missing {where}{key}")
        if not isinstance(mapping[key], kinds) or isinstance(mapping[key], bool):
            raise DataError(f"fit record field {where}{key} has the wrong type")

    for key in ("pot", "dynamics", "last_state"):
        need(d, key, dict, "")
    for key in ("nu_plus_hat", "nu_minus_hat", "filtered_skewness",
                "filtered_excess_kurtosis"):
        need(d["pot"], key, (int, float), "pot.")
    for key in ("n_jumps_plus", "n_jumps_minus"):
        need(d["pot"], key, int, "pot.")
    for key in _DYNAMICS_KEYS:
        need(d["dynamics"], key, (int, float), "dynamics.")
    for key in ("eta_plus_hat", "eta_minus_hat", "loglik", "horizon_years"):
        need(d, key, (int, float), "")
    for key in ("t", "lambda_plus", "lambda_minus"):
        need(d["last_state"], key, (int, float), "last_state.")
    for key, value in (("loglik", d["loglik"]),):
        if not math.isfinite(value):
            raise DataError(f"fit record field {key} must be finite")


def calibration_to_dict(result: CalibrationResult, quotes) -> dict:
    return {
        "sigma_hat": result.sigma_hat,
        "chi_plus_hat": result.chi_plus_hat,
        "chi_minus_hat": result.chi_minus_hat,
        "objective": result.objective,
        "gamma_plus": result.gamma_plus,
        "gamma_minus": result.gamma_minus,
        "quotes": [
            {"tau": q.tau, "strike": q.strike, "kind": q.kind,
             "market_iv": q.iv, "weight": q.weight,
             "model_iv": iv, "residual": res}
            for q, iv, res in zip(quotes, result.model_ivs, result.residuals)
        ],
    }


def regression_to_dict(report) -> dict:
    return {
        "coefficients": [float(v) for v in report.coefficients],
        "hac_se": [float(v) for v in report.hac_se],
        "t_stats": [float(v) for v in report.t_stats],
        "adj_r_squared": report.adj_r_squared,
        "r_squared": report.r_squared,
        "lag": report.lag,
        "n": report.n,
    }
