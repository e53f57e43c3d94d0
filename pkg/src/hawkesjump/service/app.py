"""HTTP service over the toolkit.

create_app() returns a FastAPI application whose endpoints call the same
in-process handlers as the command-line interface, so a server deployment
and a local run compute identical results. Library errors map to status
codes: configuration 400, data 422, numerical failure 500, each as
{"error": <class name>, "detail": <message>}. Endpoints are synchronous
and CPU-bound; concurrency belongs to the server runner, and pricing
parallelism is capped by the HJP_THREADS environment variable.
"""

from __future__ import annotations

from dataclasses import replace

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import handlers
from .._version import __version__
from ..analytics import ks_critical_value, ks_statistic
from ..calibrate import QuoteSlice, calibrate
from ..errors import ConfigError, DataError, NumericError
from ..io import calibration_to_dict, fit_to_dict
from ..measure import RiskPremiumParams
from ..pricing import DEFAULT_QUAD
from ..simulate import simulate_path
from .schemas import (
    AnalyzeRequest,
    CalibrateRequest,
    EstimateRequest,
    GofRequest,
    PipelineRequest,
    PremiaRequest,
    PriceRequest,
    SimulateRequest,
)

_STATUS = {ConfigError: 400, DataError: 422, NumericError: 500}


def _premia_records(rows) -> list[dict]:
    return [{"t": t, "gamma_plus": gp, "gamma_minus": gm}
            for t, gp, gm in rows]


def create_app() -> FastAPI:
    app = FastAPI(title="hawkesjump", version=__version__)

    def error_response(status: int):
        def handle(request, exc):
            return JSONResponse(status_code=status,
                                content={"error": type(exc).__name__,
                                         "detail": str(exc)})
        return handle

    for err, status in _STATUS.items():
        app.add_exception_handler(err, error_response(status))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate")
    def simulate(req: SimulateRequest):
        if req.measure == "Q" and req.rate is None:
            raise ConfigError("rate is required with measure Q")
        path = simulate_path(req.params.to_params(), req.horizon,
                             req.grid_step, req.seed, measure=req.measure,
                             rate=req.rate)
        return {
            "seed": path.seed,
            "t": path.grid.tolist(),
            "x": path.x.tolist(),
            "lambda_plus": path.lambda_plus.tolist(),
            "lambda_minus": path.lambda_minus.tolist(),
            "events": [{"t": e.t, "size": e.size, "sign": e.sign}
                       for e in path.events.events],
        }

    @app.post("/estimate")
    def estimate(req: EstimateRequest):
        returns = req.returns.to_series()
        opt = req.optimizer.to_config(req.seed)
        pot, mle, horizon, last_state = handlers.fit_series(returns, opt)
        return fit_to_dict(pot, mle, horizon, last_state)

    @app.post("/price")
    def price(req: PriceRequest):
        quad = (DEFAULT_QUAD if req.rel_tol is None
                else replace(DEFAULT_QUAD, rel_tol=req.rel_tol))
        rows = handlers.price_rows(
            req.params.to_params(),
            RiskPremiumParams(req.chi_plus, req.chi_minus),
            req.rate, req.spot, req.maturities, req.strikes, quad)
        return {"prices": [
            {"maturity": tau, "strike": strike, "type": kind,
             "price": px, "iv": iv}
            for tau, strike, kind, px, iv in rows]}

    @app.post("/calibrate")
    def calibrate_slice(req: CalibrateRequest):
        quotes = tuple(q.to_quote() for q in req.quotes)
        try:
            slc = QuoteSlice(req.as_of, req.spot, req.rate, quotes,
                             req.state.to_state(), **req.bands.to_kwargs())
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        result = calibrate(slc, req.stage_one.to_stage_one(),
                           req.optimizer.to_config())
        return calibration_to_dict(result, slc.quotes)

    @app.post("/premia")
    def premia(req: PremiaRequest):
        rows = handlers.premia_rows(
            req.params.to_params(),
            RiskPremiumParams(req.chi_plus, req.chi_minus),
            req.rate, [s.to_state() for s in req.states])
        return {"premia": _premia_records(rows)}

    @app.post("/gof")
    def gof(req: GofRequest):
        qq = handlers.gof_qq(req.fit, req.returns.to_series(), req.split)
        out = {"split_time": qq.split_time}
        for name, side in (("plus", qq.plus), ("minus", qq.minus)):
            n = len(side.samples)
            out[name] = {
                "n": n,
                "theoretical": side.theoretical.tolist(),
                "empirical": side.empirical.tolist(),
                "in_sample": side.in_sample.astype(int).tolist(),
                "ks": float(ks_statistic(side.samples)) if n else None,
                "ks_critical_1pct": (float(ks_critical_value(n, 0.01))
                                     if n else None),
            }
        return out

    @app.post("/analyze")
    def analyze(req: AnalyzeRequest):
        return handlers.regression_payload(
            req.data, req.y_column, req.x_columns, lag=req.lag,
            difference=req.first_difference, intercept=req.add_intercept)

    @app.post("/pipeline")
    def pipeline(req: PipelineRequest):
        returns = req.returns.to_series()
        quotes = [q.to_quote() for q in req.quotes]
        opt = req.optimizer.to_config(req.seed)
        payloads = handlers.pipeline_payloads(
            returns, req.as_of, quotes, req.spot, req.rate, opt,
            req.calibration.to_config(), req.bands.to_kwargs())
        return {
            "fit": payloads["fit"],
            "calibration": payloads["calibration"],
            "premia": _premia_records(payloads["premia"]),
        }

    return app
