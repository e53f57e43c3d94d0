"""Stage-two calibration: fit (sigma, chi_plus, chi_minus) to one slice of
implied-volatility quotes by vega-weighted MAPE, holding the stage-one jump
parameters fixed.

Model implied vols come from the transform pricer on the out-of-the-money
leg at the slice's filtered intensity state; quotes whose pricing fails add
a large finite penalty so the optimizer retreats from invalid regions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy import optimize

from .errors import InfeasibleRegion, NonConvergence, NumericError
from .estimate import MleResult, PotResult
from .measure import RiskPremiumParams, jump_risk_premia, to_q_params
from .model import (
    NEGATIVE,
    POSITIVE,
    IntensityDynamics,
    IntensityState,
    JumpLaw,
    ModelParams,
)
from .pricing import (
    CALL,
    PUT,
    OptionSpec,
    QuadratureConfig,
    bs_price_vega,
    implied_vol,
    iv_surface,
    price_option,
)

ONE_MONTH = 1.0 / 12.0
FAILED_QUOTE_PENALTY = 10.0

# IV errors of ~1e-7 suffice for calibration; looser ODE and quadrature
# tolerances than the pricing defaults keep the optimizer loop fast
CALIB_QUAD = QuadratureConfig(rel_tol=1e-6, initial_panels=6, gl_order=12,
                              max_levels=5, tail_tol=1e-9, ode_rtol=1e-7,
                              ode_atol=1e-9)


@dataclass(frozen=True)
class StageOne:
    """Statistical-measure parameters held fixed during calibration."""

    dynamics: IntensityDynamics
    law_plus: JumpLaw
    law_minus: JumpLaw

    @classmethod
    def from_estimates(cls, pot: PotResult, mle: MleResult) -> "StageOne":
        if mle.eta_plus_hat is None or mle.eta_minus_hat is None:
            raise ValueError("MleResult must carry fitted eta values")
        return cls(mle.dynamics,
                   JumpLaw(POSITIVE, pot.nu_plus_hat, mle.eta_plus_hat),
                   JumpLaw(NEGATIVE, pot.nu_minus_hat, mle.eta_minus_hat))


@dataclass(frozen=True)
class Quote:
    """One market implied-vol quote; weight None means fill with BS vega."""

    tau: float
    strike: float
    kind: str
    iv: float
    weight: float | None = None

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise ValueError(f"kind must be {CALL!r} or {PUT!r}")
        if not self.iv > 0:
            raise ValueError(f"market iv must be > 0, got {self.iv}")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.weight is not None and not self.weight >= 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class QuoteSlice:
    """Quotes observed at one timestamp with the filtered intensity state.

    Validation enforces the configured maturity band and moneyness range;
    missing weights are filled with the market Black-Scholes vega.
    """

    as_of: str
    spot: float
    rate: float
    quotes: tuple[Quote, ...]
    state: IntensityState
    moneyness_band: tuple[float, float] = (0.8, 1.2)
    tau_band: tuple[float, float] = (0.5 / 365.0, ONE_MONTH + 1.0 / 365.0)

    def __post_init__(self):
        if not self.spot > 0:
            raise ValueError(f"spot must be > 0, got {self.spot}")
        if not self.quotes:
            raise ValueError("need at least one quote")
        lo_m, hi_m = self.moneyness_band
        lo_t, hi_t = self.tau_band
        filled = []
        for q in self.quotes:
            m = q.strike / self.spot
            if not lo_m <= m <= hi_m:
                raise ValueError(f"moneyness {m:.4f} outside [{lo_m}, {hi_m}]")
            if not lo_t <= q.tau <= hi_t:
                raise ValueError(f"tau {q.tau:.6f} outside [{lo_t:.6f}, {hi_t:.6f}]")
            if q.weight is None:
                _, vega = bs_price_vega(self.spot, q.strike, q.tau, self.rate,
                                        q.iv, q.kind)
                q = replace(q, weight=vega)
            filled.append(q)
        if not any(q.weight > 0 for q in filled):
            raise ValueError("at least one quote needs a positive weight")
        object.__setattr__(self, "quotes", tuple(filled))

    @property
    def total_weight(self) -> float:
        return sum(q.weight for q in self.quotes)


@dataclass(frozen=True)
class CalibConfig:
    """Optimizer and pricing settings for the slice calibration."""

    sigma_bounds: tuple[float, float] = (0.01, 5.0)
    chi_cap: float = 15.0
    margin_frac: float = 0.01
    max_iter: int = 1500
    xatol: float = 1e-4
    fatol: float = 1e-9
    quad: QuadratureConfig | None = None


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted (sigma, chi) point with per-quote diagnostics and premia."""

    sigma_hat: float
    chi_plus_hat: float
    chi_minus_hat: float
    objective: float
    model_ivs: tuple[float | None, ...]
    residuals: tuple[float | None, ...]
    gamma_plus: float
    gamma_minus: float


def _model_params(stage_one: StageOne, sigma: float, rate: float,
                  state: IntensityState) -> ModelParams:
    # mu never enters pricing-measure quantities; the rate keeps it concrete
    return ModelParams(rate, sigma, stage_one.dynamics, stage_one.law_plus,
                       stage_one.law_minus, state.lambda_plus, state.lambda_minus)


def _model_iv_grid(q_params, slc: QuoteSlice, quad: QuadratureConfig
                   ) -> list[float | None]:
    """Model implied vol per quote, None where pricing or inversion failed.

    Quotes sharing a maturity are priced in one batched transform pass; if
    any quote in the batch fails, that maturity falls back to quote-by-quote
    pricing so failures stay localized.
    """
    by_tau: dict[float, list[int]] = {}
    for i, q in enumerate(slc.quotes):
        by_tau.setdefault(q.tau, []).append(i)
    ivs: list[float | None] = [None] * len(slc.quotes)
    for tau, idxs in by_tau.items():
        strikes = [slc.quotes[i].strike for i in idxs]
        try:
            points = iv_surface(q_params, [tau], strikes, slc.spot, slc.rate,
                                config=quad)
            for i, pt in zip(idxs, points):
                ivs[i] = pt.iv
        except NumericError:
            for i in idxs:
                # out-of-the-money leg: identical vol, better conditioned
                kind = CALL if slc.quotes[i].strike >= slc.spot else PUT
                spec = OptionSpec(strike=slc.quotes[i].strike, tau=tau,
                                  kind=kind, spot=slc.spot, rate=slc.rate)
                try:
                    ivs[i] = implied_vol(price_option(q_params, spec, config=quad),
                                         spec)
                except NumericError:
                    ivs[i] = None
    return ivs


def _evaluate(sigma: float, chi: RiskPremiumParams, slc: QuoteSlice,
              stage_one: StageOne, quad: QuadratureConfig | None
              ) -> tuple[float, list[float | None], list[float | None]]:
    quad = quad or CALIB_QUAD
    try:
        q_params = to_q_params(_model_params(stage_one, sigma, slc.rate, slc.state),
                               chi, slc.rate)
    except NumericError:
        penalty = FAILED_QUOTE_PENALTY * slc.total_weight
        return penalty, [None] * len(slc.quotes), [None] * len(slc.quotes)
    model_ivs = _model_iv_grid(q_params, slc, quad)
    obj = 0.0
    residuals: list[float | None] = []
    for q, iv in zip(slc.quotes, model_ivs):
        if iv is None:
            obj += FAILED_QUOTE_PENALTY * q.weight
            residuals.append(None)
            continue
        res = abs(q.iv - iv) / q.iv
        obj += q.weight * res
        residuals.append(res)
    return obj, model_ivs, residuals


def objective(sigma: float, chi: RiskPremiumParams, slc: QuoteSlice,
              stage_one: StageOne, quad: QuadratureConfig | None = None) -> float:
    """Vega-weighted sum of relative implied-vol errors; failed quotes add
    FAILED_QUOTE_PENALTY times their weight."""
    return _evaluate(sigma, chi, slc, stage_one, quad)[0]


def _chi_boxes(stage_one: StageOne, cfg: CalibConfig
               ) -> tuple[tuple[float, float], tuple[float, float]]:
    # chi_plus must keep the tilted positive law integrable against e^J
    # (eta_plus_q < 1); chi_minus must keep the negative tilt finite
    inv_p = 1.0 / stage_one.law_plus.eta
    inv_m = 1.0 / stage_one.law_minus.eta
    hi_p = min(cfg.chi_cap, (inv_p - 1.0) - cfg.margin_frac * inv_p)
    lo_m = max(-cfg.chi_cap, -inv_m + cfg.margin_frac * inv_m)
    if not -cfg.chi_cap < hi_p or not lo_m < cfg.chi_cap:
        raise InfeasibleRegion("chi box is empty under the given jump scales")
    return (-cfg.chi_cap, hi_p), (lo_m, cfg.chi_cap)


def calibrate(slc: QuoteSlice, stage_one: StageOne,
              config: CalibConfig | None = None) -> CalibrationResult:
    """Minimize the weighted objective over (sigma, chi_plus, chi_minus) with
    box constraints, multi-start simplex (box center plus the four corners of
    the chi box), and report the premia at the slice's state."""
    cfg = config or CalibConfig()
    (chi_p_lo, chi_p_hi), (chi_m_lo, chi_m_hi) = _chi_boxes(stage_one, cfg)
    sig_lo, sig_hi = cfg.sigma_bounds
    bounds = [(sig_lo, sig_hi), (chi_p_lo, chi_p_hi), (chi_m_lo, chi_m_hi)]
    fine_quad = cfg.quad or CALIB_QUAD
    # exploration stage: basin location needs only ~1e-5 vol accuracy
    coarse_quad = replace(fine_quad,
                          rel_tol=max(fine_quad.rel_tol, 1e-4),
                          tail_tol=max(fine_quad.tail_tol, 1e-7),
                          ode_rtol=max(fine_quad.ode_rtol, 1e-5),
                          ode_atol=max(fine_quad.ode_atol, 1e-7))

    def nm_objective(u, quad) -> float:
        try:
            return _evaluate(float(u[0]), RiskPremiumParams(float(u[1]), float(u[2])),
                             slc, stage_one, quad)[0]
        except NumericError:
            return FAILED_QUOTE_PENALTY * slc.total_weight

    def inset(lo: float, hi: float, frac: float) -> tuple[float, float]:
        pad = frac * (hi - lo)
        return lo + pad, hi - pad

    # geometric center: sigma is a scale parameter, so the multiplicative
    # midpoint of the box is the neutral start
    sig_mid = math.sqrt(sig_lo * sig_hi)
    cp_lo, cp_hi = inset(chi_p_lo, chi_p_hi, 0.02)
    cm_lo, cm_hi = inset(chi_m_lo, chi_m_hi, 0.02)
    starts = [
        (sig_mid, 0.5 * (chi_p_lo + chi_p_hi), 0.5 * (chi_m_lo + chi_m_hi)),
        (sig_mid, cp_lo, cm_lo),
        (sig_mid, cp_lo, cm_hi),
        (sig_mid, cp_hi, cm_lo),
        (sig_mid, cp_hi, cm_hi),
    ]

    def run_simplex(x0, quad):
        return optimize.minimize(
            nm_objective, x0, args=(quad,), method="Nelder-Mead", bounds=bounds,
            options={"maxiter": cfg.max_iter, "maxfev": 2 * cfg.max_iter,
                     "xatol": cfg.xatol, "fatol": cfg.fatol, "adaptive": True})

    # keep every start's endpoint, converged or not; the best one seeds a
    # final polish run at full accuracy, whose convergence is the contract
    best: tuple[float, int, tuple[float, float, float]] | None = None
    for idx, x0 in enumerate(starts):
        res = run_simplex(x0, coarse_quad)
        if not math.isfinite(res.fun):
            continue
        if best is None or (res.fun, idx) < best[:2]:
            best = (res.fun, idx, tuple(float(v) for v in res.x))
    if best is None:
        raise NonConvergence("every calibration start diverged")
    polish = run_simplex(best[2], fine_quad)
    if not polish.success or not math.isfinite(polish.fun):
        raise NonConvergence(
            f"calibration polish did not converge within {cfg.max_iter} iterations")
    best_x = tuple(float(v) for v in polish.x)
    full_penalty = FAILED_QUOTE_PENALTY * slc.total_weight
    if polish.fun >= full_penalty * (1.0 - 1e-9):
        raise InfeasibleRegion("every quote failed to price at every start")

    sigma_hat, chi_p_hat, chi_m_hat = best_x
    chi_hat = RiskPremiumParams(chi_p_hat, chi_m_hat)
    obj, model_ivs, residuals = _evaluate(sigma_hat, chi_hat, slc, stage_one, fine_quad)
    gamma_p, gamma_m = jump_risk_premia(
        _model_params(stage_one, sigma_hat, slc.rate, slc.state), chi_hat,
        rate=slc.rate)
    return CalibrationResult(sigma_hat, chi_p_hat, chi_m_hat, obj,
                             tuple(model_ivs), tuple(residuals), gamma_p, gamma_m)
