"""Transform-based option pricing for the clustered-jump model.

The conditional MGF of the log price is exponential-affine; its loadings
solve a complex ODE system integrated here with an embedded Dormand-Prince
pair vectorized over transform nodes. European prices follow from a single
real integral along the vertical contour Re(omega) = 1/2, where the payoff
transform kernel 1/(omega^2 - omega) reduces to -1/(y^2 + 1/4).
"""

from __future__ import annotations

import math
import os
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import OutOfBounds, QuadratureFailure, StepFailure, StripViolation
from .model import IntensityState, compensator

_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def _norm_pdf(x: float) -> float:
    return _INV_SQRT2PI * math.exp(-0.5 * x * x)

CALL = "call"
PUT = "put"

# Dormand-Prince 5(4) tableau
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_DP_ERR = tuple(b5 - b4 for b5, b4 in zip(_DP_B5, _DP_B4))

# smooth problems need a few hundred steps; stability-limited stiff ones
# scale like kappa * tau and must fail fast rather than spin
_MAX_ODE_STEPS = 200_000


def worker_count() -> int:
    """Worker cap from HJP_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("HJP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class OdeSolution:
    """MGF exponent loadings (A, C, D) at time-to-maturity tau."""

    tau: float
    omega: complex | np.ndarray
    omega_plus: complex
    omega_minus: complex
    a: complex | np.ndarray
    c: complex | np.ndarray
    d: complex | np.ndarray


@dataclass(frozen=True)
class OptionSpec:
    """One European option: strike, maturity, type, spot, and short rate."""

    strike: float
    tau: float
    kind: str
    spot: float
    rate: float

    def __post_init__(self):
        if self.kind not in (CALL, PUT):
            raise ValueError(f"kind must be {CALL!r} or {PUT!r}, got {self.kind!r}")
        if not self.strike > 0 or not self.spot > 0:
            raise ValueError("strike and spot must be > 0")
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class IvPoint:
    """Implied volatility attached to its option spec."""

    spec: OptionSpec
    iv: float


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls for the pricing integral and the ODE solves behind it."""

    rel_tol: float = 1e-7
    initial_panels: int = 8
    gl_order: int = 16
    max_levels: int = 6
    tail_tol: float = 1e-12
    y_max_cap: float = 20_000.0
    ode_rtol: float = 1e-9
    ode_atol: float = 1e-11


DEFAULT_QUAD = QuadratureConfig()


class _RhsViolation(Exception):
    """Internal: a stage left the transform validity strip."""


def _make_rhs(params, omega):
    d = params.dynamics
    law_p, law_m = params.law_plus, params.law_minus
    comp_p = compensator(law_p)
    comp_m = compensator(law_m)
    drift = params.mu
    half_var = 0.5 * params.sigma ** 2
    kt_p = d.kappa_plus * d.theta_plus
    kt_m = d.kappa_minus * d.theta_minus
    lim_p = -1.0 / law_p.eta
    lim_m = 1.0 / law_m.eta

    def rhs(y):
        c, dd = y[:, 1], y[:, 2]
        arg_p = -omega - c * d.beta_11 - dd * d.beta_21
        arg_m = -omega - c * d.beta_12 - dd * d.beta_22
        if np.any(arg_p.real <= lim_p) or np.any(arg_m.real >= lim_m):
            raise _RhsViolation
        ell_p = np.exp(-law_p.nu * arg_p) / (1.0 + law_p.eta * arg_p)
        ell_m = np.exp(-law_m.nu * arg_m) / (1.0 - law_m.eta * arg_m)
        out = np.empty_like(y)
        out[:, 0] = drift * omega + half_var * (omega * omega - omega) \
            + kt_p * c + kt_m * dd
        out[:, 1] = ell_p - d.kappa_plus * c - omega * comp_p - 1.0
        out[:, 2] = ell_m - d.kappa_minus * dd - omega * comp_m - 1.0
        return out

    return rhs


def _integrate(rhs, y0, tau, rtol, atol):
    """Embedded RK 5(4) over [0, tau], one shared adaptive step for all nodes."""
    t = 0.0
    y = y0
    try:
        f = rhs(y)
    except _RhsViolation:
        raise StripViolation("transform argument outside the validity strip at tau=0")
    h = min(tau, 1e-3 * max(tau, 1e-3))
    h_min = 1e-13 * max(tau, 1.0)
    strip_hit = False
    steps = 0
    while t < tau:
        steps += 1
        if steps > _MAX_ODE_STEPS:
            # extreme mean-reversion rates force explicit steps ~1/kappa; give
            # up with a clean error instead of grinding indefinitely
            raise StepFailure(
                f"step budget {_MAX_ODE_STEPS} exhausted at t={t:.3e} of "
                f"tau={tau:.3e}; dynamics too stiff for the solver")
        h = min(h, tau - t)
        k = [f]
        err = np.inf
        strip_hit = False
        try:
            for i in range(1, 7):
                yi = y + h * sum(aij * kj for aij, kj in zip(_DP_A[i], k))
                k.append(rhs(yi))
        except _RhsViolation:
            strip_hit = True
        if not strip_hit:
            y_new = yi  # stage 7 uses the order-5 weights (FSAL)
            f_new = k[6]
            e = h * sum(ei * ki for ei, ki in zip(_DP_ERR, k))
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.sqrt(np.mean(np.abs(e / scale) ** 2, axis=1)).max())
        if err <= 1.0:
            t += h
            y, f = y_new, f_new
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h *= factor
        else:
            h *= 0.5 if not math.isfinite(err) else max(0.1, 0.9 * err ** -0.2)
        if h < h_min:
            if strip_hit:
                raise StripViolation(
                    "transform loadings reached the validity-strip boundary")
            raise StepFailure(f"step size underflow at t={t} of tau={tau}")
    return y


def solve_mgf_odes(params, omega, tau: float, omega_plus: complex = 0.0,
                   omega_minus: complex = 0.0, rtol: float = 1e-9,
                   atol: float = 1e-11) -> OdeSolution:
    """Integrate the affine loadings (A, C, D) out to time-to-maturity tau.

    Accepts scalar or array omega (shared tau and terminal conditions).
    params may be under either measure; the drift used is params.mu.
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    om = np.atleast_1d(np.asarray(omega, dtype=complex))
    scalar = np.isscalar(omega) or getattr(omega, "ndim", 0) == 0
    y0 = np.zeros((om.size, 3), dtype=complex)
    y0[:, 1] = omega_plus
    y0[:, 2] = omega_minus
    if tau == 0:
        y = y0
    else:
        y = _integrate(_make_rhs(params, om), y0, tau, rtol, atol)
    a, c, d = y[:, 0], y[:, 1], y[:, 2]
    if scalar:
        a, c, d = complex(a[0]), complex(c[0]), complex(d[0])
        om = complex(om[0])
    return OdeSolution(tau=tau, omega=om, omega_plus=complex(omega_plus),
                       omega_minus=complex(omega_minus), a=a, c=c, d=d)


def mgf(params, x: float, omega, tau: float, state: IntensityState | None = None,
        omega_plus: complex = 0.0, omega_minus: complex = 0.0,
        rtol: float = 1e-9, atol: float = 1e-11):
    """E(e^{omega X_T + omega+ lam+_T + omega- lam-_T} | X_t=x, state), tau=T-t."""
    if state is None:
        lam_p, lam_m = params.lambda0_plus, params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    sol = solve_mgf_odes(params, omega, tau, omega_plus=omega_plus,
                         omega_minus=omega_minus, rtol=rtol, atol=atol)
    om = np.asarray(sol.omega)
    val = np.exp(np.asarray(sol.a) + om * x + np.asarray(sol.c) * lam_p
                 + np.asarray(sol.d) * lam_m)
    return complex(val) if val.ndim == 0 else val


class _EGridCache:
    """Thread-safe LRU of contour transform values keyed by (params, tau)."""

    def __init__(self, max_entries: int = 64):
        self._lock = threading.Lock()
        self._store: OrderedDict[tuple, dict] = OrderedDict()
        self._max = max_entries

    def bucket(self, key: tuple) -> dict:
        with self._lock:
            if key not in self._store:
                self._store[key] = {}
                while len(self._store) > self._max:
                    self._store.popitem(last=False)
            self._store.move_to_end(key)
            return self._store[key]

    def clear(self):
        with self._lock:
            self._store.clear()


_E_CACHE = _EGridCache()


def _params_key(params) -> tuple:
    d = params.dynamics
    return (params.mu, params.sigma, d.kappa_plus, d.kappa_minus, d.theta_plus,
            d.theta_minus, d.beta_11, d.beta_12, d.beta_21, d.beta_22,
            params.law_plus.nu, params.law_plus.eta, params.law_minus.nu,
            params.law_minus.eta, params.lambda0_plus, params.lambda0_minus)


def _e_values(params, lam_p, lam_m, tau, ys, config) -> np.ndarray:
    """E(tau; 1/2 + iy) for the requested y nodes, via the shared cache."""
    # ODE tolerances join the key so a loose-tolerance caller cannot hand
    # stale values to a tight-tolerance one
    key = _params_key(params) + (lam_p, lam_m, round(float(tau), 14),
                                 config.ode_rtol, config.ode_atol)
    bucket = _E_CACHE.bucket(key)
    missing = [y for y in ys if y not in bucket]
    if missing:
        om = 0.5 + 1j * np.asarray(missing)
        sol = solve_mgf_odes(params, om, tau, rtol=config.ode_rtol, atol=config.ode_atol)
        vals = np.exp(sol.a + sol.c * lam_p + sol.d * lam_m)
        for y, v in zip(missing, vals):
            bucket[y] = complex(v)
    return np.array([bucket[y] for y in ys])


def _y_max(params, tau, config) -> float:
    # Gaussian envelope: |E| decays like exp(-sigma^2 tau y^2 / 2); jumps only
    # add decay, so the diffusion-only bound is conservative
    var = params.sigma ** 2 * tau
    y = math.sqrt(2.0 * 30.0 / var)  # e^{-30} tail
    return min(max(40.0, y), config.y_max_cap)


def _gl_nodes(n_panels: int, y_max: float, order: int):
    base, weights = np.polynomial.legendre.leggauss(order)
    width = y_max / n_panels
    starts = np.arange(n_panels) * width
    ys = (starts[:, None] + 0.5 * width * (base[None, :] + 1.0)).ravel()
    ws = np.tile(0.5 * width * weights, n_panels)
    return ys, ws


def _contour_integral(params, lam_p, lam_m, tau, x_stars: np.ndarray,
                      config: QuadratureConfig) -> np.ndarray:
    """int_0^inf Re[e^{(1/2+iy) x*} E(tau; 1/2+iy)] / (y^2 + 1/4) dy per x*."""
    y_max = _y_max(params, tau, config)
    prev = None
    n_panels = config.initial_panels
    for _ in range(config.max_levels + 1):
        ys, ws = _gl_nodes(n_panels, y_max, config.gl_order)
        evals = _e_values(params, lam_p, lam_m, tau, ys.tolist(), config)
        phase = np.exp((0.5 + 1j * ys[None, :]) * x_stars[:, None])
        dens = (phase * evals[None, :]).real / (ys[None, :] ** 2 + 0.25)
        vals = dens @ ws
        # last-panel contribution bounds the truncation error
        tail = np.abs(dens[:, -config.gl_order:] @ ws[-config.gl_order:])
        scale = np.maximum(np.abs(vals), 1e-12)
        if np.any(tail > config.tail_tol * scale) and y_max < config.y_max_cap:
            y_max = min(2.0 * y_max, config.y_max_cap)
            prev = None
            continue
        if prev is not None and np.all(np.abs(vals - prev) <= config.rel_tol * scale):
            return vals
        prev = vals
        n_panels *= 2
    raise QuadratureFailure(
        f"pricing integral did not converge to {config.rel_tol} relative")


def price_option(q_params, option: OptionSpec, state: IntensityState | None = None,
                 config: QuadratureConfig | None = None) -> float:
    """Arbitrage-consistent European price under the pricing measure.

    state, if given, overrides the initial intensities in q_params and is
    interpreted under the same measure as q_params.
    """
    config = config or DEFAULT_QUAD
    if abs(option.rate - q_params.mu) > 1e-12:
        raise ValueError("option.rate must equal the pricing-measure drift rate")
    if state is None:
        lam_p, lam_m = q_params.lambda0_plus, q_params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    x_star = math.log(option.spot / option.strike)
    integral = _contour_integral(q_params, lam_p, lam_m, option.tau,
                                 np.array([x_star]), config)[0]
    u = math.exp(-option.rate * option.tau) * option.strike * integral / math.pi
    if option.kind == CALL:
        return option.spot - u
    return math.exp(-option.rate * option.tau) * option.strike - u


def bs_price_vega(spot: float, strike: float, tau: float, rate: float,
                  sigma: float, kind: str) -> tuple[float, float]:
    """Black-Scholes price and vega."""
    if kind not in (CALL, PUT):
        raise ValueError(f"kind must be {CALL!r} or {PUT!r}")
    disc_k = strike * math.exp(-rate * tau)
    vol = sigma * math.sqrt(tau)
    if vol < 1e-12:
        intrinsic = spot - disc_k
        price = max(intrinsic, 0.0) if kind == CALL else max(-intrinsic, 0.0)
        return price, 0.0
    d1 = (math.log(spot / strike) + (rate + 0.5 * sigma ** 2) * tau) / vol
    d2 = d1 - vol
    call = spot * _norm_cdf(d1) - disc_k * _norm_cdf(d2)
    price = call if kind == CALL else call - spot + disc_k
    vega = spot * _norm_pdf(d1) * math.sqrt(tau)
    return price, vega


def implied_vol(price: float, option: OptionSpec) -> float:
    """Invert Black-Scholes by bracketed root search, 1e-10 price tolerance."""
    disc_k = option.strike * math.exp(-option.rate * option.tau)
    if option.kind == CALL:
        lo_bound, hi_bound = max(option.spot - disc_k, 0.0), option.spot
    else:
        lo_bound, hi_bound = max(disc_k - option.spot, 0.0), disc_k
    if not lo_bound < price < hi_bound:
        raise OutOfBounds(
            f"{option.kind} price {price} outside attainable ({lo_bound}, {hi_bound})")

    def gap(sigma):
        return bs_price_vega(option.spot, option.strike, option.tau, option.rate,
                             sigma, option.kind)[0] - price

    hi = 1.0
    for _ in range(60):
        if gap(hi) >= 0:
            break
        hi *= 2.0
    else:
        raise OutOfBounds("implied volatility bracket did not close")
    sigma = brentq(gap, 1e-12, hi, xtol=1e-14, rtol=8.9e-16, maxiter=200)
    if abs(gap(sigma)) > 1e-10 * max(1.0, price):
        raise OutOfBounds(f"implied volatility residual too large at sigma={sigma}")
    return float(sigma)


def iv_surface(q_params, maturities, strikes, spot: float, rate: float,
               state: IntensityState | None = None,
               config: QuadratureConfig | None = None) -> list[IvPoint]:
    """Model implied vols on a maturity-by-strike grid (out-of-the-money legs).

    The transform values for one maturity are shared across its strikes; the
    per-maturity work runs on up to HJP_THREADS workers with a
    completion-order-independent result.
    """
    config = config or DEFAULT_QUAD
    if state is None:
        lam_p, lam_m = q_params.lambda0_plus, q_params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    strikes = list(strikes)
    maturities = list(maturities)

    def slice_points(tau: float) -> list[IvPoint]:
        x_stars = np.log(spot / np.asarray(strikes, dtype=float))
        integrals = _contour_integral(q_params, lam_p, lam_m, tau, x_stars, config)
        points = []
        for strike, integral in zip(strikes, integrals):
            kind = CALL if strike >= spot else PUT
            spec = OptionSpec(strike=strike, tau=tau, kind=kind, spot=spot, rate=rate)
            u = math.exp(-rate * tau) * strike * integral / math.pi
            price = spot - u if kind == CALL else math.exp(-rate * tau) * strike - u
            points.append(IvPoint(spec=spec, iv=implied_vol(price, spec)))
        return points

    workers = worker_count()
    if workers == 1 or len(maturities) == 1:
        per_tau = [slice_points(tau) for tau in maturities]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_tau = list(pool.map(slice_points, maturities))
    return [pt for points in per_tau for pt in points]


def clear_transform_cache():
    """Drop all cached transform values (mainly for tests)."""
    _E_CACHE.clear()
