"""Goodness-of-fit and regression diagnostics.

The random time change theorem maps event times through the cumulative
intensity; under a correctly specified model the transformed interarrival
times are unit exponential per side, which a Q-Q layout and a KS statistic
make testable. A small HAC regression utility with Newey-West standard
errors covers differenced-series analyses such as carry-on-premia runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficient
from .model import IntensityDynamics
from .simulate import EventSeries, POSITIVE


@dataclass(frozen=True)
class QqSide:
    """One side's transformed interarrivals with Q-Q plotting arrays.

    samples are in event order; empirical is the sorted copy; theoretical
    holds unit-exponential quantiles at the (i - 1/2)/n plotting positions;
    in_sample aligns with empirical and marks points at or before the
    configured split time.
    """

    samples: np.ndarray
    theoretical: np.ndarray
    empirical: np.ndarray
    in_sample: np.ndarray

    def __post_init__(self):
        for name in ("samples", "theoretical", "empirical"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be one-dimensional")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and >= 0")
        flags = np.asarray(self.in_sample, dtype=bool)
        object.__setattr__(self, "in_sample", flags)
        n = self.samples.size
        if not (self.theoretical.size == self.empirical.size == flags.size == n):
            raise ValueError("per-side arrays must share one length")
        if np.any(np.diff(self.theoretical) < 0) or np.any(np.diff(self.empirical) < 0):
            raise ValueError("quantile arrays must be sorted")


@dataclass(frozen=True)
class QqData:
    """Per-side time-change residual diagnostics."""

    plus: QqSide
    minus: QqSide
    split_time: float | None = None


def _qq_side(samples: list[float], flags: list[bool]) -> QqSide:
    s = np.asarray(samples, dtype=float)
    f = np.asarray(flags, dtype=bool)
    order = np.argsort(s, kind="stable")
    n = s.size
    positions = (np.arange(1, n + 1) - 0.5) / n if n else np.empty(0)
    return QqSide(samples=s, theoretical=-np.log1p(-positions),
                  empirical=s[order], in_sample=f[order])


def time_change_residuals(dynamics: IntensityDynamics, events: EventSeries,
                          t0: float = 0.0,
                          lambda0: tuple[float, float] | None = None,
                          split_time: float | None = None) -> QqData:
    """Integrated intensity between consecutive same-side events.

    The first residual on each side integrates from t0. lambda0 gives the
    intensities at t0 and defaults to (theta_plus, theta_minus). Residuals
    ending at or before split_time are flagged in-sample.
    """
    lp, lm = lambda0 if lambda0 is not None else (dynamics.theta_plus,
                                                  dynamics.theta_minus)
    if lp < 0 or lm < 0:
        raise ValueError("initial intensities must be >= 0")
    if events.events and events.events[0].t < t0:
        raise ValueError("events must not precede t0")
    kp, km = dynamics.kappa_plus, dynamics.kappa_minus
    tp, tm = dynamics.theta_plus, dynamics.theta_minus
    acc_p = acc_m = 0.0
    last_p = last_m = 0.0
    res_p: list[float] = []
    res_m: list[float] = []
    flag_p: list[bool] = []
    flag_m: list[bool] = []
    t_prev = t0
    for e in events.events:
        dt = e.t - t_prev
        decay_p = math.exp(-kp * dt)
        decay_m = math.exp(-km * dt)
        acc_p += tp * dt + (lp - tp) * (1.0 - decay_p) / kp
        acc_m += tm * dt + (lm - tm) * (1.0 - decay_m) / km
        lp = tp + (lp - tp) * decay_p
        lm = tm + (lm - tm) * decay_m
        in_sample = split_time is None or e.t <= split_time
        if e.sign == POSITIVE:
            res_p.append(acc_p - last_p)
            flag_p.append(in_sample)
            last_p = acc_p
            lp += dynamics.beta_11 * e.size
            lm += dynamics.beta_21 * e.size
        else:
            res_m.append(acc_m - last_m)
            flag_m.append(in_sample)
            last_m = acc_m
            lp += dynamics.beta_12 * e.size
            lm += dynamics.beta_22 * e.size
        lp = max(lp, 0.0)
        lm = max(lm, 0.0)
        t_prev = e.t
    return QqData(plus=_qq_side(res_p, flag_p), minus=_qq_side(res_m, flag_m),
                  split_time=split_time)


def ks_statistic(samples) -> float:
    """Kolmogorov-Smirnov distance between the sample and Exp(1)."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("need at least one sample")
    cdf = 1.0 - np.exp(-s)
    n = s.size
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic KS critical value: sqrt(-ln(alpha/2)/2) / sqrt(n)."""
    if n < 1:
        raise ValueError("need n >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    return math.sqrt(-0.5 * math.log(alpha / 2.0)) / math.sqrt(n)


def cost_of_carry(futures_price: float, spot: float, tau: float) -> float:
    """Annualized carry ln(F/S)/tau."""
    if not (futures_price > 0 and spot > 0 and tau > 0):
        raise ValueError("futures_price, spot and tau must all be > 0")
    return math.log(futures_price / spot) / tau


def first_difference(values) -> np.ndarray:
    """First differences along the leading axis."""
    arr = np.asarray(values, dtype=float)
    if arr.shape[0] < 2:
        raise ValueError("need at least two rows to difference")
    return np.diff(arr, axis=0)


def default_hac_lag(n: int) -> int:
    """Newey-West rule of thumb floor(4 (n/100)^{2/9})."""
    if n < 1:
        raise ValueError("need n >= 1")
    return int(math.floor(4.0 * (n / 100.0) ** (2.0 / 9.0)))


@dataclass(frozen=True)
class RegressionReport:
    """OLS estimates with HAC (Newey-West) inference."""

    coefficients: np.ndarray
    hac_se: np.ndarray
    t_stats: np.ndarray
    adj_r_squared: float
    lag: int
    n: int
    r_squared: float = field(default=float("nan"))

    def __post_init__(self):
        if self.adj_r_squared > 1.0 + 1e-12:
            raise ValueError("adjusted R^2 cannot exceed 1")


def hac_regression(y, x, lag: int | None = None) -> RegressionReport:
    """OLS with Newey-West standard errors using Bartlett weights.

    x is used exactly as passed (no automatic intercept). lag=None picks the
    floor(4 (n/100)^{2/9}) default; lag=0 reduces to White (HC0) errors. R^2
    is centered when x contains a constant column and uncentered otherwise.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if y.size != n:
        raise ValueError("y and x must have the same number of rows")
    if n <= k + 2:
        raise ValueError(f"need n > k + 2, got n={n}, k={k}")
    if lag is None:
        lag = default_hac_lag(n)
    if lag < 0:
        raise ValueError("lag must be >= 0")

    xtx = x.T @ x
    if np.linalg.matrix_rank(xtx) < k:
        raise RankDeficient("regressor matrix is rank deficient")
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ (x.T @ y)
    resid = y - x @ beta

    # Bartlett-weighted long-run covariance of the score x_t u_t
    score = x * resid[:, None]
    s = score.T @ score
    for j in range(1, min(lag, n - 1) + 1):
        w = 1.0 - j / (lag + 1.0)
        gamma = score[j:].T @ score[:-j]
        s += w * (gamma + gamma.T)
    cov = xtx_inv @ s @ xtx_inv
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(se > 0, beta / se, np.inf * np.sign(beta))

    ssr = float(resid @ resid)
    has_const = bool(np.any(np.all(x == x[0], axis=0) & (x[0] != 0)))
    if has_const:
        sst = float(np.sum((y - y.mean()) ** 2))
        dof_total = n - 1
    else:
        sst = float(y @ y)
        dof_total = n
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * dof_total / (n - k)
    return RegressionReport(coefficients=beta, hac_se=se, t_stats=t_stats,
                            adj_r_squared=float(adj), lag=int(lag), n=int(n),
                            r_squared=float(r2))
