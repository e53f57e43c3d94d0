"""Stage-one statistical estimation from daily log-returns.

Pipeline: classify jumps by peaks-over-threshold (thresholds chosen to zero
the skewness and excess kurtosis of the remaining sample), estimate the jump
scales from threshold excesses, then maximize the partial log-likelihood of
the event stream over the intensity dynamics.

Daily return at day offset k maps to event time k / 365 (years).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import DegenerateSample, EmptySide, NonConvergence, NumericDomain
from .model import DAYS_PER_YEAR, IntensityDynamics, IntensityState
from .simulate import NEGATIVE, POSITIVE, EventSeries, JumpEvent

# 80..99 by 1, then 99.5; per-side percentiles of the tail magnitudes
DEFAULT_PERCENTILES = tuple(float(p) for p in range(80, 100)) + (99.5,)


def _loglik_kernel_py(times, sizes, is_pos, horizon,
                      kp, km, tp, tm, b11, b21, b12, b22):
    # Partial log-likelihood: sum of pre-event log intensities minus the
    # integrated intensities on [0, horizon], starting from lambda(0) = theta.
    # Returns nan when a pre-event intensity is not strictly positive.
    lp = tp
    lm = tm
    t_prev = 0.0
    acc = 0.0
    for i in range(times.shape[0]):
        dt = times[i] - t_prev
        ep = math.exp(-kp * dt)
        em = math.exp(-km * dt)
        acc -= tp * dt + (lp - tp) * (1.0 - ep) / kp
        acc -= tm * dt + (lm - tm) * (1.0 - em) / km
        lp = tp + (lp - tp) * ep
        lm = tm + (lm - tm) * em
        if is_pos[i]:
            if not lp > 0.0:
                return math.nan
            acc += math.log(lp)
            lp += b11 * sizes[i]
            lm += b21 * sizes[i]
        else:
            if not lm > 0.0:
                return math.nan
            acc += math.log(lm)
            lp += b12 * sizes[i]
            lm += b22 * sizes[i]
        t_prev = times[i]
    dt = horizon - t_prev
    acc -= tp * dt + (lp - tp) * (1.0 - math.exp(-kp * dt)) / kp
    acc -= tm * dt + (lm - tm) * (1.0 - math.exp(-km * dt)) / km
    return acc


try:
    from numba import njit

    _loglik_kernel = njit(cache=True)(_loglik_kernel_py)
except ImportError:  # pragma: no cover - numba is an optional speedup
    _loglik_kernel = _loglik_kernel_py


@dataclass(frozen=True)
class ReturnSeries:
    """Equally spaced (daily) log-returns with their timestamps.

    timestamps may be numpy datetime64 values or plain numbers counting days;
    either way they must be strictly increasing and are converted to event
    times in years via day offsets from the first observation.
    """

    timestamps: np.ndarray
    log_returns: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        x = np.asarray(self.log_returns, dtype=float)
        if ts.shape != x.shape or ts.ndim != 1:
            raise ValueError("timestamps and log_returns must be equal-length 1-d arrays")
        if not np.all(np.isfinite(x)):
            raise ValueError("log_returns must be finite")
        offs = self._offsets(ts)
        if np.any(np.diff(offs) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "log_returns", x)

    @staticmethod
    def _offsets(ts: np.ndarray) -> np.ndarray:
        if np.issubdtype(ts.dtype, np.datetime64):
            return (ts - ts[0]) / np.timedelta64(1, "D")
        return np.asarray(ts, dtype=float) - float(ts[0])

    def __len__(self) -> int:
        return self.log_returns.size

    @property
    def day_offsets(self) -> np.ndarray:
        """Days since the first observation."""
        return self._offsets(self.timestamps)

    def times_years(self) -> np.ndarray:
        return self.day_offsets / DAYS_PER_YEAR


@dataclass(frozen=True)
class ThresholdGrid:
    """Candidate (nu_plus, nu_minus) threshold values, one array per side."""

    nu_plus: np.ndarray
    nu_minus: np.ndarray

    def __post_init__(self):
        up = np.asarray(self.nu_plus, dtype=float)
        dn = np.asarray(self.nu_minus, dtype=float)
        if up.size == 0 or dn.size == 0:
            raise ValueError("each side needs at least one candidate threshold")
        if not (np.all(up > 0) and np.all(dn < 0)):
            raise ValueError("need nu_plus > 0 and nu_minus < 0 candidates")
        object.__setattr__(self, "nu_plus", np.unique(up))
        object.__setattr__(self, "nu_minus", np.unique(dn))

    @classmethod
    def from_percentiles(cls, returns: ReturnSeries,
                         percentiles=DEFAULT_PERCENTILES) -> "ThresholdGrid":
        """Per-side percentiles of the positive returns and of the magnitudes
        of the negative returns."""
        x = returns.log_returns
        pos = x[x > 0]
        neg = -x[x < 0]
        if pos.size == 0 or neg.size == 0:
            raise DegenerateSample("need returns of both signs to build a threshold grid")
        p = np.asarray(percentiles, dtype=float)
        return cls(np.percentile(pos, p), -np.percentile(neg, p))


@dataclass(frozen=True)
class PotResult:
    """Chosen thresholds, the classified jump events, and the (skewness,
    excess kurtosis) of the sample that remains after removing the jumps."""

    nu_plus_hat: float
    nu_minus_hat: float
    jumps: EventSeries
    filtered_moments: tuple[float, float]

    def __post_init__(self):
        if not self.nu_plus_hat > 0 > self.nu_minus_hat:
            raise ValueError("need nu_plus_hat > 0 > nu_minus_hat")
        for e in self.jumps.events:
            ok = e.size >= self.nu_plus_hat if e.sign == POSITIVE else e.size <= self.nu_minus_hat
            if not ok:
                raise ValueError("every classified jump must exceed its threshold")


def _population_moments(x: np.ndarray) -> tuple[float, float]:
    # Population (biased) skewness and excess kurtosis.
    return (float(stats.skew(x, bias=True)),
            float(stats.kurtosis(x, fisher=True, bias=True)))


def pot_filter(returns: ReturnSeries, grid: ThresholdGrid | None = None,
               min_points: int = 30, min_length: int = 100) -> PotResult:
    """Search the threshold grid for the pair minimizing |skew| + |excess
    kurtosis| of the bounded sample; returns beyond the chosen pair are the
    classified jumps.

    Ties are broken toward fewer classified jumps, then the larger nu_plus,
    then the more negative nu_minus.
    """
    if len(returns) < min_length:
        raise DegenerateSample(f"need at least {min_length} returns, got {len(returns)}")
    if grid is None:
        grid = ThresholdGrid.from_percentiles(returns)
    x = returns.log_returns
    best = None
    for nu_p in grid.nu_plus:
        for nu_m in grid.nu_minus:
            keep = (x > nu_m) & (x < nu_p)
            n_keep = int(np.count_nonzero(keep))
            if n_keep < min_points:
                continue
            skew, kurt = _population_moments(x[keep])
            key = (abs(skew) + abs(kurt), x.size - n_keep, -nu_p, nu_m)
            if best is None or key < best[0]:
                best = (key, float(nu_p), float(nu_m), (skew, kurt))
    if best is None:
        raise DegenerateSample(
            f"no threshold pair leaves at least {min_points} non-jump returns")
    _, nu_p, nu_m, moments = best

    times = returns.times_years()
    events = []
    for t, r in zip(times, x):
        if r >= nu_p:
            events.append(JumpEvent(float(t), float(r), POSITIVE))
        elif r <= nu_m:
            events.append(JumpEvent(float(t), float(r), NEGATIVE))
    horizon = float(times[-1])
    return PotResult(nu_p, nu_m, EventSeries(tuple(events), horizon), moments)


def estimate_eta(jumps: EventSeries, thresholds: tuple[float, float]) -> tuple[float, float]:
    """Jump scales from mean threshold excesses: eta_plus is the mean of
    (J - nu_plus) over positive jumps, eta_minus the mean of (nu_minus - J)
    over negative jumps."""
    nu_p, nu_m = thresholds
    sizes_p = jumps.sizes(POSITIVE)
    sizes_m = jumps.sizes(NEGATIVE)
    if sizes_p.size == 0:
        raise EmptySide("no positive jumps to estimate eta_plus from")
    if sizes_m.size == 0:
        raise EmptySide("no negative jumps to estimate eta_minus from")
    return float(np.mean(sizes_p - nu_p)), float(np.mean(nu_m - sizes_m))


def _event_arrays(events: EventSeries) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    times = np.array([e.t for e in events.events], dtype=float)
    sizes = np.array([e.size for e in events.events], dtype=float)
    is_pos = np.array([e.sign == POSITIVE for e in events.events], dtype=np.bool_)
    return times, sizes, is_pos


def partial_loglik(dynamics: IntensityDynamics, events: EventSeries,
                   horizon: float | None = None) -> float:
    """Partial log-likelihood of the event stream under the given intensity
    dynamics: sum of log pre-event intensities minus the integrated
    intensities over [0, horizon], starting from lambda(0) = theta.

    Integrals use the closed form of the exponential decay on each
    inter-event segment.
    """
    if horizon is None:
        horizon = events.horizon
    times, sizes, is_pos = _event_arrays(events)
    if times.size and times[-1] > horizon:
        raise ValueError("horizon must cover all events")
    d = dynamics
    val = _loglik_kernel(times, sizes, is_pos, float(horizon),
                         d.kappa_plus, d.kappa_minus, d.theta_plus, d.theta_minus,
                         d.beta_11, d.beta_21, d.beta_12, d.beta_22)
    if math.isnan(val):
        raise NumericDomain("pre-event intensity is not strictly positive")
    return float(val)


def _recurse_states(dynamics: IntensityDynamics, events: EventSeries,
                    t0: float, lp: float, lm: float,
                    eval_times: np.ndarray | None) -> tuple[IntensityState, ...]:
    # Forward recursion shared by fit_mle's lambda_path and filter_intensities
    # so a replay is bit-identical. Event entries carry the post-event state;
    # evaluation entries carry the right-continuous state at that time.
    d = dynamics
    evs = list(events.events)
    grid = [] if eval_times is None else [float(t) for t in np.atleast_1d(eval_times)]
    if any(t < t0 for t in grid) or (evs and evs[0].t < t0):
        raise ValueError("events and evaluation times must not precede the start state")
    if any(t2 < t1 for t1, t2 in zip(grid, grid[1:])):
        raise ValueError("evaluation times must be sorted")
    out = []
    i = j = 0
    t_cur = t0
    while i < len(evs) or j < len(grid):
        ev_t = evs[i].t if i < len(evs) else math.inf
        gr_t = grid[j] if j < len(grid) else math.inf
        if ev_t <= gr_t:
            dt = ev_t - t_cur
            lp = d.theta_plus + (lp - d.theta_plus) * math.exp(-d.kappa_plus * dt)
            lm = d.theta_minus + (lm - d.theta_minus) * math.exp(-d.kappa_minus * dt)
            if evs[i].sign == POSITIVE:
                lp += d.beta_11 * evs[i].size
                lm += d.beta_21 * evs[i].size
            else:
                lp += d.beta_12 * evs[i].size
                lm += d.beta_22 * evs[i].size
            t_cur = ev_t
            out.append(IntensityState(t_cur, lp, lm))
            i += 1
        else:
            dt = gr_t - t_cur
            lp = d.theta_plus + (lp - d.theta_plus) * math.exp(-d.kappa_plus * dt)
            lm = d.theta_minus + (lm - d.theta_minus) * math.exp(-d.kappa_minus * dt)
            t_cur = gr_t
            out.append(IntensityState(t_cur, lp, lm))
            j += 1
    return tuple(out)


@dataclass(frozen=True)
class OptimizerConfig:
    """Multi-start simplex settings for the likelihood maximization."""

    n_starts: int = 8
    seed: int = 0
    max_iter: int = 6000
    xatol: float = 1e-5
    fatol: float = 1e-7
    min_events: int = 10
    start_scale: float = 1.0
    refine: bool = False

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class MleResult:
    """Fitted intensity dynamics with the jump scales carried alongside."""

    dynamics: IntensityDynamics
    eta_plus_hat: float | None
    eta_minus_hat: float | None
    loglik: float
    lambda_path: tuple[IntensityState, ...] = field(repr=False)


# Excitation that dies within a single day is invisible in daily data, so
# mean-reversion rates past ~1e3/yr are unidentifiable, and the likelihood
# goes flat in kappa as the matching beta shrinks; capping the decoded rate
# keeps a wandering simplex from returning rates that later make the pricing
# ODEs needlessly stiff.
KAPPA_CAP = 1e3


def _decode(u: np.ndarray) -> tuple[float, ...]:
    # Log parameterization for positive quantities; beta entries carry their
    # sign-constrained direction with log magnitudes.
    kp = min(np.exp(u[0]), KAPPA_CAP)
    km = min(np.exp(u[1]), KAPPA_CAP)
    tp, tm = np.exp(u[2]), np.exp(u[3])
    b11, b21 = np.exp(u[4]), np.exp(u[5])
    b12, b22 = -np.exp(u[6]), -np.exp(u[7])
    return kp, km, tp, tm, b11, b21, b12, b22


def fit_mle(events: EventSeries, horizon: float | None = None,
            etas: tuple[float, float] | None = None,
            config: OptimizerConfig | None = None) -> MleResult:
    """Maximize the partial log-likelihood over the intensity dynamics with
    multi-start Nelder-Mead on an unconstrained reparameterization.

    Starts are drawn around a data-informed center; the best start wins, ties
    resolved by start index. etas are passed through into the result.
    """
    config = config or OptimizerConfig()
    if horizon is None:
        horizon = events.horizon
    times, sizes, is_pos = _event_arrays(events)
    if times.size < config.min_events:
        raise DegenerateSample(
            f"need at least {config.min_events} events, got {times.size}")
    n_pos = int(np.count_nonzero(is_pos))
    n_neg = times.size - n_pos
    mean_abs_p = float(np.mean(sizes[is_pos])) if n_pos else 0.05
    mean_abs_m = float(np.mean(np.abs(sizes[~is_pos]))) if n_neg else 0.05

    def neg_loglik(u: np.ndarray) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            kp, km, tp, tm, b11, b21, b12, b22 = _decode(u)
            if not all(map(math.isfinite, (kp, km, tp, tm, b11, b21, -b12, -b22))):
                return 1e12
            val = _loglik_kernel(times, sizes, is_pos, float(horizon),
                                 kp, km, tp, tm, b11, b21, b12, b22)
        return 1e12 if math.isnan(val) else -val

    kappa_c = 6.0
    rate_p = max(n_pos / horizon, 1e-3)
    rate_m = max(n_neg / horizon, 1e-3)
    center = np.log([kappa_c, kappa_c, 0.7 * rate_p, 0.7 * rate_m,
                     0.2 * kappa_c / mean_abs_p, 0.2 * kappa_c / mean_abs_p,
                     0.2 * kappa_c / mean_abs_m, 0.2 * kappa_c / mean_abs_m])
    rng = np.random.default_rng(config.seed)
    starts = center + config.start_scale * rng.standard_normal((config.n_starts, 8))
    starts[0] = center

    best: tuple[float, int, np.ndarray] | None = None
    any_converged = False
    for idx in range(config.n_starts):
        res = optimize.minimize(
            neg_loglik, starts[idx], method="Nelder-Mead",
            options={"maxiter": config.max_iter, "maxfev": 2 * config.max_iter,
                     "xatol": config.xatol, "fatol": config.fatol, "adaptive": True})
        if not res.success or not math.isfinite(res.fun) or res.fun >= 1e12:
            continue
        any_converged = True
        key = (res.fun, idx, res.x)
        if best is None or key[:2] < best[:2]:
            best = key
    if not any_converged:
        raise NonConvergence(
            f"no start converged within {config.max_iter} iterations")
    u_best = best[2]
    if config.refine:
        res = optimize.minimize(neg_loglik, u_best, method="BFGS",
                                options={"maxiter": config.max_iter})
        if math.isfinite(res.fun) and res.fun < best[0]:
            u_best = res.x

    kp, km, tp, tm, b11, b21, b12, b22 = _decode(u_best)
    dyn = IntensityDynamics(kp, km, tp, tm, b11, b12, b21, b22)
    loglik = partial_loglik(dyn, events, horizon)
    path = _recurse_states(dyn, events, 0.0, dyn.theta_plus, dyn.theta_minus, None)
    ep, em = (etas if etas is not None else (None, None))
    return MleResult(dyn, ep, em, loglik, path)


def filter_intensities(fitted: MleResult, new_events: EventSeries,
                       from_state: IntensityState,
                       eval_times: np.ndarray | None = None) -> tuple[IntensityState, ...]:
    """Deterministic forward recursion of the fitted intensities through new
    events, reporting post-event states and, optionally, the states at a
    sorted evaluation grid (right-continuous at coinciding times)."""
    return _recurse_states(fitted.dynamics, new_events, from_state.t,
                           from_state.lambda_plus, from_state.lambda_minus,
                           eval_times)
