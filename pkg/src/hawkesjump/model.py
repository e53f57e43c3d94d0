"""Parameter and state types for the bivariate clustered-jump price model.

Two jump streams (positive and negative log-return jumps) arrive with
self- and cross-exciting intensities; jump sizes follow shifted exponential
laws. All rates are annualized; one calendar day is 1/365 years.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularMatrix

DAYS_PER_YEAR = 365.0
DAY = 1.0 / DAYS_PER_YEAR

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class JumpLaw:
    """Shifted-exponential jump-size law for one side.

    Positive side: J = nu + Exp(eta), nu >= 0. Negative side:
    J = nu - Exp(eta), nu <= 0. eta > 0 on both sides; the positive side
    needs eta < 1 wherever E(e^J - 1) must be finite (see compensator).
    """

    side: str
    nu: float
    eta: float

    def __post_init__(self):
        if self.side not in (POSITIVE, NEGATIVE):
            raise ValueError(f"side must be {POSITIVE!r} or {NEGATIVE!r}, got {self.side!r}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.side == POSITIVE:
            if self.nu < 0:
                raise ValueError(f"positive side requires nu >= 0, got {self.nu}")
        elif self.nu > 0:
            raise ValueError(f"negative side requires nu <= 0, got {self.nu}")


def laplace(law: JumpLaw, omega: complex) -> complex:
    """Laplace transform E(e^{-omega J}) of the jump law at complex omega."""
    omega = complex(omega)
    if law.side == POSITIVE:
        if not 1.0 / law.eta + omega.real > 0:
            raise DomainError(
                f"positive-law transform needs Re(omega) > {-1.0 / law.eta}, got {omega.real}"
            )
        return cmath.exp(-law.nu * omega) / (1.0 + law.eta * omega)
    if not omega.real < 1.0 / law.eta:
        raise DomainError(
            f"negative-law transform needs Re(omega) < {1.0 / law.eta}, got {omega.real}"
        )
    return cmath.exp(-law.nu * omega) / (1.0 - law.eta * omega)


def compensator(law: JumpLaw) -> float:
    """Expected simple return of one jump, E(e^J - 1)."""
    if law.side == POSITIVE:
        if law.eta >= 1:
            raise DomainError(f"positive-side compensator needs eta < 1, got {law.eta}")
        return math.exp(law.nu) / (1.0 - law.eta) - 1.0
    return math.exp(law.nu) / (1.0 + law.eta) - 1.0


def mean_jump(law: JumpLaw) -> float:
    """Expected jump size E(J)."""
    return law.nu + law.eta if law.side == POSITIVE else law.nu - law.eta


def density(law: JumpLaw, j):
    """Jump-size probability density at j; vectorizes over arrays."""
    arr = np.asarray(j, dtype=float)
    if law.side == POSITIVE:
        out = np.where(arr >= law.nu, np.exp(-np.abs(arr - law.nu) / law.eta) / law.eta, 0.0)
    else:
        out = np.where(arr <= law.nu, np.exp(-np.abs(arr - law.nu) / law.eta) / law.eta, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class IntensityDynamics:
    """Mean-reverting excitation dynamics of the intensity pair.

    Each side reverts at rate kappa toward level theta; a realized jump of
    size J adds beta * J to both intensities. Sign pattern beta_11,
    beta_21 >= 0 and beta_12, beta_22 <= 0 makes every excitation increment
    nonnegative (negative jumps have J < 0).
    """

    kappa_plus: float
    kappa_minus: float
    theta_plus: float
    theta_minus: float
    beta_11: float
    beta_12: float
    beta_21: float
    beta_22: float

    def __post_init__(self):
        if not (self.kappa_plus > 0 and self.kappa_minus > 0):
            raise ValueError("kappa must be > 0 on both sides")
        if self.theta_plus < 0 or self.theta_minus < 0:
            raise ValueError("theta must be >= 0 on both sides")
        if self.beta_11 < 0 or self.beta_21 < 0:
            raise ValueError("beta_11 and beta_21 must be >= 0")
        if self.beta_12 > 0 or self.beta_22 > 0:
            raise ValueError("beta_12 and beta_22 must be <= 0")

    @property
    def beta(self) -> np.ndarray:
        """Excitation matrix [[beta_11, beta_12], [beta_21, beta_22]]."""
        return np.array([[self.beta_11, self.beta_12], [self.beta_21, self.beta_22]])


@dataclass(frozen=True)
class ModelParams:
    """Full parameter record under the statistical measure.

    The plain constructor checks only field-level constraints (the
    "unchecked" mode for stress configurations); ModelParams.validated
    additionally requires the finite-mean-intensity sufficient condition.
    """

    mu: float
    sigma: float
    dynamics: IntensityDynamics
    law_plus: JumpLaw
    law_minus: JumpLaw
    lambda0_plus: float
    lambda0_minus: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.lambda0_plus < 0 or self.lambda0_minus < 0:
            raise ValueError("initial intensities must be >= 0")
        if self.law_plus.side != POSITIVE:
            raise ValueError("law_plus must be a positive-side law")
        if self.law_minus.side != NEGATIVE:
            raise ValueError("law_minus must be a negative-side law")
        # price dynamics compensate e^J - 1, so the positive mean must be finite
        if not self.law_plus.eta < 1:
            raise ValueError(f"law_plus.eta must be < 1, got {self.law_plus.eta}")

    @classmethod
    def validated(cls, mu, sigma, dynamics, law_plus, law_minus,
                  lambda0_plus, lambda0_minus) -> "ModelParams":
        """Construct and require stationary dynamics with positive theta."""
        params = cls(mu, sigma, dynamics, law_plus, law_minus, lambda0_plus, lambda0_minus)
        if dynamics.theta_plus <= 0 or dynamics.theta_minus <= 0:
            raise ValueError("validated params require theta > 0 on both sides")
        if not stationarity_check(params).sufficient_ok:
            raise ValueError(
                "excitation exceeds mean reversion; use the plain constructor "
                "for deliberately non-stationary configurations"
            )
        return params

    @classmethod
    def unchecked(cls, mu, sigma, dynamics, law_plus, law_minus,
                  lambda0_plus, lambda0_minus) -> "ModelParams":
        """Construct with field-level checks only."""
        return cls(mu, sigma, dynamics, law_plus, law_minus, lambda0_plus, lambda0_minus)

    def to_dict(self) -> dict:
        """Flat snake_case mapping of all parameters (annualized units)."""
        d = self.dynamics
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "kappa_plus": d.kappa_plus,
            "kappa_minus": d.kappa_minus,
            "theta_plus": d.theta_plus,
            "theta_minus": d.theta_minus,
            "beta_11": d.beta_11,
            "beta_12": d.beta_12,
            "beta_21": d.beta_21,
            "beta_22": d.beta_22,
            "nu_plus": self.law_plus.nu,
            "eta_plus": self.law_plus.eta,
            "nu_minus": self.law_minus.nu,
            "eta_minus": self.law_minus.eta,
            "lambda0_plus": self.lambda0_plus,
            "lambda0_minus": self.lambda0_minus,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        """Inverse of to_dict."""
        dynamics = IntensityDynamics(
            kappa_plus=float(d["kappa_plus"]),
            kappa_minus=float(d["kappa_minus"]),
            theta_plus=float(d["theta_plus"]),
            theta_minus=float(d["theta_minus"]),
            beta_11=float(d["beta_11"]),
            beta_12=float(d["beta_12"]),
            beta_21=float(d["beta_21"]),
            beta_22=float(d["beta_22"]),
        )
        return cls(
            mu=float(d["mu"]),
            sigma=float(d["sigma"]),
            dynamics=dynamics,
            law_plus=JumpLaw(POSITIVE, float(d["nu_plus"]), float(d["eta_plus"])),
            law_minus=JumpLaw(NEGATIVE, float(d["nu_minus"]), float(d["eta_minus"])),
            lambda0_plus=float(d["lambda0_plus"]),
            lambda0_minus=float(d["lambda0_minus"]),
        )


@dataclass(frozen=True)
class IntensityState:
    """Intensity pair at a point in time."""

    t: float
    lambda_plus: float
    lambda_minus: float

    def __post_init__(self):
        if self.lambda_plus < 0 or self.lambda_minus < 0:
            raise ValueError("intensities must be >= 0")


@dataclass(frozen=True)
class StationarityReport:
    """Finite-mean-intensity diagnostics.

    sufficient_ok is the Gershgorin sufficient condition
    kappa >= beta . E(J) row-wise; eigenvalues are those of the mean-intensity
    drift matrix; asymptotic_mean is the stationary mean intensity pair, or
    None when some eigenvalue has nonnegative real part.
    """

    sufficient_ok: bool
    eigenvalues: tuple[complex, complex]
    asymptotic_mean: tuple[float, float] | None


def stationarity_check(params: ModelParams) -> StationarityReport:
    """Check the sufficient condition for finite expected intensities."""
    d = params.dynamics
    ej_p = mean_jump(params.law_plus)
    ej_m = mean_jump(params.law_minus)
    phi = np.array([
        [-d.kappa_plus + d.beta_11 * ej_p, d.beta_12 * ej_m],
        [d.beta_21 * ej_p, -d.kappa_minus + d.beta_22 * ej_m],
    ])
    ok = (d.kappa_plus >= d.beta_11 * ej_p + d.beta_12 * ej_m
          and d.kappa_minus >= d.beta_21 * ej_p + d.beta_22 * ej_m)
    eig = np.linalg.eigvals(phi)
    if np.linalg.det(phi) == 0.0:
        raise SingularMatrix("mean-intensity drift matrix is singular")
    mean = None
    if all(ev.real < 0 for ev in eig):
        rhs = np.array([d.kappa_plus * d.theta_plus, d.kappa_minus * d.theta_minus])
        sol = -np.linalg.solve(phi, rhs)
        mean = (float(sol[0]), float(sol[1]))
    return StationarityReport(
        sufficient_ok=bool(ok),
        eigenvalues=(complex(eig[0]), complex(eig[1])),
        asymptotic_mean=mean,
    )
