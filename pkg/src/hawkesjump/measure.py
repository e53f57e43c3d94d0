"""Equivalent measure change with exponentially tilted jump risk premia.

The premium parameters (chi_plus, chi_minus) tilt each jump law; the
internal loadings (xi, c) that keep the candidate density a martingale
solve a 5x5 linear system whose determinant is identically 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import (
    IntensityDynamics,
    IntensityState,
    JumpLaw,
    ModelParams,
    compensator,
    laplace,
)

CHI_MARGIN = 1e-8


@dataclass(frozen=True)
class RiskPremiumParams:
    """Tilt exponents for the positive and negative jump streams."""

    chi_plus: float
    chi_minus: float

    def __post_init__(self):
        if not np.isfinite(self.chi_plus) or not np.isfinite(self.chi_minus):
            raise ValueError("chi values must be finite")


@dataclass(frozen=True)
class MeasureChangeSolution:
    """Internal loadings of the density process, with solve diagnostics."""

    xi_plus: float
    xi_minus: float
    c_plus: float
    c_minus: float
    c: float
    residual: float
    det: float


@dataclass(frozen=True)
class QParams:
    """Model parameters after the measure change; drift is the short rate.

    Field layout mirrors ModelParams so pricing and simulation can consume
    either; kappa and nu carry over, theta and beta are scaled by the tilted
    transform values, eta is retilted, and the initial intensities are the
    scaled states.
    """

    r: float
    sigma: float
    dynamics: IntensityDynamics
    law_plus: JumpLaw
    law_minus: JumpLaw
    lambda0_plus: float
    lambda0_minus: float

    @property
    def mu(self) -> float:
        """Drift of the log price under the pricing measure."""
        return self.r

    def to_model_params(self) -> ModelParams:
        """View as a plain parameter record with mu set to the short rate."""
        return ModelParams(self.r, self.sigma, self.dynamics, self.law_plus,
                           self.law_minus, self.lambda0_plus, self.lambda0_minus)


def _check_region(chi: RiskPremiumParams, law_plus: JumpLaw, law_minus: JumpLaw):
    hi = 1.0 / law_plus.eta
    lo = -1.0 / law_minus.eta
    if not chi.chi_plus < hi - CHI_MARGIN:
        raise DomainError(f"chi_plus must be < {hi} (with margin), got {chi.chi_plus}")
    if not chi.chi_minus > lo + CHI_MARGIN:
        raise DomainError(f"chi_minus must be > {lo} (with margin), got {chi.chi_minus}")


def _tilt_factors(params, chi: RiskPremiumParams) -> tuple[float, float]:
    # transform of each law at the negated tilt; scales intensities under Q
    ell_p = laplace(params.law_plus, -chi.chi_plus).real
    ell_m = laplace(params.law_minus, -chi.chi_minus).real
    return ell_p, ell_m


def solve_internal(params: ModelParams, chi: RiskPremiumParams) -> MeasureChangeSolution:
    """Solve for the density-process loadings (xi+, xi-, c+, c-, c)."""
    _check_region(chi, params.law_plus, params.law_minus)
    d = params.dynamics
    ell_p, ell_m = _tilt_factors(params, chi)
    kt_p = d.kappa_plus * d.theta_plus
    kt_m = d.kappa_minus * d.theta_minus
    a = np.array([
        [1.0 + d.beta_11, d.beta_21, d.beta_11, d.beta_21, 0.0],
        [d.beta_12, 1.0 + d.beta_22, d.beta_12, d.beta_22, 0.0],
        [kt_p, kt_m, kt_p, kt_m, 1.0],
        [1.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 1.0, 0.0],
    ])
    rhs = np.array([
        chi.chi_plus,
        chi.chi_minus,
        0.0,
        (ell_p - 1.0) / d.kappa_plus,
        (ell_m - 1.0) / d.kappa_minus,
    ])
    sol = np.linalg.solve(a, rhs)
    xi_p, xi_m, c_p, c_m, c = (float(v) for v in sol)
    det = float(np.linalg.det(a))
    # martingale conditions on (q1+, q1-, q2) = (c+ + xi+, c- + xi-, c)
    q1p, q1m, q2 = c_p + xi_p, c_m + xi_m, c
    residual = max(
        abs(q1p * kt_p + q1m * kt_m + q2),
        abs(ell_p - 1.0 - q1p * d.kappa_plus),
        abs(ell_m - 1.0 - q1m * d.kappa_minus),
    )
    return MeasureChangeSolution(xi_p, xi_m, c_p, c_m, c, residual=residual, det=det)


def to_q_params(params: ModelParams, chi: RiskPremiumParams, rate: float,
                state: IntensityState | None = None) -> QParams:
    """Transform statistical-measure parameters to the pricing measure."""
    _check_region(chi, params.law_plus, params.law_minus)
    d = params.dynamics
    ell_p, ell_m = _tilt_factors(params, chi)
    eta_p_q = params.law_plus.eta / (1.0 - params.law_plus.eta * chi.chi_plus)
    eta_m_q = params.law_minus.eta / (1.0 + params.law_minus.eta * chi.chi_minus)
    if not eta_p_q < 1.0:
        raise DomainError(
            f"tilted positive tail mean is infinite (eta {eta_p_q:.6g} >= 1); "
            f"chi_plus must be < {1.0 / params.law_plus.eta - 1.0}"
        )
    dyn_q = IntensityDynamics(
        kappa_plus=d.kappa_plus, kappa_minus=d.kappa_minus,
        theta_plus=ell_p * d.theta_plus, theta_minus=ell_m * d.theta_minus,
        beta_11=ell_p * d.beta_11, beta_12=ell_p * d.beta_12,
        beta_21=ell_m * d.beta_21, beta_22=ell_m * d.beta_22,
    )
    if state is None:
        lam_p, lam_m = params.lambda0_plus, params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    return QParams(
        r=rate, sigma=params.sigma, dynamics=dyn_q,
        law_plus=JumpLaw("positive", params.law_plus.nu, eta_p_q),
        law_minus=JumpLaw("negative", params.law_minus.nu, eta_m_q),
        lambda0_plus=ell_p * lam_p, lambda0_minus=ell_m * lam_m,
    )


def phi_process(params: ModelParams, chi: RiskPremiumParams, rate: float,
                state: IntensityState | None = None) -> float:
    """Market price of Brownian risk consistent with the jump tilts."""
    q = to_q_params(params, chi, rate, state=state)
    if state is None:
        lam_p, lam_m = params.lambda0_plus, params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    gap_p = lam_p * compensator(params.law_plus) - q.lambda0_plus * compensator(q.law_plus)
    gap_m = lam_m * compensator(params.law_minus) - q.lambda0_minus * compensator(q.law_minus)
    return (params.mu - rate) / params.sigma - gap_p / params.sigma - gap_m / params.sigma


def jump_risk_premia(params: ModelParams, chi: RiskPremiumParams,
                     state: IntensityState | None = None,
                     rate: float = 0.0) -> tuple[float, float]:
    """Instantaneous expected-return compensation (gamma+, gamma-) per side."""
    q = to_q_params(params, chi, rate, state=state)
    if state is None:
        lam_p, lam_m = params.lambda0_plus, params.lambda0_minus
    else:
        lam_p, lam_m = state.lambda_plus, state.lambda_minus
    gamma_p = q.lambda0_plus * compensator(q.law_plus) - lam_p * compensator(params.law_plus)
    gamma_m = q.lambda0_minus * compensator(q.law_minus) - lam_m * compensator(params.law_minus)
    return gamma_p, gamma_m
