"""Request schemas for the HTTP service.

Pydantic validates shape, types, and basic ranges; the converter methods
hand off to the library constructors so domain rules (kick signs, tail
scales, band checks) stay in one place. Domain violations surface as
DataError, which the app maps to HTTP 422. Unknown fields are rejected.
"""

from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..calibrate import CalibConfig, Quote, StageOne
from ..errors import DataError
from ..estimate import OptimizerConfig, ReturnSeries
from ..io import dynamics_from_dict, params_from_dict
from ..model import (
    DAY,
    NEGATIVE,
    POSITIVE,
    IntensityState,
    JumpLaw,
    ModelParams,
)


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsModel(StrictModel):
    """Flat model parameters, one field per scalar."""

    mu: float
    sigma: float
    kappa_plus: float
    kappa_minus: float
    theta_plus: float
    theta_minus: float
    beta_11: float
    beta_12: float
    beta_21: float
    beta_22: float
    nu_plus: float
    eta_plus: float
    nu_minus: float
    eta_minus: float
    lambda0_plus: float
    lambda0_minus: float

    def to_params(self) -> ModelParams:
        return params_from_dict(self.model_dump())


class ReturnsModel(StrictModel):
    """Daily log-returns stamped with ISO dates or numeric day offsets."""

    timestamps: list[str] | list[float]
    log_returns: list[float]

    def to_series(self) -> ReturnSeries:
        if not self.timestamps:
            raise DataError("returns are empty")
        if isinstance(self.timestamps[0], str):
            try:
                stamps = np.array(self.timestamps, dtype="datetime64[D]")
            except ValueError as exc:
                raise DataError(f"timestamps must be ISO dates: {exc}") from exc
        else:
            stamps = np.asarray(self.timestamps, dtype=float)
        try:
            return ReturnSeries(stamps, np.asarray(self.log_returns,
                                                   dtype=float))
        except ValueError as exc:
            raise DataError(str(exc)) from exc


class QuoteModel(StrictModel):
    """One implied-vol quote; weight None means fill with BS vega."""

    tau: float
    strike: float
    kind: Literal["call", "put"]
    iv: float
    weight: float | None = None

    def to_quote(self) -> Quote:
        try:
            return Quote(self.tau, self.strike, self.kind, self.iv,
                         self.weight)
        except ValueError as exc:
            raise DataError(str(exc)) from exc


class StateModel(StrictModel):
    """Intensity state at one time."""

    t: float
    lambda_plus: float
    lambda_minus: float

    def to_state(self) -> IntensityState:
        try:
            return IntensityState(self.t, self.lambda_plus, self.lambda_minus)
        except ValueError as exc:
            raise DataError(str(exc)) from exc


class StageOneModel(StrictModel):
    """Fitted intensity dynamics and jump laws feeding a calibration."""

    kappa_plus: float
    kappa_minus: float
    theta_plus: float
    theta_minus: float
    beta_11: float
    beta_12: float
    beta_21: float
    beta_22: float
    nu_plus: float
    eta_plus: float
    nu_minus: float
    eta_minus: float

    def to_stage_one(self) -> StageOne:
        d = self.model_dump()
        try:
            return StageOne(
                dynamics=dynamics_from_dict(d),
                law_plus=JumpLaw(POSITIVE, d["nu_plus"], d["eta_plus"]),
                law_minus=JumpLaw(NEGATIVE, d["nu_minus"], d["eta_minus"]),
            )
        except ValueError as exc:
            raise DataError(str(exc)) from exc


class OptimizerModel(StrictModel):
    """MLE optimizer overrides; None keeps the library default."""

    n_starts: int | None = None
    seed: int | None = None
    max_iter: int | None = None
    xatol: float | None = None
    fatol: float | None = None
    min_events: int | None = None
    start_scale: float | None = None
    refine: bool | None = None

    def to_config(self, seed: int) -> OptimizerConfig:
        overrides = {k: v for k, v in self.model_dump().items()
                     if v is not None}
        overrides.setdefault("seed", seed)
        return OptimizerConfig(**overrides)


class CalibModel(StrictModel):
    """Slice-calibration overrides; None keeps the library default."""

    sigma_bounds: tuple[float, float] | None = None
    chi_cap: float | None = None
    margin_frac: float | None = None
    max_iter: int | None = None
    xatol: float | None = None
    fatol: float | None = None

    def to_config(self) -> CalibConfig:
        overrides = {k: v for k, v in self.model_dump().items()
                     if v is not None}
        return CalibConfig(**overrides)


class BandsModel(StrictModel):
    """Quote-slice acceptance bands; None keeps the library default."""

    moneyness_band: tuple[float, float] | None = None
    tau_band: tuple[float, float] | None = None

    def to_kwargs(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class SimulateRequest(StrictModel):
    params: ParamsModel
    horizon: float = Field(gt=0)
    grid_step: float = Field(default=DAY, gt=0)
    seed: int = 0
    measure: Literal["P", "Q"] = "P"
    rate: float | None = None


class EstimateRequest(StrictModel):
    returns: ReturnsModel
    optimizer: OptimizerModel = OptimizerModel()
    seed: int = 0


class PriceRequest(StrictModel):
    params: ParamsModel
    chi_plus: float
    chi_minus: float
    rate: float
    spot: float = Field(gt=0)
    maturities: list[float] = Field(min_length=1)
    strikes: list[float] = Field(min_length=1)
    rel_tol: float | None = Field(default=None, gt=0)


class CalibrateRequest(StrictModel):
    as_of: str
    spot: float = Field(gt=0)
    rate: float
    stage_one: StageOneModel
    state: StateModel
    quotes: list[QuoteModel] = Field(min_length=1)
    bands: BandsModel = BandsModel()
    optimizer: CalibModel = CalibModel()


class PremiaRequest(StrictModel):
    params: ParamsModel
    chi_plus: float
    chi_minus: float
    rate: float = 0.0
    states: list[StateModel] = Field(min_length=1)


class GofRequest(StrictModel):
    fit: dict
    returns: ReturnsModel
    split: float | None = None


class AnalyzeRequest(StrictModel):
    data: dict[str, list[float]]
    y_column: str
    x_columns: list[str] = Field(min_length=1)
    lag: int | None = None
    first_difference: bool = False
    add_intercept: bool = True


class PipelineRequest(StrictModel):
    returns: ReturnsModel
    as_of: str
    quotes: list[QuoteModel]
    spot: float = Field(gt=0)
    rate: float
    optimizer: OptimizerModel = OptimizerModel()
    calibration: CalibModel = CalibModel()
    bands: BandsModel = BandsModel()
    seed: int = 0
