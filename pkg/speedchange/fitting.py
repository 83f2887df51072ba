"""
Scaling-law fits for curves over a lambda grid
"""

import logging
import math
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats

from .errors import InputError

logger = logging.getLogger(__name__)

MIN_POINTS = 6


class LinearFit(BaseModel):
    slope: float
    intercept: float
    r2: float


class ScalingFit(BaseModel):
    """Competing asymptotic forms for values(lambda) as lambda -> 0"""
    power: LinearFit = Field(..., description="log v = c + a log lambda")
    log_power: LinearFit = Field(..., description="log v = c + b log log(1/lambda)")
    log_linear: LinearFit = Field(..., description="v = c + k log(1/lambda)")
    loglog: LinearFit = Field(..., description="v = c + k log log(1/lambda)")
    selected: str = Field(..., description="Form with the smallest residual in log v")
    residuals: Dict[str, float]

    @property
    def exponent(self) -> float:
        return self.power.slope

    @property
    def log_flag(self) -> bool:
        return self.selected in ("log_power", "log_linear", "loglog")


def linear_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    result = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return LinearFit(slope=float(result.slope), intercept=float(result.intercept), r2=float(result.rvalue ** 2))


def _window(lambdas: Sequence[float], values: Sequence[float], window: Optional[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    lam = np.asarray(lambdas, dtype=float)
    val = np.asarray(values, dtype=float)
    if lam.shape != val.shape:
        raise InputError("lambda grid and values differ in length")
    if window is not None:
        low, high = window
        keep = (lam >= low) & (lam <= high)
        lam, val = lam[keep], val[keep]
    if len(lam) < MIN_POINTS:
        raise InputError(f"need at least {MIN_POINTS} points in the fit window, got {len(lam)}")
    if np.any(lam <= 0) or np.any(lam >= 1) or np.ptp(lam) == 0:
        raise InputError("fit window must hold distinct lambdas in (0, 1)")
    if np.any(val <= 0) or not np.all(np.isfinite(val)):
        raise InputError("fitted values must be positive and finite")
    return lam, val


def _log_sse(predicted: np.ndarray, observed: np.ndarray) -> float:
    if np.any(predicted <= 0):
        return math.inf
    return float(np.sum((np.log(predicted) - np.log(observed)) ** 2))


def fit_scaling(lambdas: Sequence[float], values: Sequence[float], window: Optional[Tuple[float, float]] = None) -> ScalingFit:
    """Fit power, log-power, log-linear and log-log forms and select by residual"""
    lam, val = _window(lambdas, values, window)
    log_lam = np.log(lam)
    log_inv = np.log(1 / lam)
    loglog = np.log(log_inv)

    power = linear_fit(log_lam, np.log(val))
    log_power = linear_fit(loglog, np.log(val))
    log_linear = linear_fit(log_inv, val)
    double_log = linear_fit(loglog, val)
    residuals = {
        "power": _log_sse(np.exp(power.intercept + power.slope * log_lam), val),
        "log_power": _log_sse(np.exp(log_power.intercept + log_power.slope * loglog), val),
        "log_linear": _log_sse(log_linear.intercept + log_linear.slope * log_inv, val),
        "loglog": _log_sse(double_log.intercept + double_log.slope * loglog, val),
    }
    selected = min(residuals, key=lambda name: residuals[name])
    logger.debug(f"Scaling fit residuals: {residuals}; selected {selected}")
    return ScalingFit(
        power=power,
        log_power=log_power,
        log_linear=log_linear,
        loglog=double_log,
        selected=selected,
        residuals=residuals,
    )
