"""Calibration-curve layer turning T1 readings into analyte amounts.

Works on the empirical local model: over a modest amount range the measured
T1 falls linearly with deposited amount, so a straight line through replicate
means gives slope, intercept, an assay noise level sigma(T1), and a detection
limit LOD = k * sigma / |slope|.  This linear route is deliberately separate
from the exact rate-additivity inversion in :mod:`nvsense.gdnoise`; the two
answer different questions (local empirical calibration vs physical model).

Amounts carry a unit tag (fmol, pmol, ...) that is never converted, only
checked for consistency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, ParameterError, UnitMismatchError

#: Default multiplier k in LOD = k * sigma_t1 / |slope|.
DEFAULT_K_FACTOR = 1.0


@dataclass(frozen=True)
class CalibrationPoint:
    """One measured location: deposited amount and its fitted T1."""

    amount: float
    t1_ms: float
    t1_err_ms: float = 0.0
    unit: str = "fmol"
    location_id: str = ""

    def __post_init__(self):
        if self.amount < 0:
            raise ParameterError(f"amount must be >= 0, got {self.amount!r}")
        if self.t1_ms <= 0:
            raise ParameterError(f"t1_ms must be > 0, got {self.t1_ms!r}")
        if self.t1_err_ms < 0:
            raise ParameterError(f"t1_err_ms must be >= 0, got {self.t1_err_ms!r}")


@dataclass(frozen=True)
class ReplicateGroup:
    """Replicates at one amount collapsed to mean T1 and its standard error."""

    amount: float
    t1_mean_ms: float
    t1_sem_ms: float
    n: int
    unit: str
    #: True when n == 1 and the SEM had to fall back to the single fit error.
    sem_from_fit_err: bool = False


@dataclass
class CalibrationModel:
    """Fitted line t1 = slope * amount + intercept with assay noise and LOD."""

    slope: float
    intercept: float
    slope_err: float
    intercept_err: float
    sigma_t1: float
    lod: float
    k_factor: float
    unit: str
    n_points: int
    groups: list[ReplicateGroup] = field(repr=False, default_factory=list)
    #: Set when the slope is >= 0, i.e. T1 fails to fall with amount.
    wrong_direction: bool = False

    def predict(self, amount) -> np.ndarray:
        return self.slope * np.asarray(amount, dtype=float) + self.intercept


@dataclass(frozen=True)
class QuantifyResult:
    amount: float
    amount_err: float
    unit: str
    below_lod: bool
    #: True if the raw inversion landed negative and was clamped to zero.
    clamped: bool = False

    @property
    def ci(self) -> tuple[float, float]:
        """1-sigma interval around the (unclamped would-be) reported amount."""
        return (self.amount - self.amount_err, self.amount + self.amount_err)


def _check_units(points) -> str:
    units = {p.unit for p in points}
    if len(units) > 1:
        raise UnitMismatchError(f"mixed amount units in calibration set: {sorted(units)}")
    return units.pop()


def average_replicates(points: list[CalibrationPoint]) -> list[ReplicateGroup]:
    """Group points by amount; mean T1 and SEM = std(ddof=1)/sqrt(n) per group.

    A single-replicate group cannot yield a sample SEM, so the point's own
    fit error is used instead and the group is flagged.  Empty input gives
    empty output.
    """
    if not points:
        return []
    unit = _check_units(points)
    by_amount: dict[float, list[CalibrationPoint]] = {}
    for p in points:
        by_amount.setdefault(p.amount, []).append(p)
    groups = []
    for amount in sorted(by_amount):
        members = by_amount[amount]
        t1s = np.array([p.t1_ms for p in members])
        n = len(members)
        if n > 1:
            sem = float(np.std(t1s, ddof=1) / np.sqrt(n))
            fallback = False
        else:
            sem = members[0].t1_err_ms
            fallback = True
        groups.append(ReplicateGroup(amount=amount, t1_mean_ms=float(t1s.mean()),
                                     t1_sem_ms=sem, n=n, unit=unit,
                                     sem_from_fit_err=fallback))
    return groups


def fit_calibration(points: list[CalibrationPoint], sigma_floor: float = 0.0,
                    k_factor: float = DEFAULT_K_FACTOR) -> CalibrationModel:
    """Straight-line calibration through replicate means.

    The line is weighted by 1/SEM^2 only when every group has a usable
    positive SEM; otherwise it is an ordinary unweighted fit.  sigma_t1 is
    the RMS residual about the line (ddof=2) floored at ``sigma_floor``, and
    LOD = k * sigma_t1 / |slope|.  A non-negative slope is flagged, not
    raised: the model is still returned so the caller can inspect it.
    """
    if sigma_floor < 0:
        raise ParameterError(f"sigma_floor must be >= 0, got {sigma_floor!r}")
    if k_factor <= 0:
        raise ParameterError(f"k_factor must be > 0, got {k_factor!r}")
    groups = average_replicates(points)
    if len(groups) < 3:
        raise InsufficientDataError(
            f"need >= 3 distinct amounts for a calibration line, got {len(groups)}")
    x = np.array([g.amount for g in groups])
    y = np.array([g.t1_mean_ms for g in groups])
    sems = np.array([g.t1_sem_ms for g in groups])
    if np.all(sems > 0):
        w = 1.0 / sems**2
    else:
        w = np.ones_like(x)

    # Weighted normal equations for y = a*x + b.
    sw = w.sum()
    xbar = np.dot(w, x) / sw
    ybar = np.dot(w, y) / sw
    sxx = np.dot(w, (x - xbar)**2)
    if sxx <= 0:
        raise InsufficientDataError("calibration amounts are all identical")
    slope = float(np.dot(w, (x - xbar) * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)

    resid = y - (slope * x + intercept)
    dof = len(groups) - 2
    # Residual-based error scale so slope_err is honest even when the
    # per-group SEMs misstate the true scatter.
    chi2 = float(np.dot(w, resid**2))
    scale = chi2 / dof
    slope_err = float(np.sqrt(scale / sxx))
    intercept_err = float(np.sqrt(scale * (1.0 / sw + xbar**2 / sxx)))
    sigma_t1 = max(float(np.sqrt(np.dot(resid, resid) / dof)), sigma_floor)
    lod = k_factor * sigma_t1 / abs(slope) if slope != 0 else np.inf
    return CalibrationModel(slope=slope, intercept=intercept,
                            slope_err=slope_err, intercept_err=intercept_err,
                            sigma_t1=sigma_t1, lod=float(lod), k_factor=k_factor,
                            unit=groups[0].unit, n_points=len(points),
                            groups=groups, wrong_direction=slope >= 0)


def detection_limit(model: CalibrationModel, sigma_t1: float | None = None,
                    k_factor: float | None = None) -> float:
    """LOD = k * sigma_t1 / |slope|, defaulting sigma and k from the model."""
    sigma = model.sigma_t1 if sigma_t1 is None else sigma_t1
    k = model.k_factor if k_factor is None else k_factor
    if sigma <= 0:
        raise ParameterError(f"sigma_t1 must be > 0, got {sigma!r}")
    if k <= 0:
        raise ParameterError(f"k_factor must be > 0, got {k!r}")
    if model.slope == 0:
        raise ParameterError("calibration slope is zero; LOD is undefined")
    return k * sigma / abs(model.slope)


def quantify(model: CalibrationModel, t1_ms: float, t1_err_ms: float = 0.0) -> QuantifyResult:
    """Invert the calibration line for an unknown T1 reading.

    The 1-sigma amount error propagates the reading error plus the line's
    slope and intercept uncertainties to first order.  Amounts below zero
    clamp to zero (flagged), and the result is marked when under the LOD.
    """
    if t1_ms <= 0:
        raise ParameterError(f"t1_ms must be > 0, got {t1_ms!r}")
    if t1_err_ms < 0:
        raise ParameterError(f"t1_err_ms must be >= 0, got {t1_err_ms!r}")
    if model.slope == 0:
        raise ParameterError("calibration slope is zero; cannot invert")
    amount_raw = (t1_ms - model.intercept) / model.slope
    clamped = amount_raw < 0
    amount = max(amount_raw, 0.0)
    # d(amount)/d(t1) = 1/slope; /d(intercept) = -1/slope; /d(slope) = -amount/slope.
    var = ((t1_err_ms / model.slope)**2
           + (model.intercept_err / model.slope)**2
           + (amount_raw * model.slope_err / model.slope)**2)
    return QuantifyResult(amount=float(amount), amount_err=float(np.sqrt(var)),
                          unit=model.unit, below_lod=amount < model.lod,
                          clamped=bool(clamped))
