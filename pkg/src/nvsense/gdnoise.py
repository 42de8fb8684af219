"""Surface Gd3+ spin noise: bound amount <-> added longitudinal relaxation rate.

Unpaired Gd3+ electrons on the diamond surface add an independent relaxation
channel.  Independent noise channels add in *rate*, so the model here is
1/T1_eff = 1/T1_intrinsic + kappa*geometry*amount.  This is linear in amount
in rate space; the empirical T1-vs-amount calibration line lives in
:mod:`nvsense.assay` as a separate local model.

T1 quantities are in ms and rates in 1/ms throughout this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, ParameterError

#: Relative slack allowed for a measured T1 to exceed its baseline before
#: amount inversion treats it as a fit/baseline inconsistency.
BASELINE_SLACK = 0.05


@dataclass(frozen=True)
class SurfaceSample:
    """Amount of surface-bound label and its coupling into the NV relaxation rate.

    Parameters
    ----------
    amount : float
        Analyte quantity, in the unit named by ``unit``.
    coupling_per_unit : float
        Added rate per unit amount, 1/(ms * unit).  Must be expressed per the
        same unit as ``amount``; the tag exists so files and reports can
        refuse silent unit mixing.
    geometry_factor : float
        Dimensionless standoff scaling of the coupling (default 1).  A taller
        binding stack reduces it below 1.
    unit : str
        Amount unit tag, typically ``"fmol"`` or ``"pmol"``.
    """

    amount: float
    coupling_per_unit: float
    geometry_factor: float = 1.0
    unit: str = "fmol"

    def __post_init__(self):
        if not np.isfinite(self.amount) or self.amount < 0:
            raise ParameterError(f"amount must be finite and >= 0, got {self.amount!r}")
        if not np.isfinite(self.coupling_per_unit) or self.coupling_per_unit <= 0:
            raise ParameterError(
                f"coupling_per_unit must be > 0, got {self.coupling_per_unit!r}")
        if not np.isfinite(self.geometry_factor) or self.geometry_factor < 0:
            raise ParameterError(
                f"geometry_factor must be >= 0, got {self.geometry_factor!r}")


@dataclass(frozen=True)
class RelaxationBudget:
    """Decomposition of the total longitudinal rate (1/ms) into channels."""

    gamma_intrinsic: float
    gamma_gd: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.gamma_intrinsic) or self.gamma_intrinsic < 0:
            raise ParameterError(
                f"gamma_intrinsic must be >= 0, got {self.gamma_intrinsic!r}")
        if not np.isfinite(self.gamma_gd) or self.gamma_gd < 0:
            raise ParameterError(f"gamma_gd must be >= 0, got {self.gamma_gd!r}")

    @property
    def gamma_total(self) -> float:
        return self.gamma_intrinsic + self.gamma_gd


def gd_relaxation_rate(sample: SurfaceSample) -> float:
    """Added relaxation rate (1/ms): coupling * geometry_factor * amount."""
    return sample.coupling_per_unit * sample.geometry_factor * sample.amount


def effective_t1(t1_intrinsic: float, gamma_gd: float) -> float:
    """Combine the intrinsic T1 (ms) with an added rate (1/ms) by rate additivity."""
    if not np.isfinite(t1_intrinsic) or t1_intrinsic <= 0:
        raise ParameterError(f"t1_intrinsic must be > 0, got {t1_intrinsic!r}")
    if not np.isfinite(gamma_gd) or gamma_gd < 0:
        raise ParameterError(f"gamma_gd must be >= 0, got {gamma_gd!r}")
    return 1.0 / (1.0 / t1_intrinsic + gamma_gd)


def amount_from_t1(t1_measured: float, t1_baseline: float,
                   sample_template: SurfaceSample) -> float:
    """Invert a measured T1 shift into a bound amount.

    Returns (1/t1_measured - 1/t1_baseline) / (coupling * geometry_factor),
    clamped at 0 when the measured T1 is at or above baseline.  A measured T1
    more than ``BASELINE_SLACK`` above baseline signals a fit or baseline
    problem and raises instead of silently clamping.
    """
    if not np.isfinite(t1_measured) or t1_measured <= 0:
        raise ParameterError(f"t1_measured must be > 0, got {t1_measured!r}")
    if not np.isfinite(t1_baseline) or t1_baseline <= 0:
        raise ParameterError(f"t1_baseline must be > 0, got {t1_baseline!r}")
    if t1_measured > t1_baseline * (1.0 + BASELINE_SLACK):
        raise InconsistencyError(
            f"measured T1 {t1_measured!r} ms exceeds baseline {t1_baseline!r} ms "
            f"by more than {BASELINE_SLACK:.0%}; check the fit or the baseline")
    coupling = sample_template.coupling_per_unit * sample_template.geometry_factor
    if coupling <= 0:
        raise ParameterError("coupling * geometry_factor must be > 0 to invert")
    if t1_measured >= t1_baseline:
        return 0.0
    return (1.0 / t1_measured - 1.0 / t1_baseline) / coupling
