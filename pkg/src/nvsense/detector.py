"""Photon counting: expected counts, shot noise, and the differential signal.

The detector is abstracted to photon counts with Poisson statistics as the
fundamental noise floor.  ``background_rate`` covers everything that is not
spin-modulated fluorescence (leakage light plus the unmodulated part of the
ensemble emission), which is why it can legitimately dominate the counts in
an ensemble measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateReadoutError, ParameterError

#: Above this mean, Poisson sampling switches to the normal approximation
#: (mean, sqrt(mean)); below it, exact Poisson draws are used.
POISSON_NORMAL_CUTOFF = 1e4


@dataclass(frozen=True)
class DetectorParams:
    """Collection efficiency, background level, and the noiseless-mode flag.

    ``noiseless=True`` makes :func:`sample_counts` return expected counts
    unsampled, for analytic closed-loop tests.
    """

    collection_efficiency: float
    background_rate: float = 0.0
    noiseless: bool = False

    def __post_init__(self):
        eff = self.collection_efficiency
        if not np.isfinite(eff) or not 0.0 < eff <= 1.0:
            raise ParameterError(
                f"collection_efficiency must be in (0, 1], got {eff!r}")
        if not np.isfinite(self.background_rate) or self.background_rate < 0:
            raise ParameterError(
                f"background_rate must be finite and >= 0, got {self.background_rate!r}")


def expected_counts(fluor_integral: float, params: DetectorParams,
                    window: float, shots: int) -> float:
    """Mean detected counts: shots * (efficiency*photons + background*window)."""
    if fluor_integral < 0 or window < 0 or shots < 0:
        raise ParameterError("fluor_integral, window and shots must all be >= 0")
    per_shot = (params.collection_efficiency * fluor_integral
                + params.background_rate * window)
    return float(shots) * per_shot


def sample_counts(mean: float, rng: np.random.Generator,
                  noiseless: bool = False) -> float:
    """Draw shot-noise counts around ``mean``.

    Exact Poisson below ``POISSON_NORMAL_CUTOFF``; above it a rounded normal
    (mean, sqrt(mean)) clipped at zero, which is indistinguishable at that
    scale and avoids 64-bit Poisson limitations.  With ``noiseless`` the mean
    is returned unchanged.
    """
    if not np.isfinite(mean) or mean < 0:
        raise ParameterError(f"mean must be finite and >= 0, got {mean!r}")
    if noiseless:
        return float(mean)
    if mean == 0.0:
        return 0.0
    if mean <= POISSON_NORMAL_CUTOFF:
        return float(rng.poisson(mean))
    draw = rng.normal(mean, np.sqrt(mean))
    return float(max(0.0, np.rint(draw)))


def differential_signal(sig1: float, sig2: float) -> tuple[float, float]:
    """Common-mode-rejecting signal (sig1-sig2)/(sig1+sig2) and its shot-noise error.

    The error is first-order Poisson propagation,
    2*sqrt(sig1*sig2*(sig1+sig2)) / (sig1+sig2)^2, adequate whenever
    sig1+sig2 >> 1 (supported regime: at least ~100 summed counts).
    """
    if sig1 < 0 or sig2 < 0:
        raise ParameterError(f"counts must be >= 0, got ({sig1!r}, {sig2!r})")
    total = sig1 + sig2
    if total == 0:
        raise DegenerateReadoutError("sig1 + sig2 = 0; readout produced no counts")
    signal = (sig1 - sig2) / total
    err = 2.0 * np.sqrt(sig1 * sig2 * total) / total**2
    return float(signal), float(err)
