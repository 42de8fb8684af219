"""Five-level NV spin photophysics: rate matrices and population dynamics.

Level ordering used throughout (index into population vectors and rate
matrices)::

    0  g0   ground, m_s = 0
    1  g1   ground, m_s = +-1 (degenerate pair lumped into one level)
    2  e0   excited, m_s = 0
    3  e1   excited, m_s = +-1 (lumped)
    4  s    metastable singlet

Because g1 lumps two sublevels, the thermal-equilibrium distribution over
the ground manifold is (1/3, 2/3) in these coordinates.  Longitudinal
relaxation at rate ``gamma1`` is modelled as uniform mixing toward that
equilibrium, so any ground-population imbalance decays as exp(-gamma1*t)
with no model-dependent prefactor.

All rates are in 1/s and durations in s.  Populations are plain numpy
arrays of length 5; rate matrices are 5x5 generators with zero column sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import DegeneracyError, ParameterError

N_LEVELS = 5
G0, G1, E0, E1, S = range(N_LEVELS)

#: Equilibrium shares of the ground manifold in lumped (g0, g1) coordinates.
GROUND_EQUILIBRIUM = np.array([1.0 / 3.0, 2.0 / 3.0])

#: Guard for expm: duration * max|rate| above this raises instead of risking
#: a meaningless exponential.
PROPAGATION_NORM_CAP = 1e9


@dataclass(frozen=True)
class PhotophysicsParams:
    """Piecewise-constant transition rates of the five-level NV model.

    Parameters
    ----------
    pump_rate : float
        Laser-on ground->excited pumping rate (1/s), spin conserving.
    radiative_rate : float
        Excited->ground radiative decay rate (1/s), spin conserving.
    isc_rate_ms0 : float
        Intersystem crossing rate e0->singlet (1/s).
    isc_rate_ms1 : float
        Intersystem crossing rate e1->singlet (1/s).  Must exceed
        ``isc_rate_ms0`` for optical polarization into m_s = 0.
    singlet_decay_rate : float
        Singlet->ground decay rate (1/s).
    singlet_branch_to_ms0 : float
        Fraction of singlet decay feeding g0 (rest feeds g1), in [0, 1].
    zfs_ghz : float
        Zero-field splitting in GHz.  Informational only; no operation
        consumes it because resonance physics is out of scope.
    """

    pump_rate: float
    radiative_rate: float
    isc_rate_ms0: float
    isc_rate_ms1: float
    singlet_decay_rate: float
    singlet_branch_to_ms0: float
    zfs_ghz: float = 2.87

    def __post_init__(self):
        for name in ("pump_rate", "radiative_rate", "isc_rate_ms0",
                     "isc_rate_ms1", "singlet_decay_rate"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")
        beta = self.singlet_branch_to_ms0
        if not np.isfinite(beta) or not 0.0 <= beta <= 1.0:
            raise ParameterError(
                f"singlet_branch_to_ms0 must be in [0, 1], got {beta!r}")
        if not self.isc_rate_ms1 > self.isc_rate_ms0:
            raise ParameterError(
                "isc_rate_ms1 must exceed isc_rate_ms0 "
                f"({self.isc_rate_ms1!r} <= {self.isc_rate_ms0!r}); the m_s=+-1 "
                "branch must cross to the singlet faster for optical polarization")


def validate_population(p, tol=1e-12) -> np.ndarray:
    """Check a population vector and return it as a float array.

    Entries must lie in [0, 1] (within ``tol``) and sum to 1 within ``tol``.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (N_LEVELS,):
        raise ParameterError(f"population vector must have shape (5,), got {p.shape}")
    if np.any(p < -tol) or np.any(p > 1.0 + tol):
        raise ParameterError(f"population entries outside [0, 1]: {p}")
    total = p.sum()
    if abs(total - 1.0) > max(tol, 1e-12):
        raise ParameterError(f"population sum {total!r} differs from 1 beyond tolerance")
    return p


def validate_rate_matrix(m, tol=1e-12) -> np.ndarray:
    """Check generator invariants: zero column sums, nonnegative off-diagonals."""
    m = np.asarray(m, dtype=float)
    if m.shape != (N_LEVELS, N_LEVELS):
        raise ParameterError(f"rate matrix must be 5x5, got {m.shape}")
    scale = max(np.abs(m).max(), 1.0)
    colsums = m.sum(axis=0)
    if np.any(np.abs(colsums) > tol * scale):
        raise ParameterError(f"rate-matrix columns do not sum to 0: {colsums}")
    off = m[~np.eye(N_LEVELS, dtype=bool)]
    if np.any(off < -tol * scale):
        raise ParameterError("rate matrix has negative off-diagonal entries")
    return m


def build_rate_matrix(params: PhotophysicsParams, laser_on: bool,
                      gamma1: float) -> np.ndarray:
    """Assemble the 5x5 population-ODE generator dp/dt = M p.

    Combines laser pumping (iff ``laser_on``), radiative decay, spin-dependent
    intersystem crossing, singlet decay split by the branching fraction, and
    ground-manifold relaxation as uniform mixing toward (1/3, 2/3) at rate
    ``gamma1`` (1/s).
    """
    if not isinstance(params, PhotophysicsParams):
        raise ParameterError("params must be a PhotophysicsParams instance")
    if not np.isfinite(gamma1) or gamma1 < 0:
        raise ParameterError(f"gamma1 must be finite and >= 0, got {gamma1!r}")

    m = np.zeros((N_LEVELS, N_LEVELS))

    def add_rate(src, dst, rate):
        m[dst, src] += rate
        m[src, src] -= rate

    if laser_on:
        add_rate(G0, E0, params.pump_rate)
        add_rate(G1, E1, params.pump_rate)
    add_rate(E0, G0, params.radiative_rate)
    add_rate(E1, G1, params.radiative_rate)
    add_rate(E0, S, params.isc_rate_ms0)
    add_rate(E1, S, params.isc_rate_ms1)
    beta = params.singlet_branch_to_ms0
    add_rate(S, G0, params.singlet_decay_rate * beta)
    add_rate(S, G1, params.singlet_decay_rate * (1.0 - beta))

    # Uniform mixing toward pi_eq over (g0, g1): dp_g/dt -= gamma1*(p_g - pi_eq*sum).
    pi0, pi1 = GROUND_EQUILIBRIUM
    m[G0, G0] += -gamma1 * (1.0 - pi0)
    m[G0, G1] += gamma1 * pi0
    m[G1, G0] += gamma1 * pi1
    m[G1, G1] += -gamma1 * (1.0 - pi1)

    return m


def propagate(state, m, duration: float) -> np.ndarray:
    """Evolve a population vector for ``duration`` seconds under generator ``m``.

    Uses the exact matrix exponential (scaling-and-squaring Pade via scipy),
    which sidesteps the stiffness of rates spanning ~1/s to ~1e8/s.
    """
    p = validate_population(state)
    m = np.asarray(m, dtype=float)
    if not np.isfinite(duration) or duration < 0:
        raise ParameterError(f"duration must be finite and >= 0, got {duration!r}")
    if duration == 0.0:
        return p.copy()
    max_rate = np.abs(m).max()
    if duration * max_rate > PROPAGATION_NORM_CAP:
        raise ParameterError(
            f"duration*max|rate| = {duration * max_rate:.3g} exceeds cap "
            f"{PROPAGATION_NORM_CAP:.0e}")
    out = expm(m * duration) @ p
    return _clean_population(out)


def _clean_population(p: np.ndarray) -> np.ndarray:
    """Clamp tiny negative round-off and renormalize; reject real violations."""
    if p.min() < -1e-12:
        raise ParameterError(f"propagated population went negative: {p}")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if not np.isfinite(total) or abs(total - 1.0) > 1e-9:
        raise ParameterError(f"propagated population sum {total!r} is not 1")
    return p / total


def apply_pi_pulse(state, fidelity: float) -> np.ndarray:
    """Swap the ground populations with the given fidelity.

    p_g0' = (1-f) p_g0 + f p_g1 and vice versa; excited and singlet levels
    are untouched.  The pulse is instantaneous.
    """
    p = validate_population(state).copy()
    if not np.isfinite(fidelity) or not 0.0 <= fidelity <= 1.0:
        raise ParameterError(f"fidelity must be in [0, 1], got {fidelity!r}")
    g0, g1 = p[G0], p[G1]
    p[G0] = (1.0 - fidelity) * g0 + fidelity * g1
    p[G1] = (1.0 - fidelity) * g1 + fidelity * g0
    return p


def steady_state(m) -> np.ndarray:
    """Return the unique normalized stationary population of generator ``m``.

    Raises
    ------
    DegeneracyError
        If the kernel of ``m`` is not one-dimensional (multiple steady
        states) or the kernel vector is not sign-definite.
    """
    m = np.asarray(m, dtype=float)
    scale = max(np.abs(m).max(), 1.0)
    _, svals, vt = np.linalg.svd(m / scale)
    null_tol = 1e-9
    n_null = int(np.sum(svals < null_tol))
    if n_null != 1:
        raise DegeneracyError(
            f"rate matrix has {n_null} (near-)null directions; steady state "
            "is not unique")
    v = vt[-1]
    total = v.sum()
    if abs(total) < 1e-12:
        raise DegeneracyError("steady-state kernel vector has zero total population")
    v = v / total
    if v.min() < -1e-9:
        raise DegeneracyError(f"steady-state vector is not nonnegative: {v}")
    return _clean_population(np.clip(v, 0.0, None))


def fluorescence_rate(state, params: PhotophysicsParams) -> float:
    """Instantaneous photon emission rate (photons/s).

    Only triplet radiative decay contributes; singlet emission lies outside
    the collection band and is excluded.
    """
    p = validate_population(state)
    return float(params.radiative_rate * (p[E0] + p[E1]))


def fluorescence_integral(state, m, params: PhotophysicsParams,
                          duration: float) -> tuple[np.ndarray, float]:
    """Propagate for ``duration`` while accumulating emitted photons.

    Augments the generator with an accumulator row for the emission
    functional radiative_rate*(p_e0 + p_e1), so the time integral is exact
    (one 6x6 matrix exponential) rather than quadrature-approximated.

    Returns
    -------
    (state_after, photons) :
        Final population vector and the expected photon count emitted
        during the interval.
    """
    p = validate_population(state)
    m = np.asarray(m, dtype=float)
    if not np.isfinite(duration) or duration < 0:
        raise ParameterError(f"duration must be finite and >= 0, got {duration!r}")
    if duration == 0.0:
        return p.copy(), 0.0
    max_rate = np.abs(m).max()
    if duration * max_rate > PROPAGATION_NORM_CAP:
        raise ParameterError(
            f"duration*max|rate| = {duration * max_rate:.3g} exceeds cap "
            f"{PROPAGATION_NORM_CAP:.0e}")
    aug = np.zeros((N_LEVELS + 1, N_LEVELS + 1))
    aug[:N_LEVELS, :N_LEVELS] = m
    aug[N_LEVELS, E0] = params.radiative_rate
    aug[N_LEVELS, E1] = params.radiative_rate
    vec = np.concatenate([p, [0.0]])
    out = expm(aug * duration) @ vec
    return _clean_population(out[:N_LEVELS]), float(out[N_LEVELS])
