"""Two-branch T1 pulse protocol: sequence construction, validation, execution.

A measurement point pairs two sequences that differ only by a microwave
swap pulse after initialization:

    branch 1:  Laser(init) -- Wait(tau) ----------- Laser(readout)+window
    branch 2:  Laser(init) -- MwPi -- Wait(tau) --- Laser(readout)+window

The per-tau observable is (sig1 - sig2)/(sig1 + sig2), which cancels
common-mode fluctuations and decays with the total longitudinal rate.

Durations are in seconds; the relaxation rate crossing this module's API is
in 1/ms (T1 scale) and is converted to 1/s at the spin-model boundary.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import spin
from .detector import DetectorParams, differential_signal, expected_counts, sample_counts
from .errors import ParameterError, SequenceError
from .gdnoise import RelaxationBudget
from .spin import PhotophysicsParams


class SegmentKind(enum.Enum):
    LASER = "laser"
    MW_PI = "mw_pi"
    WAIT = "wait"
    READOUT = "readout"


@dataclass(frozen=True)
class PulseSegment:
    """One timed element of a pulse sequence.

    LASER and WAIT carry a duration.  MW_PI is instantaneous and carries the
    swap fidelity.  READOUT is a zero-duration marker placed directly after
    the laser segment it samples; ``offset``/``length`` position the
    collection window relative to that laser segment's start.
    """

    kind: SegmentKind
    duration: float = 0.0
    fidelity: float | None = None
    offset: float | None = None
    length: float | None = None

    @staticmethod
    def laser(duration: float) -> "PulseSegment":
        return PulseSegment(SegmentKind.LASER, duration=duration)

    @staticmethod
    def mw_pi(fidelity: float) -> "PulseSegment":
        return PulseSegment(SegmentKind.MW_PI, duration=0.0, fidelity=fidelity)

    @staticmethod
    def wait(duration: float) -> "PulseSegment":
        return PulseSegment(SegmentKind.WAIT, duration=duration)

    @staticmethod
    def readout(offset: float, length: float) -> "PulseSegment":
        return PulseSegment(SegmentKind.READOUT, duration=0.0,
                            offset=offset, length=length)


@dataclass(frozen=True)
class PulseSequence:
    """Ordered segments plus the number of repetitions accumulated per point."""

    segments: tuple[PulseSegment, ...]
    shots: int = 1

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))


@dataclass(frozen=True)
class Violation:
    """One validation finding: which segment, what rule, human-readable text."""

    index: int
    code: str
    message: str


def default_tau_grid(tau_min: float = 10e-6, tau_max: float = 15e-3,
                     n_tau: int = 30, log_spacing: bool = True) -> np.ndarray:
    """Wait-time grid; log spacing conditions the exponential fit."""
    if not 0 < tau_min < tau_max:
        raise ParameterError(f"need 0 < tau_min < tau_max, got {tau_min!r}, {tau_max!r}")
    if n_tau < 2:
        raise ParameterError(f"n_tau must be >= 2, got {n_tau!r}")
    if log_spacing:
        return np.geomspace(tau_min, tau_max, n_tau)
    return np.linspace(tau_min, tau_max, n_tau)


@dataclass(frozen=True)
class T1Protocol:
    """Timing parameters of the tau sweep.

    ``readout_window`` is (offset, length) in seconds relative to the start
    of the readout laser pulse.
    """

    init_laser_duration: float = 10e-6
    readout_laser_duration: float = 2e-6
    readout_window: tuple[float, float] = (0.0, 300e-9)
    tau_grid: np.ndarray = field(default_factory=default_tau_grid)
    shots_per_point: int = 1
    pi_fidelity: float = 0.98

    def __post_init__(self):
        object.__setattr__(self, "tau_grid", np.asarray(self.tau_grid, dtype=float))
        grid = self.tau_grid
        if grid.ndim != 1 or len(grid) < 1:
            raise ParameterError("tau_grid must be a non-empty 1-D array")
        if np.any(grid <= 0):
            raise ParameterError("tau_grid entries must all be > 0")
        if np.any(np.diff(grid) <= 0):
            raise ParameterError("tau_grid must be strictly increasing")
        if self.shots_per_point < 1:
            raise ParameterError(f"shots_per_point must be >= 1, got {self.shots_per_point!r}")
        if not 0.0 <= self.pi_fidelity <= 1.0:
            raise ParameterError(f"pi_fidelity must be in [0, 1], got {self.pi_fidelity!r}")
        if self.init_laser_duration < 0 or self.readout_laser_duration < 0:
            raise ParameterError("laser durations must be >= 0")


@dataclass
class Trace:
    """Per-tau differential readout results, sorted by tau.

    ``sig1``, ``sig2`` and ``signal_err`` may be None for imported data that
    only carries (tau, signal).
    """

    tau_s: np.ndarray
    signal: np.ndarray
    signal_err: np.ndarray | None = None
    sig1: np.ndarray | None = None
    sig2: np.ndarray | None = None

    def __post_init__(self):
        self.tau_s = np.asarray(self.tau_s, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.signal_err is not None:
            self.signal_err = np.asarray(self.signal_err, dtype=float)
        if self.sig1 is not None:
            self.sig1 = np.asarray(self.sig1, dtype=float)
        if self.sig2 is not None:
            self.sig2 = np.asarray(self.sig2, dtype=float)
        self.validate()

    def validate(self):
        n = len(self.tau_s)
        for name in ("signal", "signal_err", "sig1", "sig2"):
            arr = getattr(self, name)
            if arr is not None and len(arr) != n:
                raise ParameterError(f"trace column {name} has length {len(arr)}, expected {n}")
        if n and np.any(np.diff(self.tau_s) <= 0):
            raise ParameterError("trace rows must be sorted by strictly increasing tau")
        if np.any(np.abs(self.signal) > 1.0 + 1e-12):
            raise ParameterError("signal entries must lie in [-1, 1]")
        for name in ("sig1", "sig2"):
            arr = getattr(self, name)
            if arr is not None and np.any(arr < 0):
                raise ParameterError(f"{name} counts must be >= 0")

    def __len__(self):
        return len(self.tau_s)


def build_t1_pair(protocol: T1Protocol, tau: float) -> tuple[PulseSequence, PulseSequence]:
    """The two branches measured at one tau; branch 2 adds the swap pulse."""
    if not np.isfinite(tau) or tau <= 0:
        raise ParameterError(f"tau must be > 0, got {tau!r}")
    offset, length = protocol.readout_window
    readout = [
        PulseSegment.laser(protocol.readout_laser_duration),
        PulseSegment.readout(offset, length),
    ]
    plain = [PulseSegment.laser(protocol.init_laser_duration),
             PulseSegment.wait(tau)] + readout
    swapped = [PulseSegment.laser(protocol.init_laser_duration),
               PulseSegment.mw_pi(protocol.pi_fidelity),
               PulseSegment.wait(tau)] + readout
    shots = protocol.shots_per_point
    return PulseSequence(tuple(plain), shots), PulseSequence(tuple(swapped), shots)


def validate(seq: PulseSequence) -> list[Violation]:
    """Structural checks; an empty list means the sequence is executable.

    Checks nonnegative durations, readout-window containment in a directly
    preceding laser segment, microwave pulses not splitting a laser/readout
    pair, and that a readout exists to produce counts.
    """
    violations: list[Violation] = []
    segments = seq.segments
    for i, seg in enumerate(segments):
        if seg.duration < 0 or not np.isfinite(seg.duration):
            violations.append(Violation(i, "duration",
                                        f"{seg.kind.value} segment has invalid duration {seg.duration!r}"))
        if seg.kind is SegmentKind.MW_PI:
            if seg.fidelity is None or not 0.0 <= seg.fidelity <= 1.0:
                violations.append(Violation(i, "fidelity",
                                            f"mw_pi fidelity {seg.fidelity!r} outside [0, 1]"))
            if 0 < i and segments[i - 1].kind is SegmentKind.LASER:
                nxt = segments[i + 1] if i + 1 < len(segments) else None
                if nxt is not None and nxt.kind is SegmentKind.READOUT:
                    violations.append(Violation(i, "mw_in_laser",
                                                "mw_pi splits a laser segment and its readout window"))
        if seg.kind is SegmentKind.READOUT:
            host = segments[i - 1] if i > 0 else None
            if host is None or host.kind is not SegmentKind.LASER:
                violations.append(Violation(i, "containment",
                                            "readout window must directly follow a laser segment"))
            else:
                offset = seg.offset if seg.offset is not None else -1.0
                length = seg.length if seg.length is not None else -1.0
                if offset < 0 or length <= 0 or offset + length > host.duration + 1e-15:
                    violations.append(Violation(
                        i, "containment",
                        f"readout window ({seg.offset!r}, {seg.length!r}) does not fit "
                        f"inside the {host.duration!r} s laser segment"))
    if not any(s.kind is SegmentKind.READOUT for s in segments):
        violations.append(Violation(len(segments) - 1 if segments else 0, "ordering",
                                    "sequence has no readout window"))
    return violations


def execute(seq: PulseSequence, phys: PhotophysicsParams, gamma1: float,
            detector: DetectorParams, rng_seed) -> float:
    """Run one sequence and return the readout-window counts.

    The spin state starts from the laser-on steady state (so the init laser
    is simulated, not assumed perfect), propagates piecewise-constant through
    the segments, and the expected photon number collected in the readout
    window is converted to counts with shot noise (deterministic given
    ``rng_seed``).  ``gamma1`` is the total longitudinal rate in 1/ms.
    """
    problems = validate(seq)
    if problems:
        raise SequenceError("; ".join(v.message for v in problems))
    if gamma1 < 0 or not np.isfinite(gamma1):
        raise ParameterError(f"gamma1 must be >= 0, got {gamma1!r}")
    rng = _as_generator(rng_seed)

    gamma1_per_s = gamma1 * 1e3
    m_on = spin.build_rate_matrix(phys, laser_on=True, gamma1=gamma1_per_s)
    m_off = spin.build_rate_matrix(phys, laser_on=False, gamma1=gamma1_per_s)
    state = spin.steady_state(m_on)

    window_photons = 0.0
    window_length = 0.0
    segments = seq.segments
    i = 0
    while i < len(segments):
        seg = segments[i]
        if seg.kind is SegmentKind.LASER:
            nxt = segments[i + 1] if i + 1 < len(segments) else None
            if nxt is not None and nxt.kind is SegmentKind.READOUT:
                state = spin.propagate(state, m_on, nxt.offset)
                state, photons = spin.fluorescence_integral(state, m_on, phys, nxt.length)
                window_photons += photons
                window_length += nxt.length
                remainder = seg.duration - nxt.offset - nxt.length
                state = spin.propagate(state, m_on, remainder)
                i += 2
                continue
            state = spin.propagate(state, m_on, seg.duration)
        elif seg.kind is SegmentKind.WAIT:
            state = spin.propagate(state, m_off, seg.duration)
        elif seg.kind is SegmentKind.MW_PI:
            state = spin.apply_pi_pulse(state, seg.fidelity)
        i += 1

    mean = expected_counts(window_photons, detector, window_length, seq.shots)
    return sample_counts(mean, rng, noiseless=detector.noiseless)


def sweep(protocol: T1Protocol, phys: PhotophysicsParams,
          budget: RelaxationBudget, detector: DetectorParams,
          rng_seed: int, workers: int = 1) -> Trace:
    """Execute both branches over the tau grid and assemble a Trace.

    Per-tau randomness is seeded from (rng_seed, tau index, branch), so the
    result is bit-identical regardless of scheduling or ``workers``.
    """
    gamma1 = budget.gamma_total

    def run_point(i: int) -> tuple[float, float]:
        tau = float(protocol.tau_grid[i])
        seq1, seq2 = build_t1_pair(protocol, tau)
        sig1 = execute(seq1, phys, gamma1, detector,
                       np.random.SeedSequence((rng_seed, i, 0)))
        sig2 = execute(seq2, phys, gamma1, detector,
                       np.random.SeedSequence((rng_seed, i, 1)))
        return sig1, sig2

    n = len(protocol.tau_grid)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_point, range(n)))
    else:
        results = [run_point(i) for i in range(n)]

    sig1 = np.array([r[0] for r in results])
    sig2 = np.array([r[1] for r in results])
    sig = np.empty(n)
    err = np.empty(n)
    for i in range(n):
        sig[i], err[i] = differential_signal(sig1[i], sig2[i])
    return Trace(tau_s=protocol.tau_grid.copy(), signal=sig, signal_err=err,
                 sig1=sig1, sig2=sig2)


def _as_generator(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.Generator(np.random.PCG64(rng_seed))
