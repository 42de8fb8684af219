"""Pulse sequence construction, validation rules, and sweep execution."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvsense.config import DETECTOR_DEFAULTS, PHOTOPHYSICS_PRESETS
from nvsense.detector import DetectorParams
from nvsense.errors import ParameterError, SequenceError
from nvsense.fitting import fit_exponential
from nvsense.gdnoise import RelaxationBudget
from nvsense.sequence import (PulseSegment, PulseSequence, SegmentKind,
                              T1Protocol, Trace, build_t1_pair,
                              default_tau_grid, execute, sweep, validate)
from nvsense.spin import PhotophysicsParams

PHYS = PhotophysicsParams(**PHOTOPHYSICS_PRESETS["default"])


def detector(noiseless=True, **overrides):
    base = dict(DETECTOR_DEFAULTS)
    base["noiseless"] = noiseless
    base.update(overrides)
    return DetectorParams(**base)


def protocol(**overrides):
    base = dict(shots_per_point=1_000_000_000)
    base.update(overrides)
    return T1Protocol(**base)


class TestDefaultTauGrid:
    def test_defaults(self):
        grid = default_tau_grid()
        assert len(grid) == 30
        assert grid[0] == pytest.approx(10e-6, rel=1e-12)
        assert grid[-1] == pytest.approx(15e-3, rel=1e-12)

    def test_log_spacing_has_constant_ratio(self):
        grid = default_tau_grid(1e-5, 1e-2, 16)
        ratios = grid[1:] / grid[:-1]
        assert np.allclose(ratios, ratios[0], rtol=1e-9)

    def test_linear_spacing_has_constant_step(self):
        grid = default_tau_grid(1e-5, 1e-2, 16, log_spacing=False)
        steps = np.diff(grid)
        assert np.allclose(steps, steps[0], rtol=1e-9)

    @given(st.floats(min_value=1e-7, max_value=1e-4),
           st.floats(min_value=2.0, max_value=1e3),
           st.integers(min_value=2, max_value=200))
    def test_grid_properties(self, tau_min, span, n):
        grid = default_tau_grid(tau_min, tau_min * span, n)
        assert len(grid) == n
        assert np.all(np.diff(grid) > 0)
        assert grid[0] == pytest.approx(tau_min, rel=1e-9)
        assert grid[-1] == pytest.approx(tau_min * span, rel=1e-9)

    @pytest.mark.parametrize("kwargs", [
        {"tau_min": 0.0},
        {"tau_min": -1e-6},
        {"tau_min": 2e-3, "tau_max": 1e-3},
        {"n_tau": 1},
    ])
    def test_rejects_bad_inputs(self, kwargs):
        base = dict(tau_min=1e-5, tau_max=1e-2, n_tau=10)
        base.update(kwargs)
        with pytest.raises(ParameterError):
            default_tau_grid(**base)


class TestT1Protocol:
    def test_defaults_are_valid(self):
        p = T1Protocol()
        assert p.readout_window == (0.0, 300e-9)
        assert len(p.tau_grid) == 30

    @pytest.mark.parametrize("kwargs", [
        {"tau_grid": []},
        {"tau_grid": [1e-3, 1e-3]},
        {"tau_grid": [2e-3, 1e-3]},
        {"tau_grid": [-1e-3, 1e-3]},
        {"shots_per_point": 0},
        {"pi_fidelity": 1.5},
        {"pi_fidelity": -0.1},
        {"init_laser_duration": -1e-6},
        {"readout_laser_duration": -1e-6},
    ])
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(ParameterError):
            T1Protocol(**kwargs)


class TestTrace:
    def test_len_and_fields(self):
        tr = Trace(tau_s=[1e-5, 1e-4], signal=[0.1, 0.05])
        assert len(tr) == 2
        assert tr.signal_err is None

    @pytest.mark.parametrize("kwargs", [
        {"tau_s": [1e-4, 1e-5], "signal": [0.1, 0.05]},
        {"tau_s": [1e-5, 1e-4], "signal": [0.1]},
        {"tau_s": [1e-5, 1e-4], "signal": [0.1, 1.5]},
        {"tau_s": [1e-5, 1e-4], "signal": [0.1, 0.05], "sig1": [-1.0, 2.0]},
    ])
    def test_rejects_inconsistent_rows(self, kwargs):
        with pytest.raises(ParameterError):
            Trace(**kwargs)


class TestBuildT1Pair:
    def test_branches_differ_only_by_swap_pulse(self):
        plain, swapped = build_t1_pair(protocol(), 1e-3)
        kinds1 = [s.kind for s in plain.segments]
        kinds2 = [s.kind for s in swapped.segments]
        assert SegmentKind.MW_PI not in kinds1
        assert kinds2.count(SegmentKind.MW_PI) == 1
        # removing the swap pulse recovers branch 1 exactly
        stripped = tuple(s for s in swapped.segments
                         if s.kind is not SegmentKind.MW_PI)
        assert stripped == plain.segments
        assert plain.shots == swapped.shots

    def test_both_branches_validate_clean(self):
        plain, swapped = build_t1_pair(protocol(), 5e-4)
        assert validate(plain) == []
        assert validate(swapped) == []

    def test_wait_carries_tau(self):
        tau = 7.3e-4
        plain, _ = build_t1_pair(protocol(), tau)
        waits = [s for s in plain.segments if s.kind is SegmentKind.WAIT]
        assert len(waits) == 1
        assert waits[0].duration == tau

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ParameterError):
            build_t1_pair(protocol(), 0.0)
        with pytest.raises(ParameterError):
            build_t1_pair(protocol(), -1e-4)


class TestValidate:
    def test_readout_after_wait_is_containment_violation(self):
        seq = PulseSequence((
            PulseSegment.laser(10e-6),
            PulseSegment.wait(1e-3),
            PulseSegment.readout(0.0, 300e-9),
        ))
        violations = validate(seq)
        assert len(violations) == 1
        assert violations[0].code == "containment"
        assert violations[0].index == 2

    def test_negative_wait_is_duration_violation(self):
        plain, _ = build_t1_pair(protocol(), 1e-3)
        segments = list(plain.segments)
        segments[1] = PulseSegment.wait(-1e-4)
        violations = validate(PulseSequence(tuple(segments), plain.shots))
        assert len(violations) == 1
        assert violations[0].code == "duration"
        assert violations[0].index == 1

    def test_swap_pulse_splitting_readout_is_flagged(self):
        seq = PulseSequence((
            PulseSegment.laser(10e-6),
            PulseSegment.wait(1e-3),
            PulseSegment.laser(2e-6),
            PulseSegment.mw_pi(0.98),
            PulseSegment.readout(0.0, 300e-9),
        ))
        codes = {v.code for v in validate(seq)}
        assert "mw_in_laser" in codes

    def test_missing_readout_is_flagged(self):
        seq = PulseSequence((
            PulseSegment.laser(10e-6),
            PulseSegment.wait(1e-3),
            PulseSegment.laser(2e-6),
        ))
        violations = validate(seq)
        assert len(violations) == 1
        assert violations[0].code == "ordering"

    def test_oversized_window_is_containment_violation(self):
        plain, _ = build_t1_pair(
            protocol(readout_laser_duration=2e-6, readout_window=(0.0, 5e-6)),
            1e-3)
        violations = validate(plain)
        assert len(violations) == 1
        assert violations[0].code == "containment"

    def test_bad_fidelity_is_flagged(self):
        seq = PulseSequence((
            PulseSegment.laser(10e-6),
            PulseSegment(SegmentKind.MW_PI, fidelity=1.2),
            PulseSegment.wait(1e-3),
            PulseSegment.laser(2e-6),
            PulseSegment.readout(0.0, 300e-9),
        ))
        violations = validate(seq)
        assert len(violations) == 1
        assert violations[0].code == "fidelity"


class TestExecute:
    def test_invalid_sequence_raises(self):
        seq = PulseSequence((PulseSegment.laser(10e-6),
                             PulseSegment.wait(-1e-3)))
        with pytest.raises(SequenceError):
            execute(seq, PHYS, 1.0, detector(), rng_seed=0)

    def test_counts_linear_in_shots_when_noiseless(self):
        plain, _ = build_t1_pair(protocol(shots_per_point=1_000_000), 1e-3)
        bigger = PulseSequence(plain.segments, shots=10_000_000)
        c1 = execute(plain, PHYS, 1.0, detector(), rng_seed=0)
        c10 = execute(bigger, PHYS, 1.0, detector(), rng_seed=0)
        assert c10 == pytest.approx(10.0 * c1, rel=1e-12)

    def test_swap_branch_is_darker_at_short_tau(self):
        # polarized state is bright, swapped state is dark, and at tau much
        # shorter than T1 almost no repolarization happens in the wait
        p = protocol(pi_fidelity=1.0)
        plain, swapped = build_t1_pair(p, 1e-7)
        c1 = execute(plain, PHYS, 1.0 / 3.0, detector(), rng_seed=0)
        c2 = execute(swapped, PHYS, 1.0 / 3.0, detector(), rng_seed=1)
        assert c1 > c2

    def test_contrast_vanishes_at_long_tau(self):
        p = protocol(pi_fidelity=0.98)
        plain, swapped = build_t1_pair(p, 0.2)
        gamma1 = 1.0  # 1/ms, so tau = 200 * T1
        c1 = execute(plain, PHYS, gamma1, detector(), rng_seed=0)
        c2 = execute(swapped, PHYS, gamma1, detector(), rng_seed=1)
        assert c1 > 0
        assert abs(c1 - c2) / (c1 + c2) < 1e-9

    def test_noisy_execution_is_seed_deterministic(self):
        plain, _ = build_t1_pair(protocol(shots_per_point=1000), 1e-3)
        a = execute(plain, PHYS, 1.0, detector(noiseless=False), rng_seed=7)
        b = execute(plain, PHYS, 1.0, detector(noiseless=False), rng_seed=7)
        c = execute(plain, PHYS, 1.0, detector(noiseless=False), rng_seed=8)
        assert a == b
        assert a != c

    def test_rejects_negative_gamma(self):
        plain, _ = build_t1_pair(protocol(), 1e-3)
        with pytest.raises(ParameterError):
            execute(plain, PHYS, -1.0, detector(), rng_seed=0)


class TestSweep:
    def test_noiseless_closed_loop_recovers_t1(self):
        budget = RelaxationBudget(gamma_intrinsic=1.0 / 2.856)
        trace = sweep(protocol(), PHYS, budget, detector(), rng_seed=0)
        fit = fit_exponential(trace)
        assert fit.converged
        assert fit.t1_ms == pytest.approx(2.856, rel=2e-3)

    def test_added_relaxation_shortens_fitted_t1(self):
        # the two rate contributions add in the exponent: fitted T1 matches
        # 1/(gamma_intrinsic + gamma_gd)
        gamma_gd = 1.0 / 0.77 - 1.0 / 2.856
        budget = RelaxationBudget(gamma_intrinsic=1.0 / 2.856, gamma_gd=gamma_gd)
        p = protocol(tau_grid=np.geomspace(8e-6, 3e-3, 25))
        trace = sweep(p, PHYS, budget, detector(), rng_seed=0)
        fit = fit_exponential(trace)
        assert fit.converged
        assert fit.t1_ms == pytest.approx(0.77, rel=0.01)

    def test_noiseless_signal_is_monotone_exponential(self):
        t1_ms = 3.0
        budget = RelaxationBudget(gamma_intrinsic=1.0 / t1_ms)
        grid = np.geomspace(0.01 * t1_ms * 1e-3, 3.0 * t1_ms * 1e-3, 20)
        trace = sweep(protocol(tau_grid=grid), PHYS, budget, detector(),
                      rng_seed=0)
        assert np.all(np.diff(trace.signal) < 0)
        # anchor the amplitude on the first point; shape must stay within
        # 0.5% of a pure exponential across the whole span
        tau_ms = trace.tau_s * 1e3
        model = trace.signal[0] * np.exp(-(tau_ms - tau_ms[0]) / t1_ms)
        assert np.max(np.abs(trace.signal / model - 1.0)) < 5e-3

    def test_equal_seeds_are_bit_identical(self):
        budget = RelaxationBudget(gamma_intrinsic=1.0 / 3.0)
        p = protocol(tau_grid=np.geomspace(1e-5, 5e-3, 8),
                     shots_per_point=100_000)
        a = sweep(p, PHYS, budget, detector(noiseless=False), rng_seed=12)
        b = sweep(p, PHYS, budget, detector(noiseless=False), rng_seed=12)
        assert np.array_equal(a.sig1, b.sig1)
        assert np.array_equal(a.sig2, b.sig2)
        assert np.array_equal(a.signal, b.signal)
        c = sweep(p, PHYS, budget, detector(noiseless=False), rng_seed=13)
        assert not np.array_equal(a.signal, c.signal)

    def test_worker_count_does_not_change_results(self):
        budget = RelaxationBudget(gamma_intrinsic=1.0 / 3.0)
        p = protocol(tau_grid=np.geomspace(1e-5, 5e-3, 8),
                     shots_per_point=100_000)
        serial = sweep(p, PHYS, budget, detector(noiseless=False), rng_seed=5)
        threaded = sweep(p, PHYS, budget, detector(noiseless=False),
                         rng_seed=5, workers=3)
        assert np.array_equal(serial.sig1, threaded.sig1)
        assert np.array_equal(serial.sig2, threaded.sig2)
        assert np.array_equal(serial.signal, threaded.signal)

    def test_reported_error_bars_match_observed_scatter(self):
        # repeat the same noisy sweep under many seeds: the per-tau spread of
        # the signal must agree with the propagated error bar within 2x
        budget = RelaxationBudget(gamma_intrinsic=1.0 / 3.0)
        p = protocol(tau_grid=np.geomspace(5e-5, 3e-3, 5),
                     shots_per_point=1_000_000)
        det = detector(noiseless=False)
        signals = []
        errs = []
        for seed in range(120):
            tr = sweep(p, PHYS, budget, det, rng_seed=seed)
            signals.append(tr.signal)
            errs.append(tr.signal_err)
        spread = np.std(signals, axis=0, ddof=1)
        typical = np.mean(errs, axis=0)
        ratio = spread / typical
        assert np.all(ratio > 0.5)
        assert np.all(ratio < 2.0)
