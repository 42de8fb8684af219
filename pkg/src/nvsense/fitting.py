"""Single-exponential T1 extraction: damped least squares plus a brute-force oracle.

The decay model is fixed as

    S(tau) = A * exp(-tau / T1) + C

with a free offset C absorbing residual common-mode imbalance.  The primary
fitter is a Levenberg-Marquardt iteration with the analytic Jacobian;
:func:`oracle_fit` cross-checks it by brute force over a T1 grid, solving the
exactly linear (A, C) subproblem at each grid point (variable projection).

T1 is handled in ms; traces carry tau in seconds and are converted on entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BootstrapUnstableError, InsufficientDataError, ParameterError
from .sequence import Trace

#: T1 search bounds (ms) keeping the damped iteration out of flat regions.
T1_BOUNDS_MS = (1e-4, 1e4)


@dataclass
class FitResult:
    """Fitted (A, C, T1) with uncertainty and convergence diagnostics.

    ``covariance`` is the 3x3 matrix over (amplitude, offset, t1_ms), from
    the Jacobian at the optimum scaled by the reduced chi-square.
    """

    amplitude: float
    offset: float
    t1_ms: float
    t1_err_ms: float
    covariance: np.ndarray
    reduced_chi2: float
    iterations: int
    converged: bool
    bound_hit: bool = False

    def model(self, tau_s) -> np.ndarray:
        """Evaluate the fitted curve at tau values given in seconds."""
        return exp_decay(np.asarray(tau_s, dtype=float) * 1e3,
                         self.amplitude, self.offset, self.t1_ms)


@dataclass(frozen=True)
class OracleGridSpec:
    """T1 grid for the brute-force oracle.

    By default the grid spans the trace's tau range expanded by
    ``expand`` = (0.1, 10), log-spaced with at least 200 points.  An
    ``explicit_grid`` (ms) overrides span and count.
    """

    n_points: int = 200
    expand: tuple[float, float] = (0.1, 10.0)
    explicit_grid: tuple[float, ...] | None = None

    def grid_ms(self, tau_ms: np.ndarray) -> np.ndarray:
        if self.explicit_grid is not None:
            grid = np.asarray(self.explicit_grid, dtype=float)
            if grid.ndim != 1 or len(grid) < 1 or np.any(grid <= 0):
                raise ParameterError("explicit oracle grid must be positive and 1-D")
            return grid
        if self.n_points < 200:
            raise ParameterError("oracle grid needs >= 200 points")
        lo = tau_ms.min() * self.expand[0]
        hi = tau_ms.max() * self.expand[1]
        return np.geomspace(lo, hi, self.n_points)


@dataclass
class OracleResult:
    amplitude: float
    offset: float
    t1_ms: float
    cost: float
    grid_ms: np.ndarray = field(repr=False)

    @property
    def grid_step_ratio(self) -> float:
        """Multiplicative spacing between adjacent grid points."""
        if len(self.grid_ms) < 2:
            return 1.0
        return float(np.exp(np.mean(np.diff(np.log(self.grid_ms)))))


def exp_decay(tau_ms, amplitude, offset, t1_ms) -> np.ndarray:
    """The decay model A*exp(-tau/T1) + C, everything in ms."""
    tau_ms = np.asarray(tau_ms, dtype=float)
    with np.errstate(under="ignore"):
        return amplitude * np.exp(-tau_ms / t1_ms) + offset


def exp_decay_jacobian(tau_ms, amplitude, offset, t1_ms) -> np.ndarray:
    """Analytic Jacobian of :func:`exp_decay` wrt (amplitude, offset, t1_ms)."""
    tau_ms = np.asarray(tau_ms, dtype=float)
    with np.errstate(under="ignore"):
        e = np.exp(-tau_ms / t1_ms)
    jac = np.empty((len(tau_ms), 3))
    jac[:, 0] = e
    jac[:, 1] = 1.0
    jac[:, 2] = amplitude * tau_ms / t1_ms**2 * e
    return jac


def _weights_from_errors(err: np.ndarray | None, n: int) -> np.ndarray:
    """1/err weights when every error is usable, else uniform (unweighted)."""
    if err is None:
        return np.ones(n)
    err = np.asarray(err, dtype=float)
    if np.all(np.isfinite(err)) and np.all(err > 0):
        return 1.0 / err
    return np.ones(n)


def initial_guess(trace: Trace) -> tuple[float, float, float]:
    """Cheap (A, C, T1) starting point from trace geometry.

    C is the mean of the last 10% of points, A the first signal minus C, and
    T1 comes from the least-squares line through log(signal - C) over the
    points where signal - C clears 3x the stated error.
    """
    n = len(trace)
    if n < 4:
        raise InsufficientDataError(f"need >= 4 points for a guess, got {n}")
    tau_ms = trace.tau_s * 1e3
    if tau_ms.max() < 10.0 * tau_ms.min():
        raise InsufficientDataError("tau grid must span at least one decade")
    y = trace.signal
    n_tail = max(1, int(round(0.1 * n)))
    offset = float(np.mean(y[-n_tail:]))
    amplitude = float(y[0] - offset)
    err = trace.signal_err if trace.signal_err is not None else np.zeros(n)
    excess = y - offset
    usable = excess > 3.0 * err
    if np.count_nonzero(usable) < 4:
        raise InsufficientDataError(
            f"only {np.count_nonzero(usable)} points clear the positivity filter")
    x = tau_ms[usable]
    z = np.log(excess[usable])
    xc = x - x.mean()
    slope = float(np.dot(xc, z - z.mean()) / np.dot(xc, xc))
    if slope >= 0:
        raise InsufficientDataError("signal does not decay; cannot guess T1")
    return amplitude, offset, -1.0 / slope


def fit_exponential(trace: Trace, guess: tuple[float, float, float] | None = None,
                    max_iter: int = 200, step_tol: float = 1e-8,
                    cost_tol: float = 1e-10) -> FitResult:
    """Weighted Levenberg-Marquardt fit of the single-exponential decay.

    Weights are 1/signal_err^2 when errors are present and positive, else
    the fit is unweighted.  Convergence is declared when the relative
    parameter step drops below ``step_tol`` or the relative cost decrease
    below ``cost_tol``; running out of iterations returns ``converged=False``
    with the best parameters so far.  T1 is clamped to ``T1_BOUNDS_MS`` and
    ``bound_hit`` is set if the optimum saturates a bound.
    """
    if guess is None:
        guess = initial_guess(trace)
    if len(trace) < 4:
        raise InsufficientDataError(f"need >= 4 points to fit, got {len(trace)}")
    tau_ms = trace.tau_s * 1e3
    return _fit_arrays(tau_ms, trace.signal, trace.signal_err, guess,
                       max_iter=max_iter, step_tol=step_tol, cost_tol=cost_tol)


def _fit_arrays(tau_ms, y, err, guess, max_iter=200, step_tol=1e-8,
                cost_tol=1e-10) -> FitResult:
    tau_ms = np.asarray(tau_ms, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(tau_ms)
    w = _weights_from_errors(err, n)
    lo, hi = T1_BOUNDS_MS

    amplitude, offset, t1 = (float(v) for v in guess)
    t1 = min(max(t1, lo), hi)
    theta = np.array([amplitude, offset, t1])

    def cost_of(th):
        r = w * (y - exp_decay(tau_ms, *th))
        return float(np.dot(r, r)), r

    cost, resid = cost_of(theta)
    lam = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        jac = exp_decay_jacobian(tau_ms, *theta) * w[:, None]
        jtj = jac.T @ jac
        grad = jac.T @ resid
        try:
            step = np.linalg.solve(jtj + lam * np.diag(np.diag(jtj)), grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        trial = theta + step
        trial[2] = min(max(trial[2], lo), hi)
        trial_cost, trial_resid = cost_of(trial)
        if trial_cost <= cost:
            rel_step = np.max(np.abs(trial - theta) /
                              np.maximum(np.abs(theta), 1e-30))
            rel_drop = (cost - trial_cost) / max(cost, 1e-300)
            theta, cost, resid = trial, trial_cost, trial_resid
            lam = max(lam / 3.0, 1e-12)
            if rel_step < step_tol or rel_drop < cost_tol:
                converged = True
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break

    amplitude, offset, t1 = theta
    bound_hit = bool(np.isclose(t1, lo) or np.isclose(t1, hi))
    dof = max(n - 3, 1)
    reduced_chi2 = cost / dof
    jac = exp_decay_jacobian(tau_ms, *theta) * w[:, None]
    jtj = jac.T @ jac
    try:
        cov = reduced_chi2 * np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        cov = reduced_chi2 * np.linalg.pinv(jtj)
    cov = 0.5 * (cov + cov.T)
    t1_err = float(np.sqrt(max(cov[2, 2], 0.0)))
    return FitResult(amplitude=float(amplitude), offset=float(offset),
                     t1_ms=float(t1), t1_err_ms=t1_err, covariance=cov,
                     reduced_chi2=float(reduced_chi2), iterations=iterations,
                     converged=converged, bound_hit=bound_hit)


def oracle_fit(trace: Trace, grid_spec: OracleGridSpec | None = None) -> OracleResult:
    """Brute-force reference fit: T1 grid search with exact linear (A, C) solves.

    Independent of the damped iteration by construction; used to verify it.
    """
    if grid_spec is None:
        grid_spec = OracleGridSpec()
    tau_ms = trace.tau_s * 1e3
    y = trace.signal
    w = _weights_from_errors(trace.signal_err, len(trace))
    grid = grid_spec.grid_ms(tau_ms)

    best = None
    for t1 in grid:
        with np.errstate(under="ignore"):
            basis = np.column_stack([np.exp(-tau_ms / t1), np.ones_like(tau_ms)])
        coef, *_ = np.linalg.lstsq(basis * w[:, None], y * w, rcond=None)
        r = w * (y - basis @ coef)
        cost = float(np.dot(r, r))
        if best is None or cost < best[0]:
            best = (cost, float(coef[0]), float(coef[1]), float(t1))
    cost, amplitude, offset, t1 = best
    return OracleResult(amplitude=amplitude, offset=offset, t1_ms=t1,
                        cost=cost, grid_ms=grid)


def bootstrap_t1_err(trace: Trace, fit: FitResult, n_resamples: int = 200,
                     rng_seed: int = 0) -> float:
    """Residual-resampling bootstrap spread of the fitted T1 (ms).

    Each resample redraws residuals with replacement, refits from the
    original optimum, and the standard deviation of the refitted T1 values
    is returned.  Deterministic given ``rng_seed``; more than 20% failed
    refits raises.
    """
    if not fit.converged:
        raise ParameterError("bootstrap requires a converged fit")
    if n_resamples < 2:
        raise ParameterError(f"n_resamples must be >= 2, got {n_resamples!r}")
    tau_ms = trace.tau_s * 1e3
    y = trace.signal
    model = exp_decay(tau_ms, fit.amplitude, fit.offset, fit.t1_ms)
    resid = y - model
    n = len(y)
    guess = (fit.amplitude, fit.offset, fit.t1_ms)

    t1_values = []
    failures = 0
    for k in range(n_resamples):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((rng_seed, k))))
        idx = rng.integers(0, n, size=n)
        y_star = model + resid[idx]
        try:
            refit = _fit_arrays(tau_ms, y_star, trace.signal_err, guess)
        except (InsufficientDataError, ParameterError):
            failures += 1
            continue
        if not refit.converged or refit.bound_hit:
            failures += 1
            continue
        t1_values.append(refit.t1_ms)
    if failures > 0.2 * n_resamples:
        raise BootstrapUnstableError(
            f"{failures}/{n_resamples} bootstrap refits failed")
    return float(np.std(t1_values, ddof=1))
