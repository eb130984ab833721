"""Compiled integrators for periodically forced, possibly piecewise-smooth ODEs.

Two schemes are provided, classic fixed-step RK4 and the Dormand-Prince
5(4) embedded pair with error control.  Both land exactly on the
forcing-period boundaries ``t = k * 2*pi/omega`` so that stroboscopic
states are exact samples rather than interpolants.

Piecewise right-hand sides are handled by branch locking: the branch of
the force law is fixed for the duration of a step, a sign change of the
switching function across a step triggers a bisection on the step size,
and the step is cut at the refined crossing before the branch flips.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .harvesters import HarvesterModel

__all__ = [
    "Divergence",
    "StepUnderflow",
    "IntegratorSettings",
    "Trajectory",
    "STATUS_OK",
    "STATUS_DIVERGED",
    "STATUS_UNDERFLOW",
    "integrate_periods",
    "integrate_array",
    "integrate_span",
    "rk45_step",
    "rk4_step",
]

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_UNDERFLOW = 2

METHOD_RK4 = 0
METHOD_RK45 = 1


class Divergence(ArithmeticError):
    pass


class StepUnderflow(ArithmeticError):
    pass


@dataclass(frozen=True)
class IntegratorSettings:
    """Step control.  ``fixed_step`` and ``max_step`` are fractions of the forcing period."""

    method: str = "adaptive-rk45"
    fixed_step: float = 1.0 / 200
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_step: float = 1.0 / 20
    min_step: float = 1e-12
    event_refinement_tol: float = 1e-10
    bailout: float = 1e3

    def __post_init__(self):
        if self.method not in ("fixed-rk4", "adaptive-rk45"):
            raise ValueError(f"method must be 'fixed-rk4' or 'adaptive-rk45', got {self.method!r}")
        if not self.fixed_step > 0:
            raise ValueError("fixed_step must be > 0")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("abs_tol and rel_tol must be > 0")
        if not self.min_step < self.max_step:
            raise ValueError("min_step must be < max_step")
        if not self.event_refinement_tol > 0:
            raise ValueError("event_refinement_tol must be > 0")
        if not self.bailout > 0:
            raise ValueError("bailout must be > 0")

    @property
    def method_code(self) -> int:
        return METHOD_RK4 if self.method == "fixed-rk4" else METHOD_RK45


@dataclass
class Trajectory:
    """Per-period summary of an integration run."""

    strobe: np.ndarray        # (n_periods, dim) states at t = k*T, k = 1..n
    xmin: np.ndarray          # (n_periods,) min of the well coordinate within each period
    xmax: np.ndarray
    status: int
    periods_done: int
    omega: float
    well_index: int
    event_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_steps: int = 0

    @property
    def diverged(self) -> bool:
        return self.status == STATUS_DIVERGED

    @property
    def underflow(self) -> bool:
        return self.status == STATUS_UNDERFLOW

    def raise_for_status(self) -> None:
        if self.status == STATUS_DIVERGED:
            raise Divergence(f"trajectory diverged in period {self.periods_done + 1}")
        if self.status == STATUS_UNDERFLOW:
            raise StepUnderflow(f"step size underflow in period {self.periods_done + 1}")


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) tableau
# ---------------------------------------------------------------------------

_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between 5th- and 4th-order weights
_E1 = 71 / 57600
_E3 = -71 / 16695
_E4 = 71 / 1920
_E5 = -17253 / 339200
_E6 = 22 / 525
_E7 = -1 / 40

_SAFETY = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 5.0


@njit(cache=True)
def _dp_step(rhs, t, y, h, p, branch, k1, k2, k3, k4, k5, k6, k7, tmp, ynew, atol, rtol):
    """One Dormand-Prince step from (t, y) using k1 = f(t, y).  Returns the error norm."""
    n = y.shape[0]
    for i in range(n):
        tmp[i] = y[i] + h * _A21 * k1[i]
    rhs(t + _C2 * h, tmp, p, branch, k2)
    for i in range(n):
        tmp[i] = y[i] + h * (_A31 * k1[i] + _A32 * k2[i])
    rhs(t + _C3 * h, tmp, p, branch, k3)
    for i in range(n):
        tmp[i] = y[i] + h * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i])
    rhs(t + _C4 * h, tmp, p, branch, k4)
    for i in range(n):
        tmp[i] = y[i] + h * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
    rhs(t + _C5 * h, tmp, p, branch, k5)
    for i in range(n):
        tmp[i] = y[i] + h * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i]
                             + _A65 * k5[i])
    rhs(t + h, tmp, p, branch, k6)
    for i in range(n):
        ynew[i] = y[i] + h * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i]
                              + _B6 * k6[i])
    rhs(t + h, ynew, p, branch, k7)
    err = 0.0
    for i in range(n):
        e = h * (_E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i]
                 + _E7 * k7[i])
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        r = abs(e) / sc
        if r > err:
            err = r
    return err


@njit(cache=True)
def _rk4_step(rhs, t, y, h, p, branch, k1, k2, k3, k4, tmp, ynew):
    n = y.shape[0]
    rhs(t, y, p, branch, k1)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k1[i]
    rhs(t + 0.5 * h, tmp, p, branch, k2)
    for i in range(n):
        tmp[i] = y[i] + 0.5 * h * k2[i]
    rhs(t + 0.5 * h, tmp, p, branch, k3)
    for i in range(n):
        tmp[i] = y[i] + h * k3[i]
    rhs(t + h, tmp, p, branch, k4)
    for i in range(n):
        ynew[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@njit(cache=True)
def _any_bad(y, well, bailout):
    for i in range(y.shape[0]):
        if not math.isfinite(y[i]):
            return True
    return abs(y[well]) > bailout


@njit(cache=True)
def _crossed(branch, e):
    # branch 1 <=> switching function <= 0
    if branch == 0:
        return e <= 0.0
    return e > 0.0


@njit(cache=True)
def _integrate(rhs, event, has_events, p, y0, t0, period, n_periods, method, fixed_frac,
               atol, rtol, max_frac, min_step, ev_tol, well, bailout, branch0,
               strobe, xmin, xmax, ev_log):
    """Core loop.  Returns (status, periods_done, n_events, n_steps)."""
    n = y0.shape[0]
    y = y0.copy()
    ynew = np.empty(n)
    ytry = np.empty(n)
    tmp = np.empty(n)
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    branch = branch0
    n_ev = 0
    n_steps = 0
    t = t0
    max_h = max_frac * period
    h = max_h
    if method == METHOD_RK4:
        n_sub = max(1, int(round(1.0 / fixed_frac)))
        h_fix = period / n_sub
    else:
        n_sub = 0
        h_fix = 0.0
    k1_ok = False

    for k in range(n_periods):
        t_end = t0 + (k + 1) * period
        lo = y[well]
        hi = y[well]
        sub = 0
        while True:
            remaining = t_end - t
            if method == METHOD_RK4:
                if sub >= n_sub:
                    break
                # last substep snaps onto the boundary
                h_try = h_fix if sub < n_sub - 1 else remaining
                if h_try <= 0.0:
                    break
                _rk4_step(rhs, t, y, h_try, p, branch, k1, k2, k3, k4, tmp, ynew)
                sub += 1
            else:
                if remaining <= 1e-13 * period:
                    break
                h_try = min(h, max_h)
                last = False
                if h_try >= remaining * (1.0 - 1e-12):
                    h_try = remaining
                    last = True
                if not k1_ok:
                    rhs(t, y, p, branch, k1)
                    k1_ok = True
                err = _dp_step(rhs, t, y, h_try, p, branch, k1, k2, k3, k4, k5, k6, k7,
                               tmp, ynew, atol, rtol)
                if not math.isfinite(err):
                    fac = _FAC_MIN
                elif err == 0.0:
                    fac = _FAC_MAX
                else:
                    fac = min(_FAC_MAX, max(_FAC_MIN, _SAFETY * err ** -0.2))
                if err > 1.0 or not math.isfinite(err):
                    h = h_try * fac
                    if h < min_step:
                        strobe[k, :] = y
                        xmin[k] = lo
                        xmax[k] = hi
                        return STATUS_UNDERFLOW, k, n_ev, n_steps
                    continue
                if not last:
                    h = min(h_try * fac, max_h)
                else:
                    # a truncated final step says nothing about the natural step
                    h = max(h, min(h_try * fac, max_h))

            if has_events and _crossed(branch, event(ynew, p)):
                # bisection on the step length for the switching surface
                a = 0.0
                b = h_try
                for _ in range(200):
                    mid = 0.5 * (a + b)
                    if method == METHOD_RK4:
                        _rk4_step(rhs, t, y, mid, p, branch, k1, k2, k3, k4, tmp, ytry)
                    else:
                        _dp_step(rhs, t, y, mid, p, branch, k1, k2, k3, k4, k5, k6, k7,
                                 tmp, ytry, atol, rtol)
                    if _crossed(branch, event(ytry, p)):
                        b = mid
                        for i in range(n):
                            ynew[i] = ytry[i]
                    else:
                        a = mid
                    if abs(event(ynew, p)) <= ev_tol or (b - a) <= 1e-15 * max(1.0, abs(t)):
                        break
                if method == METHOD_RK4:
                    # realign remaining substeps on the same boundary grid
                    sub -= 1
                    if b < h_try:
                        n_sub_left = n_sub - sub
                        h_fix = (remaining - b) / n_sub_left if n_sub_left > 0 else h_fix
                t = t + b
                branch = 1 - branch
                if n_ev < ev_log.shape[0]:
                    ev_log[n_ev] = t
                n_ev += 1
                k1_ok = False
            else:
                t = t + h_try
                if method == METHOD_RK45:
                    # first-same-as-last
                    for i in range(n):
                        k1[i] = k7[i]
            for i in range(n):
                y[i] = ynew[i]
            n_steps += 1
            if _any_bad(y, well, bailout):
                strobe[k, :] = y
                xmin[k] = lo
                xmax[k] = hi
                return STATUS_DIVERGED, k, n_ev, n_steps
            v = y[well]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        if method == METHOD_RK4:
            h_fix = period / n_sub
        t = t_end
        strobe[k, :] = y
        xmin[k] = lo
        xmax[k] = hi
    return STATUS_OK, n_periods, n_ev, n_steps


def _run(spec, p: np.ndarray, y0, period: float, n_periods: int,
         settings: IntegratorSettings, t0: float = 0.0, max_events: int = 0):
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    if y0.shape != (spec.dim,):
        raise ValueError(f"{spec.system_id} expects a state of dimension {spec.dim}, got {y0.shape}")
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    p = np.ascontiguousarray(p, dtype=np.float64)
    strobe = np.full((n_periods, spec.dim), np.nan)
    xmin = np.full(n_periods, np.nan)
    xmax = np.full(n_periods, np.nan)
    ev_log = np.empty(max_events)
    branch0 = 1 if spec.has_events and spec.event(y0, p) <= 0.0 else 0
    status, done, n_ev, n_steps = _integrate(
        spec.rhs, spec.event, spec.has_events, p, y0, float(t0),
        float(period), int(n_periods), settings.method_code, float(settings.fixed_step),
        float(settings.abs_tol), float(settings.rel_tol), float(settings.max_step),
        float(settings.min_step), float(settings.event_refinement_tol), spec.well_index,
        float(settings.bailout), branch0, strobe, xmin, xmax, ev_log)
    return status, done, strobe, xmin, xmax, ev_log[:min(n_ev, max_events)], n_steps


def integrate_array(spec, p: np.ndarray, y0, omega: float, n_periods: int,
                    settings: IntegratorSettings | None = None, *, max_events: int = 0) -> Trajectory:
    """Like :func:`integrate_periods` for a raw (unvalidated) parameter vector.

    The vector must already carry ``omega`` in its frequency slot.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    settings = settings or IntegratorSettings()
    status, done, strobe, xmin, xmax, ev, n_steps = _run(
        spec, p, y0, 2 * math.pi / omega, n_periods, settings, max_events=max_events)
    return Trajectory(strobe, xmin, xmax, status, done, omega, spec.well_index, ev, n_steps)


def integrate_periods(model: HarvesterModel, y0, omega: float, n_periods: int,
                      settings: IntegratorSettings | None = None, *,
                      max_events: int = 0) -> Trajectory:
    """Integrate ``n_periods`` forcing periods of ``2*pi/omega``.

    ``omega`` replaces the model's frequency parameter.  Divergence and
    step underflow are reported through ``Trajectory.status`` (the
    remaining rows are NaN); call ``raise_for_status`` for exceptions.
    """
    if not omega > 0:
        raise ValueError("omega must be > 0")
    model = model.with_excitation(omega=omega)
    return integrate_array(model.spec, model.param_array(), y0, omega, n_periods, settings,
                           max_events=max_events)


def integrate_span(model: HarvesterModel, y0, t_end: float, n_out: int = 1,
                   settings: IntegratorSettings | None = None, *, max_events: int = 0):
    """Integrate over ``[0, t_end]`` with ``n_out`` equally spaced output states.

    Output spacing plays the role of the period: step fractions in
    ``settings`` refer to ``t_end / n_out``.  Returns ``(states, event_times)``.
    """
    settings = settings or IntegratorSettings()
    status, done, strobe, _, _, ev, _ = _run(model.spec, model.param_array(), y0, t_end / n_out,
                                             n_out, settings, max_events=max_events)
    if status == STATUS_DIVERGED:
        raise Divergence("trajectory diverged")
    if status == STATUS_UNDERFLOW:
        raise StepUnderflow("step size underflow")
    return strobe, ev


def rk45_step(model: HarvesterModel, t: float, y, h: float, abs_tol: float = 1e-8,
              rel_tol: float = 1e-8, min_step: float = 1e-12, max_step: float = math.inf,
              branch: int | None = None):
    """Attempt one Dormand-Prince step, shrinking ``h`` until it is accepted.

    Returns ``(y_new, err, h_next, h_used)``; ``err`` is the scaled
    max-norm error of the accepted step (<= 1).
    """
    if not (min_step <= h <= max_step):
        raise ValueError("h must lie in [min_step, max_step]")
    spec = model.spec
    p = model.param_array()
    y = np.ascontiguousarray(y, dtype=np.float64)
    b = model.initial_branch(y) if branch is None else branch
    n = y.shape[0]
    ks = [np.empty(n) for _ in range(7)]
    tmp, ynew = np.empty(n), np.empty(n)
    spec.rhs(float(t), y, p, b, ks[0])
    while True:
        err = _dp_step(spec.rhs, float(t), y, float(h), p, b, *ks, tmp, ynew, abs_tol, rel_tol)
        if err == 0.0:
            fac = _FAC_MAX
        elif not math.isfinite(err):
            fac = _FAC_MIN
        else:
            fac = min(_FAC_MAX, max(_FAC_MIN, _SAFETY * err ** -0.2))
        if err <= 1.0:
            return ynew.copy(), err, min(h * fac, max_step), h
        h = h * fac
        if h < min_step:
            raise StepUnderflow(f"step {h:.3g} below min_step {min_step:.3g}")


def rk4_step(model: HarvesterModel, t: float, y, h: float, branch: int | None = None) -> np.ndarray:
    spec = model.spec
    y = np.ascontiguousarray(y, dtype=np.float64)
    b = model.initial_branch(y) if branch is None else branch
    n = y.shape[0]
    ks = [np.empty(n) for _ in range(4)]
    tmp, ynew = np.empty(n), np.empty(n)
    _rk4_step(spec.rhs, float(t), y, float(h), model.param_array(), b, *ks, tmp, ynew)
    return ynew
