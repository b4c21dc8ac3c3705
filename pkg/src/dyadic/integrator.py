"""Fixed-step RK4 and adaptive Dormand-Prince 5(4) time stepping.

The adaptive controller accepts a step when the max-norm of the embedded error
estimate is at most ``abs_tol + rel_tol * max(|y|_inf, |y_new|_inf)``. The next
step is scaled by ``0.9 * ratio**(-1/5)`` clamped to ``[0.2, 5]``. Stepping runs
in compiled code; sampling and event bracketing happen here.

Near a blow-up the truncated systems become stiff and the step collapses.
Hitting ``dt_min`` ends the run with ``StepUnderflow`` and the partial
trajectory is returned.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .models import ModelKind, ModelSpec, ShellState, check_state


class Method(enum.Enum):
    RK4_FIXED = "rk4"
    RK45_ADAPTIVE = "rk45"


class Termination(enum.Enum):
    TIME_END = "TimeEnd"
    NORM_THRESHOLD = "NormThreshold"
    NON_FINITE = "NonFinite"
    STEP_UNDERFLOW = "StepUnderflow"
    MAX_STEPS = "MaxSteps"


class NonFiniteError(FloatingPointError):
    """A step produced NaN or Inf; ``shell`` is the first offending index."""

    def __init__(self, shell: int, field_name: str = "a"):
        super().__init__(f"non-finite value in {field_name}[{shell}]")
        self.shell = shell
        self.field_name = field_name


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    method: Method = Method.RK45_ADAPTIVE
    dt: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    dt_min: float = 1e-14
    dt_max: float = math.inf
    sample_every: float | None = None
    max_steps: int = 0  # 0 means unlimited

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.method is Method.RK4_FIXED and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")
        if self.sample_every is not None and not self.sample_every > 0:
            raise ValueError("sample_every must be positive")

    @property
    def cadence(self) -> float:
        return self.sample_every if self.sample_every is not None else self.t_end / 500.0


@dataclass(frozen=True)
class EventSpec:
    """What to watch for while stepping. NaN/Inf is always checked.

    ``norm_threshold`` is ``(s, limit)``: stop the first time
    ``|a|_s**2 + |b|_s**2 >= limit``.
    """

    positivity_watch: bool = False
    norm_threshold: tuple[float, float] | None = None

    def __post_init__(self):
        if self.norm_threshold is not None:
            s, limit = self.norm_threshold
            if not limit > 0:
                raise ValueError("norm threshold limit must be positive")
            object.__setattr__(self, "norm_threshold", (float(s), float(limit)))


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: str = ""


@dataclass
class Trajectory:
    times: np.ndarray
    a: np.ndarray  # (n_samples, k+1)
    b: np.ndarray
    events: list[Event]
    terminated_by: Termination
    n_steps: int = 0
    n_rejected: int = 0
    final_step: float = math.nan

    def __len__(self) -> int:
        return self.times.size

    def state(self, i: int) -> ShellState:
        return ShellState(self.a[i], self.b[i], float(self.times[i]))

    @property
    def samples(self) -> list[tuple[float, ShellState]]:
        return [(float(t), self.state(i)) for i, t in enumerate(self.times)]

    @property
    def final(self) -> ShellState:
        return self.state(len(self) - 1)

    def event_time(self, kind: str) -> float | None:
        for ev in self.events:
            if ev.kind == kind:
                return ev.t
        return None


def _workspace(m: int):
    return np.zeros((7, m)), np.empty(m), np.empty(m), np.empty(m)


def _placeholder_matrix():
    return np.zeros((1, 1))


def step_fixed(spec: ModelSpec, state: ShellState, dt: float) -> ShellState:
    """One classical RK4 step of size ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    check_state(spec, state)
    y = state.vector()
    stages, out, tmp, _ = _workspace(y.size)
    K.rk4_step(spec.kind.code, spec.coupling, np.asarray(spec.forcing), _placeholder_matrix(),
               y, float(dt), out, stages, tmp)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        i = int(bad[0])
        n = spec.size
        raise NonFiniteError(i % n, "a" if i < n else "b")
    return ShellState.from_vector(out, state.t + dt)


def _initial_step(kind, lt, f, mat, y, t_span, order, atol, rtol, dt_max):
    """Starting step from the usual two-derivative heuristic."""
    f0 = np.empty_like(y)
    K.rhs(kind, lt, f, mat, y, f0)
    scale = atol + rtol * np.max(np.abs(y))
    d0 = np.max(np.abs(y)) / scale
    d1 = np.max(np.abs(f0)) / scale
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_span)
    y1 = y + h0 * f0
    f1 = np.empty_like(y)
    K.rhs(kind, lt, f, mat, y1, f1)
    if not np.all(np.isfinite(f1)):
        return min(h0 * 1e-3, dt_max)
    d2 = np.max(np.abs(f1 - f0)) / scale / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (order + 1))
    return min(100 * h0, h1, t_span, dt_max)


class _Stepper:
    """Shared sampling/event loop over the compiled kernels."""

    def __init__(self, kind_code, lt, f, mat, config: IntegratorConfig):
        self.kind = kind_code
        self.lt = np.ascontiguousarray(lt, dtype=float)
        self.f = np.ascontiguousarray(f, dtype=float)
        self.mat = np.ascontiguousarray(mat, dtype=float)
        self.cfg = config
        self.adaptive = config.method is Method.RK45_ADAPTIVE

    def one_step(self, y, h):
        stages, out, tmp, _ = _workspace(y.size)
        K.single_step(self.kind, self.lt, self.f, self.mat, y, h, self.adaptive, out, stages, tmp)
        return out

    def bisect(self, yprev, t_prev, h, crossed):
        """Bracket the first sub-step at which ``crossed(y)`` becomes true."""
        lo, hi = 0.0, h
        y_hi = self.one_step(yprev, hi)
        if not crossed(y_hi):
            # the uncontrolled single step disagrees with the stepped state; keep full step
            return t_prev + h, y_hi
        while hi - lo > self.cfg.dt_min:
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            y_mid = self.one_step(yprev, mid)
            if crossed(y_mid):
                hi, y_hi = mid, y_mid
            else:
                lo = mid
        return t_prev + hi, y_hi


def integrate(spec: ModelSpec, state: ShellState, config: IntegratorConfig,
              events: EventSpec | None = None) -> Trajectory:
    """Integrate the truncated model from ``state`` to ``state.t + config.t_end``.

    Samples are taken every ``config.cadence`` time units (plus the end time and,
    when a run stops early, the stopping time).
    """
    check_state(spec, state)
    events = events or EventSpec()
    cfg = config
    n = spec.size
    kind = spec.kind.code
    stepper = _Stepper(kind, spec.coupling, spec.forcing, _placeholder_matrix(), cfg)
    check_b = spec.kind is not ModelKind.EULER

    if events.norm_threshold is not None:
        s, limit = events.norm_threshold
        norm_w = spec.lam ** (2.0 * s * np.arange(n, dtype=float))
    else:
        norm_w, limit = np.zeros(n), 0.0

    y = state.vector()
    t0 = state.t
    t_final = t0 + cfg.t_end
    cadence = cfg.cadence
    n_targets = max(1, int(math.ceil(cfg.t_end / cadence - 1e-9)))
    targets = [min(t0 + i * cadence, t_final) for i in range(1, n_targets)] + [t_final]

    times, av, bv = [t0], [state.a.copy()], [state.b.copy()]
    ev_list: list[Event] = []
    watch_pos = events.positivity_watch
    if watch_pos and K.lost_positivity(y, n, check_b):
        ev_list.append(Event(t0, "positivity", _first_nonpositive(y, n, check_b)))
        watch_pos = False
    if limit > 0 and K.weighted_norm2(y, norm_w) >= limit:
        ev_list.append(Event(t0, "norm_threshold", f"initial norm above {limit:g}"))
        return Trajectory(np.array(times), np.array(av), np.array(bv), ev_list,
                          Termination.NORM_THRESHOLD)

    if stepper.adaptive:
        h = _initial_step(kind, stepper.lt, stepper.f, stepper.mat, y, cfg.t_end, 5,
                          cfg.abs_tol, cfg.rel_tol, cfg.dt_max)
    else:
        h = cfg.dt
    stages, ynew, tmp, yprev = _workspace(y.size)
    t = t0
    n_acc = n_rej = 0
    term = Termination.TIME_END
    ti = 0
    while ti < len(targets):
        target = targets[ti]
        status, t, h, t_prev, h_last, acc, rej = K.advance(
            kind, stepper.lt, stepper.f, stepper.mat, y, yprev, t, target, h,
            stepper.adaptive, cfg.abs_tol, cfg.rel_tol, cfg.dt_min, cfg.dt_max,
            watch_pos, check_b, norm_w, limit, max(0, cfg.max_steps - n_acc) if cfg.max_steps else 0,
            stages, ynew, tmp)
        n_acc += acc
        n_rej += rej
        if status == K.REACHED:
            times.append(t)
            av.append(y[:n].copy())
            bv.append(y[n:].copy())
            ti += 1
            continue
        if status == K.POSITIVITY:
            t_ev, y_ev = stepper.bisect(yprev.copy(), t_prev, h_last,
                                        lambda z: K.lost_positivity(z, n, check_b))
            ev_list.append(Event(t_ev, "positivity", _first_nonpositive(y_ev, n, check_b)))
            watch_pos = False
            continue
        if status == K.NORM:
            t_ev, y_ev = stepper.bisect(yprev.copy(), t_prev, h_last,
                                        lambda z: K.weighted_norm2(z, norm_w) >= limit)
            ev_list.append(Event(t_ev, "norm_threshold", f"H^{events.norm_threshold[0]:g} norm^2 >= {limit:g}"))
            times.append(t_ev)
            av.append(y_ev[:n].copy())
            bv.append(y_ev[n:].copy())
            term = Termination.NORM_THRESHOLD
            break
        if status == K.NONFINITE:
            ev_list.append(Event(t, "non_finite", "derivative overflowed"))
            term = Termination.NON_FINITE
        elif status == K.UNDERFLOW:
            ev_list.append(Event(t, "step_underflow", f"step {h:.3e} below dt_min {cfg.dt_min:.3e}"))
            term = Termination.STEP_UNDERFLOW
        else:
            ev_list.append(Event(t, "max_steps", f"{n_acc} steps taken"))
            term = Termination.MAX_STEPS
        if t > times[-1]:
            times.append(t)
            av.append(y[:n].copy())
            bv.append(y[n:].copy())
        break

    return Trajectory(np.array(times), np.array(av), np.array(bv), ev_list, term,
                      n_acc, n_rej, h)


def _first_nonpositive(y, n, check_b) -> str:
    idx = np.flatnonzero(y[:n] <= 0)
    if idx.size:
        return f"a[{idx[0]}]"
    idx = np.flatnonzero(y[n:] <= 0) if check_b else idx
    return f"b[{idx[0]}]" if idx.size else ""


def integrate_linear(matrix: np.ndarray, y0: np.ndarray, config: IntegratorConfig):
    """Integrate ``y' = matrix @ y``; returns ``(times, states, termination)``."""
    mat = np.ascontiguousarray(matrix, dtype=float)
    y = np.array(y0, dtype=float)
    if mat.shape != (y.size, y.size):
        raise ValueError("matrix shape does not match the state")
    stepper = _Stepper(K.LINEAR, np.zeros(1), np.zeros(1), mat, config)
    cadence = config.cadence
    n_targets = max(1, int(math.ceil(config.t_end / cadence - 1e-9)))
    targets = [min(i * cadence, config.t_end) for i in range(1, n_targets)] + [config.t_end]
    if stepper.adaptive:
        h = _initial_step(K.LINEAR, stepper.lt, stepper.f, mat, y, config.t_end, 5,
                          config.abs_tol, config.rel_tol, config.dt_max)
    else:
        h = config.dt
    stages, ynew, tmp, yprev = _workspace(y.size)
    times, ys = [0.0], [y.copy()]
    t = 0.0
    term = Termination.TIME_END
    for target in targets:
        status, t, h, _, _, _, _ = K.advance(
            K.LINEAR, stepper.lt, stepper.f, mat, y, yprev, t, target, h, stepper.adaptive,
            config.abs_tol, config.rel_tol, config.dt_min, config.dt_max, False, False,
            np.zeros(1), 0.0, config.max_steps, stages, ynew, tmp)
        if status != K.REACHED:
            term = {K.NONFINITE: Termination.NON_FINITE, K.UNDERFLOW: Termination.STEP_UNDERFLOW,
                    K.MAX_STEPS: Termination.MAX_STEPS}[status]
            break
        times.append(t)
        ys.append(y.copy())
    return np.array(times), np.array(ys), term
