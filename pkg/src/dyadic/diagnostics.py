"""Scalar functionals of shell states and trajectories.

Energy, cross helicity, Sobolev norms and the weak distance are plain sums
over the truncated shells. The Lyapunov pair works with the rescaled
variables ``w_j = lambda_j**theta a_j`` and ``z_j = lambda_j**theta b_j``:

    phi = sum lambda_j**-gamma (w_j**2 + z_j**2)
    psi = sum lambda_j**-gamma (w_j + c0 z_j)

For positive solutions of the forward MHD model ``psi`` obeys a Riccati
inequality ``psi' >= K psi**2 + f0`` which forces blow-up in finite time.
Two Riccati coefficients are reported. ``K`` is the closed-form expression
built from the Cauchy-Schwarz constant ``2 c0**2 / (1 - lambda**-gamma)``.
That constant under-weights the velocity sum whenever ``c0 < 1``, so the
inequality ``psi**2 <= C phi`` it rests on is false in general. ``K_sharp``
uses ``C = 2 max(1, c0**2) / (1 - lambda**-gamma)``, which does hold, and is
the coefficient used for blow-up time bounds and trajectory checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .integrator import Trajectory
from .models import ModelKind, ModelSpec, ShellState

__all__ = [
    "LyapunovParams", "LyapunovReport", "PsiChain", "RiccatiCheck", "MonitorReport",
    "energy", "cross_helicity", "sobolev_norm", "weak_distance", "lyapunov",
    "riccati_coefficient", "psi_squared_chain", "psi_squared_bound_check",
    "riccati_blowup_bound", "boundary_flux", "forcing_gain", "psi_rate",
    "riccati_check", "monitors", "energy_budget",
]


def _weights(lam: float, exponent: float, n: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        return lam ** (exponent * np.arange(n, dtype=float))


def energy(state: ShellState) -> float:
    """Total energy ``0.5 * sum(a_j**2 + b_j**2)`` over all shells j >= 0."""
    return 0.5 * float(np.dot(state.a, state.a) + np.dot(state.b, state.b))


def cross_helicity(state: ShellState) -> float:
    return float(np.dot(state.a, state.b))


def sobolev_norm(u: Sequence[float], s: float, lam: float) -> float:
    """``sqrt(sum_j lambda_j**(2s) u_j**2)`` with j starting at 0.

    Raises OverflowError when the weighted sum is not finite.
    """
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        total = float(np.sum(_weights(lam, 2.0 * s, u.size) * u * u))
    if not math.isfinite(total):
        raise OverflowError(f"H^{s} norm overflowed")
    return math.sqrt(total)


def weak_distance(u: Sequence[float], v: Sequence[float], lam: float) -> float:
    """``sum_n lam**(-n**2) |d_n| / (1 + |d_n|)`` with ``d = u - v``.

    The shorter sequence is zero-padded; n runs from 0.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = max(u.size, v.size)
    d = np.zeros(n)
    d[: u.size] += u
    d[: v.size] -= v
    d = np.abs(d)
    idx = np.arange(n, dtype=float)
    with np.errstate(under="ignore"):
        w = lam ** (-(idx * idx))
    return float(np.sum(w * d / (1.0 + d)))


@dataclass(frozen=True)
class LyapunovParams:
    s: float
    gamma: float
    c0: float

    def __post_init__(self):
        for name in ("s", "gamma", "c0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def violations(self, lam: float, theta: float) -> list[str]:
        """Which conditions of the admissible window fail for ``(lam, theta)``."""
        out = []
        if not self.gamma > 0:
            out.append(f"gamma = {self.gamma:g} is not positive")
        if not 0 < self.c0 < 1:
            out.append(f"c0 = {self.c0:g} is outside (0, 1)")
        if 2 * theta - self.gamma > 2 * self.s:
            out.append(f"2*theta - gamma = {2 * theta - self.gamma:g} exceeds 2*s = {2 * self.s:g}")
        if not self.gamma < 4 * theta / 3:
            out.append(f"gamma = {self.gamma:g} is not below 4*theta/3 = {4 * theta / 3:g}")
        c0_max = 0.5 * lam ** (2 * theta - 1.5 * self.gamma) - 0.5
        if not self.c0 < c0_max:
            out.append(f"c0 = {self.c0:g} is not below {c0_max:g}")
        return out

    def margin(self, lam: float, theta: float) -> float:
        """``lambda**(theta-gamma) - (1+2c0) lambda**(gamma/2-theta)``."""
        g, c0 = self.gamma, self.c0
        return lam ** (theta - g) - (1 + 2 * c0) * lam ** (g / 2 - theta)


def riccati_coefficient(lam: float, theta: float, params: LyapunovParams, sharp: bool = True) -> float:
    """Riccati coefficient ``margin / C``.

    ``sharp=False`` gives the closed-form ``(1 - lam**-gamma) / (2 c0**2) * margin``.
    """
    q = 1.0 - lam ** (-params.gamma)
    c = 2.0 * (max(1.0, params.c0 ** 2) if sharp else params.c0 ** 2) / q
    return params.margin(lam, theta) / c


@dataclass(frozen=True)
class LyapunovReport:
    phi: float
    psi: float
    K: float
    K_sharp: float
    valid: bool
    t_upper: float | None = None
    violations: tuple[str, ...] = field(default=())


def _wz(state: ShellState, spec: ModelSpec):
    w = _weights(spec.lam, spec.theta, state.size)
    return w * state.a, w * state.b


def lyapunov(state: ShellState, spec: ModelSpec, params: LyapunovParams) -> LyapunovReport:
    """phi, psi and the Riccati coefficients for a state of ``spec``.

    ``t_upper`` is filled in only when the parameters are admissible, ``psi``
    is positive and the sharp coefficient is positive; it is the Riccati
    bound computed with ``K_sharp`` and the forcing gain of ``spec``.
    """
    w, z = _wz(state, spec)
    g = _weights(spec.lam, -params.gamma, state.size)
    phi = float(np.sum(g * (w * w + z * z)))
    psi = float(np.sum(g * (w + params.c0 * z)))
    bad = params.violations(spec.lam, spec.theta)
    k_printed = riccati_coefficient(spec.lam, spec.theta, params, sharp=False)
    k_sharp = riccati_coefficient(spec.lam, spec.theta, params, sharp=True)
    valid = not bad
    t_up = None
    gain = forcing_gain(spec, params)
    if valid and psi > 0 and k_sharp > 0 and gain >= 0:
        t_up = riccati_blowup_bound(psi, k_sharp, gain)
    return LyapunovReport(phi, psi, k_printed, k_sharp, valid, t_up, tuple(bad))


@dataclass(frozen=True)
class PsiChain:
    """Links of the Cauchy-Schwarz chain bounding ``psi**2`` by ``phi``.

    With ``g_j = lambda_j**-gamma`` and ``S = sum g_j``:

        psi**2 <= S * sum g (w + c0 z)**2          (Cauchy-Schwarz)
               <= 2 S (sum g w**2 + c0**2 sum g z**2)  = cs_bound
               <= 2 max(1, c0**2) / (1 - lambda**-gamma) * phi  = sharp_bound

    ``printed_bound`` uses ``2 c0**2 / (1 - lambda**-gamma)`` instead and is
    kept for comparison only.
    """

    psi_sq: float
    cs_bound: float
    weight_sum: float
    sharp_bound: float
    printed_bound: float

    @property
    def holds(self) -> bool:
        tol = 1e-12
        return (self.psi_sq <= self.cs_bound * (1 + tol) + tol
                and self.cs_bound <= self.sharp_bound * (1 + tol) + tol)

    @property
    def printed_holds(self) -> bool:
        return self.psi_sq <= self.printed_bound * (1 + 1e-12) + 1e-12


def psi_squared_chain(state: ShellState, spec: ModelSpec, params: LyapunovParams) -> PsiChain:
    w, z = _wz(state, spec)
    g = _weights(spec.lam, -params.gamma, state.size)
    c0 = params.c0
    psi = float(np.sum(g * (w + c0 * z)))
    sw = float(np.sum(g * w * w))
    sz = float(np.sum(g * z * z))
    weight_sum = float(np.sum(g))
    # (sum g (w + c0 z))**2 <= sum g * sum g (w + c0 z)**2 <= sum g * 2 (sw + c0**2 sz)
    cs = weight_sum * 2.0 * (sw + c0 * c0 * sz)
    q = 1.0 - spec.lam ** (-params.gamma)
    sharp = 2.0 * max(1.0, c0 * c0) / q * (sw + sz)
    printed = 2.0 * c0 * c0 / q * (sw + sz)
    return PsiChain(psi * psi, cs, weight_sum, sharp, printed)


def psi_squared_bound_check(state: ShellState, spec: ModelSpec, params: LyapunovParams) -> bool:
    """True iff every link of the Cauchy-Schwarz chain for ``psi**2`` holds."""
    return psi_squared_chain(state, spec, params).holds


def riccati_blowup_bound(psi0: float, K: float, f0: float) -> float:
    """Time for ``psi' = K psi**2 + f0`` to reach infinity from ``psi0``."""
    if not K > 0:
        raise ValueError("K must be positive")
    if f0 < 0:
        raise ValueError("f0 must be non-negative")
    if f0 == 0:
        if not psi0 > 0:
            raise ValueError("with f0 = 0 the bound needs psi0 > 0")
        return 1.0 / (K * psi0)
    r = math.sqrt(K * f0)
    # pi/2 - arctan(x) == arctan(1/x) for x > 0, which avoids cancellation for large psi0
    x = psi0 * math.sqrt(K / f0)
    tail = math.atan(1.0 / x) if x > 0 else math.pi / 2 - math.atan(x)
    return tail / r


def forcing_gain(spec: ModelSpec, params: LyapunovParams) -> float:
    """Forcing contribution ``sum lambda_j**(theta-gamma) f_j`` to ``psi'``."""
    g = _weights(spec.lam, spec.theta - params.gamma, spec.size)
    return float(np.dot(g, spec.forcing))


def boundary_flux(state: ShellState, spec: ModelSpec, params: LyapunovParams) -> float:
    """Energy-like flux lost at the truncation boundary.

    The lower bound ``psi' >= margin * phi + gain`` of the infinite system
    picks up ``-lambda**(theta-gamma) lambda_k**-gamma (w_k**2 + z_k**2)``
    when the shell ``k + 1`` terms are dropped.
    """
    k = spec.n_shells
    wk = spec.lam ** (k * spec.theta) * state.a[k]
    zk = spec.lam ** (k * spec.theta) * state.b[k]
    return spec.lam ** (spec.theta - params.gamma) * spec.lam ** (-params.gamma * k) * (wk * wk + zk * zk)


def psi_rate(state: ShellState, spec: ModelSpec, params: LyapunovParams) -> float:
    """Exact ``d psi / dt`` from the model right-hand side."""
    from .models import rhs

    da, db = rhs(spec, state)
    g = _weights(spec.lam, spec.theta - params.gamma, state.size)
    return float(np.sum(g * (da + params.c0 * db)))


@dataclass(frozen=True)
class RiccatiCheck:
    """Sampled Riccati inequality on the positive part of a trajectory.

    Arrays are aligned with ``times``; entries outside ``checked`` are NaN.
    """

    times: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    slack: np.ndarray
    bound: np.ndarray
    checked: np.ndarray
    ok: np.ndarray
    K: float

    @property
    def n_checked(self) -> int:
        return int(np.count_nonzero(self.checked))

    @property
    def fraction_ok(self) -> float:
        n = self.n_checked
        return float(np.count_nonzero(self.ok & self.checked)) / n if n else math.nan

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.checked & ~self.ok))


def riccati_check(traj: Trajectory, spec: ModelSpec, params: LyapunovParams,
                  K: float | None = None) -> RiccatiCheck:
    """Compare finite-difference ``psi'`` with ``K psi**2 + gain - boundary``.

    The derivative at sample ``i`` is the centered difference over
    ``i-1, i+1``. Its truncation error is estimated by the gap to the wider
    difference over ``i-2, i+2``; that gap (about three times the error of
    the narrow stencil) plus a rounding allowance is the slack. Only samples
    whose five-point stencil lies in a stretch where every shell is strictly
    positive are checked. ``K`` defaults to the sharp coefficient.
    """
    if K is None:
        K = riccati_coefficient(spec.lam, spec.theta, params, sharp=True)
    t = np.asarray(traj.times, dtype=float)
    n = t.size
    psi = np.empty(n)
    bnd = np.empty(n)
    pos = np.empty(n, dtype=bool)
    g = _weights(spec.lam, -params.gamma, spec.size)
    w = _weights(spec.lam, spec.theta, spec.size)
    for i in range(n):
        a, b = traj.a[i], traj.b[i]
        psi[i] = float(np.sum(g * w * (a + params.c0 * b)))
        bnd[i] = boundary_flux(ShellState(a, b), spec, params)
        pos[i] = bool(np.all(a > 0) and (spec.kind is ModelKind.EULER or np.all(b > 0)))
    gain = forcing_gain(spec, params)

    dpsi = np.full(n, np.nan)
    slack = np.full(n, np.nan)
    bound = np.full(n, np.nan)
    checked = np.zeros(n, dtype=bool)
    eps = np.finfo(float).eps
    for i in range(2, n - 2):
        if not pos[i - 2: i + 3].all():
            continue
        narrow = (psi[i + 1] - psi[i - 1]) / (t[i + 1] - t[i - 1])
        wide = (psi[i + 2] - psi[i - 2]) / (t[i + 2] - t[i - 2])
        scale = np.abs(psi[i - 2: i + 3]).max()
        rounding = 4 * eps * scale / (t[i + 1] - t[i - 1])
        dpsi[i] = narrow
        slack[i] = abs(narrow - wide) + rounding
        bound[i] = K * psi[i] ** 2 + gain - bnd[i]
        checked[i] = True
    with np.errstate(invalid="ignore"):
        ok = checked & (dpsi >= bound - slack)
    return RiccatiCheck(t, psi, dpsi, slack, bound, checked, ok, K)


@dataclass(frozen=True)
class MonitorReport:
    times: np.ndarray
    min_a: np.ndarray
    min_b: np.ndarray
    positivity_loss: float | None
    monotone: np.ndarray | None  # Euler only


def monitors(traj: Trajectory, spec: ModelSpec, rel_tol: float = 1e-12) -> MonitorReport:
    """Per-sample minima, first positivity loss and the Euler monotonicity flag.

    The positivity-loss time is the bracketed event time when the trajectory
    recorded one, otherwise the first sample with a non-positive entry. The
    monotone flag asks whether ``lambda_j**(theta/3) a_j`` is non-increasing
    in j, up to ``rel_tol`` of its largest magnitude.
    """
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    a = np.asarray(traj.a)
    b = np.asarray(traj.b)
    min_a = a.min(axis=1)
    min_b = b.min(axis=1)
    euler = spec.kind is ModelKind.EULER
    lost = min_a <= 0 if euler else (min_a <= 0) | (min_b <= 0)
    loss = traj.event_time("positivity")
    if loss is None and lost.any():
        loss = float(traj.times[int(np.argmax(lost))])
    mono = None
    if euler:
        r = a * _weights(spec.lam, spec.theta / 3, spec.size)
        tol = rel_tol * np.abs(r).max(axis=1, keepdims=True)
        mono = np.all(np.diff(r, axis=1) <= tol, axis=1)
    return MonitorReport(np.asarray(traj.times), min_a, min_b, loss, mono)


def energy_budget(traj: Trajectory, spec: ModelSpec) -> np.ndarray:
    """``E(t) - E(0) - int_0^t sum_j f_j a_j`` on the sample grid (trapezoid rule)."""
    t = np.asarray(traj.times)
    a = np.asarray(traj.a)
    b = np.asarray(traj.b)
    e = 0.5 * (np.sum(a * a, axis=1) + np.sum(b * b, axis=1))
    power = a @ spec.forcing
    work = np.concatenate(([0.0], np.cumsum(0.5 * (power[1:] + power[:-1]) * np.diff(t))))
    return e - e[0] - work
