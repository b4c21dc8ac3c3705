"""Steady states: explicit fixed-point families and a Newton cross-check.

With forcing ``f = (f0, 0, ...)`` the infinite systems have the fixed points

    a_j = A0 * lam**(theta/6) * sqrt(f0) * lambda_j**(-theta/3)
    b_j = B0 * lam**(theta/6) * sqrt(f0) * lambda_j**(-theta/3)

with ``A0**2 + B0**2 = 1`` for the forward MHD model, ``A0**2 - B0**2 = 1``
for the bidirectional one, and ``A0 = +-1, B0 = 0`` for Euler. On a
truncated model these profiles balance every shell except the last, whose
inflow has nowhere to go; that boundary defect is reported separately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import ModelKind, ModelSpec, ShellState, make_model, rhs

__all__ = [
    "FixedPoint", "SteadyResidual", "ShellRatios", "NewtonResult", "ConvergenceError",
    "fixed_point", "fixed_point_from_amplitudes", "residual", "shell_ratios",
    "rhs_jacobian", "newton_steady",
]

_CONSTRAINT_TOL = 1e-12


@dataclass(frozen=True)
class FixedPoint:
    kind: ModelKind
    A0: float
    B0: float
    f0: float
    lam: float
    theta: float
    a_bar: np.ndarray
    b_bar: np.ndarray

    @property
    def n_shells(self) -> int:
        return self.a_bar.size - 1

    @property
    def scale(self) -> float:
        """``lam**(theta/6) * sqrt(f0)``, the shell-0 amplitude of a unit profile."""
        return _scale(self.lam, self.theta, self.f0)

    def spec(self) -> ModelSpec:
        """The truncated model this point is meant to balance."""
        return make_model(self.kind, self.lam, theta=self.theta, n_shells=self.n_shells,
                          forcing=[self.f0])

    def state(self, t: float = 0.0) -> ShellState:
        return ShellState(self.a_bar, self.b_bar, t)


def _scale(lam: float, theta: float, f0: float) -> float:
    return lam ** (theta / 6) * math.sqrt(f0)


def _profile(lam: float, theta: float, n_shells: int) -> np.ndarray:
    return lam ** (-theta / 3 * np.arange(n_shells + 1, dtype=float))


def fixed_point_from_amplitudes(kind: ModelKind | str, lam: float, theta: float, f0: float,
                                A0: float, B0: float, n_shells: int) -> FixedPoint:
    """Fixed point with explicit amplitudes, checked against the constraint of ``kind``."""
    kind = ModelKind.parse(kind)
    if not f0 > 0:
        raise ValueError("f0 must be positive")
    if kind is ModelKind.EULER:
        if B0 != 0 or abs(abs(A0) - 1) > _CONSTRAINT_TOL:
            raise ValueError("Euler fixed points need A0 = +-1 and B0 = 0")
    elif kind is ModelKind.MHD_FORWARD:
        if abs(A0 * A0 + B0 * B0 - 1) > _CONSTRAINT_TOL:
            raise ValueError(f"forward MHD needs A0**2 + B0**2 = 1, got {A0 * A0 + B0 * B0!r}")
    else:
        if abs(A0 * A0 - B0 * B0 - 1) > _CONSTRAINT_TOL:
            raise ValueError(f"bidirectional MHD needs A0**2 - B0**2 = 1, got {A0 * A0 - B0 * B0!r}")
    spec = make_model(kind, lam, theta=theta, n_shells=n_shells, forcing=[f0])
    prof = _scale(spec.lam, spec.theta, f0) * _profile(spec.lam, spec.theta, n_shells)
    a_bar = A0 * prof
    b_bar = B0 * prof
    a_bar.setflags(write=False)
    b_bar.setflags(write=False)
    return FixedPoint(kind, float(A0), float(B0), float(f0), spec.lam, spec.theta, a_bar, b_bar)


def fixed_point(kind: ModelKind | str, lam: float, theta: float, f0: float, param: float,
                n_shells: int, branch: int = 1) -> FixedPoint:
    """Point of the one-parameter family selected by ``param``.

    Forward MHD: ``(A0, B0) = (cos param, sin param)``. Bidirectional MHD:
    ``(branch * cosh param, sinh param)``. Euler: ``A0 = +1`` if
    ``param >= 0`` else ``-1``.
    """
    kind = ModelKind.parse(kind)
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    if kind is ModelKind.MHD_FORWARD:
        A0, B0 = math.cos(param), math.sin(param)
    elif kind is ModelKind.MHD_BIDIRECTIONAL:
        A0, B0 = branch * math.cosh(param), math.sinh(param)
    else:
        A0, B0 = (1.0 if param >= 0 else -1.0), 0.0
    return fixed_point_from_amplitudes(kind, lam, theta, f0, A0, B0, n_shells)


@dataclass(frozen=True)
class SteadyResidual:
    """``rhs`` of a candidate split into interior shells and the boundary shell.

    ``interior_relative`` divides each interior entry by the size of the
    largest term that enters it, which is the natural rounding scale.
    """

    da: np.ndarray
    db: np.ndarray
    interior_max: float
    interior_relative: float
    boundary_defect: float


def _term_scale(spec: ModelSpec, state: ShellState) -> np.ndarray:
    a, b = np.abs(state.a), np.abs(state.b)
    lt = spec.coupling
    nxt_a = np.append(a[1:], 0.0)
    nxt_b = np.append(b[1:], 0.0)
    prev = np.concatenate(([0.0], lt[:-1] * (a[:-1] ** 2 + b[:-1] ** 2)))
    return np.maximum.reduce([lt * (a + b) * (nxt_a + nxt_b), prev, np.abs(spec.forcing)])


def residual(spec: ModelSpec, candidate: ShellState) -> SteadyResidual:
    da, db = rhs(spec, candidate)
    k = spec.n_shells
    inner = np.maximum(np.abs(da[:k]), np.abs(db[:k]))
    imax = float(inner.max()) if k else 0.0
    scale = _term_scale(spec, candidate)[:k]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, inner / np.where(scale > 0, scale, 1.0), inner)
    irel = float(rel.max()) if k else 0.0
    bdef = float(max(abs(da[k]), abs(db[k])))
    return SteadyResidual(da, db, imax, irel, bdef)


@dataclass(frozen=True)
class ShellRatios:
    values: np.ndarray  # NaN where undefined
    undefined: tuple[int, ...]


def shell_ratios(candidate: ShellState, lam: float, theta: float) -> ShellRatios:
    """Ratios of consecutive rescaled amplitudes ``lambda_j**(theta/3) (a_j, b_j)``.

    Entry ``j`` compares shell ``j + 1`` with shell ``j``, using whichever of
    the velocity or magnetic component is larger at shell ``j``. Shells where
    both components vanish make the ratio undefined; they are listed.
    """
    w = lam ** (theta / 3 * np.arange(candidate.size, dtype=float))
    ra, rb = w * candidate.a, w * candidate.b
    n = candidate.size - 1
    vals = np.full(n, np.nan)
    bad = []
    for j in range(n):
        if ra[j] == 0 and rb[j] == 0:
            bad.append(j)
            continue
        if abs(ra[j]) >= abs(rb[j]):
            vals[j] = ra[j + 1] / ra[j]
        else:
            vals[j] = rb[j + 1] / rb[j]
    return ShellRatios(vals, tuple(bad))


def rhs_jacobian(spec: ModelSpec, state: ShellState) -> np.ndarray:
    """Analytic Jacobian of the truncated ``rhs`` in the ``[a, b]`` layout."""
    n = spec.size
    a, b = state.a, state.b
    lt = spec.coupling
    J = np.zeros((2 * n, 2 * n))
    sig = 1.0 if spec.kind is ModelKind.MHD_FORWARD else -1.0
    tau = 1.0 if spec.kind is ModelKind.MHD_FORWARD else -1.0
    mhd = spec.kind is not ModelKind.EULER
    for j in range(n):
        if j + 1 < n:
            J[j, j] -= lt[j] * a[j + 1]
            J[j, j + 1] -= lt[j] * a[j]
            if mhd:
                J[j, n + j] -= sig * lt[j] * b[j + 1]
                J[j, n + j + 1] -= sig * lt[j] * b[j]
                # induction: tau * L_j (a_j b_{j+1} - b_j a_{j+1})
                J[n + j, j] += tau * lt[j] * b[j + 1]
                J[n + j, n + j + 1] += tau * lt[j] * a[j]
                J[n + j, n + j] -= tau * lt[j] * a[j + 1]
                J[n + j, j + 1] -= tau * lt[j] * b[j]
        if j > 0:
            J[j, j - 1] += 2 * lt[j - 1] * a[j - 1]
            if mhd:
                J[j, n + j - 1] += 2 * sig * lt[j - 1] * b[j - 1]
    return J


def _fd_jacobian(fun, x: np.ndarray) -> np.ndarray:
    r0 = fun(x)
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = 1e-7 * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (fun(xp) - fun(xm)) / (2 * h)
    return J


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, iterations: int, residual_norm: float):
        super().__init__(msg)
        self.iterations = iterations
        self.residual_norm = residual_norm


@dataclass(frozen=True)
class NewtonResult:
    state: ShellState
    iterations: int
    residual_norm: float
    condition: float
    interior_max: float
    boundary_defect: float


class _SteadySystem:
    """Algebraic system solved by :func:`newton_steady`.

    Unknowns are ``a`` (Euler) or ``[a, b]``. Rows are the interior rhs
    equations for shells ``0..k-1`` followed by closure rows replacing the
    boundary shell, whose own equation has no steady solution: its inflow is
    strictly positive for any nonzero state. The closure asks the rescaled
    amplitudes ``lambda_j**(theta/3) (a_j, b_j)`` of shells ``k`` and ``k-1``
    to have equal projection on shell ``k-1``; for MHD models one more row
    fixes the rotation gauge ``sin(alpha) a_0 = cos(alpha) b_0``.
    """

    def __init__(self, spec: ModelSpec, alpha: float):
        self.spec = spec
        self.n = spec.size
        self.mhd = spec.kind is not ModelKind.EULER
        self.alpha = alpha
        self.rk = spec.lam ** (spec.theta / 3)

    def split(self, x):
        n = self.n
        return (x[:n], x[n:]) if self.mhd else (x, np.zeros(n))

    def pack(self, state: ShellState):
        return state.vector() if self.mhd else state.a.copy()

    def dynamic_rows(self) -> np.ndarray:
        k = self.spec.n_shells
        if self.mhd:
            return np.concatenate((np.ones(2 * k), np.zeros(2)))
        return np.concatenate((np.ones(k), np.zeros(1)))

    def residual(self, x):
        a, b = self.split(x)
        da, db = rhs(self.spec, ShellState(a, b))
        k = self.spec.n_shells
        ca = (self.rk * a[k] - a[k - 1]) * a[k - 1]
        if not self.mhd:
            return np.concatenate((da[:k], [self.rk * a[k] - a[k - 1]]))
        cb = (self.rk * b[k] - b[k - 1]) * b[k - 1]
        gauge = math.sin(self.alpha) * a[0] - math.cos(self.alpha) * b[0]
        return np.concatenate((da[:k], db[:k], [ca + cb, gauge]))

    def jacobian(self, x):
        a, b = self.split(x)
        n, k = self.n, self.spec.n_shells
        full = rhs_jacobian(self.spec, ShellState(a, b))
        if not self.mhd:
            J = np.zeros((n, n))
            J[:k] = full[:k, :n]
            J[k, k] = self.rk
            J[k, k - 1] = -1.0
            return J
        J = np.zeros((2 * n, 2 * n))
        J[:k] = full[:k]
        J[k: 2 * k] = full[n: n + k]
        r = 2 * k
        J[r, k] = self.rk * a[k - 1]
        J[r, k - 1] = self.rk * a[k] - 2 * a[k - 1]
        J[r, n + k] = self.rk * b[k - 1]
        J[r, n + k - 1] = self.rk * b[k] - 2 * b[k - 1]
        J[r + 1, 0] = math.sin(self.alpha)
        J[r + 1, n] = -math.cos(self.alpha)
        return J


def newton_steady(spec: ModelSpec, guess: ShellState, tol: float = 1e-12, max_iter: int = 200,
                  fd_jacobian: bool = False) -> NewtonResult:
    """Steady state of the truncated model near ``guess``.

    Newton's method globalized by pseudo-transient continuation: each step
    solves ``(D / dtau - J) dx = R`` where ``D`` marks the dynamic rows, and
    ``dtau`` grows as the residual falls (switched evolution relaxation), so
    the iteration behaves like implicit time stepping far from a root and
    like plain Newton near one. This lets it start from a zero guess.

    The shell-``k`` equation is replaced by a closure (see ``_SteadySystem``),
    so the result satisfies the interior equations to ``tol`` while the
    boundary shell carries a defect, reported in the result.
    """
    if spec.n_shells < 1:
        raise ValueError("newton_steady needs at least two shells")
    if not guess.is_finite():
        raise ValueError("guess must be finite")
    if guess.size != spec.size:
        raise ValueError(f"guess has {guess.size} shells, model expects {spec.size}")
    a0, b0 = guess.a[0], guess.b[0]
    alpha = math.atan2(b0, a0) if (a0 != 0 or b0 != 0) else 0.0
    sysm = _SteadySystem(spec, alpha)
    x = sysm.pack(guess)
    d = sysm.dynamic_rows()
    jac = (lambda y: _fd_jacobian(sysm.residual, y)) if fd_jacobian else sysm.jacobian

    R = sysm.residual(x)
    rn = float(np.abs(R).max())
    it = 0
    dtau = 1.0 / max(rn, 1e-300)
    while rn > tol:
        if it >= max_iter:
            raise ConvergenceError(f"no convergence after {it} iterations (|R| = {rn:.3e})", it, rn)
        it += 1
        J = jac(x)
        M = np.diag(d / dtau) - J
        try:
            dx = np.linalg.solve(M, R)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian", it, rn) from None
        if not np.all(np.isfinite(dx)):
            raise ConvergenceError("singular Jacobian", it, rn)
        x_new = x + dx
        R_new = sysm.residual(x_new)
        rn_new = float(np.abs(R_new).max())
        if not math.isfinite(rn_new) or rn_new > 10 * rn:
            dtau *= 0.25
            continue
        dtau = min(dtau * rn / max(rn_new, 1e-300), 1e300)
        x, R, rn = x_new, R_new, rn_new

    J = sysm.jacobian(x)
    cond = float(np.linalg.cond(J))
    if not math.isfinite(cond):
        raise ConvergenceError("singular Jacobian at the solution", it, rn)
    a, b = sysm.split(x)
    state = ShellState(a, b, guess.t)
    res = residual(spec, state)
    return NewtonResult(state, it, rn, cond, res.interior_max, res.boundary_defect)
