"""Perturbations of fixed points and eigenvalue analysis.

Around the fixed point ``a_j = A0 lambda_j**(-theta/3)``,
``b_j = B0 lambda_j**(-theta/3)`` (forcing ``f0 = lambda**(-theta/3)``),
write ``a = a_bar + eps*omega`` and ``b = b_bar + eps*zeta``. With
``mu = lambda**(-theta/3)`` and ``r_j = lambda_j**(2 theta/3)`` the linear
parts are built from two operators:

    V(x)_j = r_j (2 mu**2 x_{j-1} - mu x_j - x_{j+1})     (velocity)
    G(x)_j = r_j (mu x_j - x_{j+1})                      (magnetic)

Velocity eigenvectors ``omega_j = c_j exp(p t)`` of ``V`` satisfy the
three-term recursion

    c_{j+1} = -(p lambda_j**(-2 theta/3) + mu) c_j + 2 mu**2 c_{j-1},

``c_{-1} = 0``, ``c_0 = 1``. Its characteristic roots are ``mu`` and
``-2 mu``; an eigenvalue is admissible when the ``-2 mu`` (dominant) mode
is absent, which leaves ``c_j ~ lambda_j**(-theta/3)``. Magnetic
eigenvectors ``zeta_j = d_j exp(q t)`` satisfy the first-order recursion
``d_{j+1} = (mu + s q lambda_j**(-2 theta/3)) d_j``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .models import ModelKind

__all__ = [
    "Channel", "Classification", "PerturbationState", "EigenProblem", "ScanReport",
    "ContinuedFraction", "ContinuedFractionError",
    "perturbation_rhs", "linear_matrix", "velocity_eigenvector", "magnetic_eigenvector",
    "velocity_product_formula", "dominant_amplitude", "continued_fraction",
    "minimal_ratio_fraction", "eigen_scan", "magnetic_variant",
]


class Channel(enum.Enum):
    VELOCITY = "velocity"
    MAGNETIC = "magnetic"


class Classification(enum.Enum):
    DECAYING = "decaying"    # behaves like lambda_j**(-theta/3): in H^s for s < theta/3
    GROWING = "growing"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class PerturbationState:
    omega: np.ndarray
    zeta: np.ndarray
    epsilon: float = 0.0
    A0: float = 1.0
    B0: float = 0.0
    lam: float = 2.0
    theta: float = 1.0

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float).ravel()
        ze = np.asarray(self.zeta, dtype=float).ravel()
        if om.shape != ze.shape:
            raise ValueError(f"omega and zeta differ in length ({om.size} vs {ze.size})")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "zeta", ze)


def _up(x):
    out = np.zeros_like(x)
    out[:-1] = x[1:]
    return out


def _down(x):
    out = np.zeros_like(x)
    out[1:] = x[:-1]
    return out


def _ops(lam: float, theta: float, n: int):
    mu = lam ** (-theta / 3)
    r = lam ** (2 * theta / 3 * np.arange(n, dtype=float))

    def V(x):
        return r * (2 * mu * mu * _down(x) - mu * x - _up(x))

    def G(x):
        return r * (mu * x - _up(x))

    return V, G


def perturbation_rhs(state: PerturbationState, kind: ModelKind | str) -> tuple[np.ndarray, np.ndarray]:
    """``(omega', zeta')`` about the unit fixed point, shells beyond the end set to zero."""
    kind = ModelKind.parse(kind)
    om, ze, eps = state.omega, state.zeta, state.epsilon
    A0, B0 = state.A0, state.B0
    n = om.size
    V, G = _ops(state.lam, state.theta, n)
    L = state.lam ** (state.theta * np.arange(n, dtype=float))
    Lm = _down(L)

    def transfer(x, y):
        # L_j x_j y_{j+1} - L_{j-1} x_{j-1} y_{j-1}
        return L * x * _up(y) - Lm * _down(x) * _down(y)

    if kind is ModelKind.EULER:
        return A0 * V(om) - eps * transfer(om, om), np.zeros(n)
    induction = L * (om * _up(ze) - ze * _up(om))
    if kind is ModelKind.MHD_FORWARD:
        dom = A0 * V(om) + B0 * V(ze) - eps * transfer(om, om) - eps * transfer(ze, ze)
        dze = B0 * G(om) - A0 * G(ze) + eps * induction
    else:
        dom = A0 * V(om) - B0 * V(ze) - eps * transfer(om, om) + eps * transfer(ze, ze)
        dze = -B0 * G(om) + A0 * G(ze) - eps * induction
    return dom, dze


def _operator_matrices(lam: float, theta: float, n: int):
    mu = lam ** (-theta / 3)
    r = lam ** (2 * theta / 3 * np.arange(n, dtype=float))
    Vm = np.diag(-mu * r) + np.diag(-r[:-1], 1) + np.diag(2 * mu * mu * r[1:], -1)
    Gm = np.diag(mu * r) + np.diag(-r[:-1], 1)
    return Vm, Gm


def linear_matrix(kind: ModelKind | str, A0: float, B0: float, lam: float, theta: float, n: int,
                  channel: Channel | str | None = None, tail_rate: float | None = None) -> np.ndarray:
    """Matrix of the linearized system on ``n`` shells.

    ``channel`` picks the velocity-only or magnetic-only block (which requires
    ``B0 = 0`` for the blocks to decouple); ``None`` returns the full
    ``[omega, zeta]`` system.

    ``tail_rate`` adds an extra shell ``n`` to a single-channel block,
    evolving as ``x_n' = tail_rate * x_n`` and feeding shell ``n - 1``.
    Seeded with an eigenvector's ``n``-th coefficient this reproduces the
    infinite system exactly: the magnetic operator is upper triangular, and
    for the velocity operator it prescribes the far shell along the mode.
    Without it the far shell is simply dropped.
    """
    kind = ModelKind.parse(kind)
    Vm, Gm = _operator_matrices(lam, theta, n)
    if kind is ModelKind.EULER:
        B0 = 0.0
    sign = 1.0 if kind is not ModelKind.MHD_BIDIRECTIONAL else -1.0
    if channel is not None:
        channel = Channel(channel)
        if B0 != 0:
            raise ValueError("single-channel blocks require B0 = 0")
        if channel is Channel.VELOCITY:
            block = A0 * Vm
            coupling = -A0 * lam ** (2 * theta / 3 * (n - 1))
        else:
            block = -sign * A0 * Gm
            coupling = sign * A0 * lam ** (2 * theta / 3 * (n - 1))
        if tail_rate is None:
            return block
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = block
        out[n - 1, n] = coupling
        out[n, n] = tail_rate
        return out
    if tail_rate is not None:
        raise ValueError("tail closure is only defined for a single channel")
    if kind is ModelKind.EULER:
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = A0 * Vm
        return M
    return np.block([[A0 * Vm, sign * B0 * Vm], [sign * B0 * Gm, -sign * A0 * Gm]])


@dataclass(frozen=True)
class EigenProblem:
    channel: Channel
    value: float
    lam: float
    theta: float
    variant: int
    coeffs: np.ndarray
    alphas: np.ndarray
    classification: Classification
    degenerate_at: int | None = None

    @property
    def mu(self) -> float:
        return self.lam ** (-self.theta / 3)

    def normalized(self) -> np.ndarray:
        """``coeffs_j / mu**j``: tends to a constant for decaying sequences."""
        j = np.arange(self.coeffs.size, dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            return self.coeffs / self.mu ** j


def _check_variant(variant: int) -> None:
    if variant not in (1, -1):
        raise ValueError("variant must be +1 or -1")


def velocity_eigenvector(p: float, lam: float, theta: float, n: int, variant: int = 1) -> EigenProblem:
    """Iterate the velocity recursion up to ``c_n``.

    ``variant = 1`` is the expansion about ``A0 = 1``; ``variant = -1``
    (about ``A0 = -1``) replaces ``p`` by ``-p``. ``alphas[j]`` holds the
    coefficient ``variant * p * lambda_j**(-2 theta/3) + mu`` of ``c_j``.
    On overflow the sequence stops at the last finite entry.
    """
    _check_variant(variant)
    if n < 2:
        raise ValueError("n must be at least 2")
    mu = lam ** (-theta / 3)
    j = np.arange(n, dtype=float)
    alphas = variant * p * lam ** (-2 * theta / 3 * j) + mu
    c = np.empty(n + 1)
    c[0] = 1.0
    prev = 0.0
    last = n
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            nxt = -alphas[i] * c[i] + 2 * mu * mu * prev
            if not math.isfinite(nxt):
                last = i
                break
            prev = c[i]
            c[i + 1] = nxt
    c = c[: last + 1]
    cls = _classify_velocity(c, mu) if last == n else Classification.GROWING
    return EigenProblem(Channel.VELOCITY, float(p), lam, theta, variant, c, alphas, cls)


def _classify_velocity(c: np.ndarray, mu: float) -> Classification:
    """Decaying if ``|c_j| / mu**j`` stays bounded, growing if it runs away.

    The dominant mode grows relative to ``mu**j`` like ``2**j``; any amplitude
    of it, even rounding noise, eventually wins, so the comparison uses the
    early part of the sequence as the reference level.
    """
    j = np.arange(c.size, dtype=float)
    g = np.abs(c) * np.exp(-j * math.log(mu))
    half = max(2, c.size // 2)
    ref = g[:half].max()
    return Classification.DECAYING if g[-1] <= 1e3 * ref else Classification.GROWING


def dominant_amplitude(p: np.ndarray | float, lam: float, theta: float, n: int,
                       variant: int = 1) -> np.ndarray:
    """Signed dominant-mode amplitude ``c_n / (-2 mu)**n``, vectorized over ``p``.

    The recursion is run on ``c_j / (-2 mu)**j`` directly so it cannot
    overflow. Zeros of this function are the admissible eigenvalues.
    """
    _check_variant(variant)
    p = np.asarray(p, dtype=float)
    mu = lam ** (-theta / 3)
    rho = -2 * mu
    prev = np.zeros_like(p)
    cur = np.ones_like(p)
    for i in range(n):
        alpha = variant * p * lam ** (-2 * theta / 3 * i) + mu
        # x_{i+1} = c_{i+1}/rho**(i+1) = (-alpha x_i rho**i + 2 mu**2 x_{i-1} rho**(i-1)) / rho**(i+1)
        nxt = (-alpha * cur + 2 * mu * mu * prev / rho) / rho
        prev, cur = cur, nxt
    return cur


def velocity_product_formula(p: float, lam: float, theta: float, n: int) -> np.ndarray:
    """``c_j = prod_{i<j} (p lambda_i**(-2 theta/3) + mu)``.

    This is the first-order product that solves ``c_{j+1} = alpha_j c_j``,
    not the three-term recursion; it is exposed for comparison with
    :func:`velocity_eigenvector`.
    """
    mu = lam ** (-theta / 3)
    j = np.arange(n, dtype=float)
    factors = p * lam ** (-2 * theta / 3 * j) + mu
    return np.concatenate(([1.0], np.cumprod(factors)))


def magnetic_variant(kind: ModelKind | str, A0: float) -> int:
    """Sign ``s`` in ``d_{j+1} = (mu + s q lambda_j**(-2 theta/3)) d_j``."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.EULER:
        raise ValueError("the Euler model has no magnetic channel")
    s = 1 if A0 > 0 else -1
    return s if kind is ModelKind.MHD_FORWARD else -s


def magnetic_eigenvector(q: float, lam: float, theta: float, n: int, variant: int = 1,
                         rel_tol: float = 1e-12) -> EigenProblem:
    """Iterate ``d_{j+1} = alpha_j d_j`` from ``d_0 = 1`` up to ``d_n``.

    A factor ``alpha_j`` that vanishes (to ``rel_tol`` of its two terms)
    makes every later coefficient zero; the problem is then Degenerate and
    ``degenerate_at`` names the shell.
    """
    _check_variant(variant)
    if n < 1:
        raise ValueError("n must be at least 1")
    mu = lam ** (-theta / 3)
    j = np.arange(n, dtype=float)
    term = variant * q * lam ** (-2 * theta / 3 * j)
    alphas = mu + term
    zero = np.abs(alphas) <= rel_tol * np.maximum(mu, np.abs(term))
    deg = int(np.argmax(zero)) if zero.any() else None
    if deg is not None:
        alphas = alphas.copy()
        alphas[deg] = 0.0
    d = np.concatenate(([1.0], np.cumprod(alphas)))
    cls = Classification.DEGENERATE if deg is not None else Classification.DECAYING
    return EigenProblem(Channel.MAGNETIC, float(q), lam, theta, variant, d, alphas, cls, deg)


class ContinuedFractionError(ZeroDivisionError):
    def __init__(self, level: int):
        super().__init__(f"zero denominator at level {level}")
        self.level = level


@dataclass(frozen=True)
class ContinuedFraction:
    value: float
    delta: float
    depth: int


def _alpha_list(alpha, depth: int) -> np.ndarray:
    if callable(alpha):
        return np.array([alpha(i) for i in range(1, depth + 1)], dtype=float)
    vals = np.fromiter(alpha, dtype=float, count=depth) if not isinstance(alpha, np.ndarray) \
        else np.asarray(alpha, dtype=float)[:depth]
    if vals.size < depth:
        raise ValueError(f"need {depth} terms, got {vals.size}")
    return vals


def continued_fraction(alpha: Sequence[float] | Iterable[float] | Callable[[int], float],
                       A: float, depth: int) -> ContinuedFraction:
    """``1/(A a_1 + A/(A a_2 + A/(... + A/(A a_depth))))``.

    ``alpha`` is a sequence (or iterator) starting at ``a_1``, or a callable
    ``i -> a_i`` for ``i >= 1``. The value is evaluated backward from a zero
    tail. ``delta`` is the gap between the depth and depth-1 truncations,
    computed from the convergent recurrence as
    ``A**(depth-1) / |Q_depth Q_{depth-1}|``, which has no cancellation.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    a = _alpha_list(alpha, depth)
    t = 0.0
    for i in range(depth - 1, -1, -1):
        den = A * a[i] + A * t
        if den == 0:
            raise ContinuedFractionError(i + 1)
        t = 1.0 / den
    return ContinuedFraction(t, _convergent_delta(a, A), depth)


def _convergent_delta(a: np.ndarray, A: float) -> float:
    """``|f_n - f_{n-1}|`` via denominators ``Q_i = A a_i Q_{i-1} + A Q_{i-2}``."""
    n = a.size
    if n == 1:
        return abs(1.0 / (A * a[0]))
    q_prev, q = 1.0, A * a[0]  # Q_0, Q_1
    log_scale = 0.0
    for i in range(1, n):
        q_prev, q = q, A * a[i] * q + A * q_prev
        m = max(abs(q), abs(q_prev))
        if m == 0:
            return math.inf
        q_prev, q = q_prev / m, q / m
        log_scale += math.log(m)
    if q == 0 or q_prev == 0:
        return math.inf
    # Q_n Q_{n-1} = q * q_prev * exp(2*log_scale); numerators multiply to A**(n-1)
    return math.exp((n - 1) * math.log(A) - 2 * log_scale - math.log(abs(q * q_prev)))


def minimal_ratio_fraction(p: float, lam: float, theta: float, depth: int, start: int = 1,
                           variant: int = 1) -> ContinuedFraction:
    """Ratio ``c_start / c_{start-1}`` of the decaying solution of the velocity recursion.

    For the recursion above the decaying solution satisfies
    ``c_j / c_{j-1} = 2 mu**2 / (alpha_j + c_{j+1} / c_j)``, which is
    :func:`continued_fraction` with ``A = 1 / (2 mu**2)``. ``p`` is admissible
    exactly when ``-alpha_0`` equals this value at ``start = 1``.
    """
    _check_variant(variant)
    mu = lam ** (-theta / 3)
    A = 1.0 / (2 * mu * mu)
    return continued_fraction(lambda i: variant * p * lam ** (-2 * theta / 3 * (i + start - 1)) + mu,
                              A, depth)


@dataclass(frozen=True)
class ScanReport:
    channel: Channel
    variant: int
    values: np.ndarray
    growth: np.ndarray            # |c_n| / (2 mu)**n, or lim d_j / mu**j
    signed: np.ndarray            # dominant amplitude, or the same limit
    admissible: np.ndarray        # bool per grid row
    classification: list[str]
    eigenvalues: np.ndarray
    forbidden: np.ndarray         # eigenvalues in the forbidden half-line
    unstable: np.ndarray          # magnetic: q > 0
    inconclusive: bool
    s: float | None = None

    @property
    def n_admissible(self) -> int:
        return int(self.eigenvalues.size)


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError("scan range must be finite with lo <= hi")
    if not step > 0:
        raise ValueError("grid step must be positive")
    m = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(m + 1)


def eigen_scan(channel: Channel | str, lo: float, hi: float, step: float, lam: float, theta: float,
               n: int = 200, variant: int = 1, s: float | None = None) -> ScanReport:
    """Scan a range of eigenvalue candidates.

    Velocity channel: the dominant amplitude ``D(p)`` is evaluated on the
    grid; sign changes and exact zeros are refined with Brent's method and
    reported as admissible eigenvalues. A grid row is admissible when a root
    lies in ``[value, value + step)``. The forbidden half-line is ``p >= 0``
    for ``variant = 1`` and ``p <= 0`` for ``variant = -1``. The scan is
    inconclusive when ``D`` at ``n`` and ``n - 20`` differ by more than
    ``1e-6`` relative anywhere on the grid.

    Magnetic channel: every non-degenerate ``q`` is admissible; the report
    gives the limit of ``d_j / mu**j`` and flags ``q > 0`` as unstable.

    ``s``, when given, is the Sobolev index in which admissibility is asked:
    decaying eigenvectors lie in ``H^s`` only for ``s < theta/3``.
    """
    channel = Channel(channel)
    _check_variant(variant)
    vals = _grid(lo, hi, step)
    in_space = s is None or s < theta / 3
    mu = lam ** (-theta / 3)
    if channel is Channel.VELOCITY:
        D = dominant_amplitude(vals, lam, theta, n, variant)
        D_short = dominant_amplitude(vals, lam, theta, max(n - 20, 2), variant)
        scale = np.maximum(np.abs(D), 1e-300)
        inconclusive = bool(np.any(np.abs(D - D_short) > 1e-6 * np.maximum(scale, np.abs(D).max() * 1e-12)))
        roots = []
        rows = np.zeros(vals.size, dtype=bool)
        f = lambda x: float(dominant_amplitude(x, lam, theta, n, variant))
        for i in range(vals.size):
            if D[i] == 0:
                roots.append(vals[i])
                rows[i] = True
            elif i + 1 < vals.size and D[i] * D[i + 1] < 0:
                roots.append(brentq(f, vals[i], vals[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
                rows[i] = True
        roots = np.array(roots if in_space else [], dtype=float)
        rows &= in_space
        cls = ["decaying" if r else "growing" for r in rows]
        forbidden = roots[roots >= 0] if variant == 1 else roots[roots <= 0]
        return ScanReport(channel, variant, vals, np.abs(D), D, rows, cls, roots, forbidden,
                          np.zeros(0), inconclusive, s)

    limits = np.empty(vals.size)
    cls = []
    rows = np.zeros(vals.size, dtype=bool)
    for i, q in enumerate(vals):
        ep = magnetic_eigenvector(q, lam, theta, n, variant)
        limits[i] = ep.normalized()[-1]
        cls.append(ep.classification.value)
        rows[i] = ep.classification is Classification.DECAYING and in_space
    unstable = vals[rows & (vals > 0)]
    return ScanReport(channel, variant, vals, limits, limits, rows, cls, vals[rows], np.zeros(0),
                      unstable, False, s)
