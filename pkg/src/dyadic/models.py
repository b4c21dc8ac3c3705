"""Dyadic shell systems: the KP Euler model and the two ideal-MHD variants.

Shells are indexed from 0 with wavenumbers ``lambda_j = lam**j``. A model
truncated at index ``k`` carries ``k + 1`` shells; every term that would
reference shell ``k + 1`` is dropped, which is the same as padding the state
with a zero shell. That truncation keeps the energy flux telescoping, and for
the bidirectional model it also keeps the cross-helicity flux telescoping.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ModelKind(enum.Enum):
    EULER = "euler"
    MHD_FORWARD = "mhd_forward"
    MHD_BIDIRECTIONAL = "mhd_bidirectional"

    @classmethod
    def parse(cls, value: "ModelKind | str") -> "ModelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "euler": cls.EULER,
            "kp": cls.EULER,
            "mhd_forward": cls.MHD_FORWARD,
            "forward": cls.MHD_FORWARD,
            "mhd_bidirectional": cls.MHD_BIDIRECTIONAL,
            "bidirectional": cls.MHD_BIDIRECTIONAL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model kind {value!r}") from None

    @property
    def code(self) -> int:
        """Integer tag used by the compiled kernels."""
        return _KIND_CODES[self]


_KIND_CODES = {ModelKind.EULER: 0, ModelKind.MHD_FORWARD: 1, ModelKind.MHD_BIDIRECTIONAL: 2}


class FluxVariant(enum.Enum):
    FORWARD = "forward"
    SIGNED = "signed"


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelSpec:
    """A validated, truncated shell model.

    ``n_shells`` is the truncation index ``k``: the model evolves shells
    ``0..k``. ``forcing`` always has length ``k + 1``.
    """

    kind: ModelKind
    lam: float
    theta: float
    n_shells: int
    forcing: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.n_shells + 1

    @property
    def wavenumbers(self) -> np.ndarray:
        """``lambda_j = lam**j`` for j = 0..k."""
        return self.lam ** np.arange(self.size, dtype=float)

    @property
    def coupling(self) -> np.ndarray:
        """``lambda_j**theta``, the nonlinear coupling at each shell."""
        return self.lam ** (self.theta * np.arange(self.size, dtype=float))

    @property
    def f0(self) -> float:
        return float(self.forcing[0])

    def with_shells(self, n_shells: int) -> "ModelSpec":
        """Same model truncated at a different index; forcing is cut or zero-padded."""
        forcing = np.zeros(n_shells + 1)
        m = min(n_shells + 1, self.size)
        forcing[:m] = self.forcing[:m]
        return make_model(self.kind, self.lam, theta=self.theta, n_shells=n_shells, forcing=forcing)

    def with_forcing(self, forcing: Sequence[float]) -> "ModelSpec":
        return make_model(self.kind, self.lam, theta=self.theta, n_shells=self.n_shells, forcing=forcing)


def theta_from_delta(delta: float) -> float:
    """Nonlinearity exponent from the intermittency dimension, ``(5 - delta) / 2``."""
    if not (0.0 <= delta <= 3.0):
        raise ValueError(f"intermittency dimension delta must lie in [0, 3], got {delta}")
    return (5.0 - delta) / 2.0


def make_model(
    kind: ModelKind | str,
    lam: float = 2.0,
    *,
    theta: float | None = None,
    delta: float | None = None,
    n_shells: int,
    forcing: Sequence[float] = (),
) -> ModelSpec:
    """Build a :class:`ModelSpec`, validating every parameter.

    Exactly one of ``theta`` and ``delta`` must be given. ``forcing`` may be
    shorter than ``n_shells + 1`` and is zero-padded.
    """
    kind = ModelKind.parse(kind)
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 1.0:
        raise ValueError(f"shell spacing lambda must be > 1, got {lam}")
    if (theta is None) == (delta is None):
        raise ValueError("give exactly one of theta or delta")
    if delta is not None:
        theta = theta_from_delta(float(delta))
    theta = float(theta)
    if not math.isfinite(theta) or theta <= 0.0:
        raise ValueError(f"theta must be > 0, got {theta}")
    if int(n_shells) != n_shells or n_shells < 0:
        raise ValueError(f"n_shells must be a non-negative integer, got {n_shells}")
    n_shells = int(n_shells)
    f = np.asarray(forcing, dtype=float).ravel()
    if f.size > n_shells + 1:
        raise ValueError(f"forcing has {f.size} entries but the model has only {n_shells + 1} shells")
    if not np.all(np.isfinite(f)):
        raise ValueError("forcing entries must be finite")
    padded = np.zeros(n_shells + 1)
    padded[: f.size] = f
    return ModelSpec(kind, lam, theta, n_shells, _frozen(padded))


@dataclass(frozen=True)
class ShellState:
    """Velocity and magnetic shell amplitudes at time ``t``.

    For the Euler model ``b`` is kept as an all-zero array so that every
    model shares one state layout.
    """

    a: np.ndarray
    b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        a = _frozen(self.a).ravel()
        b = _frozen(self.b).ravel()
        if a.shape != b.shape:
            raise ValueError(f"a and b differ in length ({a.size} vs {b.size})")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_arrays(cls, a, b=None, t: float = 0.0) -> "ShellState":
        a = np.asarray(a, dtype=float)
        return cls(a, np.zeros_like(a) if b is None else b, t)

    @classmethod
    def zeros(cls, spec: ModelSpec, t: float = 0.0) -> "ShellState":
        return cls(np.zeros(spec.size), np.zeros(spec.size), t)

    @property
    def size(self) -> int:
        return self.a.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b)))

    def vector(self) -> np.ndarray:
        """Flat ``[a, b]`` copy, the layout used by the integrator."""
        return np.concatenate((self.a, self.b))

    @classmethod
    def from_vector(cls, y: np.ndarray, t: float = 0.0) -> "ShellState":
        n = y.size // 2
        return cls(y[:n], y[n:], t)

    def replace(self, **changes) -> "ShellState":
        kw = {"a": self.a, "b": self.b, "t": self.t}
        kw.update(changes)
        return ShellState(**kw)


@dataclass(frozen=True)
class FluxProfile:
    values: np.ndarray
    variant: FluxVariant


def check_state(spec: ModelSpec, state: ShellState) -> None:
    if state.size != spec.size:
        raise ValueError(f"state has {state.size} shells, model expects {spec.size}")
    if not state.is_finite():
        raise ValueError("state contains non-finite entries")


def _shift_up(x: np.ndarray) -> np.ndarray:
    """x_{j+1} with the truncated shell k+1 taken as zero."""
    out = np.zeros_like(x)
    out[:-1] = x[1:]
    return out


def _shift_down(x: np.ndarray) -> np.ndarray:
    """x_{j-1} with x_{-1} = 0."""
    out = np.zeros_like(x)
    out[1:] = x[:-1]
    return out


def rhs(spec: ModelSpec, state: ShellState) -> tuple[np.ndarray, np.ndarray]:
    """Time derivative ``(da, db)`` of the truncated system."""
    check_state(spec, state)
    a, b = state.a, state.b
    lt = spec.coupling
    lt_prev = _shift_down(lt)
    a_next, a_prev = _shift_up(a), _shift_down(a)
    transfer_a = lt * a * a_next - lt_prev * a_prev * a_prev

    if spec.kind is ModelKind.EULER:
        return -transfer_a + spec.forcing, np.zeros_like(a)

    b_next, b_prev = _shift_up(b), _shift_down(b)
    transfer_b = lt * b * b_next - lt_prev * b_prev * b_prev
    induction = lt * (a * b_next - b * a_next)
    if spec.kind is ModelKind.MHD_FORWARD:
        return -transfer_a - transfer_b + spec.forcing, induction
    return -transfer_a + transfer_b + spec.forcing, -induction


def flux(spec: ModelSpec, state: ShellState) -> FluxProfile:
    """Energy flux through each shell boundary ``j -> j+1`` for j = 0..k-1.

    The forward variant is ``lambda_j**theta (a_j**2 + b_j**2) a_{j+1}``; the
    bidirectional model uses the signed variant with ``a_j**2 - b_j**2``.
    """
    check_state(spec, state)
    a, b = state.a, state.b
    lt = spec.coupling[:-1]
    if spec.kind is ModelKind.MHD_BIDIRECTIONAL:
        vals = lt * (a[:-1] ** 2 - b[:-1] ** 2) * a[1:]
        variant = FluxVariant.SIGNED
    else:
        vals = lt * (a[:-1] ** 2 + b[:-1] ** 2) * a[1:]
        variant = FluxVariant.FORWARD
    return FluxProfile(_frozen(vals), variant)


def rescale(state: ShellState, spec: ModelSpec, exponent: float) -> tuple[np.ndarray, np.ndarray]:
    """``(lambda_j**exponent * a_j, lambda_j**exponent * b_j)``.

    Raises OverflowError if a weight or product is not finite.
    """
    if not math.isfinite(exponent):
        raise ValueError("exponent must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        w = spec.lam ** (exponent * np.arange(state.size, dtype=float))
        ra, rb = w * state.a, w * state.b
    if not (np.all(np.isfinite(ra)) and np.all(np.isfinite(rb))):
        raise OverflowError(f"rescaling by lambda_j**{exponent} overflowed")
    return ra, rb
