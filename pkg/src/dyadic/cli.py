"""Command-line front end.

    python -m dyadic simulate --config run.cfg --shells 30
    python -m dyadic steady   --config fp.cfg
    python -m dyadic linstab  --scan 0,10,0.01
    python -m dyadic blowup   --config blowup.cfg

A config is either flat ``key=value`` lines (``#`` starts a comment) or a
JSON object with the same keys. Every key can also be given as a flag of
the same name, which overrides the file. Unknown keys are rejected.
See ``CONFIG_KEYS`` for the keys and their defaults.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from typing import Any, Callable

import numpy as np

from . import diagnostics as dg
from .integrator import EventSpec, IntegratorConfig, Method, Trajectory, integrate
from .linstab import Channel, eigen_scan
from .models import ModelKind, ModelSpec, ShellState, make_model, theta_from_delta
from .steady import ConvergenceError, fixed_point_from_amplitudes, newton_steady, residual, shell_ratios

COMMANDS = ("simulate", "steady", "linstab", "blowup")
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, key: str | None, msg: str, line: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {msg}" if where else msg)
        self.key = key
        self.line = line


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------- value parsers

def _as_text(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_as_text(x) for x in v)
    if v is None:
        return "none"
    return str(v).strip()


def _float(v) -> float:
    try:
        x = float(_as_text(v))
    except ValueError:
        raise ValueError(f"expected a number, got {_as_text(v)!r}") from None
    if math.isnan(x):
        raise ValueError("NaN is not allowed")
    return x


def _finite(v) -> float:
    x = _float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _positive(v) -> float:
    x = _finite(v)
    if not x > 0:
        raise ValueError("must be > 0")
    return x


def _step_cap(v) -> float:
    x = _float(v)  # inf allowed: no cap
    if not x > 0:
        raise ValueError("must be > 0")
    return x


def _int(v) -> int:
    text = _as_text(v)
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"expected an integer, got {text!r}") from None


def _optional(parse: Callable) -> Callable:
    def inner(v):
        if v is None or _as_text(v).lower() in ("", "none", "null"):
            return None
        return parse(v)
    return inner


def _floats(count: int | None = None) -> Callable:
    def inner(v):
        text = _as_text(v)
        vals = tuple(_finite(x) for x in text.split(",") if x.strip()) if text else ()
        if count is not None and len(vals) != count:
            raise ValueError(f"expected {count} comma-separated numbers, got {len(vals)}")
        return vals
    return inner


def _bool(v) -> bool:
    text = _as_text(v).lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _model(v) -> str:
    return ModelKind.parse(_as_text(v)).value


def _method(v) -> str:
    return Method(_as_text(v).lower()).value


def _f0(v) -> float | str:
    text = _as_text(v).lower()
    return "auto" if text == "auto" else _finite(text)


def _channel(v) -> str:
    return Channel(_as_text(v).lower()).value


def _variant(v) -> int:
    x = _int(v)
    if x not in (1, -1):
        raise ValueError("must be 1 or -1")
    return x


def _text(v) -> str:
    return _as_text(v)


def _initial(v) -> str:
    text = _as_text(v).replace(" ", "")
    parse_initial(text)
    return text


def _events(v) -> str:
    text = _as_text(v).replace(" ", "").lower()
    parse_events(text)
    return text


def parse_initial(text: str) -> tuple[str, tuple]:
    """Split an ``initial`` value into its kind and numeric arguments.

    ``power:alpha``                 a_j = b_j = lambda_j**-alpha
    ``explicit:a0,a1,...|b0,...``   literal values, zero-padded (``|b...`` optional)
    ``fixedpoint:A0,B0``            the explicit fixed point
    ``fixedpoint+noise:sigma[,seed]`` the fixed point at ``amplitudes`` plus noise
    ``random[:lo,hi]``              uniform in (lo, hi], default (0, 1]
    """
    kind, _, rest = text.partition(":")
    try:
        if kind == "power":
            return kind, _floats(1)(rest)
        if kind == "explicit":
            a, _, b = rest.partition("|")
            return kind, (_floats()(a), _floats()(b))
        if kind == "fixedpoint":
            return kind, _floats(2)(rest)
        if kind == "fixedpoint+noise":
            vals = _floats()(rest)
            if len(vals) not in (1, 2) or vals[0] < 0:
                raise ValueError("expected sigma >= 0 and an optional integer seed")
            if len(vals) == 2 and vals[1] != int(vals[1]):
                raise ValueError("seed must be an integer")
            return kind, vals
        if kind == "random":
            vals = _floats(2)(rest) if rest else (0.0, 1.0)
            if not vals[0] < vals[1]:
                raise ValueError("random bounds need lo < hi")
            return kind, vals
    except ValueError as exc:
        raise ValueError(f"bad initial profile {text!r}: {exc}") from None
    raise ValueError(f"unknown initial profile {text!r} "
                     "(expected power:, explicit:, fixedpoint:, fixedpoint+noise: or random)")


def parse_events(text: str) -> tuple[bool, tuple[float, float] | None]:
    """``positivity`` and/or ``norm:s,limit``, separated by ``;``."""
    watch, norm = False, None
    for part in filter(None, text.split(";")):
        if part == "positivity":
            watch = True
        elif part.startswith("norm:"):
            s, limit = _floats(2)(part[5:])
            if not limit > 0:
                raise ValueError("norm threshold limit must be > 0")
            norm = (s, limit)
        elif part != "none":
            raise ValueError(f"unknown event {part!r} (expected positivity or norm:s,limit)")
    return watch, norm


# ---------------------------------------------------------------- the config

@dataclass(frozen=True)
class RunConfig:
    model: str = "mhd_forward"
    lam: float = 2.0
    theta: float | None = None
    delta: float | None = None
    shells: int = 24
    f0: float | str = 0.0
    initial: str = "power:0.6666666666666666"
    amplitudes: tuple = (1.0, 0.0)
    t_end: float = 1.0
    method: str = "rk45"
    dt: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    dt_min: float = 1e-14
    dt_max: float = math.inf
    sample_every: float | None = None
    max_steps: int = 0
    diagnostics: tuple = ()
    lyapunov: tuple | None = None
    events: str = ""
    output_dir: str = "out"
    seed: int = 0
    channel: str = "velocity"
    variant: int = 1
    scan: tuple = (0.0, 10.0, 0.01)
    scan_n: int = 200
    steady_tol: float = 1e-12
    newton: bool = True

    # derived quantities -------------------------------------------------
    @property
    def theta_value(self) -> float:
        if self.delta is not None:
            return theta_from_delta(self.delta)
        return 1.0 if self.theta is None else self.theta

    @property
    def f0_value(self) -> float:
        if self.f0 == "auto":
            return self.lam ** (-self.theta_value / 3)
        return float(self.f0)

    @property
    def kind(self) -> ModelKind:
        return ModelKind.parse(self.model)

    def model_spec(self) -> ModelSpec:
        return make_model(self.kind, self.lam, theta=self.theta_value, n_shells=self.shells,
                          forcing=[self.f0_value])

    def integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(t_end=self.t_end, method=Method(self.method), dt=self.dt,
                                abs_tol=self.abs_tol, rel_tol=self.rel_tol, dt_min=self.dt_min,
                                dt_max=self.dt_max, sample_every=self.sample_every,
                                max_steps=self.max_steps)

    def event_spec(self) -> EventSpec:
        watch, norm = parse_events(self.events)
        return EventSpec(positivity_watch=watch, norm_threshold=norm)

    def lyapunov_params(self) -> dg.LyapunovParams | None:
        return None if self.lyapunov is None else dg.LyapunovParams(*self.lyapunov)

    def initial_state(self, spec: ModelSpec) -> ShellState:
        kind, args = parse_initial(self.initial)
        n = spec.size
        euler = spec.kind is ModelKind.EULER
        j = np.arange(n, dtype=float)
        if kind == "power":
            a = spec.lam ** (-args[0] * j)
            return ShellState(a, np.zeros(n) if euler else a.copy())
        if kind == "explicit":
            a_vals, b_vals = args
            if len(a_vals) > n or len(b_vals) > n:
                raise ValueError(f"explicit profile longer than {n} shells")
            if euler and any(b_vals):
                raise ValueError("the Euler model has no magnetic component")
            a, b = np.zeros(n), np.zeros(n)
            a[: len(a_vals)] = a_vals
            b[: len(b_vals)] = b_vals
            return ShellState(a, b)
        if kind == "random":
            lo, hi = args
            rng = np.random.Generator(np.random.PCG64(self.seed))
            # uniform on (lo, hi]: 1 - U maps [0, 1) onto (0, 1]
            a = lo + (hi - lo) * (1.0 - rng.random(n))
            b = np.zeros(n) if euler else lo + (hi - lo) * (1.0 - rng.random(n))
            return ShellState(a, b)
        if kind == "fixedpoint":
            A0, B0 = args
        else:
            A0, B0 = self.amplitudes
        fp = fixed_point_from_amplitudes(spec.kind, spec.lam, spec.theta, spec.f0, A0, B0,
                                         spec.n_shells)
        if kind == "fixedpoint":
            return fp.state()
        sigma = args[0]
        seed = int(args[1]) if len(args) == 2 else self.seed
        rng = np.random.Generator(np.random.PCG64(seed))
        prof = fp.scale * spec.lam ** (-spec.theta / 3 * j)
        a = fp.a_bar + sigma * prof * rng.standard_normal(n)
        b = fp.b_bar if euler else fp.b_bar + sigma * prof * rng.standard_normal(n)
        return ShellState(a, b)


# config key -> (field name, parser); the key order is the serialization order
CONFIG_KEYS: dict[str, tuple[str, Callable]] = {
    "model": ("model", _model),
    "lambda": ("lam", _finite),
    "theta": ("theta", _optional(_positive)),
    "delta": ("delta", _optional(_finite)),
    "shells": ("shells", _int),
    "f0": ("f0", _f0),
    "initial": ("initial", _initial),
    "amplitudes": ("amplitudes", _floats(2)),
    "t_end": ("t_end", _positive),
    "method": ("method", _method),
    "dt": ("dt", _positive),
    "abs_tol": ("abs_tol", _positive),
    "rel_tol": ("rel_tol", _positive),
    "dt_min": ("dt_min", _positive),
    "dt_max": ("dt_max", _step_cap),
    "sample_every": ("sample_every", _optional(_positive)),
    "max_steps": ("max_steps", _int),
    "diagnostics": ("diagnostics", _floats()),
    "lyapunov": ("lyapunov", _optional(_floats(3))),
    "events": ("events", _events),
    "output_dir": ("output_dir", _text),
    "seed": ("seed", _int),
    "channel": ("channel", _channel),
    "variant": ("variant", _variant),
    "scan": ("scan", _floats(3)),
    "scan_n": ("scan_n", _int),
    "steady_tol": ("steady_tol", _positive),
    "newton": ("newton", _bool),
}
_FIELD_TO_KEY = {name: key for key, (name, _) in CONFIG_KEYS.items()}


def _raw_entries(text: str) -> list[tuple[str, Any, int | None]]:
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(None, f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(obj, dict):
            raise ConfigError(None, "JSON config must be an object")
        return [(str(k), v, None) for k, v in obj.items()]
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        key, sep, value = body.partition("=")
        if not sep:
            raise ConfigError(None, f"expected key=value, got {body!r}", lineno)
        out.append((key.strip(), value.strip(), lineno))
    return out


def build_config(entries: list[tuple[str, Any, int | None]], base: RunConfig | None = None) -> RunConfig:
    """Apply ``(key, raw value, line)`` entries on top of ``base`` and validate."""
    values: dict[str, Any] = {}
    lines: dict[str, int | None] = {}
    for key, raw, line in entries:
        if key not in CONFIG_KEYS:
            raise ConfigError(key, "unknown key", line)
        name, parse = CONFIG_KEYS[key]
        try:
            values[name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(key, str(exc), line) from None
        lines[key] = line
    cfg = replace(base or RunConfig(), **values)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: RunConfig, lines: dict[str, int | None]) -> None:
    def fail(key, msg):
        raise ConfigError(key, msg, lines.get(key))

    if not cfg.lam > 1:
        fail("lambda", f"lambda = {cfg.lam:g} violates lambda > 1")
    if cfg.theta is not None and cfg.delta is not None:
        fail("delta", "give theta or delta, not both")
    if cfg.delta is not None and not 0 <= cfg.delta <= 3:
        fail("delta", f"delta = {cfg.delta:g} is outside [0, 3]")
    if cfg.shells < 1:
        fail("shells", "must be >= 1")
    if cfg.f0 != "auto" and not math.isfinite(float(cfg.f0)):
        fail("f0", "must be finite")
    if cfg.dt_min > cfg.dt_max:
        fail("dt_min", "dt_min exceeds dt_max")
    if cfg.max_steps < 0:
        fail("max_steps", "must be >= 0")
    if cfg.scan_n < 2:
        fail("scan_n", "must be >= 2")
    lo, hi, step = cfg.scan
    if hi < lo or not step > 0:
        fail("scan", "expected lo,hi,step with lo <= hi and step > 0")
    if cfg.sample_every is not None and cfg.sample_every > cfg.t_end:
        fail("sample_every", "exceeds t_end")
    kind, args = parse_initial(cfg.initial)
    if kind in ("fixedpoint", "fixedpoint+noise") and not cfg.f0_value > 0:
        fail("f0", "fixed-point profiles need f0 > 0")
    try:
        cfg.initial_state(cfg.model_spec())
    except ValueError as exc:
        key = "amplitudes" if kind == "fixedpoint+noise" and "A0" in str(exc) else "initial"
        fail(key, str(exc))


def parse_config(text: str) -> RunConfig:
    """Parse a ``key=value`` or JSON config into a validated :class:`RunConfig`."""
    return build_config(_raw_entries(text))


def _value_text(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_value_text(x) for x in v)
    return str(v)


def serialize(cfg: RunConfig) -> str:
    """``key=value`` text that :func:`parse_config` maps back to ``cfg``."""
    return "".join(f"{key}={_value_text(getattr(cfg, name))}\n" for key, (name, _) in CONFIG_KEYS.items())


# ---------------------------------------------------------------- output helpers

def to_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and non-finite values as null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in obj):
            return "[" + ", ".join(to_json(x) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + to_json(x, indent, _level + 1) for x in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv(header: list[str], rows: list[list[str]]) -> str:
    return "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n"


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return fmt(x)


# ---------------------------------------------------------------- subcommands

def _trajectory_csv(traj: Trajectory, spec: ModelSpec) -> str:
    k = spec.n_shells
    euler = spec.kind is ModelKind.EULER
    header = ["t"] + [f"a_{j}" for j in range(k + 1)] + ([] if euler else [f"b_{j}" for j in range(k + 1)])
    rows = []
    for i, t in enumerate(traj.times):
        vals = [t, *traj.a[i]] + ([] if euler else list(traj.b[i]))
        rows.append([fmt(v) for v in vals])
    return _csv(header, rows)


def _hs(a, b, s, lam):
    try:
        return math.hypot(dg.sobolev_norm(a, s, lam), dg.sobolev_norm(b, s, lam))
    except OverflowError:
        return math.inf


def _diagnostics_csv(traj: Trajectory, spec: ModelSpec, cfg: RunConfig) -> str:
    params = cfg.lyapunov_params()
    mon = dg.monitors(traj, spec)
    header = ["t", "E", "Hc"] + [f"Hs_{fmt(s)}" for s in cfg.diagnostics] + \
        ["phi", "psi", "min_a", "min_b", "monotone_flag"]
    rows = []
    for i, t in enumerate(traj.times):
        st = traj.state(i)
        row = [t, dg.energy(st), dg.cross_helicity(st)]
        row += [_hs(st.a, st.b, s, spec.lam) for s in cfg.diagnostics]
        if params is not None:
            rep = dg.lyapunov(st, spec, params)
            row += [rep.phi, rep.psi]
        else:
            row += [None, None]
        row += [mon.min_a[i], mon.min_b[i], None if mon.monotone is None else bool(mon.monotone[i])]
        rows.append([_cell(x) for x in row])
    return _csv(header, rows)


def _summary(traj: Trajectory, spec: ModelSpec, cfg: RunConfig) -> dict:
    a, b = np.asarray(traj.a), np.asarray(traj.b)
    e = 0.5 * (np.sum(a * a, axis=1) + np.sum(b * b, axis=1))
    budget = dg.energy_budget(traj, spec)
    hc = np.sum(a * b, axis=1)
    events: dict[str, float] = {}
    for ev in traj.events:
        events.setdefault(ev.kind, ev.t)
    out = {
        "terminated_by": traj.terminated_by.value,
        "t_final": float(traj.times[-1]),
        "n_samples": len(traj.times),
        "n_steps": traj.n_steps,
        "n_rejected": traj.n_rejected,
        "event_times": events,
        "events": [{"t": ev.t, "kind": ev.kind, "detail": ev.detail} for ev in traj.events],
        "energy_initial": float(e[0]),
        "energy_drift": float(np.max(np.abs(budget)) / max(e[0], np.finfo(float).tiny)),
        "helicity_drift": float(np.max(np.abs(hc - hc[0])) / (1.0 + abs(hc[0]))),
    }
    params = cfg.lyapunov_params()
    if params is not None:
        rep = dg.lyapunov(traj.state(0), spec, params)
        chk = dg.riccati_check(traj, spec, params)
        out["riccati"] = {
            "K": rep.K,
            "K_sharp": rep.K_sharp,
            "valid": rep.valid,
            "window_violations": list(rep.violations),
            "psi0": rep.psi,
            "t_upper": rep.t_upper,
            "checked": chk.n_checked,
            "violations": chk.violations,
        }
    return out


def _simulate(cfg: RunConfig, outdir: str, events: EventSpec | None = None) -> dict:
    spec = cfg.model_spec()
    state = cfg.initial_state(spec)
    traj = integrate(spec, state, cfg.integrator_config(), events or cfg.event_spec())
    summary = _summary(traj, spec, cfg)
    _write(os.path.join(outdir, "trajectory.csv"), _trajectory_csv(traj, spec))
    _write(os.path.join(outdir, "diagnostics.csv"), _diagnostics_csv(traj, spec, cfg))
    return summary


def cmd_simulate(cfg: RunConfig, outdir: str) -> None:
    summary = _simulate(cfg, outdir)
    _write(os.path.join(outdir, "summary.json"), to_json(summary) + "\n")


def cmd_blowup(cfg: RunConfig, outdir: str) -> None:
    if cfg.lyapunov is None:
        raise ConfigError("lyapunov", "the blowup command needs lyapunov=s,gamma,c0")
    watch, norm = parse_events(cfg.events)
    if norm is None:
        norm = (cfg.lyapunov[0], 1e8)
    summary = _simulate(cfg, outdir, EventSpec(positivity_watch=True, norm_threshold=norm))
    _write(os.path.join(outdir, "summary.json"), to_json(summary) + "\n")


def cmd_steady(cfg: RunConfig, outdir: str) -> None:
    spec = cfg.model_spec()
    state = cfg.initial_state(spec)
    res = residual(spec, state)
    ratios = shell_ratios(state, spec.lam, spec.theta)
    report: dict[str, Any] = {
        "model": spec.kind.value,
        "initial": cfg.initial,
        "f0": spec.f0,
        "interior_max_residual": res.interior_max,
        "interior_relative_residual": res.interior_relative,
        "boundary_defect": res.boundary_defect,
        "shell_ratios": [float(x) for x in ratios.values],
        "undefined_ratios": list(ratios.undefined),
        "a": [float(x) for x in state.a],
        "b": [float(x) for x in state.b],
    }
    if cfg.newton:
        try:
            nr = newton_steady(spec, state, tol=cfg.steady_tol)
            report["newton"] = {
                "converged": True,
                "iterations": nr.iterations,
                "residual_norm": nr.residual_norm,
                "condition": nr.condition,
                "interior_max_residual": nr.interior_max,
                "boundary_defect": nr.boundary_defect,
                "a": [float(x) for x in nr.state.a],
                "b": [float(x) for x in nr.state.b],
            }
        except (ConvergenceError, ValueError) as exc:
            report["newton"] = {"converged": False, "error": str(exc)}
    _write(os.path.join(outdir, "steady.json"), to_json(report) + "\n")


def cmd_linstab(cfg: RunConfig, outdir: str) -> None:
    lo, hi, step = cfg.scan
    rep = eigen_scan(cfg.channel, lo, hi, step, cfg.lam, cfg.theta_value, n=cfg.scan_n,
                     variant=cfg.variant)
    rows = [[fmt(v), fmt(g), _cell(bool(ad)), c]
            for v, g, ad, c in zip(rep.values, rep.growth, rep.admissible, rep.classification)]
    _write(os.path.join(outdir, "scan.csv"),
           _csv(["value", "growth_functional", "admissible", "classification"], rows))
    summary = {
        "channel": rep.channel.value,
        "variant": rep.variant,
        "n": cfg.scan_n,
        "range": list(cfg.scan),
        "n_admissible": int(np.count_nonzero(rep.admissible)),
        "eigenvalues": [float(x) for x in rep.eigenvalues] if rep.channel is Channel.VELOCITY else [],
        "forbidden": [float(x) for x in rep.forbidden],
        "unstable_count": int(rep.unstable.size),
        "degenerate": [float(v) for v, c in zip(rep.values, rep.classification) if c == "degenerate"],
        "inconclusive": rep.inconclusive,
    }
    _write(os.path.join(outdir, "linstab.json"), to_json(summary) + "\n")


_COMMANDS = {"simulate": cmd_simulate, "steady": cmd_steady, "linstab": cmd_linstab, "blowup": cmd_blowup}


def run(command: str, cfg: RunConfig) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
        _write(os.path.join(cfg.output_dir, "config.txt"), serialize(cfg))
        _COMMANDS[command](cfg, cfg.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyadic", description="Dyadic Euler/MHD shell model laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value or JSON config file")
        for key in CONFIG_KEYS:
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            p.add_argument(*flags, dest=f"opt_{key}", metavar="VALUE", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        entries = []
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                entries = _raw_entries(fh.read())
        entries += [(key, getattr(args, f"opt_{key}"), None)
                    for key in CONFIG_KEYS if getattr(args, f"opt_{key}") is not None]
        cfg = build_config(entries)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    status = run(args.command, cfg)
    if status == EXIT_OK:
        print(f"{args.command}: wrote results to {cfg.output_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
