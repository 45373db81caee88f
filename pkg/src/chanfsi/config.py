"""Sectioned ``key = value`` model configuration.

Example::

    [physical]
    rho = 1.0
    mu = 0.1
    R0 = 1.0

    [scheme]
    N1 = 32
    N2 = 16
    dt = 0.005
    T = 0.1
    eps = 1e-4

    [pressures]
    q_w = pulse(0.05, 0.02, 0.06)

Every key has a default; unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError
from .geometry import ReferenceRadius, default_alpha

__all__ = ["PressureSpec", "RadiusSpec", "ModelConfig", "parse_config", "load_config",
           "format_config", "apply_overrides"]

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_CALL = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$")


def _numbers(text: str, count: int, what: str):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count or not all(re.fullmatch(_NUM, p) for p in parts):
        raise ConfigError(f"{what} expects {count} numbers, got '{text}'")
    return [float(p) for p in parts]


@dataclass(frozen=True)
class PressureSpec:
    """Time profile of a boundary pressure, uniform along its trace.

    Kinds: ``constant(v)`` (a bare number also works), ``pulse(amp, t_rise,
    t_fall)`` and ``table(path)`` with two whitespace-separated columns
    ``t value`` interpolated linearly. The pulse rises as ``sin^2`` over
    ``[0, t_rise]``, holds until ``t_fall`` and decays as ``cos^2`` over the
    next ``t_rise``.
    """

    kind: str = "constant"
    params: tuple = (0.0,)
    path: Optional[str] = None
    table: Optional[tuple] = field(default=None, repr=False, compare=False)

    @classmethod
    def parse(cls, text: str, base: Optional[Path] = None) -> "PressureSpec":
        text = text.strip()
        if re.fullmatch(_NUM, text):
            return cls("constant", (float(text),))
        m = _CALL.match(text)
        if not m:
            raise ConfigError(f"cannot parse pressure spec '{text}'")
        kind, arg = m.group(1), m.group(2).strip()
        if kind == "constant":
            return cls("constant", tuple(_numbers(arg, 1, "constant")))
        if kind == "pulse":
            amp, rise, fall = _numbers(arg, 3, "pulse")
            if not rise > 0 or fall < rise:
                raise ConfigError("pulse needs t_rise > 0 and t_fall >= t_rise")
            return cls("pulse", (amp, rise, fall))
        if kind == "table":
            p = Path(arg)
            if base is not None and not p.is_absolute():
                p = base / p
            try:
                data = np.loadtxt(p, ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read pressure table '{arg}': {exc}") from exc
            if data.shape[1] != 2 or data.shape[0] < 2 or np.any(np.diff(data[:, 0]) <= 0):
                raise ConfigError(f"pressure table '{arg}' needs increasing times in two columns")
            if not np.all(np.isfinite(data)):
                raise ConfigError(f"pressure table '{arg}' has non-finite entries")
            return cls("table", (), arg, (tuple(data[:, 0]), tuple(data[:, 1])))
        raise ConfigError(f"unknown pressure kind '{kind}'")

    def value(self, t: float) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "pulse":
            amp, rise, fall = self.params
            if t <= 0.0:
                return 0.0
            if t < rise:
                return amp * math.sin(0.5 * math.pi * t / rise) ** 2
            if t <= fall:
                return amp
            if t < fall + rise:
                return amp * math.cos(0.5 * math.pi * (t - fall) / rise) ** 2
            return 0.0
        ts, vs = self.table
        return float(np.interp(t, ts, vs))

    def __call__(self, coord, t):
        return np.full(np.shape(coord), self.value(t))

    def scaled(self, factor: float) -> "PressureSpec":
        """Same profile with the amplitude multiplied by ``factor``."""
        if self.kind == "constant":
            return dataclasses.replace(self, params=(factor * self.params[0],))
        if self.kind == "pulse":
            amp, rise, fall = self.params
            return dataclasses.replace(self, params=(factor * amp, rise, fall))
        ts, vs = self.table
        return dataclasses.replace(self, table=(ts, tuple(factor * np.asarray(vs))))

    @property
    def is_zero(self) -> bool:
        if self.kind == "table":
            return not np.any(self.table[1])
        return self.params[0] == 0.0

    def format(self) -> str:
        if self.kind == "constant":
            return repr(self.params[0])
        if self.kind == "pulse":
            return "pulse({!r}, {!r}, {!r})".format(*self.params)
        return f"table({self.path})"


@dataclass(frozen=True)
class RadiusSpec:
    """Reference height: a number or ``sine(r0, amp)`` (``r0 + amp sin(pi y1/L)``)."""

    r0: float = 1.0
    amp: float = 0.0

    @classmethod
    def parse(cls, text: str) -> "RadiusSpec":
        text = text.strip()
        if re.fullmatch(_NUM, text):
            return cls(float(text), 0.0)
        m = _CALL.match(text)
        if not m or m.group(1) != "sine":
            raise ConfigError(f"cannot parse R0 spec '{text}'")
        r0, amp = _numbers(m.group(2), 2, "sine")
        return cls(r0, amp)

    def build(self, L: float) -> ReferenceRadius:
        if self.amp == 0.0:
            return ReferenceRadius.constant(self.r0)
        return ReferenceRadius.sine(self.r0, self.amp, L)

    def format(self) -> str:
        return repr(self.r0) if self.amp == 0.0 else f"sine({self.r0!r}, {self.amp!r})"


def _meta(section, kind=float, optional=False):
    return {"section": section, "kind": kind, "optional": optional}


@dataclass(frozen=True)
class ModelConfig:
    """All physical, scheme, admissibility, pressure and output settings.

    ``kappa`` defaults to ``1/eps`` and ``alpha`` to the rule-based value
    with a 10% margin; both are resolved at construction.
    """

    # physical
    rho: float = field(default=1.0, metadata=_meta("physical"))
    mu: float = field(default=0.1, metadata=_meta("physical"))
    a: float = field(default=1.0, metadata=_meta("physical"))
    b: float = field(default=1.0, metadata=_meta("physical"))
    c: float = field(default=0.01, metadata=_meta("physical"))
    rho_w: float = field(default=1.0, metadata=_meta("physical"))
    hbar: float = field(default=0.1, metadata=_meta("physical"))
    L: float = field(default=2.0, metadata=_meta("physical"))
    R0: RadiusSpec = field(default=RadiusSpec(), metadata=_meta("physical", RadiusSpec))
    # scheme
    N1: int = field(default=32, metadata=_meta("scheme", int))
    N2: int = field(default=16, metadata=_meta("scheme", int))
    dt: float = field(default=0.005, metadata=_meta("scheme"))
    T: float = field(default=0.1, metadata=_meta("scheme"))
    eps: float = field(default=1e-4, metadata=_meta("scheme"))
    kappa: Optional[float] = field(default=None, metadata=_meta("scheme", float, True))
    linear_tol: float = field(default=1e-10, metadata=_meta("scheme"))
    linear_max_iter: int = field(default=1000, metadata=_meta("scheme", int))
    iter_tol: float = field(default=1e-8, metadata=_meta("scheme"))
    max_iter: int = field(default=20, metadata=_meta("scheme", int))
    # admissibility
    alpha: Optional[float] = field(default=None, metadata=_meta("admissibility", float, True))
    K: float = field(default=10.0, metadata=_meta("admissibility"))
    T_max: float = field(default=1.0, metadata=_meta("admissibility"))
    # pressures
    q_in: PressureSpec = field(default=PressureSpec(), metadata=_meta("pressures", PressureSpec))
    q_out: PressureSpec = field(default=PressureSpec(), metadata=_meta("pressures", PressureSpec))
    q_w: PressureSpec = field(default=PressureSpec("pulse", (0.05, 0.02, 0.06)),
                              metadata=_meta("pressures", PressureSpec))
    # output
    out_dir: str = field(default="out", metadata=_meta("output", str))
    vtk: bool = field(default=False, metadata=_meta("output", bool))
    vtk_every: int = field(default=10, metadata=_meta("output", int))

    def __post_init__(self):
        positive = ["rho", "mu", "a", "b", "c", "rho_w", "hbar", "L", "dt", "T", "eps",
                    "linear_tol", "iter_tol", "K", "T_max"]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        for name, lo in (("N1", 4), ("N2", 4), ("max_iter", 1), ("linear_max_iter", 1),
                         ("vtk_every", 1)):
            if getattr(self, name) < lo:
                raise ConfigError(f"{name} must be at least {lo}, got {getattr(self, name)}")
        if self.kappa is None:
            object.__setattr__(self, "kappa", 1.0 / self.eps)
        elif not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa!r}")
        r_min, r_max = self.R_bounds
        if not r_min > 0:
            raise ConfigError(f"R0 must be positive on [0, L], got minimum {r_min!r}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", default_alpha(r_min, r_max))
        elif not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"T = {self.T!r} is not a multiple of dt = {self.dt!r}")

    # -- derived quantities -------------------------------------------------
    @property
    def nu(self) -> float:
        return self.mu / self.rho

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def R_bounds(self):
        return self.R0.build(self.L).bounds(self.L)

    def replace(self, **changes) -> "ModelConfig":
        """Copy with changes. Pass ``kappa=None`` to re-derive it from ``eps``."""
        return dataclasses.replace(self, **changes)


def _field_map():
    return {f.name: f for f in fields(ModelConfig)}


def _convert(f, raw: str, base: Optional[Path]):
    kind = f.metadata["kind"]
    raw = raw.strip()
    if f.metadata["optional"] and raw.lower() in ("", "none", "auto"):
        return None
    try:
        if kind is PressureSpec:
            return PressureSpec.parse(raw, base)
        if kind is RadiusSpec:
            return RadiusSpec.parse(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            v = float(raw)
            if math.isnan(v):
                raise ValueError(raw)
            return v
        return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {f.name}: '{raw}'") from exc


def _key_lines(text: str):
    """Line numbers of ``key = value`` entries, keyed by (section, key)."""
    lines, section = {}, None
    for num, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif s and not s.startswith(("#", ";")) and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            lines[(section, key)] = num
    return lines


def parse_config(text: str, base: Optional[Path] = None) -> ModelConfig:
    """Parse configuration text; ``base`` resolves relative table paths."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = getattr(exc, "message", str(exc)).splitlines()[0]
        if isinstance(exc, configparser.ParsingError) and exc.errors:
            line, bad = exc.errors[0]
            # entries hold the repr of the offending line
            text = bad.strip().strip("'\"").removesuffix("\\n")
            msg = f"cannot parse '{text}'"
        raise ConfigError(f"syntax error: {msg}", line=line) from exc
    fmap = {k.lower(): f for k, f in _field_map().items()}
    sections = {f.metadata["section"] for f in fmap.values()}
    where = _key_lines(text)
    values = {}
    for sec in cp.sections():
        if sec not in sections:
            raise ConfigError(f"unknown section [{sec}]", line=where.get((sec, None)))
        for key, raw in cp.items(sec):
            f = fmap.get(key.lower())
            line = where.get((sec, key.lower()))
            if f is None:
                raise ConfigError(f"unknown key '{key}' in [{sec}]", line=line)
            if f.metadata["section"] != sec:
                raise ConfigError(f"key '{key}' belongs in [{f.metadata['section']}]", line=line)
            try:
                values[f.name] = _convert(f, raw, base)
            except ConfigError as exc:
                raise ConfigError(str(exc), line=line) from None
    return ModelConfig(**values)


def load_config(path) -> ModelConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc
    return parse_config(text, base=path.parent)


def apply_overrides(cfg: ModelConfig, items, base: Optional[Path] = None) -> ModelConfig:
    """Apply ``key=value`` strings (config syntax) to ``cfg``.

    Derived defaults follow their source: changing ``eps`` resets a kappa
    equal to ``1/eps``, and changing ``R0`` resets a rule-based alpha.
    """
    fmap = {k.lower(): f for k, f in _field_map().items()}
    changes = {}
    for item in items:
        key, sep, raw = item.partition("=")
        f = fmap.get(key.strip().lower())
        if not sep:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        if f is None:
            raise ConfigError(f"unknown key '{key.strip()}'")
        changes[f.name] = _convert(f, raw, base)
    if "eps" in changes and "kappa" not in changes and math.isclose(cfg.kappa, 1.0 / cfg.eps):
        changes["kappa"] = None
    if "R0" in changes and "alpha" not in changes and math.isclose(cfg.alpha, default_alpha(*cfg.R_bounds)):
        changes["alpha"] = None
    return cfg.replace(**changes)


def format_config(cfg: ModelConfig) -> str:
    """Write every field explicitly; ``parse_config`` reads it back unchanged."""
    out, current = [], None
    for f in fields(ModelConfig):
        sec = f.metadata["section"]
        if sec != current:
            if current is not None:
                out.append("")
            out.append(f"[{sec}]")
            current = sec
        v = getattr(cfg, f.name)
        if isinstance(v, (PressureSpec, RadiusSpec)):
            s = v.format()
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"
