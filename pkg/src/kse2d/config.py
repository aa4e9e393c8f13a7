"""
Run configuration: a flat ``section.key = value`` text format.

Blank lines and ``#`` comments are ignored.  Every key is validated when
parsed; unknown, duplicated or out-of-range keys raise :class:`ConfigError`
carrying the offending line number.  ``grid.n`` and ``ic.preset`` are
required, everything else has a default.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .model import Params
from .timestepper import StepControl

PRESETS = ("canonical", "bump", "random", "heat", "snapshot")
SWEEP_PARAMS = ("A_c", "nu_u", "n")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class GridSpec:
    n: int = 0
    L: float = 2 * math.pi


@dataclass(frozen=True)
class PhysSpec:
    nu_rho: float = 1.0
    nu_c: float = 1.0
    nu_u: float = 0.0
    gravity: tuple[float, float] = (0.0, -1.0)
    phi_amp: float = 0.0
    phi_k1: int = 1
    phi_k2: int = 0
    m: int = 3
    dealias: bool = True
    couplings: bool = True
    clip_negative: bool = False


@dataclass(frozen=True)
class ICSpec:
    preset: str = ""
    rho_mean: float = 1.0
    rho_amp: float = 0.5
    c_amp: float = 0.01
    omega_amp: float = 0.1
    width: float = 0.5
    center: tuple[float, float] | None = None
    snapshot: str = ""
    seed: int = 0


@dataclass(frozen=True)
class StepSpec:
    cfl: float = 0.4
    dt_max: float = 1e-2
    dt_min: float = 1e-6
    t_end: float = 1.0
    sample_interval: float = 0.1
    dt: float = 0.0


@dataclass(frozen=True)
class DiagSpec:
    q_list: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, math.inf)
    q: float = 4.0
    rho_bound: float = 2.0


@dataclass(frozen=True)
class OutSpec:
    dir: str = "out"
    snapshot_interval: float = 0.0


@dataclass(frozen=True)
class PicardSpec:
    T: float = 0.1
    dt: float = 1e-3
    tol: float = 1e-10
    max_iter: int = 30


@dataclass(frozen=True)
class SweepSpec:
    param: str = ""
    values: tuple[float, ...] = ()


@dataclass(frozen=True)
class ConvergenceSpec:
    T: float = 0.5
    dts: tuple[float, ...] = (2e-3, 1e-3, 5e-4)
    ns: tuple[int, ...] = ()
    dt_spatial: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    params: PhysSpec = field(default_factory=PhysSpec)
    ic: ICSpec = field(default_factory=ICSpec)
    step: StepSpec = field(default_factory=StepSpec)
    diag: DiagSpec = field(default_factory=DiagSpec)
    out: OutSpec = field(default_factory=OutSpec)
    picard: PicardSpec = field(default_factory=PicardSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    convergence: ConvergenceSpec = field(default_factory=ConvergenceSpec)

    def to_params(self) -> Params:
        p = self.params
        phi = None
        if p.phi_amp != 0.0:
            kk = 2 * math.pi / self.grid.L
            a, k1, k2 = p.phi_amp, p.phi_k1, p.phi_k2

            def phi(x1, x2):
                return a * np.cos(kk * (k1 * x1 + k2 * x2))

        return Params(
            nu_rho=p.nu_rho,
            nu_c=p.nu_c,
            nu_u=p.nu_u,
            gravity=p.gravity,
            phi_perturbation=phi,
            m=p.m,
            dealias_on=p.dealias,
            couplings=p.couplings,
            clip_negative=p.clip_negative,
        )

    def to_control(self) -> StepControl:
        s = self.step
        return StepControl(
            cfl=s.cfl,
            dt_max=s.dt_max,
            dt_min=s.dt_min,
            t_end=s.t_end,
            sample_interval=s.sample_interval,
            dt_fixed=s.dt if s.dt > 0 else None,
        )

    def with_value(self, key: str, value: Any) -> "RunConfig":
        """Copy with one dotted key replaced (no validation)."""
        section, name = key.split(".", 1)
        sub = replace(getattr(self, section), **{name: value})
        return replace(self, **{section: sub})

    def get(self, key: str) -> Any:
        section, name = key.split(".", 1)
        return getattr(getattr(self, section), name)


# -- value parsers ---------------------------------------------------------------


def _float(s: str) -> float:
    v = float(s)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _qvalue(s: str) -> float:
    s = s.strip().lower()
    return math.inf if s in ("inf", "infinity") else _float(s)


def _bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _int(s: str) -> int:
    v = float(s)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(v)


def _list(item: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        parts = [p for p in s.replace(",", " ").split()]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)

    return parse


def _pair(s: str) -> tuple[float, float]:
    v = _list(_float)(s)
    if len(v) != 2:
        raise ValueError("expected two comma separated numbers")
    return (v[0], v[1])


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _positive(v):
    return v > 0 or "must be positive"


def _nonneg(v):
    return v >= 0 or "must be non-negative"


def _pow2(v):
    return (v >= 8 and v & (v - 1) == 0) or "must be a power of two >= 8"


def _in(options):
    def check(v):
        return v in options or f"must be one of {', '.join(options)}"

    return check


def _all(check):
    def inner(vs):
        for v in vs:
            r = check(v)
            if r is not True:
                return r
        return True

    return inner


def _qcheck(v):
    return v >= 1 or "exponents must be >= 1"


def _cfl(v):
    return 0 < v <= 1 or "must lie in (0, 1]"


def _center(v):
    return v is None or all(math.isfinite(x) for x in v) or "must be finite"


def _opt_pair(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else _pair(s)


def _path(s: str) -> str:
    return s.strip()


# key -> (parser, validator)
KEYS: dict[str, tuple[Callable[[str], Any], Callable[[Any], Any] | None]] = {
    "grid.n": (_int, _pow2),
    "grid.L": (_float, _positive),
    "params.nu_rho": (_float, _positive),
    "params.nu_c": (_float, _positive),
    "params.nu_u": (_float, _nonneg),
    "params.gravity": (_pair, None),
    "params.phi_amp": (_float, None),
    "params.phi_k1": (_int, None),
    "params.phi_k2": (_int, None),
    "params.m": (_int, lambda v: v >= 3 or "must be >= 3"),
    "params.dealias": (_bool, None),
    "params.couplings": (_bool, None),
    "params.clip_negative": (_bool, None),
    "ic.preset": (lambda s: s.strip(), _in(PRESETS)),
    "ic.rho_mean": (_float, _nonneg),
    "ic.rho_amp": (_float, _nonneg),
    "ic.c_amp": (_float, _nonneg),
    "ic.omega_amp": (_float, None),
    "ic.width": (_float, _positive),
    "ic.center": (_opt_pair, _center),
    "ic.snapshot": (_path, None),
    "ic.seed": (_int, _nonneg),
    "step.cfl": (_float, _cfl),
    "step.dt_max": (_float, _positive),
    "step.dt_min": (_float, _positive),
    "step.t_end": (_float, _nonneg),
    "step.sample_interval": (_float, _positive),
    "step.dt": (_float, _nonneg),
    "diag.q_list": (_list(_qvalue), _all(_qcheck)),
    "diag.q": (_float, lambda v: (2 < v < math.inf) or "must satisfy 2 < q < inf"),
    "diag.rho_bound": (_float, _positive),
    "out.dir": (_path, lambda v: bool(v) or "must not be empty"),
    "out.snapshot_interval": (_float, _nonneg),
    "picard.T": (_float, _positive),
    "picard.dt": (_float, _positive),
    "picard.tol": (_float, _positive),
    "picard.max_iter": (_int, lambda v: v >= 2 or "must be >= 2"),
    "sweep.param": (lambda s: s.strip(), _in(SWEEP_PARAMS)),
    "sweep.values": (_list(_float), None),
    "convergence.T": (_float, _positive),
    "convergence.dts": (_list(_float), _all(_positive)),
    "convergence.ns": (_list(_int), _all(_pow2)),
    "convergence.dt_spatial": (_float, _positive),
}
REQUIRED = ("grid.n", "ic.preset")


def parse_config(text: str, base_dir: str | None = None) -> RunConfig:
    """Parse and validate configuration text.

    Relative snapshot paths are resolved against ``base_dir`` when given.
    """
    cfg = RunConfig()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, key)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", lineno, key)
        seen[key] = lineno
        parser, check = KEYS[key]
        try:
            v = parser(value)
        except ValueError as err:
            raise ConfigError(f"bad value for {key}: {err}", lineno, key) from None
        if check is not None:
            ok = check(v)
            if ok is not True:
                raise ConfigError(f"{key} = {value}: {ok}", lineno, key)
        cfg = cfg.with_value(key, v)
    for key in REQUIRED:
        if key not in seen:
            raise ConfigError(f"missing required key {key!r}", None, key)
    if cfg.ic.snapshot and base_dir and not os.path.isabs(cfg.ic.snapshot):
        cfg = cfg.with_value("ic.snapshot", os.path.join(base_dir, cfg.ic.snapshot))
    _cross_validate(cfg, seen)
    return cfg


def _cross_validate(cfg: RunConfig, seen: dict[str, int]) -> None:
    s = cfg.step
    if s.dt_min > s.dt_max:
        raise ConfigError("step.dt_min must not exceed step.dt_max", seen.get("step.dt_min"), "step.dt_min")
    if cfg.ic.preset == "snapshot":
        if not cfg.ic.snapshot:
            raise ConfigError("ic.preset = snapshot requires ic.snapshot", seen.get("ic.preset"), "ic.snapshot")
        if not os.path.isfile(cfg.ic.snapshot):
            raise ConfigError(f"snapshot file not found: {cfg.ic.snapshot}", seen.get("ic.snapshot"), "ic.snapshot")
    if cfg.ic.preset in ("canonical", "heat") and cfg.ic.rho_amp > cfg.ic.rho_mean:
        raise ConfigError("ic.rho_amp must not exceed ic.rho_mean (rho0 >= 0)", seen.get("ic.rho_amp"), "ic.rho_amp")
    if cfg.sweep.values and not cfg.sweep.param:
        raise ConfigError("sweep.values given without sweep.param", seen.get("sweep.values"), "sweep.param")
    if cfg.sweep.param == "n":
        for v in cfg.sweep.values:
            if not (float(v).is_integer() and _pow2(int(v)) is True):
                raise ConfigError("sweep over n needs powers of two >= 8", seen.get("sweep.values"), "sweep.values")
    if cfg.sweep.param in ("A_c", "nu_u") and any(v < 0 for v in cfg.sweep.values):
        raise ConfigError(f"sweep values for {cfg.sweep.param} must be non-negative", seen.get("sweep.values"), "sweep.values")


def serialize_config(cfg: RunConfig) -> str:
    """Every set key with its value, in the order of :data:`KEYS`.

    Unset optional values (empty strings and lists, automatic centre) are
    omitted so that the text parses back to the same configuration.
    """
    blocks: dict[str, list[str]] = {}
    for key in KEYS:
        v = cfg.get(key)
        if v is None or (isinstance(v, (str, tuple)) and len(v) == 0):
            continue
        blocks.setdefault(key.split(".")[0], []).append(f"{key} = {_fmt(v)}")
    return "\n\n".join("\n".join(b) for b in blocks.values()) + "\n"


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def canonical_config(**overrides: Any) -> RunConfig:
    """Canonical setup: n = 256, L = 2 pi, unit diffusivities, Euler fluid, T = 5."""
    cfg = RunConfig(
        grid=GridSpec(n=256),
        ic=ICSpec(preset="canonical"),
        step=StepSpec(t_end=5.0, sample_interval=0.05),
    )
    for k, v in overrides.items():
        cfg = cfg.with_value(k.replace("__", "."), v)
    return cfg


__all__ = [
    "ConfigError",
    "RunConfig",
    "GridSpec",
    "PhysSpec",
    "ICSpec",
    "StepSpec",
    "DiagSpec",
    "OutSpec",
    "PicardSpec",
    "SweepSpec",
    "ConvergenceSpec",
    "parse_config",
    "serialize_config",
    "load_config",
    "canonical_config",
]
