"""Declarative experiment configuration (YAML) with field-path validation."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .brochettes import RadiusBrochette, is_class_D
from .forcing import ForcingProfile, IntegrabilityError
from .spaces import SpectralDomain, SpectralField, mode_pair, random_field

EXPERIMENTS = (
    "energy_audit",
    "absorption",
    "pullback_decay",
    "mpa_section",
    "oracle_equivalence",
    "calibrate",
)

DEFAULTS: dict[str, Any] = {
    "output_dir": "out",
    "domain": {"dimension": 2, "N": 16, "L": 2 * math.pi, "eta": 1.0, "delta": 1.0},
    "forcing": {"kind": "zero"},
    "brochettes": {"D": {"kind": "constant", "rho": 2.0}},
    "numerics": {"dt": 0.01, "M": 100.0, "dealias": True, "h_max": 2.0, "i_max": 8,
                 "record_every": 1},
    "ensemble": {"count": 8, "seed": 0, "slope": 1.0},
    "system": "navier_stokes",
    "t": [0.0],
    "taus": None,
    "tau_offsets": [0.0, -2.0, -5.0],
    "tau_deep": None,
    "h_window": 1.0,
    "cluster_tol": 1e-6,
    "tolerances": {"energy_C": 1.0, "absorption_abs": 1e-6, "absorption_C": 1.0,
                   "center": 1e-6, "invariance": 1e-12, "rate": 0.05},
    "calibration": {"sample_count": 200, "holdout_count": 1000, "safety": 1.1, "seed": 0},
    "snapshots": False,
}


class ConfigError(ValueError):
    """A configuration problem; ``path`` is the dotted location of the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "brochettes":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``a.b.c=value`` in place; ``value`` is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for i, p in enumerate(parts[:-1]):
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(".".join(parts[: i + 1]), "is not a mapping")
        node = nxt
    node[parts[-1]] = yaml.safe_load(text)


def load_raw(path, overrides=()) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for o in overrides:
        apply_override(raw, o)
    return raw


def _num(node: dict, key: str, path: str, *, positive=False, integer=False) -> float:
    if key not in node:
        raise ConfigError(f"{path}.{key}", "missing")
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}", f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _num_list(v, path: str) -> list[float]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return [float(v)]
    if isinstance(v, dict):
        for k in ("start", "stop", "step"):
            if k not in v:
                raise ConfigError(f"{path}.{k}", "missing")
        start, stop, step = (float(v[k]) for k in ("start", "stop", "step"))
        if step == 0:
            raise ConfigError(f"{path}.step", "must be nonzero")
        n = math.floor((stop - start) / step + 1e-9)
        return [start + i * step for i in range(n + 1)]
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a number, a nonempty list or {start, stop, step}")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}[{i}]", f"expected a number, got {x!r}")
        out.append(float(x))
    return out


def build_domain(node: dict) -> SpectralDomain:
    try:
        return SpectralDomain(
            _num(node, "dimension", "domain", integer=True),
            _num(node, "N", "domain", integer=True),
            _num(node, "L", "domain", positive=True),
            _num(node, "eta", "domain", positive=True),
            _num(node, "delta", "domain", positive=True),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("domain", str(exc)) from None


def build_profile(node, domain: SpectralDomain, path: str) -> SpectralField:
    if not isinstance(node, dict):
        raise ConfigError(path, "expected a mapping with 'modes' or 'random'")
    if "modes" in node:
        modes = node["modes"]
        if not isinstance(modes, list) or not modes:
            raise ConfigError(f"{path}.modes", "expected a nonempty list")
        total = domain.zeros()
        for i, m in enumerate(modes):
            p = f"{path}.modes[{i}]"
            if not isinstance(m, dict) or "k" not in m:
                raise ConfigError(p, "expected {k, amplitude[, phase, direction]}")
            try:
                total = total + mode_pair(
                    domain, tuple(int(x) for x in m["k"]),
                    norm=_num(m, "amplitude", p, positive=True),
                    phase=float(m.get("phase", 0.0)),
                    direction=m.get("direction"),
                )
            except (TypeError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{p}.k", str(exc)) from None
        return total
    if "random" in node:
        r = node["random"]
        p = f"{path}.random"
        if not isinstance(r, dict):
            raise ConfigError(p, "expected {seed, norm, slope}")
        rng = np.random.default_rng(_num(r, "seed", p, integer=True))
        return random_field(domain, rng, _num(r, "norm", p, positive=True),
                            float(r.get("slope", 0.0)))
    raise ConfigError(path, "expected 'modes' or 'random'")


def build_forcing(node: dict, domain: SpectralDomain) -> ForcingProfile:
    kind = node.get("kind")
    if kind == "zero":
        return ForcingProfile.zero(domain)
    if kind not in ("periodic", "exponential", "tabulated"):
        raise ConfigError("forcing.kind", f"unknown kind {kind!r}")
    g = build_profile(node.get("profile"), domain, "forcing.profile")
    try:
        if kind == "periodic":
            return ForcingProfile.periodic(g, _num(node, "omega", "forcing"),
                                           float(node.get("phase", 0.0)))
        if kind == "exponential":
            return ForcingProfile.exponential(g, _num(node, "alpha", "forcing"))
        return ForcingProfile.tabulated(
            g, _num_list(node.get("times"), "forcing.times"),
            _num_list(node.get("amplitudes"), "forcing.amplitudes"),
            _num(node, "tail_rate", "forcing"),
        )
    except IntegrabilityError:
        raise
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("forcing", str(exc)) from None


def build_brochette(node, path: str) -> RadiusBrochette:
    if not isinstance(node, dict):
        raise ConfigError(path, "expected a mapping with 'kind'")
    kind = node.get("kind")
    try:
        if kind == "constant":
            return RadiusBrochette.constant(_num(node, "rho", path, positive=True))
        if kind == "exponential":
            return RadiusBrochette.exponential(_num(node, "a", path, positive=True),
                                               _num(node, "beta", path))
        if kind == "table":
            right = node.get("right_rate")
            return RadiusBrochette.table(
                _num_list(node.get("times"), f"{path}.times"),
                _num_list(node.get("radii"), f"{path}.radii"),
                _num(node, "left_rate", path),
                None if right is None else float(right),
            )
        if kind in ("min", "max"):
            parts = node.get("parts")
            if not isinstance(parts, list) or not parts:
                raise ConfigError(f"{path}.parts", "expected a nonempty list")
            return RadiusBrochette(kind, parts=tuple(
                build_brochette(p, f"{path}.parts[{i}]") for i, p in enumerate(parts)
            ))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown kind {kind!r}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: str
    raw: dict = field(repr=False)
    domain: SpectralDomain
    forcing: ForcingProfile
    brochettes: dict[str, RadiusBrochette]
    output_dir: Path

    def num(self, section: str, key: str) -> float:
        return self.raw[section][key]

    @property
    def dt(self) -> float:
        return float(self.raw["numerics"]["dt"])

    @property
    def anchor_times(self) -> list[float]:
        return _num_list(self.raw["t"], "t")

    @property
    def taus(self) -> list[float] | None:
        v = self.raw.get("taus")
        return None if v is None else _num_list(v, "taus")


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate ``raw`` (after merging defaults) and build the domain objects.

    Class-D and integrability failures are raised as ``ConfigError``.
    """
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"expected one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    cfg = _merge(DEFAULTS, raw)
    for sec in ("domain", "forcing", "numerics", "ensemble", "tolerances", "calibration"):
        if not isinstance(cfg[sec], dict):
            raise ConfigError(sec, "expected a mapping")
    domain = build_domain(cfg["domain"])
    try:
        forcing = build_forcing(cfg["forcing"], domain)
    except IntegrabilityError as exc:
        raise ConfigError("forcing", f"integrability: {exc}") from None
    if not isinstance(cfg["brochettes"], dict) or not cfg["brochettes"]:
        raise ConfigError("brochettes", "expected a nonempty mapping name -> radius")
    brochettes = {}
    for name, node in cfg["brochettes"].items():
        b = build_brochette(node, f"brochettes.{name}")
        cert = is_class_D(b, domain.sigma)
        if not cert:
            raise ConfigError(f"brochettes.{name}", f"not in class D: {cert.reason}")
        brochettes[str(name)] = b
    num = cfg["numerics"]
    _num(num, "dt", "numerics", positive=True)
    _num(num, "M", "numerics", positive=True)
    _num(num, "h_max", "numerics", positive=True)
    _num(num, "i_max", "numerics", positive=True, integer=True)
    _num(num, "record_every", "numerics", positive=True, integer=True)
    ens = cfg["ensemble"]
    _num(ens, "count", "ensemble", positive=True, integer=True)
    _num(ens, "seed", "ensemble", integer=True)
    _num_list(cfg["t"], "t")
    bad = grid_misalignments(cfg)
    if bad:
        raise ConfigError(bad[0][0], bad[0][1])
    out = Path(cfg["output_dir"])
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return ExperimentConfig(exp, cfg, domain, forcing, brochettes, out)


def grid_misalignments(cfg: dict) -> list[tuple[str, str]]:
    """Field paths whose times are not ``t + n dt`` for integer ``n``."""
    dt = float(cfg["numerics"]["dt"])
    ts = _num_list(cfg["t"], "t")
    bad = []

    def aligned(x: float) -> bool:
        n = x / dt
        return abs(n - round(n)) <= 1e-9 * max(1.0, abs(n))

    for name in ("taus", "tau_deep"):
        v = cfg.get(name)
        if v is None:
            continue
        for i, tau in enumerate(_num_list(v, name)):
            for t in ts:
                if not aligned(t - tau):
                    bad.append((f"{name}[{i}]" if isinstance(v, list) else name,
                                f"t - tau = {t - tau:.12g} is not a multiple of dt = {dt}"))
    if not aligned(float(cfg["numerics"]["h_max"])):
        bad.append(("numerics.h_max", f"not a multiple of dt = {dt}"))
    return bad


def validation_report(raw: dict) -> list[tuple[str, bool, str]]:
    """Static checks without simulation: ``(name, passed, detail)`` rows."""
    rows: list[tuple[str, bool, str]] = []
    cfg = _merge(DEFAULTS, raw)
    exp = raw.get("experiment")
    rows.append(("experiment", exp in EXPERIMENTS, str(exp)))
    try:
        domain = build_domain(cfg["domain"])
        rows.append(("domain", True, f"sigma = {domain.sigma:.6g}"))
    except ConfigError as exc:
        rows.append(("domain", False, str(exc)))
        return rows
    try:
        build_forcing(cfg["forcing"], domain)
        rows.append(("forcing.integrability", True, "2 alpha + sigma > 0"))
    except IntegrabilityError as exc:
        rows.append(("forcing.integrability", False, str(exc)))
    except ConfigError as exc:
        rows.append(("forcing", False, str(exc)))
    for name, node in (cfg.get("brochettes") or {}).items():
        try:
            cert = is_class_D(build_brochette(node, f"brochettes.{name}"), domain.sigma)
            rows.append((f"brochettes.{name}.class_D", bool(cert), cert.reason))
        except ConfigError as exc:
            rows.append((f"brochettes.{name}", False, str(exc)))
    try:
        bad = grid_misalignments(cfg)
        rows.append(("grid_alignment", not bad,
                     "; ".join(f"{p}: {m}" for p, m in bad) or "all times on the dt grid"))
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        rows.append(("grid_alignment", False, str(exc)))
    return rows
