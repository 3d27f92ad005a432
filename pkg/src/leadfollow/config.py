"""INI experiment configuration: parsing, overrides and validation.

Sections and keys (all optional unless a subcommand needs them)::

    [problem]  d, m, N, m_samples (kinetic ensemble size M), T, dt, u_max, p,
               method, leaders
    [kernels]  h, h_params, h_table, g, g_params, g_table
    [initial]  sampler, low, high
    [control]  n_pieces, breakpoints, values, u, u_star
    [cost]     target, control_weight, scaling, gamma, rate
    [study]    n_list, n_ref, eps_list, gamma_list, deltas, seeds, workers,
               tol, max_iter, step, n_samples, radius, w1_stride, limit_dt
    [output]   dir, plots, timing

Lists are comma separated. Every problem found is reported; nothing is
silently fixed.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import CATALOG, KernelSpec, Kernels, load_table

SECTIONS = ("problem", "kernels", "initial", "control", "cost", "study", "output")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(";", ",").split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    source: str
    text: str
    d: int = 1
    m: int = 1
    N: int = 100
    M: int = 1000
    T: float = 1.0
    dt: float = 0.01
    u_max: float = math.inf
    p: float = 0.5
    method: str = "euler"
    leaders: list = field(default_factory=list)
    h: str = "zero"
    h_params: list = field(default_factory=list)
    h_table: str = ""
    g: str = "zero"
    g_params: list = field(default_factory=list)
    g_table: str = ""
    sampler: str = "halton"
    low: float = -1.0
    high: float = 1.0
    n_pieces: int = 1
    breakpoints: list = field(default_factory=list)
    values: list = field(default_factory=list)
    u: list = field(default_factory=list)
    u_star: list = field(default_factory=list)
    target: list = field(default_factory=list)
    control_weight: float = 1.0
    scaling: str = "sum"
    gamma: float = 1.0
    rate: float = 0.0
    n_list: list = field(default_factory=lambda: [50, 100, 200, 400])
    n_ref: int = 1600
    eps_list: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    gamma_list: list = field(default_factory=lambda: [0.1, 1.0, 10.0])
    deltas: list = field(default_factory=lambda: [1e-2, 1e-3])
    seeds: list = field(default_factory=lambda: [0])
    workers: int = 1
    tol: float = 1e-6
    max_iter: int = 500
    step: float = 0.5
    n_samples: int = 4096
    radius: float = 10.0
    w1_stride: int = 1
    limit_dt: float = 0.0
    out_dir: str = "out"
    plots: bool = True
    timing: bool = True

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def kernel(self, role: str) -> KernelSpec:
        kind = getattr(self, role)
        table = getattr(self, f"{role}_table")
        if kind == "table":
            path = Path(table)
            if not path.is_absolute():
                path = Path(self.source).parent / path
            return load_table(path, self.d)
        return KernelSpec(kind, tuple(getattr(self, f"{role}_params")), self.d)

    def kernels(self) -> Kernels:
        return Kernels(self.kernel("h"), self.kernel("g"))

    def leader_array(self) -> np.ndarray:
        if not self.leaders:
            return np.zeros((self.m, self.d))
        return np.asarray(self.leaders, dtype=float).reshape(self.m, self.d)

    def control_breakpoints(self) -> np.ndarray:
        if self.breakpoints:
            return np.asarray(self.breakpoints, dtype=float)
        return np.linspace(0.0, self.T, self.n_pieces + 1)

    def control_values(self) -> np.ndarray:
        P = self.control_breakpoints().size - 1
        if not self.values:
            return np.zeros((P, self.m, self.d))
        vals = np.asarray(self.values, dtype=float)
        if vals.size == self.m * self.d:
            return np.repeat(vals.reshape(1, self.m, self.d), P, axis=0)
        return vals.reshape(P, self.m, self.d)

    def target_array(self) -> np.ndarray:
        return np.asarray(self.target or [0.0] * self.d, dtype=float)


# key -> (section, attribute, parser)
_SCHEMA = {
    ("problem", "d"): ("d", int), ("problem", "m"): ("m", int), ("problem", "n"): ("N", int),
    ("problem", "m_samples"): ("M", int), ("problem", "t"): ("T", float), ("problem", "dt"): ("dt", float),
    ("problem", "u_max"): ("u_max", float), ("problem", "p"): ("p", float), ("problem", "method"): ("method", str),
    ("problem", "leaders"): ("leaders", _floats),
    ("kernels", "h"): ("h", str), ("kernels", "h_params"): ("h_params", _floats), ("kernels", "h_table"): ("h_table", str),
    ("kernels", "g"): ("g", str), ("kernels", "g_params"): ("g_params", _floats), ("kernels", "g_table"): ("g_table", str),
    ("initial", "sampler"): ("sampler", str), ("initial", "low"): ("low", float), ("initial", "high"): ("high", float),
    ("control", "n_pieces"): ("n_pieces", int), ("control", "breakpoints"): ("breakpoints", _floats),
    ("control", "values"): ("values", _floats), ("control", "u"): ("u", _floats), ("control", "u_star"): ("u_star", _floats),
    ("cost", "target"): ("target", _floats), ("cost", "control_weight"): ("control_weight", float),
    ("cost", "scaling"): ("scaling", str), ("cost", "gamma"): ("gamma", float), ("cost", "rate"): ("rate", float),
    ("study", "n_list"): ("n_list", _ints), ("study", "n_ref"): ("n_ref", int), ("study", "eps_list"): ("eps_list", _floats),
    ("study", "gamma_list"): ("gamma_list", _floats), ("study", "deltas"): ("deltas", _floats),
    ("study", "seeds"): ("seeds", _ints), ("study", "workers"): ("workers", int), ("study", "tol"): ("tol", float),
    ("study", "max_iter"): ("max_iter", int), ("study", "step"): ("step", float),
    ("study", "n_samples"): ("n_samples", int), ("study", "radius"): ("radius", float),
    ("study", "w1_stride"): ("w1_stride", int), ("study", "limit_dt"): ("limit_dt", float),
    ("output", "dir"): ("out_dir", str), ("output", "plots"): ("plots", "bool"), ("output", "timing"): ("timing", "bool"),
}
_BOOLS = {"on": True, "off": False, "true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _lineno(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
        elif current == section and "=" in s and s.split("=", 1)[0].strip().lower() == key:
            return i
    return None


def _where(cfg_text: str, section: str, key: str) -> str:
    line = _lineno(cfg_text, section, key)
    return f"[{section}] {key}" + (f" (line {line})" if line else "")


def parse(text: str, source: str = "<string>", overrides=()) -> tuple[ExperimentConfig, list[str]]:
    """Parse config text plus ``section.key=value`` overrides; returns (config, diagnostics)."""
    diags: list[str] = []
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        return ExperimentConfig(source, text), [f"syntax: {exc}"]
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            diags.append(f"override {item!r}: expected section.key=value")
            continue
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())
    cfg = ExperimentConfig(source, text + "".join(f"\n# override {o}" for o in overrides))
    for section in parser.sections():
        if section not in SECTIONS:
            diags.append(f"[{section}]: unknown section")
            continue
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                diags.append(f"{_where(text, section, key)}: unknown key")
                continue
            attr, kind = spec
            try:
                if kind == "bool":
                    value = _BOOLS[raw.strip().lower()]
                else:
                    value = kind(raw.strip())
            except (ValueError, KeyError):
                diags.append(f"{_where(text, section, key)}: cannot parse {raw!r}")
                continue
            setattr(cfg, attr, value)
    diags.extend(_check(cfg))
    return cfg, diags


def _check(cfg: ExperimentConfig) -> list[str]:
    out = []
    t = cfg.text

    def bad(section, key, msg):
        out.append(f"{_where(t, section, key)}: {msg}")

    if cfg.d < 1:
        bad("problem", "d", "must be >= 1")
    if cfg.m < 0:
        bad("problem", "m", "must be >= 0")
    if cfg.N < 1:
        bad("problem", "n", "must be >= 1")
    if cfg.M < 2:
        bad("problem", "m_samples", "must be >= 2")
    if not cfg.T > 0:
        bad("problem", "t", "must be positive")
    if not cfg.dt > 0:
        bad("problem", "dt", "must be positive")
    if cfg.u_max < 0:
        bad("problem", "u_max", "must be nonnegative")
    if not 0.0 <= cfg.p <= 1.0:
        bad("problem", "p", "must lie in [0, 1]")
    if cfg.method not in ("euler", "rk4"):
        bad("problem", "method", "must be euler or rk4")
    if cfg.leaders and len(cfg.leaders) != cfg.m * cfg.d:
        bad("problem", "leaders", f"needs m*d = {cfg.m * cfg.d} numbers")
    for role in ("h", "g"):
        kind = getattr(cfg, role)
        if kind not in CATALOG:
            bad("kernels", role, f"unknown kernel {kind!r}")
        elif kind == "table":
            path = Path(getattr(cfg, f"{role}_table"))
            if not path.is_absolute():
                path = Path(cfg.source).parent / path
            if not getattr(cfg, f"{role}_table") or not path.is_file():
                bad("kernels", f"{role}_table", f"table file {str(path)!r} not found")
    if cfg.sampler not in ("halton", "random"):
        bad("initial", "sampler", "must be halton or random")
    if not cfg.high > cfg.low:
        bad("initial", "high", "must exceed low")
    if cfg.n_pieces < 1:
        bad("control", "n_pieces", "must be >= 1")
    bp = cfg.control_breakpoints()
    if cfg.breakpoints:
        if bp.size < 2 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            bad("control", "breakpoints", "must start at 0 and increase strictly")
        elif not math.isclose(bp[-1], cfg.T, rel_tol=1e-12):
            bad("control", "breakpoints", f"last breakpoint {bp[-1]!r} differs from T={cfg.T!r}")
    if cfg.dt > 0:
        for b in bp:
            r = b / cfg.dt
            if abs(r - round(r)) > 1e-9 * max(1.0, r):
                bad("control", "breakpoints", f"breakpoint {float(b)!r} is not a multiple of dt={cfg.dt!r}")
    if cfg.values:
        P = bp.size - 1
        if len(cfg.values) not in (cfg.m * cfg.d, P * cfg.m * cfg.d):
            bad("control", "values", f"needs m*d = {cfg.m * cfg.d} or pieces*m*d = {P * cfg.m * cfg.d} numbers")
        elif np.isfinite(cfg.u_max):
            v = np.asarray(cfg.values).reshape(-1, cfg.d)
            if np.any(np.linalg.norm(v, axis=1) > cfg.u_max * (1 + 1e-12)):
                bad("control", "values", f"exceed u_max={cfg.u_max}")
    for key in ("u", "u_star"):
        vals = getattr(cfg, key)
        if vals and len(vals) != cfg.d:
            bad("control", key, f"needs d = {cfg.d} numbers")
    if cfg.target and len(cfg.target) not in (cfg.d, cfg.N * cfg.d):
        bad("cost", "target", f"needs d = {cfg.d} numbers")
    if not cfg.control_weight > 0:
        bad("cost", "control_weight", "must be positive")
    if cfg.scaling not in ("sum", "mean"):
        bad("cost", "scaling", "must be sum or mean")
    if not cfg.gamma > 0:
        bad("cost", "gamma", "must be positive")
    if cfg.rate < 0:
        bad("cost", "rate", "must be nonnegative")
    if any(n < 1 for n in cfg.n_list) or any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
        bad("study", "n_list", "must be positive and strictly increasing")
    if cfg.n_list and cfg.n_ref <= max(cfg.n_list):
        bad("study", "n_ref", "must exceed every entry of n_list")
    if any(not e > 0 for e in cfg.eps_list):
        bad("study", "eps_list", "entries must be positive")
    if any(not g > 0 for g in cfg.gamma_list):
        bad("study", "gamma_list", "entries must be positive")
    if any(not x > 0 for x in cfg.deltas):
        bad("study", "deltas", "entries must be positive")
    if cfg.workers < 1:
        bad("study", "workers", "must be >= 1")
    if not cfg.tol > 0:
        bad("study", "tol", "must be positive")
    if cfg.max_iter < 0:
        bad("study", "max_iter", "must be >= 0")
    if not cfg.step > 0:
        bad("study", "step", "must be positive")
    if cfg.n_samples < 1:
        bad("study", "n_samples", "must be >= 1")
    if not cfg.radius > 0:
        bad("study", "radius", "must be positive")
    if cfg.w1_stride < 1:
        bad("study", "w1_stride", "must be >= 1")
    if cfg.limit_dt < 0:
        bad("study", "limit_dt", "must be nonnegative (0 selects min(eps_list)/2)")
    return out


def load(path, overrides=()) -> ExperimentConfig:
    """Read and validate a config file; raises ConfigError listing every diagnostic."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg, diags = parse(text, str(path), overrides)
    if diags:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(diags))
    return cfg


def validate(path) -> list[str]:
    """All diagnostics for a config file (empty list when valid)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text, str(path))[1]
