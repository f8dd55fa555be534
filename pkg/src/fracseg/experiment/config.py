"""Experiment configuration: TOML parsing, validation and hashing."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .. import __version__
from ..extension_solver import (DirichletData, HalfGrid, Reaction, SolverOptions, SystemParams)
from ..profiles import classified_pair


class ConfigError(ValueError):
    """Validation failure tied to a dotted config key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class GridConfig:
    x_min: float = -1.0
    x_max: float = 1.0
    y_max: float = 1.0
    nx: int = 401
    ny: int = 201


@dataclass
class SystemConfig:
    k: int = 2
    beta: float = 10.0
    reaction: str = "zero"
    omega: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    a_ij: list | None = None


@dataclass
class SolverConfig:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 500
    method: str = "picard"


@dataclass
class DirichletConfig:
    kind: str = "classified-pair"
    mode: int = 0
    c: float = 1.0
    sign: int = 1
    amplitude: float = 1.0
    centers: list = field(default_factory=lambda: [-0.5, 0.5])
    width: float = 0.3
    path: str = ""
    value: float | list = 1.0


@dataclass
class ScanConfig:
    centers: list = field(default_factory=lambda: [0.0])
    radii: list = field(default_factory=list)
    nu: float | None = None
    nu_prime: float = 0.45
    kernel_eps: float | None = None
    rtol: float = 1e-3
    fit_window: list = field(default_factory=lambda: [0.2, 0.8])
    holder_alpha: float = 0.45


@dataclass
class SweepConfig:
    beta: list = field(default_factory=list)


@dataclass
class ExperimentConfig:
    name: str
    grid: GridConfig = field(default_factory=GridConfig)
    system: SystemConfig = field(default_factory=SystemConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    dirichlet: DirichletConfig = field(default_factory=DirichletConfig)
    scan: ScanConfig = field(default_factory=ScanConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    output: str = "runs"
    source: str | None = None

    # ---- derived objects

    def half_grid(self) -> HalfGrid:
        g = self.grid
        return HalfGrid(g.x_min, g.x_max, g.y_max, g.nx, g.ny)

    def params(self, beta: float | None = None) -> SystemParams:
        s = self.system
        if s.reaction == "zero":
            rx = tuple(Reaction.zero() for _ in range(s.k))
        elif s.reaction == "gross-pitaevskii":
            rx = tuple(Reaction.gross_pitaevskii(s.omega[i], s.lam[i]) for i in range(s.k))
        else:
            rx = tuple(Reaction.linear(s.lam[i]) for i in range(s.k))
        a = None if s.a_ij is None else np.asarray(s.a_ij, float)
        return SystemParams(s.k, s.beta if beta is None else beta, rx, a)

    def options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(s.damping, s.tol, s.max_iter, s.method)

    def dirichlet_data(self) -> DirichletData:
        d = self.dirichlet
        k = self.system.k
        if d.kind == "classified-pair":
            return classified_pair(d.mode, d.c, d.sign).dirichlet()
        if d.kind == "constant":
            vals = np.broadcast_to(np.atleast_1d(np.asarray(d.value, float)), (k,))
            return DirichletData.constant(vals.tolist())
        if d.kind == "bump":
            cs = np.asarray(d.centers, float)
            amp, w = d.amplitude, d.width

            def bump(X, Y):
                return amp * np.exp(-0.5 * ((X[None] - cs[:, None, None]) / w) ** 2)
            return DirichletData(bump, name="bump")
        grid = self.half_grid()
        path = Path(d.path)
        if not path.is_absolute() and self.source:
            path = Path(self.source).parent / path
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != k * grid.nx * grid.ny:
            raise ConfigError("dirichlet.path", f"expected {k * grid.nx * grid.ny} float64 values, found {raw.size}")
        return DirichletData(samples=raw.reshape(k, grid.nx, grid.ny), name=f"file:{d.path}")

    def betas(self) -> list[float]:
        return list(self.sweep.beta) if self.sweep.beta else [self.system.beta]

    def radii(self) -> np.ndarray:
        return np.asarray(self.scan.radii, float)

    # ---- identity

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d.pop("output")
        return d

    def hash(self) -> str:
        blob = json.dumps({"config": self.canonical(), "version": __version__}, sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SECTIONS = {"grid": GridConfig, "system": SystemConfig, "solver": SolverConfig,
             "dirichlet": DirichletConfig, "scan": ScanConfig, "sweep": SweepConfig}
_RENAMES = {("system", "lambda"): "lam"}


def _build(section: str, cls, raw: Any):
    if not isinstance(raw, dict):
        raise ConfigError(section, "must be a table")
    known = {f for f in cls.__dataclass_fields__}
    kwargs = {}
    for key, val in raw.items():
        name = _RENAMES.get((section, key), key)
        if name not in known:
            raise ConfigError(f"{section}.{key}", "unknown key")
        kwargs[name] = val
    try:
        return cls(**kwargs)
    except TypeError as exc:  # pragma: no cover - dataclass signature mismatch
        raise ConfigError(section, str(exc)) from exc


def _num(key: str, val, kind=float, positive: bool = False, nonneg: bool = False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(key, f"expected a number, got {val!r}")
    if kind is int and (not float(val).is_integer()):
        raise ConfigError(key, f"expected an integer, got {val!r}")
    if not math.isfinite(val):
        raise ConfigError(key, "must be finite")
    if positive and val <= 0:
        raise ConfigError(key, "must be positive")
    if nonneg and val < 0:
        raise ConfigError(key, "must be nonnegative")
    return kind(val)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    g = cfg.grid
    g.nx = _num("grid.nx", g.nx, int)
    g.ny = _num("grid.ny", g.ny, int)
    for k in ("x_min", "x_max", "y_max"):
        setattr(g, k, _num(f"grid.{k}", getattr(g, k)))
    try:
        grid = cfg.half_grid()
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from exc

    s = cfg.system
    s.k = _num("system.k", s.k, int, positive=True)
    s.beta = _num("system.beta", s.beta, nonneg=True)
    if s.reaction not in ("zero", "gross-pitaevskii", "linear"):
        raise ConfigError("system.reaction", "must be one of zero, gross-pitaevskii, linear")
    if s.reaction != "zero":
        if len(s.lam) != s.k:
            raise ConfigError("system.lambda", f"needs {s.k} entries")
        s.lam = [_num(f"system.lambda[{i}]", v) for i, v in enumerate(s.lam)]
    if s.reaction == "gross-pitaevskii":
        if len(s.omega) != s.k:
            raise ConfigError("system.omega", f"needs {s.k} entries")
        s.omega = [_num(f"system.omega[{i}]", v) for i, v in enumerate(s.omega)]
    if s.a_ij is not None:
        a = np.asarray(s.a_ij, float)
        off = ~np.eye(s.k, dtype=bool)
        if a.shape != (s.k, s.k) or not np.allclose(a, a.T) or np.any(a[off] <= 0):
            raise ConfigError("system.a_ij", f"must be a symmetric {s.k}x{s.k} matrix with positive entries")

    v = cfg.solver
    v.damping = _num("solver.damping", v.damping, positive=True)
    if v.damping > 1:
        raise ConfigError("solver.damping", "must lie in (0, 1]")
    v.tol = _num("solver.tol", v.tol, positive=True)
    v.max_iter = _num("solver.max_iter", v.max_iter, int, positive=True)
    if v.method not in ("picard", "newton"):
        raise ConfigError("solver.method", "must be picard or newton")

    d = cfg.dirichlet
    if d.kind not in ("classified-pair", "bump", "file", "constant"):
        raise ConfigError("dirichlet.kind", "must be classified-pair, bump, file or constant")
    if d.kind == "constant":
        vals = np.atleast_1d(np.asarray(d.value, float))
        if vals.size not in (1, s.k) or not np.all(np.isfinite(vals)):
            raise ConfigError("dirichlet.value", f"needs 1 or {s.k} finite entries")
    if d.kind == "classified-pair" and s.k != 2:
        raise ConfigError("dirichlet.kind", "classified-pair data needs system.k = 2")
    if d.kind == "bump" and len(d.centers) != s.k:
        raise ConfigError("dirichlet.centers", f"needs {s.k} entries")
    if d.kind == "file" and not d.path:
        raise ConfigError("dirichlet.path", "required for kind = file")

    sc = cfg.scan
    if not sc.radii:
        raise ConfigError("scan.radii", "must be a nonempty list")
    r = np.asarray([_num(f"scan.radii[{i}]", x, positive=True) for i, x in enumerate(sc.radii)])
    if np.any(np.diff(r) <= 0):
        raise ConfigError("scan.radii", "must be strictly increasing")
    sc.radii = r.tolist()
    sc.centers = [_num(f"scan.centers[{i}]", c) for i, c in enumerate(sc.centers)]
    if not sc.centers:
        raise ConfigError("scan.centers", "must be a nonempty list")
    for c in sc.centers:
        if c - r[-1] < grid.x_min - 1e-12 or c + r[-1] > grid.x_max + 1e-12 or r[-1] > grid.y_max + 1e-12:
            raise ConfigError("scan.radii", f"radius {r[-1]} about center {c} leaves the grid")
    if not 0 < sc.nu_prime < 0.5:
        raise ConfigError("scan.nu_prime", "must lie in (0, 1/2)")
    if not 0 < sc.holder_alpha < 1:
        raise ConfigError("scan.holder_alpha", "must lie in (0, 1)")
    if len(sc.fit_window) != 2 or not sc.fit_window[0] < sc.fit_window[1]:
        raise ConfigError("scan.fit_window", "must be [r_lo, r_hi] with r_lo < r_hi")

    b = [_num(f"sweep.beta[{i}]", x, positive=True) for i, x in enumerate(cfg.sweep.beta)]
    if any(y <= x for x, y in zip(b, b[1:])):
        raise ConfigError("sweep.beta", "must be positive and strictly ascending")
    cfg.sweep.beta = b
    return cfg


def parse(data: dict, source: str | None = None) -> ExperimentConfig:
    if "name" not in data or not isinstance(data["name"], str) or not data["name"]:
        raise ConfigError("name", "a nonempty string is required")
    unknown = set(data) - set(_SECTIONS) - {"name", "output"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")
    kw = {sec: _build(sec, cls, data.get(sec, {})) for sec, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(name=data["name"], output=data.get("output", "runs"), source=source, **kw)
    return validate(cfg)


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"invalid TOML: {exc}") from exc
    return parse(data, str(path))


def default_config_path() -> Path:
    return Path(__file__).resolve().parent.parent / "configs" / "classified-beta-sweep.toml"
