"""Files: OBJ meshes, adapted-state bundles, boundary data and run configuration."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .extension import AdaptedShortState, BoundaryData, BoundaryDataError
from .fields import FieldError, Grid, ImmersionField, ScalarField, SymTensorField, load_field, \
    save_field
from .iteration import ScheduleError, check_alpha

__all__ = [
    "ConfigError", "write_obj", "read_obj_vertices", "save_state", "load_state",
    "save_boundary_data", "load_boundary_data", "GridConfig", "BoundaryConfig",
    "ScheduleConfig", "CalibrationConfig", "RunConfig",
]


class ConfigError(ValueError):
    """A configuration or data file does not match its schema."""


# ---------------------------------------------------------------- meshes

def write_obj(path, v: ImmersionField) -> None:
    """Triangulated surface of a 2D immersion; vertex k is node k in C order.

    Coordinates are written with 17 significant digits, so reading them back
    reproduces the field samples exactly.
    """
    if v.grid.n != 2:
        raise FieldError("OBJ export needs a two-dimensional parameter grid")
    n0, n1 = v.grid.shape
    pts = v.values.reshape(-1, v.values.shape[-1])
    idx = np.arange(n0 * n1).reshape(n0, n1) + 1
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])
    with open(path, "w") as fh:
        fh.write(f"# grid {n0} x {n1}\n")
        np.savetxt(fh, pts, fmt="v %.17g %.17g %.17g")
        np.savetxt(fh, tris, fmt="f %d %d %d")


def read_obj_vertices(path) -> np.ndarray:
    rows = [line.split()[1:] for line in Path(path).read_text().splitlines()
            if line.startswith("v ")]
    return np.array(rows, dtype=float)


# ---------------------------------------------------------------- state bundles

_JETS = "jets.npz"
_MANIFEST = "manifest.json"


def save_state(directory, state: AdaptedShortState, extra: dict | None = None) -> Path:
    """Write v, rho, G and g as field files, their derivatives and a manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, f in (("v", state.v), ("rho", state.rho), ("G", state.G), ("g", state.g)):
        save_field(d / f"{name}.bin", f)
    np.savez(d / _JETS, v_jac=state.v.jacobian(), v_hess=state.v.hessian(),
             rho_grad=state.rho.gradient(), G_grad=state.G.gradient())
    manifest = {"M": state.M, "r": state.r, "tau": state.tau, "grid": state.v.grid.to_dict(),
                "files": ["v.bin", "rho.bin", "G.bin", "g.bin", _JETS], **(extra or {})}
    (d / _MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float))
    return d


def load_state(directory) -> AdaptedShortState:
    d = Path(directory)
    try:
        manifest = json.loads((d / _MANIFEST).read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"state bundle {d} has no {_MANIFEST}") from err
    for key in ("M", "r", "tau"):
        if key not in manifest:
            raise ConfigError(f"{_MANIFEST}: missing field '{key}'")
    v, rho, G, g = (load_field(d / f"{name}.bin") for name in ("v", "rho", "G", "g"))
    jets = np.load(d / _JETS)
    v = ImmersionField(v.grid, v.values, jets["v_jac"], jets["v_hess"])
    rho = ScalarField(rho.grid, rho.values, jets["rho_grad"])
    G = SymTensorField(G.grid, G.values, jets["G_grad"])
    return AdaptedShortState(v, rho, G, float(manifest["M"]), float(manifest["r"]),
                             float(manifest["tau"]), g)


# ---------------------------------------------------------------- boundary data

_REQUIRED = ("lo", "hi", "resolution", "f", "mu", "g", "d0")
_OPTIONAL = ("f_jac", "f_hess", "mu_jac", "mu_hess")


def save_boundary_data(path, data: BoundaryData) -> None:
    """npz archive with the chart grid, f and mu on Sigma, g on the chart and d0."""
    np.savez(path, lo=np.array(data.grid.lo), hi=np.array(data.grid.hi),
             resolution=np.array(data.grid.resolution), f=data.f, mu=data.mu,
             g=data.g.values, d0=np.array(data.d0), f_jac=data.f_jac, f_hess=data.f_hess,
             mu_jac=data.mu_jac, mu_hess=data.mu_hess)


def load_boundary_data(path) -> BoundaryData:
    try:
        arch = np.load(path)
    except (OSError, ValueError) as err:
        raise BoundaryDataError("file", f"cannot read boundary data from {path}: {err}") from err
    for key in _REQUIRED:
        if key not in arch.files:
            raise BoundaryDataError(key, "missing from boundary data file")
    try:
        grid = Grid(tuple(arch["lo"]), tuple(arch["hi"]), tuple(int(r) for r in arch["resolution"]))
    except (FieldError, TypeError, ValueError) as err:
        raise BoundaryDataError("resolution", str(err)) from err
    try:
        g = SymTensorField(grid, arch["g"])
    except FieldError as err:
        raise BoundaryDataError("g", str(err)) from err
    opt = {k: arch[k] for k in _OPTIONAL if k in arch.files}
    return BoundaryData(grid, arch["f"], arch["mu"], g, float(arch["d0"]), **opt)


# ---------------------------------------------------------------- run configuration

@dataclass
class GridConfig:
    resolution: list = field(default_factory=lambda: [129, 129])
    half_width: float = 1.0
    depth: float = 0.25


@dataclass
class BoundaryConfig:
    demo: str | None = "strip"
    radius: float = 1.0
    path: str | None = None


@dataclass
class ScheduleConfig:
    a: float = 0.4
    A: float = 16.0
    alpha: float | None = None
    eps0: float | None = None
    tol: float = 1e-3
    Q_max: int = 4
    K: float | None = None
    strict: bool = True
    max_escalations: int = 3


@dataclass
class CalibrationConfig:
    recompute: bool = False
    cache: str = "calibration.json"
    K_sweep: list = field(default_factory=lambda: [16.0, 32.0, 64.0, 128.0])


@dataclass
class RunConfig:
    """Everything a pipeline run needs; serialized as one JSON document."""
    grid: GridConfig = field(default_factory=GridConfig)
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    output: str = "out"
    meshes: bool = True
    report_format: str = "csv"

    def validate(self) -> "RunConfig":
        s = self.schedule
        if not (0 < s.a < 0.5):
            raise ConfigError(f"schedule.a must lie in (0, 1/2), got {s.a}")
        if not s.A > 1:
            raise ConfigError(f"schedule.A must exceed 1, got {s.A}")
        if not (s.tol >= 0 and math.isfinite(s.tol)):
            raise ConfigError(f"schedule.tol must be a nonnegative number, got {s.tol}")
        if int(s.Q_max) != s.Q_max or s.Q_max < 0:
            raise ConfigError(f"schedule.Q_max must be a nonnegative integer, got {s.Q_max}")
        if s.eps0 is not None and not s.eps0 > 0:
            raise ConfigError(f"schedule.eps0 must be positive, got {s.eps0}")
        if s.alpha is not None and not s.alpha > 0:
            raise ConfigError(f"schedule.alpha must be positive, got {s.alpha}")
        if s.alpha is not None:
            try:
                check_alpha(s.alpha, len(self.grid.resolution))
            except ScheduleError as err:
                raise ConfigError(f"schedule.alpha: {err}") from err
        if s.K is not None and not s.K > 1:
            raise ConfigError(f"schedule.K must exceed 1, got {s.K}")
        if len(self.grid.resolution) != 2 or min(self.grid.resolution) < 9:
            raise ConfigError(f"grid.resolution must be two integers >= 9, got {self.grid.resolution}")
        if not (self.grid.depth > 0 and self.grid.half_width > 0):
            raise ConfigError("grid.depth and grid.half_width must be positive")
        if self.boundary.demo not in (None, "strip", "line"):
            raise ConfigError(f"boundary.demo must be 'strip', 'line' or null, got {self.boundary.demo!r}")
        if self.boundary.demo is None and not self.boundary.path:
            raise ConfigError("boundary needs either a demo name or a data path")
        if not self.boundary.radius > 0:
            raise ConfigError(f"boundary.radius must be positive, got {self.boundary.radius}")
        if not self.calibration.K_sweep or min(self.calibration.K_sweep) <= 1:
            raise ConfigError("calibration.K_sweep must list stage ratios above 1")
        if self.report_format not in ("csv", "json"):
            raise ConfigError(f"report_format must be 'csv' or 'json', got {self.report_format!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        sections = {"grid": GridConfig, "boundary": BoundaryConfig, "schedule": ScheduleConfig,
                    "calibration": CalibrationConfig}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, val in d.items():
            if key in sections:
                if not isinstance(val, dict):
                    raise ConfigError(f"config field '{key}' must be an object")
                sub = {f.name for f in fields(sections[key])}
                bad = set(val) - sub
                if bad:
                    raise ConfigError(f"unknown field(s) in '{key}': {', '.join(sorted(bad))}")
                kwargs[key] = sections[key](**val)
            else:
                kwargs[key] = val
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path} is not valid JSON: {err}") from err
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))
