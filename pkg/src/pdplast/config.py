"""Study configuration: a YAML file with a fixed key set.

Unknown keys anywhere in the file are errors.  See ``docs/config.md`` in
the repository for the full schema; :func:`default_config` gives a
complete example.
"""
from dataclasses import asdict, dataclass, field, fields
import hashlib
import json
import math

import yaml

from .energy import MaterialParams
from .grid import Collar, build_grid
from .kernel import FAMILIES
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


@dataclass
class GridSpec:
    n: int = 2
    cells: list = field(default_factory=lambda: [64, 64])
    extent: list = field(default_factory=lambda: [1.0, 1.0])
    collar: dict = field(default_factory=lambda: {"kind": "frame", "width": 13})


@dataclass
class KernelSpec:
    families: list = field(default_factory=lambda: list(FAMILIES))
    deltas: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    mode: str = "stencil"


@dataclass
class MaterialSpec:
    alpha: float = 1.0
    beta: float = 10.0
    gamma: float = 1.0
    sigma_y: float = 0.05


@dataclass
class LoadSpec:
    profile: str = "shear_ramp"
    amplitude: float = 6.0
    times: list = field(default_factory=lambda: [0.0, 1.0])
    values: list = field(default_factory=lambda: [0.0, 1.0])
    direction: list = None


@dataclass
class SolverSpec:
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    bcd_tol: float = 1e-12
    bcd_max_iter: int = 200
    cert_tol: float = 1e-8
    prox_root_tol: float = 1e-12
    u_solver: str = "auto"


@dataclass
class StudySpec:
    block: int = 4
    min_monotone_families: int = 2
    energy_h_ratio: int = 8
    korn_tol: float = 1e-8
    korn_max_iter: int = 500
    korn_collar_widths: list = field(default_factory=list)
    stability_competitors: int = 100
    simulate_model: str = "nonlocal"
    point_cloud: bool = False
    kernel_scale: float = 1.0
    checks: list = None


@dataclass
class StudyConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    material: MaterialSpec = field(default_factory=MaterialSpec)
    load: LoadSpec = field(default_factory=LoadSpec)
    steps: int = 20
    solver: SolverSpec = field(default_factory=SolverSpec)
    study: StudySpec = field(default_factory=StudySpec)
    output: str = "out"
    reproducible: bool = False
    threads: int = 1
    seed: int = 0

    # derived objects
    def build_grid(self):
        return build_grid(self.grid.n, self.grid.cells, self.grid.extent, Collar(**self.grid.collar))

    def material_params(self):
        m = self.material
        return MaterialParams(m.alpha, m.beta, m.gamma, m.sigma_y, n=self.grid.n)

    def solver_config(self):
        return SolverConfig(**asdict(self.solver))

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_SECTIONS = {"grid": GridSpec, "kernel": KernelSpec, "material": MaterialSpec, "load": LoadSpec,
             "solver": SolverSpec, "study": StudySpec}
_COLLAR_KEYS = {"kind", "width", "axis", "side"}


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where or 'top level'}: unknown key(s) {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        if k in _SECTIONS and cls is StudyConfig:
            v = _build(_SECTIONS[k], v, f"{where}.{k}" if where else k)
        kw[k] = v
    return cls(**kw)


def from_dict(data):
    cfg = _build(StudyConfig, data or {}, "")
    validate(cfg)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    return from_dict(data)


def parse_config(text):
    try:
        return from_dict(yaml.safe_load(text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc


def default_config():
    return from_dict({})


def _num(x, name, positive=True):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(f"{name} must be a finite number, got {x!r}")
    if positive and not x > 0:
        raise ConfigError(f"{name} must be positive, got {x!r}")
    return float(x)


def validate(cfg):
    g = cfg.grid
    if g.n not in (2, 3):
        raise ConfigError("grid.n must be 2 or 3")
    if not isinstance(g.collar, dict) or set(g.collar) - _COLLAR_KEYS:
        raise ConfigError(f"grid.collar: unknown key(s) {sorted(set(g.collar) - _COLLAR_KEYS)}")
    try:
        grid = cfg.build_grid()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    k = cfg.kernel
    if not k.families or any(f not in FAMILIES for f in k.families):
        raise ConfigError(f"kernel.families must be a nonempty subset of {list(FAMILIES)}")
    if k.mode not in ("stencil", "analytic"):
        raise ConfigError("kernel.mode must be 'stencil' or 'analytic'")
    d = [_num(x, "kernel.deltas") for x in k.deltas]
    if not d:
        raise ConfigError("kernel.deltas must not be empty")
    if any(b >= a for a, b in zip(d, d[1:])):
        raise ConfigError("kernel.deltas must be strictly decreasing")
    hmax = float(max(grid.h))
    if d[-1] < 1.5 * hmax:
        raise ConfigError(f"smallest horizon {d[-1]} is below 1.5 h = {1.5 * hmax}")
    if g.collar.get("kind", "frame") == "frame":
        reach = g.collar.get("width", 1) * float(min(grid.h))
        if d[0] > reach + 1e-12:
            raise ConfigError(f"largest horizon {d[0]} exceeds the collar width {reach}")
    m = cfg.material
    for name in ("alpha", "beta", "gamma", "sigma_y"):
        _num(getattr(m, name), f"material.{name}")
    try:
        cfg.material_params()
    except ValueError as exc:
        raise ConfigError(f"material: {exc}") from exc
    ld = cfg.load
    if ld.profile not in ("constant", "shear_ramp", "rotating_ramp"):
        raise ConfigError(f"load.profile {ld.profile!r} unknown")
    _num(ld.amplitude, "load.amplitude", positive=False)
    if len(ld.times) != len(ld.values) or len(ld.times) < 1:
        raise ConfigError("load.times and load.values need the same nonzero length")
    t = [_num(x, "load.times", positive=False) for x in ld.times]
    if t[0] != 0.0 or any(b <= a for a, b in zip(t, t[1:])):
        raise ConfigError("load.times must start at 0 and increase strictly")
    if ld.direction is not None and len(ld.direction) != g.n:
        raise ConfigError("load.direction needs one entry per axis")
    if not isinstance(cfg.steps, int) or cfg.steps < 1:
        raise ConfigError("steps must be an integer >= 1")
    try:
        cfg.solver_config()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"solver: {exc}") from exc
    s = cfg.study
    if s.simulate_model not in ("nonlocal", "local"):
        raise ConfigError("study.simulate_model must be 'nonlocal' or 'local'")
    for name in ("block", "energy_h_ratio", "korn_max_iter", "min_monotone_families"):
        if not isinstance(getattr(s, name), int) or getattr(s, name) < 1:
            raise ConfigError(f"study.{name} must be an integer >= 1")
    _num(s.korn_tol, "study.korn_tol")
    _num(s.kernel_scale, "study.kernel_scale")
    if not isinstance(cfg.threads, int) or cfg.threads < 1:
        raise ConfigError("threads must be an integer >= 1")
    return cfg
