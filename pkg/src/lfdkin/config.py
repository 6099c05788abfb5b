"""Run configuration: TOML parsing with strict key and range validation.

Unknown keys are rejected with their full path (no silent typo
acceptance), and every numeric parameter is checked against the owning
module's preconditions at parse time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

try:
    import tomllib
except ModuleNotFoundError:            # Python 3.10
    import tomli as tomllib

from .evolution import SolverConfig
from .fields import DensityField, make_initial_datum
from .grids import PERIODIC, BOX, PhaseGrid, build_phase_grid
from .initial_data import regularize_initial_datum
from .kernel import CrossSectionSpec, KernelConfig


class ConfigError(ValueError):
    """Malformed or invalid configuration; message carries the field path."""


_GRID_KEYS = {"dim", "v_max", "points_per_axis", "mode", "spatial_extent",
              "spatial_points", "topology"}
_CROSS_KEYS = {"gamma", "integrability_exponent"}
_KERNEL_KEYS = {"n", "quad_points"}
_SOLVER_KEYS = {"epsilon", "dt", "t_end", "picard_tol", "picard_max_iters",
                "splitting", "theta", "conv_method", "transport_interp",
                "collision_enabled"}
_INITIAL_KEYS = {"family", "snapshot", "regularize", "regularization_index",
                 "amplitude", "alpha", "a", "b", "shift", "height", "radius",
                 "edge", "x_width", "x_wave_amplitude", "x_wave_number"}
_OUTPUT_KEYS = {"directory", "snapshot_stride", "diagnostics_stride",
                "dissipation_stride", "history_stride"}
_PROBE_KEYS = {"alpha", "mu", "radius", "radius_star", "samples"}
_SECTIONS = {"grid": _GRID_KEYS, "cross_section": _CROSS_KEYS,
             "kernel": _KERNEL_KEYS, "solver": _SOLVER_KEYS,
             "initial": _INITIAL_KEYS, "output": _OUTPUT_KEYS,
             "probe": _PROBE_KEYS}


@dataclass
class RunConfig:
    dim: int = 2
    v_max: float = 6.0
    points_per_axis: int = 48
    mode: str = "homogeneous"
    spatial_extent: float = 10.0
    spatial_points: int = 16
    topology: str = PERIODIC

    gamma: float = -3.0
    integrability_exponent: float | None = None

    kernel_n: int = 8
    quad_points: int = 32

    epsilon: float = 0.05
    dt: float = 1e-3
    t_end: float = 0.5
    picard_tol: float = 1e-10
    picard_max_iters: int = 30
    splitting: str = "strang"
    theta: float = 1.0
    conv_method: str = "fft"
    transport_interp: str = "spectral"
    collision_enabled: bool = True

    initial_family: str = "gaussian"
    initial_params: dict = dc_field(default_factory=dict)
    initial_snapshot: str | None = None
    regularize: bool = True
    regularization_index: int | None = None

    output_directory: str = "out"
    snapshot_stride: int = 100
    diagnostics_stride: int = 1
    dissipation_stride: int = 5
    history_stride: int = 0

    probe_alpha: float = 0.01
    probe_mu: float = 0.9
    probe_radius: float = 2.0
    probe_radius_star: float = 2.0
    probe_samples: int = 256

    # ---- factories -------------------------------------------------------

    def make_grid(self) -> PhaseGrid:
        if self.mode == "homogeneous":
            return build_phase_grid(self.dim, self.v_max,
                                    self.points_per_axis)
        return build_phase_grid(self.dim, self.v_max, self.points_per_axis,
                                spatial_extent=self.spatial_extent,
                                spatial_points=self.spatial_points,
                                topology=self.topology)

    def cross_section(self) -> CrossSectionSpec:
        return CrossSectionSpec(gamma=self.gamma,
                                integrability_exponent=self.integrability_exponent)

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(n=self.kernel_n, quad_points=self.quad_points)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon, dt=self.dt, t_end=self.t_end,
            picard_tol=self.picard_tol,
            picard_max_iters=self.picard_max_iters,
            kernel_index=self.kernel_n, splitting=self.splitting,
            theta=self.theta, conv_method=self.conv_method,
            transport_interp=self.transport_interp,
            collision_enabled=self.collision_enabled)

    def make_initial(self, grid: PhaseGrid) -> DensityField:
        if self.initial_snapshot is not None:
            from .snapshots import read_snapshot
            f0 = read_snapshot(self.initial_snapshot, expected_grid=grid)
        else:
            f0 = make_initial_datum(grid, self.initial_family,
                                    self.initial_params)
        if self.regularize:
            n = self.regularization_index or self.kernel_n
            f0 = regularize_initial_datum(f0, n)
        return f0


def _expect(value, types, path):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {types}, got boolean")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {types}, got {type(value).__name__}")
    return value


def _num(value, path, lo=None, hi=None, lo_strict=False, hi_strict=False):
    v = _expect(value, (int, float), path)
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    if lo is not None and (v <= lo if lo_strict else v < lo):
        raise ConfigError(f"{path}: must be {'>' if lo_strict else '>='} {lo}, got {v}")
    if hi is not None and (v >= hi if hi_strict else v > hi):
        raise ConfigError(f"{path}: must be {'<' if hi_strict else '<='} {hi}, got {v}")
    return v


def _int(value, path, lo=None):
    v = _expect(value, int, path)
    if lo is not None and v < lo:
        raise ConfigError(f"{path}: must be >= {lo}, got {v}")
    return int(v)


def _choice(value, path, options):
    v = _expect(value, str, path)
    if v not in options:
        raise ConfigError(f"{path}: must be one of {sorted(options)}, got {v!r}")
    return v


def parse_config(text: str) -> RunConfig:
    """Parse a TOML document into a validated RunConfig."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from exc

    for section in doc:
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(doc[section], dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in doc[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {section}.{key}")

    cfg = RunConfig()
    g = doc.get("grid", {})
    if "dim" in g:
        cfg.dim = _int(g["dim"], "grid.dim")
        if cfg.dim not in (2, 3):
            raise ConfigError(f"grid.dim: must be 2 or 3, got {cfg.dim}")
    if "v_max" in g:
        cfg.v_max = _num(g["v_max"], "grid.v_max", lo=0, lo_strict=True)
    if "points_per_axis" in g:
        cfg.points_per_axis = _int(g["points_per_axis"],
                                   "grid.points_per_axis", lo=4)
    if "mode" in g:
        cfg.mode = _choice(g["mode"], "grid.mode",
                           {"homogeneous", "inhomogeneous"})
    if "spatial_extent" in g:
        cfg.spatial_extent = _num(g["spatial_extent"], "grid.spatial_extent",
                                  lo=0, lo_strict=True)
    if "spatial_points" in g:
        cfg.spatial_points = _int(g["spatial_points"], "grid.spatial_points",
                                  lo=1)
    if "topology" in g:
        cfg.topology = _choice(g["topology"], "grid.topology",
                               {PERIODIC, BOX})

    c = doc.get("cross_section", {})
    if "gamma" in c:
        cfg.gamma = _num(c["gamma"], "cross_section.gamma", lo=-3.0,
                         hi=0.0, hi_strict=True)
    if "integrability_exponent" in c:
        cfg.integrability_exponent = _num(
            c["integrability_exponent"], "cross_section.integrability_exponent",
            lo=1.0, lo_strict=True)

    k = doc.get("kernel", {})
    if "n" in k:
        cfg.kernel_n = _int(k["n"], "kernel.n", lo=1)
    if "quad_points" in k:
        cfg.quad_points = _int(k["quad_points"], "kernel.quad_points", lo=4)

    s = doc.get("solver", {})
    if "epsilon" in s:
        cfg.epsilon = _num(s["epsilon"], "solver.epsilon", lo=0.0)
    if "dt" in s:
        cfg.dt = _num(s["dt"], "solver.dt", lo=0.0, lo_strict=True)
    if "t_end" in s:
        cfg.t_end = _num(s["t_end"], "solver.t_end", lo=0.0, lo_strict=True)
    if "picard_tol" in s:
        cfg.picard_tol = _num(s["picard_tol"], "solver.picard_tol", lo=0.0,
                              lo_strict=True)
    if "picard_max_iters" in s:
        cfg.picard_max_iters = _int(s["picard_max_iters"],
                                    "solver.picard_max_iters", lo=1)
    if "splitting" in s:
        cfg.splitting = _choice(s["splitting"], "solver.splitting",
                                {"strang", "lie"})
    if "theta" in s:
        cfg.theta = _num(s["theta"], "solver.theta", lo=0.0, lo_strict=True,
                         hi=1.0)
    if "conv_method" in s:
        cfg.conv_method = _choice(s["conv_method"], "solver.conv_method",
                                  {"direct", "fft"})
    if "transport_interp" in s:
        cfg.transport_interp = _choice(s["transport_interp"],
                                       "solver.transport_interp",
                                       {"spectral", "linear"})
    if "collision_enabled" in s:
        cfg.collision_enabled = _expect(s["collision_enabled"], bool,
                                        "solver.collision_enabled")

    ini = doc.get("initial", {})
    if "family" in ini:
        cfg.initial_family = _choice(
            ini["family"], "initial.family",
            {"gaussian", "double-gaussian", "fermi-dirac-equilibrium",
             "plateau"})
    if "snapshot" in ini:
        cfg.initial_snapshot = _expect(ini["snapshot"], str,
                                       "initial.snapshot")
    if "regularize" in ini:
        cfg.regularize = _expect(ini["regularize"], bool,
                                 "initial.regularize")
    if "regularization_index" in ini:
        cfg.regularization_index = _int(ini["regularization_index"],
                                        "initial.regularization_index", lo=1)
    for key in ("amplitude", "alpha", "a", "b", "shift", "height", "radius",
                "edge", "x_width", "x_wave_amplitude", "x_wave_number"):
        if key in ini:
            cfg.initial_params[key] = _num(ini[key], f"initial.{key}")

    o = doc.get("output", {})
    if "directory" in o:
        cfg.output_directory = _expect(o["directory"], str,
                                       "output.directory")
    for key in ("snapshot_stride", "diagnostics_stride",
                "dissipation_stride"):
        if key in o:
            setattr(cfg, key, _int(o[key], f"output.{key}", lo=1))
    if "history_stride" in o:
        cfg.history_stride = _int(o["history_stride"],
                                  "output.history_stride", lo=0)

    p = doc.get("probe", {})
    if "alpha" in p:
        cfg.probe_alpha = _num(p["alpha"], "probe.alpha", lo=0.0,
                               lo_strict=True)
    if "mu" in p:
        cfg.probe_mu = _num(p["mu"], "probe.mu", lo=0.0, hi=1.0,
                            hi_strict=True)
    if "radius" in p:
        cfg.probe_radius = _num(p["radius"], "probe.radius", lo=0.0,
                                lo_strict=True)
    if "radius_star" in p:
        cfg.probe_radius_star = _num(p["radius_star"], "probe.radius_star",
                                     lo=0.0, lo_strict=True)
    if "samples" in p:
        cfg.probe_samples = _int(p["samples"], "probe.samples", lo=1)

    if cfg.mode == "inhomogeneous" and "spatial_extent" not in g:
        raise ConfigError("grid.spatial_extent: required in inhomogeneous mode")
    n_steps = cfg.t_end / cfg.dt
    if abs(n_steps - round(n_steps)) > 1e-9 * max(n_steps, 1.0):
        raise ConfigError("solver.t_end: must be an integer multiple of dt")
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
