"""Run configuration: strict TOML loading, defaults and validation."""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .energy import DENSITIES, ModelParams
from .errors import ConfigError
from .mesh import GridSpec, build_mesh, crackable_interfaces
from .solver import (
    BoundaryProgram,
    SolveOptions,
    simple_shear,
    uniaxial_stretch,
    zero_load,
)

MODELS = ("linear", "nonlinear", "both")
PROGRAMS = ("uniaxial_stretch", "biaxial_stretch", "simple_shear", "zero")

DEFAULTS_TOML = """\
# qsfrac run configuration (all keys optional; values shown are defaults)
model = "linear"            # linear | nonlinear | both
seed = 0                    # seeds every random start
workers = 1                 # concurrent ladder entries
initial_crack = []          # interface ids broken before t = 0

[grid]
width = 7.0                 # outer domain, length units
height = 5.0
cells_x = 7                 # >= 4, square cells
cells_y = 5
margin = 2.0                # frame thickness, whole number of cells

[params]
epsilon = 0.1
beta = 0.75                 # 2/3 < gamma < beta < 1
gamma = 0.7
kappa = 0.15                # toughness, energy per length
r = 0.25
density = "distance"        # distance | kirchhoff_det

[ladder]
epsilons = [0.2, 0.1, 0.05, 0.025]   # strictly decreasing
sample_times = [0.25, 0.5, 1.0]

[time]
partition_level = 3         # t_n = n / 2^k

[boundary]
program = "uniaxial_stretch"   # uniaxial_stretch | biaxial_stretch | simple_shear | zero
amplitude = 1.0
axis = 0                       # stretch direction for uniaxial_stretch

[solve]
elastic_tol = 1e-10
max_newton_iters = 60
multistart = 3
greedy_passes = 10
break_threshold_tol = 1e-12
max_chain_combo = 3
max_candidates = 20000
chain_max_len = 0              # 0: longest grid line

[output]
directory = "qsfrac_out"
trajectory = true
report = true
oracle_check = true
"""


@dataclass(frozen=True)
class BoundarySpec:
    program: str = "uniaxial_stretch"
    amplitude: float = 1.0
    axis: int = 0

    def build(self) -> BoundaryProgram:
        a = self.amplitude
        if self.program == "uniaxial_stretch":
            return uniaxial_stretch(a, self.axis)
        if self.program == "biaxial_stretch":
            return uniaxial_stretch(a, 0) + uniaxial_stretch(a, 1)
        if self.program == "simple_shear":
            return simple_shear(a)
        return zero_load()


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "qsfrac_out"
    trajectory: bool = True
    report: bool = True
    oracle_check: bool = True


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = GridSpec(7.0, 5.0, 7, 5, 2.0)
    model: str = "linear"
    params: ModelParams = ModelParams(0.1, 0.75, 0.7, 0.15, 0.25)
    density: str = "distance"
    ladder: tuple = (0.2, 0.1, 0.05, 0.025)
    sample_times: tuple = (0.25, 0.5, 1.0)
    partition_level: int = 3
    boundary: BoundarySpec = BoundarySpec()
    solve: SolveOptions = SolveOptions()
    output: OutputSpec = OutputSpec()
    seed: int = 0
    workers: int = 1
    initial_crack: tuple = ()

    def program(self) -> BoundaryProgram:
        return self.boundary.build()

    def with_epsilon(self, eps: float) -> "RunConfig":
        return replace(self, params=self.params.with_epsilon(eps))

    def validate(self) -> None:
        self.grid.validate()
        self.params.validate()
        self.solve.validate()
        if self.model not in MODELS:
            raise ConfigError(f"RunConfig: model must be one of {MODELS}, got {self.model!r}")
        if self.density not in DENSITIES:
            raise ConfigError(f"RunConfig: unknown density {self.density!r}")
        if self.partition_level < 0:
            raise ConfigError("RunConfig invariant violated: partition_level >= 0")
        lad = list(self.ladder)
        if not lad or any(not e > 0 for e in lad) or any(a <= b for a, b in zip(lad, lad[1:])):
            raise ConfigError("RunConfig invariant violated: ladder strictly decreasing, positive")
        if self.boundary.program not in PROGRAMS:
            raise ConfigError(f"RunConfig: boundary.program must be one of {PROGRAMS}")
        if self.boundary.axis not in (0, 1):
            raise ConfigError("RunConfig: boundary.axis must be 0 or 1")
        if self.workers < 1:
            raise ConfigError("RunConfig: workers >= 1")
        for t in self.sample_times:
            k = t * 2**self.partition_level
            if not 0 <= t <= 1 or abs(k - round(k)) > 1e-9:
                raise ConfigError(
                    f"RunConfig: sample time {t} is not a node of the level-{self.partition_level} partition"
                )
        if self.initial_crack:
            ok = set(crackable_interfaces(build_mesh(self.grid)))
            bad = sorted(set(self.initial_crack) - ok)
            if bad:
                raise ConfigError(f"RunConfig: initial_crack ids {bad} are not crackable interfaces")


_SECTIONS = {
    "grid": {"width", "height", "cells_x", "cells_y", "margin"},
    "params": {"epsilon", "beta", "gamma", "kappa", "r", "density"},
    "ladder": {"epsilons", "sample_times"},
    "time": {"partition_level"},
    "boundary": {"program", "amplitude", "axis"},
    "solve": {f.name for f in fields(SolveOptions)} - {"rng_seed"},
    "output": {"directory", "trajectory", "report", "oracle_check"},
}
_TOP = {"model", "seed", "workers", "initial_crack"}


def _check_keys(d: dict) -> None:
    for key, val in d.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"config: [{key}] must be a table")
            extra = sorted(set(val) - _SECTIONS[key])
            if extra:
                raise ConfigError(f"config: unknown key(s) {extra} in [{key}]")
        elif key not in _TOP:
            raise ConfigError(f"config: unknown top-level key {key!r}")


def _typed(value, kind, where: str):
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, bool) or not isinstance(value, kind):
        raise ConfigError(f"config: {where} must be {kind.__name__}, got {value!r}")
    return value


def config_from_dict(d: dict) -> RunConfig:
    _check_keys(d)
    base = RunConfig()
    g = d.get("grid", {})
    grid = GridSpec(
        _typed(g.get("width", base.grid.width), float, "grid.width"),
        _typed(g.get("height", base.grid.height), float, "grid.height"),
        _typed(g.get("cells_x", base.grid.cells_x), int, "grid.cells_x"),
        _typed(g.get("cells_y", base.grid.cells_y), int, "grid.cells_y"),
        _typed(g.get("margin", base.grid.margin), float, "grid.margin"),
    )
    pr = d.get("params", {})
    bp = base.params
    params = ModelParams(
        *(_typed(pr.get(k, getattr(bp, k)), float, f"params.{k}") for k in ("epsilon", "beta", "gamma", "kappa", "r"))
    )
    lad = d.get("ladder", {})
    b = d.get("boundary", {})
    boundary = BoundarySpec(
        _typed(b.get("program", base.boundary.program), str, "boundary.program"),
        _typed(b.get("amplitude", base.boundary.amplitude), float, "boundary.amplitude"),
        _typed(b.get("axis", base.boundary.axis), int, "boundary.axis"),
    )
    seed = _typed(d.get("seed", base.seed), int, "seed")
    s = dict(d.get("solve", {}))
    if s.get("chain_max_len", None) == 0:
        s["chain_max_len"] = None
    solve_kw = {}
    for f in fields(SolveOptions):
        if f.name in s:
            kind = float if isinstance(getattr(base.solve, f.name), float) else int
            solve_kw[f.name] = s[f.name] if s[f.name] is None else _typed(s[f.name], kind, f"solve.{f.name}")
    solve = replace(base.solve, rng_seed=seed, **solve_kw)
    o = d.get("output", {})
    output = OutputSpec(
        _typed(o.get("directory", base.output.directory), str, "output.directory"),
        *(_typed(o.get(k, getattr(base.output, k)), bool, f"output.{k}") for k in ("trajectory", "report", "oracle_check")),
    )
    cfg = RunConfig(
        grid=grid,
        model=_typed(d.get("model", base.model), str, "model"),
        params=params,
        density=_typed(pr.get("density", base.density), str, "params.density"),
        ladder=tuple(_typed(e, float, "ladder.epsilons") for e in lad.get("epsilons", base.ladder)),
        sample_times=tuple(_typed(e, float, "ladder.sample_times") for e in lad.get("sample_times", base.sample_times)),
        partition_level=_typed(d.get("time", {}).get("partition_level", base.partition_level), int, "time.partition_level"),
        boundary=boundary,
        solve=solve,
        output=output,
        seed=seed,
        workers=_typed(d.get("workers", base.workers), int, "workers"),
        initial_crack=tuple(_typed(i, int, "initial_crack") for i in d.get("initial_crack", ())),
    )
    cfg.validate()
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
