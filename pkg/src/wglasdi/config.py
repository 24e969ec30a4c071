"""Experiment configuration: JSON schema (version 1), validation, and presets."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import fom, net
from . import latentdi as di
from .data import DataSource, ParamSpace
from .errors import ConfigError
from .trainer import TrainConfig

SCHEMA_VERSION = 1


@dataclass
class ProblemConfig:
    kind: str = fom.BURGERS1D
    points: list[int] = field(default_factory=lambda: [201])
    t_final: float = 1.0
    n_t: int = 100
    reynolds: float = 10000.0
    newton_tol: float = 1e-10
    newton_maxiter: int = 20

    def problem(self) -> fom.FomProblem:
        return fom.FomProblem(self.kind, self.reynolds, self.newton_tol, self.newton_maxiter)

    def grid(self) -> fom.Grid:
        return fom.Grid.default(self.kind, tuple(self.points))

    def time(self) -> fom.TimeGrid:
        return fom.TimeGrid(self.t_final, self.n_t)


@dataclass
class SpaceConfig:
    lower: list[float] = field(default_factory=lambda: [0.7, 0.9])
    upper: list[float] = field(default_factory=lambda: [0.9, 1.1])
    resolution: list[int] = field(default_factory=lambda: [21, 21])
    names: list[str] = field(default_factory=lambda: ["a", "w"])

    def space(self) -> ParamSpace:
        return ParamSpace(tuple(self.lower), tuple(self.upper), tuple(self.resolution),
                          tuple(self.names))


@dataclass
class NetConfig:
    hidden: list[int] = field(default_factory=lambda: [100])
    latent_dim: int = 5


@dataclass
class LibraryConfig:
    degree: int = 1
    constant: bool = True


@dataclass
class EvalConfig:
    test_grid: dict | None = None  # SpaceConfig-shaped; None -> the full parameter grid
    timing_points: int = 3


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    space: SpaceConfig = field(default_factory=SpaceConfig)
    noise: float = 0.1
    seed: int = 0
    net: NetConfig = field(default_factory=NetConfig)
    library: LibraryConfig = field(default_factory=LibraryConfig)
    train: dict = field(default_factory=dict)  # TrainConfig fields except the seed
    initial: str | list[int] = "corners"
    evaluate: EvalConfig = field(default_factory=EvalConfig)
    version: int = SCHEMA_VERSION

    # --- derived objects ----------------------------------------------------------------------

    def fom_problem(self) -> fom.FomProblem:
        return self.problem.problem()

    def param_space(self) -> ParamSpace:
        return self.space.space()

    def source(self) -> DataSource:
        return DataSource(self.fom_problem(), self.problem.grid(), self.problem.time(),
                          self.param_space(), self.noise, self.seed)

    def encoder_spec(self) -> net.NetSpec:
        n_u = self.fom_problem().n_dof(self.problem.grid())
        return net.NetSpec((n_u, *self.net.hidden, self.net.latent_dim))

    def library_spec(self) -> di.LibrarySpec:
        return di.LibrarySpec(self.library.degree, self.library.constant)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train, seed=self.seed)

    def initial_indices(self) -> list[int]:
        space = self.param_space()
        if isinstance(self.initial, list):
            return [int(i) for i in self.initial]
        if self.initial == "corners":
            return space.corners()
        if self.initial.startswith("uniform:"):
            return space.uniform_indices(int(self.initial.split(":", 1)[1]))
        raise ConfigError(f"initial must be 'corners', 'uniform:N', or an index list, "
                          f"got {self.initial!r}")

    def test_space(self) -> ParamSpace:
        if self.evaluate.test_grid is None:
            return self.param_space()
        return _build(SpaceConfig, self.evaluate.test_grid, "evaluate.test_grid").space()

    def validate(self) -> "ExperimentConfig":
        if self.version != SCHEMA_VERSION:
            raise ConfigError(f"config version {self.version} is not supported "
                              f"(expected {SCHEMA_VERSION})")
        if self.noise < 0:
            raise ConfigError("noise level must be >= 0")
        try:
            self.fom_problem()
            grid = self.problem.grid()
            self.problem.time()
            space = self.param_space()
            self.encoder_spec()
            self.library_spec()
            tc = self.train_config()
            self.test_space()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if grid.dim != (1 if self.problem.kind == fom.BURGERS1D else 2):
            raise ConfigError(f"{self.problem.kind} needs {1 if grid.dim == 2 else 2} grid axes")
        dom = self.fom_problem().domain
        for ax in range(2):
            if space.lower[ax] < dom[ax][0] - 1e-12 or space.upper[ax] > dom[ax][1] + 1e-12:
                raise ConfigError(f"parameter space axis {ax} exceeds the problem domain {dom[ax]}")
        init = self.initial_indices()
        if any(not 0 <= i < space.size for i in init) or len(set(init)) != len(init):
            raise ConfigError(f"invalid initial indices {init}")
        if tc.budget is not None and tc.budget < len(init):
            raise ConfigError("sample budget is smaller than the initial sample count")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {"problem": ProblemConfig, "space": SpaceConfig, "net": NetConfig,
           "library": LibraryConfig, "evaluate": EvalConfig}


def from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config; unknown keys anywhere are rejected."""
    data = copy.deepcopy(data)
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    for key, cls in _NESTED.items():
        if key in data:
            data[key] = _build(cls, data[key], key)
    train = data.get("train", {})
    if not isinstance(train, dict):
        raise ConfigError("train: expected an object")
    allowed = {f.name for f in fields(TrainConfig)} - {"seed"}
    unknown = set(train) - allowed
    if unknown:
        raise ConfigError(f"train: unknown keys {sorted(unknown)}")
    return ExperimentConfig(**data).validate()


def load(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return from_dict(data)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_B1D_SPACE = {"lower": [0.7, 0.9], "upper": [0.9, 1.1], "names": ["a", "w"]}
_ADV_SPACE = {"lower": [1.5, 2.0], "upper": [2.0, 2.5], "names": ["w1", "w2"]}

PRESETS: dict[str, dict] = {
    # full-scale settings reported for each benchmark
    "burgers1d-full": {
        "problem": {"kind": "burgers1d", "points": [1001], "t_final": 1.0, "n_t": 1000},
        "space": dict(_B1D_SPACE, resolution=[21, 21]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 5},
        "library": {"degree": 1},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-5,
                  "epochs": 20000, "k": 4},
        "initial": "uniform:4",
    },
    "burgers2d-full": {
        "problem": {"kind": "burgers2d", "points": [60, 60], "t_final": 1.0, "n_t": 200,
                    "reynolds": 10000.0},
        "space": dict(_B1D_SPACE, resolution=[21, 21]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 5},
        "library": {"degree": 2},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-5,
                  "epochs": 100000, "k": 4},
        "initial": "uniform:5",
    },
    "burgers2d-full-glasdi": {
        "problem": {"kind": "burgers2d", "points": [60, 60], "t_final": 1.0, "n_t": 200,
                    "reynolds": 10000.0},
        "space": dict(_B1D_SPACE, resolution=[21, 21]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 5},
        "library": {"degree": 2},
        "train": {"mode": "strong", "beta1": 0.0, "beta2": 1.0, "beta3": 0.0,
                  "epochs": 100000, "k": 4},
        "initial": "uniform:5",
    },
    "advection-full": {
        "problem": {"kind": "advection", "points": [96, 96], "t_final": 3.0, "n_t": 300},
        "space": dict(_ADV_SPACE, resolution=[21, 21]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 3},
        "library": {"degree": 1},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-4,
                  "epochs": 100000, "k": 4},
        "initial": "uniform:4",
    },
    # desk-scale settings: minutes on one CPU core
    "burgers1d-desk": {
        "problem": {"kind": "burgers1d", "points": [201], "t_final": 1.0, "n_t": 100},
        "space": dict(_B1D_SPACE, resolution=[9, 9]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 5},
        "library": {"degree": 1},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-5,
                  "epochs": 6000, "k": 4, "n_up": 600, "budget": 9,
                  "support_steps": 40, "stride": 5},
        "initial": "corners",
        "evaluate": {"test_grid": {"lower": [0.75, 0.95], "upper": [0.85, 1.05],
                                   "resolution": [3, 3], "names": ["a", "w"]}},
    },
    "burgers2d-desk": {
        "problem": {"kind": "burgers2d", "points": [24, 24], "t_final": 1.0, "n_t": 50,
                    "reynolds": 10000.0},
        "space": dict(_B1D_SPACE, resolution=[5, 5]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 5},
        "library": {"degree": 2},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-5,
                  "epochs": 3000, "k": 4, "n_up": 500, "budget": 6,
                  "support_steps": 20, "stride": 5},
        "initial": "corners",
    },
    "advection-desk": {
        "problem": {"kind": "advection", "points": [32, 32], "t_final": 3.0, "n_t": 150},
        "space": dict(_ADV_SPACE, resolution=[5, 5]),
        "noise": 0.1,
        "net": {"hidden": [100], "latent_dim": 3},
        "library": {"degree": 1},
        "train": {"mode": "weakTypeI", "beta1": 1.0, "beta2": 1.0, "beta3": 1e-4,
                  "epochs": 3000, "k": 4, "n_up": 500, "budget": 6,
                  "support_steps": 40, "stride": 10},
        "initial": "corners",
    },
}


def preset(name: str, overrides: dict | None = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    data = PRESETS[name]
    if overrides:
        data = merge(data, overrides)
    return from_dict(data)
