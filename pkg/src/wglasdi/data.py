"""Noise injection, dataset assembly over a parameter grid, and persistence.

Dataset files are ``WGLD`` binaries (little-endian header, then the clean and
noisy float64 payloads in row-major order) with a JSON sidecar next to them.
Model checkpoints use a ``WGLM`` container: a JSON header followed by raw
float64 arrays listed in the header manifest.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import fom
from .errors import DomainError, FormatError

DATASET_MAGIC = b"WGLD"
MODEL_MAGIC = b"WGLM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIII")
_MODEL_HEADER = struct.Struct("<4sHI")


@dataclass(frozen=True)
class ParamSpace:
    """Rectangular parameter grid; flat indices run row-major over (axis 0, axis 1)."""

    lower: tuple[float, float]
    upper: tuple[float, float]
    resolution: tuple[int, int]
    names: tuple[str, str] = ("a", "w")

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        object.__setattr__(self, "names", tuple(self.names))
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("parameter space needs lower < upper on every axis")
        if any(r < 2 for r in self.resolution):
            raise ValueError("parameter grid resolution must be >= 2 per axis")

    @property
    def size(self) -> int:
        return self.resolution[0] * self.resolution[1]

    def axis_values(self, axis: int) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.resolution[axis])

    def point(self, index: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise IndexError(f"grid index {index} outside 0..{self.size - 1}")
        i, j = divmod(int(index), self.resolution[1])
        return np.array([self.axis_values(0)[i], self.axis_values(1)[j]])

    def points(self, indices=None) -> np.ndarray:
        if indices is None:
            indices = range(self.size)
        return np.array([self.point(i) for i in indices]).reshape(-1, 2)

    def corners(self) -> list[int]:
        r0, r1 = self.resolution
        return [0, r1 - 1, (r0 - 1) * r1, r0 * r1 - 1]

    def uniform_indices(self, per_axis: int) -> list[int]:
        """Indices of a per_axis x per_axis sub-grid that includes the corners."""
        ii = np.round(np.linspace(0, self.resolution[0] - 1, per_axis)).astype(int)
        jj = np.round(np.linspace(0, self.resolution[1] - 1, per_axis)).astype(int)
        return [int(i * self.resolution[1] + j) for i in ii for j in jj]

    @property
    def scales(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper),
                "resolution": list(self.resolution), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamSpace":
        return cls(tuple(d["lower"]), tuple(d["upper"]), tuple(d["resolution"]),
                   tuple(d.get("names", ("a", "w"))))


def noise_sigma(values: np.ndarray, level: float) -> float:
    return float(level * np.sqrt(np.mean(np.square(values))))


def add_noise(traj: fom.Trajectory, level: float, seed: int) -> fom.Trajectory:
    """Additive Gaussian noise with std = level * RMS over all trajectory entries."""
    if level < 0:
        raise DomainError(f"noise level must be >= 0, got {level}")
    sigma = noise_sigma(traj.values, level)
    noise = np.random.default_rng(seed).standard_normal(traj.values.shape)
    return fom.Trajectory(mu=traj.mu.copy(), values=traj.values + sigma * noise,
                          grid=traj.grid, time=traj.time)


def entry_seed(global_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(global_seed), int(index)]).generate_state(1)[0])


@dataclass
class DatasetEntry:
    index: int
    mu: np.ndarray
    clean: np.ndarray
    noisy: np.ndarray
    seed: int


@dataclass
class Dataset:
    problem: fom.FomProblem
    grid: fom.Grid
    time: fom.TimeGrid
    noise_level: float
    seed: int
    space: ParamSpace | None = None
    entries: list[DatasetEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.entries]

    @property
    def mus(self) -> np.ndarray:
        return np.array([e.mu for e in self.entries]).reshape(-1, 2)

    def clean_trajectory(self, i: int) -> fom.Trajectory:
        e = self.entries[i]
        return fom.Trajectory(e.mu, e.clean, self.grid, self.time)

    def noisy_trajectory(self, i: int) -> fom.Trajectory:
        e = self.entries[i]
        return fom.Trajectory(e.mu, e.noisy, self.grid, self.time)


@dataclass
class DataSource:
    """Everything needed to produce (clean, noisy) snapshots for a grid index."""

    problem: fom.FomProblem
    grid: fom.Grid
    time: fom.TimeGrid
    space: ParamSpace
    noise_level: float = 0.1
    seed: int = 0

    def make_entry(self, index: int) -> DatasetEntry:
        mu = self.space.point(index)
        clean = fom.solve(self.problem, mu, self.grid, self.time)
        s = entry_seed(self.seed, index)
        noisy = add_noise(clean, self.noise_level, s)
        return DatasetEntry(index=int(index), mu=mu, clean=clean.values, noisy=noisy.values, seed=s)

    def empty_dataset(self) -> Dataset:
        return Dataset(self.problem, self.grid, self.time, self.noise_level, self.seed, self.space)


def assemble(source: DataSource, indices) -> Dataset:
    """Solve and noise every listed grid index; duplicates are rejected."""
    indices = [int(i) for i in indices]
    if len(set(indices)) != len(indices):
        raise ValueError(f"duplicate grid indices in {indices}")
    ds = source.empty_dataset()
    for i in indices:
        ds.entries.append(source.make_entry(i))
    return ds


# --- persistence -------------------------------------------------------------------------------

def _problem_dict(p: fom.FomProblem) -> dict:
    d = asdict(p)
    d["domain"] = [list(ax) for ax in p.domain]
    return d


def _problem_from(d: dict) -> fom.FomProblem:
    d = dict(d)
    d["domain"] = tuple(tuple(ax) for ax in d["domain"])
    return fom.FomProblem(**d)


def _grid_dict(g: fom.Grid) -> dict:
    return {"lower": list(g.lower), "upper": list(g.upper), "points": list(g.points)}


def _time_dict(t: fom.TimeGrid) -> dict:
    return {"t_final": t.t_final, "n_t": t.n_t}


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    n_u = ds.problem.n_dof(ds.grid)
    header = _HEADER.pack(DATASET_MAGIC, FORMAT_VERSION, len(ds), ds.time.n_t + 1, n_u)
    clean = np.array([e.clean for e in ds.entries], dtype="<f8").reshape(-1)
    noisy = np.array([e.noisy for e in ds.entries], dtype="<f8").reshape(-1)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(clean.tobytes())
        fh.write(noisy.tobytes())
    meta = {
        "format": "WGLD",
        "version": FORMAT_VERSION,
        "problem": _problem_dict(ds.problem),
        "grid": _grid_dict(ds.grid),
        "time": _time_dict(ds.time),
        "noise_level": ds.noise_level,
        "seed": ds.seed,
        "space": None if ds.space is None else ds.space.to_dict(),
        "entries": [{"index": e.index, "mu": [float(v) for v in e.mu], "seed": e.seed}
                    for e in ds.entries],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_mu, n_rows, n_u = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {DATASET_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported dataset version {version}")
    count = n_mu * n_rows * n_u
    if len(raw) != _HEADER.size + 16 * count:
        raise FormatError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, "
                          f"expected {16 * count}")
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    clean = payload[:count].reshape(n_mu, n_rows, n_u)
    noisy = payload[count:].reshape(n_mu, n_rows, n_u)
    try:
        meta = json.loads(sidecar_path(path).read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: missing metadata sidecar") from exc
    if meta.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: sidecar version {meta.get('version')} != {FORMAT_VERSION}")
    if len(meta["entries"]) != n_mu:
        raise FormatError(f"{path}: sidecar lists {len(meta['entries'])} entries, file has {n_mu}")
    ds = Dataset(
        problem=_problem_from(meta["problem"]),
        grid=fom.Grid(**meta["grid"]),
        time=fom.TimeGrid(**meta["time"]),
        noise_level=meta["noise_level"],
        seed=meta["seed"],
        space=None if meta["space"] is None else ParamSpace.from_dict(meta["space"]),
    )
    for k, e in enumerate(meta["entries"]):
        ds.entries.append(DatasetEntry(e["index"], np.array(e["mu"]), clean[k].copy(),
                                       noisy[k].copy(), e["seed"]))
    return ds


def write_container(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write a WGLM container: header, JSON metadata with array manifest, raw arrays."""
    manifest, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.size
    meta = dict(meta, arrays=manifest)
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for c in chunks:
            fh.write(c)


def read_container(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n_json = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    start = _MODEL_HEADER.size + n_json
    try:
        meta = json.loads(raw[_MODEL_HEADER.size:start].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt metadata") from exc
    total = sum(int(np.prod(a["shape"])) for a in meta["arrays"])
    if len(raw) != start + 8 * total:
        raise FormatError(f"{path}: payload is {len(raw) - start} bytes, expected {8 * total}")
    payload = np.frombuffer(raw, dtype="<f8", offset=start).astype(float)
    arrays = {}
    for a in meta["arrays"]:
        n = int(np.prod(a["shape"]))
        arrays[a["name"]] = payload[a["offset"]:a["offset"] + n].reshape(a["shape"])
    return meta, arrays


def save_model(path, model, state=None) -> None:
    """Persist a RomModel, optionally with the trainer state needed to resume."""
    from .rom import model_to_container
    meta, arrays = model_to_container(model, state)
    write_container(path, meta, arrays)


def load_model(path):
    """Return (RomModel, TrainState or None)."""
    from .rom import model_from_container
    meta, arrays = read_container(path)
    return model_from_container(meta, arrays)
