"""Reduced-order inference, the residual error indicator, and evaluation metrics."""

from __future__ import annotations

import csv
import time as _time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fom, net
from . import latentdi as di
from .errors import FormatError, InstabilityError
from .interp import interp_coeffs

BLOWUP = 1e6


@dataclass
class RomModel:
    encoder: net.NetParams
    decoder: net.NetParams
    mus: np.ndarray                 # (n_train, 2)
    coeffs: list[np.ndarray]        # one (N_l, N_z) matrix per training point
    library: di.LibrarySpec
    problem: fom.FomProblem
    grid: fom.Grid
    time: fom.TimeGrid
    k: int = 4
    scales: np.ndarray | None = None
    indices: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.mus = np.asarray(self.mus, dtype=float).reshape(-1, 2)
        n_z = self.encoder.weights[-1].shape[0]
        if self.decoder.weights[0].shape[1] != n_z:
            raise ValueError("decoder input width must equal the latent dimension")
        want = (self.library.n_features(n_z), n_z)
        if any(c.shape != want for c in self.coeffs):
            raise ValueError(f"every coefficient matrix must have shape {want}")
        if len(self.coeffs) != len(self.mus):
            raise ValueError("one coefficient matrix per training parameter is required")

    @property
    def latent_dim(self) -> int:
        return self.encoder.weights[-1].shape[0]

    def coeffs_at(self, mu) -> np.ndarray:
        return interp_coeffs(mu, self.mus, self.coeffs, self.k, self.scales)

    def encode(self, u) -> np.ndarray:
        return net.forward(self.encoder, u)[0]

    def decode(self, z) -> np.ndarray:
        return net.forward(self.decoder, z)[0]


def rk4_latent(z0: np.ndarray, coeffs: np.ndarray, library: di.LibrarySpec, dt: float,
               n_t: int, label: str = "") -> np.ndarray:
    """Classical RK4 for dz/dt = Theta(z) @ coeffs; returns (n_t + 1, N_z)."""
    Z = np.empty((n_t + 1, z0.size))
    z = np.array(z0, dtype=float)
    Z[0] = z
    f = lambda y: di.latent_rhs(y, coeffs, library)
    for n in range(1, n_t + 1):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > BLOWUP:
            raise InstabilityError(f"latent trajectory blew up at step {n} for mu={label}")
        Z[n] = z
    return Z


def predict_latent(model: RomModel, mu, u0=None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if u0 is None:
        u0 = fom.initial_condition(model.problem, mu, model.grid)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (model.problem.n_dof(model.grid),):
        raise ValueError("initial field has the wrong length")
    z0 = model.encode(u0)
    xi = model.coeffs_at(mu)
    return rk4_latent(z0, xi, model.library, model.time.dt, model.time.n_t, label=str(tuple(mu)))


def predict(model: RomModel, mu, u0=None) -> fom.Trajectory:
    """Encode u0, integrate the interpolated latent ODE, decode every step."""
    Z = predict_latent(model, mu, u0)
    return fom.Trajectory(mu=np.asarray(mu, dtype=float), values=model.decode(Z),
                          grid=model.grid, time=model.time)


def indicator_steps(n_t: int, n_ts: int) -> np.ndarray:
    """n_ts step indices with uniform stride over [1, n_t], ending at n_t."""
    if not 1 <= n_ts <= n_t:
        raise ValueError(f"n_ts must lie in [1, {n_t}], got {n_ts}")
    stride = n_t // n_ts
    return n_t - stride * np.arange(n_ts)[::-1]


def residual_indicator(problem, grid, time, U_hat: np.ndarray, n_ts: int) -> float:
    steps = indicator_steps(time.n_t, n_ts)
    r = fom.residual_step(problem, U_hat[steps], U_hat[steps - 1], time.dt, grid)
    return float(np.mean(np.linalg.norm(r, axis=1)))


def error_indicator(model: RomModel, mu, n_ts: int = 50) -> float:
    """Mean backward-Euler residual norm of the ROM prediction over n_ts steps."""
    n_ts = min(n_ts, model.time.n_t)
    Z = predict_latent(model, mu)
    steps = indicator_steps(model.time.n_t, n_ts)
    rows = np.union1d(steps, steps - 1)
    U_hat = np.zeros((model.time.n_t + 1, model.problem.n_dof(model.grid)))
    U_hat[rows] = model.decode(Z[rows])
    return residual_indicator(model.problem, model.grid, model.time, U_hat, n_ts)


def max_relative_error(U_true, U_pred) -> float:
    """max_n ||u_n - u_hat_n|| / ||u_n||."""
    U_true = np.atleast_2d(np.asarray(U_true, dtype=float))
    U_pred = np.atleast_2d(np.asarray(U_pred, dtype=float))
    if U_true.shape != U_pred.shape:
        raise ValueError(f"shape mismatch: {U_true.shape} vs {U_pred.shape}")
    norms = np.linalg.norm(U_true, axis=1)
    if np.any(norms == 0):
        raise ZeroDivisionError("reference snapshot with zero norm")
    return float(np.max(np.linalg.norm(U_true - U_pred, axis=1) / norms))


def heatmap(model: RomModel, space, references) -> np.ndarray:
    """e_max at every point of ``space``; ``references[i]`` is the clean FOM solution
    at flat index i (a sequence or a callable index -> snapshot matrix)."""
    out = np.empty(space.resolution)
    if space.size == 0:
        return out
    get = references if callable(references) else references.__getitem__
    for i in range(space.size):
        mu = space.point(i)
        pred = predict(model, mu).values
        out[divmod(i, space.resolution[1])] = max_relative_error(get(i), pred)
    return out


def write_heatmap_csv(path, matrix: np.ndarray, space) -> None:
    """Header row: axis-1 name then axis-2 values; each row: axis-1 value then cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{space.names[0]}\\{space.names[1]}"] + [repr(float(v)) for v in space.axis_values(1)])
        for a, row in zip(space.axis_values(0), matrix):
            w.writerow([repr(float(a))] + [repr(float(v)) for v in row])


def read_heatmap_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    cols = np.array([float(v) for v in rows[0][1:]])
    index = np.array([float(r[0]) for r in rows[1:]])
    cells = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return index, cols, cells


def time_predictions(model: RomModel, problem, mus, repeats: int = 3):
    """Wall-clock seconds for FOM and ROM per parameter (best of ``repeats``)."""
    rows = []
    for mu in mus:
        t_fom = min(_timed(lambda: fom.solve(problem, mu, model.grid, model.time))
                    for _ in range(repeats))
        t_rom = min(_timed(lambda: predict(model, mu)) for _ in range(repeats))
        rows.append((tuple(float(v) for v in mu), t_fom, t_rom, t_fom / t_rom))
    return rows


def _timed(fn) -> float:
    t0 = _time.perf_counter()
    fn()
    return _time.perf_counter() - t0


# --- checkpoint (de)serialisation ---------------------------------------------------------------

def model_to_container(model: RomModel, state=None):
    from .data import _grid_dict, _problem_dict, _time_dict
    arrays = {}
    for tag, p in (("enc", model.encoder), ("dec", model.decoder)):
        for j, a in enumerate(p.arrays()):
            arrays[f"{tag}{j}"] = a
    arrays["mus"] = model.mus
    for i, c in enumerate(model.coeffs):
        arrays[f"xi{i}"] = c
    if model.scales is not None:
        arrays["scales"] = np.asarray(model.scales, dtype=float)
    meta = {
        "kind": "wglasdi-model",
        "n_enc": len(model.encoder.arrays()),
        "n_dec": len(model.decoder.arrays()),
        "n_train": len(model.coeffs),
        "library": asdict(model.library),
        "problem": _problem_dict(model.problem),
        "grid": _grid_dict(model.grid),
        "time": _time_dict(model.time),
        "k": model.k,
        "indices": [int(i) for i in model.indices],
        "state": None,
    }
    if state is not None:
        for j, (m, v) in enumerate(zip(state.adam.m, state.adam.v)):
            arrays[f"adam_m{j}"] = m
            arrays[f"adam_v{j}"] = v
        arrays["loss_history"] = np.array(state.loss_history, dtype=float).reshape(-1, 6)
        meta["state"] = {
            "epoch": state.epoch,
            "adam": {"lr": state.adam.lr, "beta1": state.adam.beta1, "beta2": state.adam.beta2,
                     "eps": state.adam.eps, "step": state.adam.step, "n": len(state.adam.m)},
            "trace": [asdict(ev) for ev in state.trace],
            "sampling_done": state.sampling_done,
        }
    return meta, arrays


def model_from_container(meta: dict, arrays: dict):
    from .data import _problem_from
    from .trainer import SampleEvent, TrainState
    if meta.get("kind") != "wglasdi-model":
        raise FormatError("container does not hold a model")
    enc = net.NetParams.from_arrays([arrays[f"enc{j}"] for j in range(meta["n_enc"])])
    dec = net.NetParams.from_arrays([arrays[f"dec{j}"] for j in range(meta["n_dec"])])
    coeffs = [arrays[f"xi{i}"] for i in range(meta["n_train"])]
    model = RomModel(
        encoder=enc, decoder=dec, mus=arrays["mus"], coeffs=coeffs,
        library=di.LibrarySpec(**meta["library"]), problem=_problem_from(meta["problem"]),
        grid=fom.Grid(**meta["grid"]), time=fom.TimeGrid(**meta["time"]), k=meta["k"],
        scales=arrays.get("scales"), indices=meta["indices"],
    )
    st = meta.get("state")
    if st is None:
        return model, None
    a = st["adam"]
    adam = net.AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"],
                         step=a["step"],
                         m=[arrays[f"adam_m{j}"] for j in range(a["n"])],
                         v=[arrays[f"adam_v{j}"] for j in range(a["n"])])
    history = [(int(r[0]),) + tuple(float(v) for v in r[1:]) for r in arrays["loss_history"]]
    trace = [SampleEvent(ev["event"], ev["epoch"], ev["index"], tuple(ev["mu"]), ev["indicator"])
             for ev in st["trace"]]
    state = TrainState(encoder=enc, decoder=dec, coeffs=coeffs, adam=adam, epoch=st["epoch"],
                       loss_history=history, trace=trace, sampling_done=st["sampling_done"])
    return model, state
