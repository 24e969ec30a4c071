"""Full-order finite-difference solvers for the benchmark PDEs.

* ``burgers1d``: inviscid Burgers on [-3, 3], periodic, upwind flux differences,
  backward Euler with Newton.
* ``burgers2d``: viscous Burgers on [-3, 3]^2, zero Dirichlet boundary, backward
  differences for advection and central differences for diffusion, backward
  Euler with a sparse Newton solve.
* ``advection``: radial advection on [-1, 1]^2 with a divergence-free swirl,
  central differences and classical RK4.

Every problem exposes the same backward-Euler residual
r(u_n; u_{n-1}) = u_n - u_{n-1} - dt f(u_n), which the ROM error indicator uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError

BURGERS1D = "burgers1d"
BURGERS2D = "burgers2d"
ADVECTION = "advection"
KINDS = (BURGERS1D, BURGERS2D, ADVECTION)

DEFAULT_DOMAINS = {
    BURGERS1D: ((0.7, 0.9), (0.9, 1.1)),
    BURGERS2D: ((0.7, 0.9), (0.9, 1.1)),
    ADVECTION: ((1.5, 2.0), (2.0, 2.5)),
}
DEFAULT_BOUNDS = {
    BURGERS1D: ((-3.0,), (3.0,)),
    BURGERS2D: ((-3.0, -3.0), (3.0, 3.0)),
    ADVECTION: ((-1.0, -1.0), (1.0, 1.0)),
}


@dataclass(frozen=True)
class Grid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points: tuple[int, ...]

    def __post_init__(self):
        for name in ("lower", "upper"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "points", tuple(int(v) for v in self.points))
        if not (len(self.lower) == len(self.upper) == len(self.points)) or self.dim not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching bounds and point counts")
        if any(n < 3 for n in self.points):
            raise ValueError("need at least 3 points per axis")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("grid bounds must satisfy lower < upper")

    @property
    def dim(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.points))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.points))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.points)]

    def mesh(self):
        """Node coordinates; in 2D arrays of shape (ny, nx), x varying fastest."""
        axes = self.axes()
        if self.dim == 1:
            return axes[0]
        return np.meshgrid(axes[0], axes[1], indexing="xy")

    @classmethod
    def default(cls, kind: str, points) -> "Grid":
        lo, hi = DEFAULT_BOUNDS[kind]
        if isinstance(points, int):
            points = (points,) * len(lo)
        return cls(lo, hi, tuple(points))


@dataclass(frozen=True)
class TimeGrid:
    t_final: float
    n_t: int

    def __post_init__(self):
        if self.t_final <= 0 or self.n_t < 1:
            raise ValueError("need t_final > 0 and n_t >= 1")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_t

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_t + 1) * self.dt


@dataclass(frozen=True)
class FomProblem:
    kind: str = BURGERS1D
    reynolds: float = 10000.0
    newton_tol: float = 1e-10
    newton_maxiter: int = 20
    domain: tuple | None = None  # ((a_lo, a_hi), (b_lo, b_hi)); None -> kind default

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}; expected one of {KINDS}")
        if self.reynolds <= 0:
            raise ValueError("Reynolds number must be positive")
        if self.newton_tol <= 0 or self.newton_maxiter < 1:
            raise ValueError("Newton tolerance must be > 0 and max iterations >= 1")
        dom = DEFAULT_DOMAINS[self.kind] if self.domain is None else self.domain
        object.__setattr__(self, "domain", tuple(tuple(float(v) for v in ax) for ax in dom))

    @property
    def implicit(self) -> bool:
        return self.kind != ADVECTION

    def components(self) -> int:
        return 2 if self.kind == BURGERS2D else 1

    def n_dof(self, grid: Grid) -> int:
        return self.components() * grid.n_nodes


@dataclass
class Trajectory:
    mu: np.ndarray
    values: np.ndarray  # (N_t + 1, N_u)
    grid: Grid
    time: TimeGrid

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.time.n_t + 1:
            raise ValueError("trajectory row count does not match the time grid")


def check_param(problem: FomProblem, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (2,):
        raise DomainError(f"expected a 2-vector parameter, got shape {mu.shape}")
    for v, (lo, hi) in zip(mu, problem.domain):
        span = hi - lo
        if not (lo - 1e-9 * span <= v <= hi + 1e-9 * span):
            raise DomainError(f"parameter {tuple(mu)} lies outside the domain {problem.domain}")
    return mu


def _check_grid(problem: FomProblem, grid: Grid) -> None:
    want = 1 if problem.kind == BURGERS1D else 2
    if grid.dim != want:
        raise ValueError(f"{problem.kind} needs a {want}D grid")


def initial_condition(problem: FomProblem, mu, grid: Grid) -> np.ndarray:
    """Initial field u_0(x; mu) at the grid nodes (flattened, x fastest)."""
    a, w = check_param(problem, mu)
    _check_grid(problem, grid)
    if problem.kind == BURGERS1D:
        x = grid.mesh()
        return a * np.exp(-x ** 2 / (2.0 * w ** 2))
    X, Y = grid.mesh()
    if problem.kind == BURGERS2D:
        u = a * np.exp(-(X ** 2 + Y ** 2) / w ** 2)
    else:
        u = np.sin(a * X) * np.sin(w * Y)
    u = u * _interior_mask(grid.points)
    u = u.ravel()
    if problem.kind == BURGERS2D:
        return np.concatenate([u, u])
    return u


def _interior_mask(points) -> np.ndarray:
    nx, ny = points
    m = np.zeros((ny, nx))
    m[1:-1, 1:-1] = 1.0
    return m


# --- spatial operators -------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _operators_2d(points, spacing):
    """Backward, central first-difference and Laplacian matrices on interior rows."""
    nx, ny = points
    dx, dy = spacing
    ix = sp.identity(nx, format="csr")
    iy = sp.identity(ny, format="csr")
    bx = sp.diags([np.ones(nx), -np.ones(nx - 1)], [0, -1]) / dx
    by = sp.diags([np.ones(ny), -np.ones(ny - 1)], [0, -1]) / dy
    cx = sp.diags([np.ones(nx - 1), -np.ones(nx - 1)], [1, -1]) / (2 * dx)
    cy = sp.diags([np.ones(ny - 1), -np.ones(ny - 1)], [1, -1]) / (2 * dy)
    lx = sp.diags([np.ones(nx - 1), -2 * np.ones(nx), np.ones(nx - 1)], [-1, 0, 1]) / dx ** 2
    ly = sp.diags([np.ones(ny - 1), -2 * np.ones(ny), np.ones(ny - 1)], [-1, 0, 1]) / dy ** 2
    interior = sp.diags(_interior_mask(points).ravel())
    ops = {
        "bx": sp.kron(iy, bx), "by": sp.kron(by, ix),
        "cx": sp.kron(iy, cx), "cy": sp.kron(cy, ix),
        "lap": sp.kron(iy, lx) + sp.kron(ly, ix),
    }
    return {k: (interior @ v).tocsr() for k, v in ops.items()}, interior


@lru_cache(maxsize=16)
def _swirl(points, lower, upper):
    grid = Grid(lower, upper, points)
    X, Y = grid.mesh()
    d = (1 - X ** 2) ** 2 * (1 - Y ** 2) ** 2
    vx = 0.5 * np.pi * d * Y
    vy = -0.5 * np.pi * d * X
    return vx.ravel(), vy.ravel()


@lru_cache(maxsize=16)
def _advection_matrix(points, lower, upper):
    grid = Grid(lower, upper, points)
    ops, _ = _operators_2d(grid.points, grid.spacing)
    vx, vy = _swirl(points, lower, upper)
    return (-(sp.diags(vx) @ ops["cx"] + sp.diags(vy) @ ops["cy"])).tocsr()


def rhs(problem: FomProblem, u: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete spatial operator f(u); f(0) = 0 for every problem."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != problem.n_dof(grid):
        raise ValueError(f"field has length {u.shape[-1]}, expected {problem.n_dof(grid)}")
    if problem.kind == BURGERS1D:
        dx = grid.spacing[0]
        v = u[..., :-1]  # last node duplicates the first (periodic)
        flux = 0.5 * v ** 2
        f = -(flux - np.roll(flux, 1, axis=-1)) / dx
        return np.concatenate([f, f[..., :1]], axis=-1)
    if problem.kind == ADVECTION:
        A = _advection_matrix(grid.points, grid.lower, grid.upper)
        return (A @ u.T).T
    ops, _ = _operators_2d(grid.points, grid.spacing)
    n = grid.n_nodes
    U, V = u[..., :n], u[..., n:]
    nu = 1.0 / problem.reynolds

    def apply(name, x):
        return (ops[name] @ x.T).T

    fu = -(U * apply("bx", U) + V * apply("by", U)) + nu * apply("lap", U)
    fv = -(U * apply("bx", V) + V * apply("by", V)) + nu * apply("lap", V)
    return np.concatenate([fu, fv], axis=-1)


def rhs_jacobian(problem: FomProblem, u: np.ndarray, grid: Grid) -> sp.csr_matrix:
    """Sparse Jacobian of :func:`rhs` at u (single field)."""
    if problem.kind == BURGERS1D:
        m = grid.points[0] - 1
        dx = grid.spacing[0]
        v = u[:m]
        rows = np.concatenate([np.arange(m), np.arange(m)])
        cols = np.concatenate([np.arange(m), (np.arange(m) - 1) % m])
        vals = np.concatenate([-v / dx, v[(np.arange(m) - 1) % m] / dx])
        J = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
        # duplicate node copies row 0 and is decoupled from its own value
        J = sp.vstack([J, J[0:1]])
        return sp.hstack([J, sp.csr_matrix((m + 1, 1))]).tocsr()
    if problem.kind == ADVECTION:
        return _advection_matrix(grid.points, grid.lower, grid.upper)
    ops, _ = _operators_2d(grid.points, grid.spacing)
    n = grid.n_nodes
    U, V = u[:n], u[n:]
    nu = 1.0 / problem.reynolds
    bx, by, lap = ops["bx"], ops["by"], ops["lap"]
    D = sp.diags
    Juu = -(D(bx @ U) + D(U) @ bx + D(V) @ by) + nu * lap
    Juv = -D(by @ U)
    Jvu = -D(bx @ V)
    Jvv = -(D(U) @ bx + D(by @ V) + D(V) @ by) + nu * lap
    return sp.bmat([[Juu, Juv], [Jvu, Jvv]], format="csr")


def residual_step(problem: FomProblem, u_n, u_prev, dt: float, grid: Grid) -> np.ndarray:
    """Backward-Euler residual u_n - u_prev - dt f(u_n); rows broadcast."""
    u_n = np.asarray(u_n, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    if u_n.shape != u_prev.shape:
        raise ValueError(f"shape mismatch: {u_n.shape} vs {u_prev.shape}")
    return u_n - u_prev - dt * rhs(problem, u_n, grid)


# --- time integration --------------------------------------------------------------------------

def _newton_step(problem, u_prev, dt, grid, step):
    u = u_prev.copy()
    eye = sp.identity(u.size, format="csr")
    for _ in range(problem.newton_maxiter + 1):
        r = residual_step(problem, u, u_prev, dt, grid)
        if np.linalg.norm(r) <= problem.newton_tol:
            return u
        J = eye - dt * rhs_jacobian(problem, u, grid)
        u = u - spla.spsolve(J.tocsc(), r)
        if not np.all(np.isfinite(u)):
            break
    raise SolverError(f"{problem.kind}: Newton did not converge at time step {step} "
                      f"(max {problem.newton_maxiter} iterations, tol {problem.newton_tol:g})")


def _rk4_step(problem, u, dt, grid):
    k1 = rhs(problem, u, grid)
    k2 = rhs(problem, u + 0.5 * dt * k1, grid)
    k3 = rhs(problem, u + 0.5 * dt * k2, grid)
    k4 = rhs(problem, u + dt * k3, grid)
    return u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve(problem: FomProblem, mu, grid: Grid, time: TimeGrid, u0=None) -> Trajectory:
    """Integrate the full-order model over ``time``; ``u0`` overrides the initial condition."""
    mu = check_param(problem, mu)
    _check_grid(problem, grid)
    if u0 is None:
        u0 = initial_condition(problem, mu, grid)
    u = np.asarray(u0, dtype=float).copy()
    if u.shape != (problem.n_dof(grid),):
        raise ValueError("initial field has the wrong length")
    out = np.empty((time.n_t + 1, u.size))
    out[0] = u
    dt = time.dt
    for n in range(1, time.n_t + 1):
        if problem.implicit:
            u = _newton_step(problem, u, dt, grid, n)
        else:
            u = _rk4_step(problem, u, dt, grid)
        if not np.all(np.isfinite(u)):
            raise SolverError(f"{problem.kind}: non-finite state at time step {n}")
        out[n] = u
    return Trajectory(mu=mu, values=out, grid=grid, time=time)
