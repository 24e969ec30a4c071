"""Latent dynamics identification: polynomial library, test functions, residuals.

The latent ODE is dz/dt = Theta(z) @ Xi with Theta a polynomial feature row.
Strong-form residuals compare pointwise derivatives; weak-form residuals
compare integrals against compactly supported polynomial test functions, with
the time derivative moved onto the test function.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from . import net

TYPE_I = "weakTypeI"
TYPE_II = "weakTypeII"
STRONG = "strong"
MODES = (STRONG, TYPE_I, TYPE_II)


@dataclass(frozen=True)
class LibrarySpec:
    degree: int = 1
    constant: bool = True

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"library degree must be 1 or 2, got {self.degree}")

    def n_features(self, n_z: int) -> int:
        n = n_z + (1 if self.constant else 0)
        if self.degree == 2:
            n += n_z * (n_z + 1) // 2
        return n

    def quadratic_pairs(self, n_z: int) -> list[tuple[int, int]]:
        if self.degree < 2:
            return []
        return list(combinations_with_replacement(range(n_z), 2))


def build_library(z: np.ndarray, spec: LibrarySpec = LibrarySpec()) -> np.ndarray:
    """Feature row(s): constant, linear terms, then quadratics in lexicographic order."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    cols = []
    if spec.constant:
        cols.append(np.ones((z2.shape[0], 1)))
    cols.append(z2)
    pairs = spec.quadratic_pairs(z2.shape[1])
    if pairs:
        a, b = np.array(pairs).T
        cols.append(z2[:, a] * z2[:, b])
    theta = np.hstack(cols)
    return theta[0] if single else theta


def library_vjp(z: np.ndarray, g_theta: np.ndarray, spec: LibrarySpec) -> np.ndarray:
    """Pull a cotangent on Theta(z) (rows) back to z (rows)."""
    z = np.atleast_2d(z)
    g_theta = np.atleast_2d(g_theta)
    n_z = z.shape[1]
    off = 1 if spec.constant else 0
    gz = g_theta[:, off:off + n_z].copy()
    pairs = spec.quadratic_pairs(n_z)
    if pairs:
        a, b = np.array(pairs).T
        gq = g_theta[:, off + n_z:]
        for j in range(n_z):
            # d(z_a z_b)/dz_j = [a==j] z_b + [b==j] z_a
            gz[:, j] += (gq * ((a == j) * z[:, b] + (b == j) * z[:, a])).sum(axis=1)
    return gz


def latent_rhs(z: np.ndarray, coeffs: np.ndarray, spec: LibrarySpec) -> np.ndarray:
    return build_library(z, spec) @ coeffs


@dataclass
class TestFunctionSet:
    """Test functions sampled on a uniform time grid.

    ``phi`` and ``dphi`` hold samples (K x (N_t+1)), zero outside each support;
    ``phi_w`` / ``dphi_w`` fold in the trapezoid weights so that a weak integral
    of row-stacked samples is a single matrix product.
    """

    __test__ = False  # not a pytest class

    starts: np.ndarray
    stops: np.ndarray
    p: int
    q: int
    dt: float
    phi: np.ndarray
    dphi: np.ndarray
    phi_w: np.ndarray
    dphi_w: np.ndarray
    norms: np.ndarray

    def __len__(self):
        return len(self.starts)

    @property
    def centers(self) -> np.ndarray:
        return (self.starts + self.stops) // 2


def _trapezoid_weights(n_a: int, n_b: int, n_points: int, dt: float) -> np.ndarray:
    w = np.zeros(n_points)
    w[n_a:n_b + 1] = dt
    w[n_a] = w[n_b] = 0.5 * dt
    return w


def build_test_functions(n_t: int, dt: float, support_steps: int | None = None,
                         stride: int | None = None, p: int = 4, q: int = 4) -> TestFunctionSet:
    """Piecewise-polynomial bumps (t - t_a)^p (t_b - t)^q sliding over the grid.

    Windows start at 0, stride, 2*stride, ... and span ``support_steps`` steps.
    Each bump is scaled to unit L2 norm under the trapezoid rule.
    """
    if support_steps is None:
        support_steps = max(8, n_t // 10)
    if stride is None:
        stride = max(1, support_steps // 2)
    if support_steps < 4:
        raise ValueError("support_steps must be >= 4")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if p < 2 or q < 2:
        raise ValueError("test-function exponents p, q must be >= 2")
    if support_steps > n_t:
        raise ValueError(f"test-function support ({support_steps} steps) exceeds the "
                         f"trajectory length ({n_t} steps)")
    starts = np.arange(0, n_t - support_steps + 1, stride)
    stops = starts + support_steps
    n_points = n_t + 1
    K = len(starts)
    phi = np.zeros((K, n_points))
    dphi = np.zeros((K, n_points))
    phi_w = np.zeros((K, n_points))
    dphi_w = np.zeros((K, n_points))
    norms = np.zeros(K)
    # local time s in [0, L] on the support
    L = support_steps * dt
    s = np.arange(support_steps + 1) * dt
    shape = s ** p * (L - s) ** q
    dshape = p * s ** (p - 1) * (L - s) ** q - q * s ** p * (L - s) ** (q - 1)
    for k, (a, b) in enumerate(zip(starts, stops)):
        w = _trapezoid_weights(a, b, n_points, dt)
        norm = np.sqrt(np.sum(w[a:b + 1] * shape ** 2))
        phi[k, a:b + 1] = shape / norm
        dphi[k, a:b + 1] = dshape / norm
        phi_w[k] = w * phi[k]
        dphi_w[k] = w * dphi[k]
        norms[k] = norm
    return TestFunctionSet(starts=starts, stops=stops, p=p, q=q, dt=dt, phi=phi, dphi=dphi,
                           phi_w=phi_w, dphi_w=dphi_w, norms=norms)


def weak_integral(values: np.ndarray, testfns: TestFunctionSet,
                  use_derivative: bool = False) -> np.ndarray:
    """Trapezoid approximation of int values(t) phi_k(t) dt for every k.

    ``values`` has one row per time step; the result has one row per test function.
    """
    W = testfns.dphi_w if use_derivative else testfns.phi_w
    return W @ np.asarray(values, dtype=float)


def central_difference(values: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative along axis 0, one-sided at both ends."""
    values = np.asarray(values, dtype=float)
    return np.gradient(values, dt, axis=0, edge_order=2)


def weak_residual_terms(U, encoder, decoder, coeffs, testfns, variant,
                        library: LibrarySpec = LibrarySpec()):
    """Per-test-function residuals of the latent and full-state weak equations.

    Returns ``(r_z, r_u)`` with shapes (K, N_z) and (K, N_u):

    * r_z = lhs - int Theta(z) Xi phi, where lhs is
      -J_e(u_c) int u phi' (Type-I) or -int z phi' (Type-II);
    * r_u = -int u phi' - model, where model is
      J_d(z_c) int Theta(z) Xi phi (Type-I) or -int u_hat phi' (Type-II).

    u_c / z_c are the snapshot and its code at each window centre.
    """
    if variant not in (TYPE_I, TYPE_II):
        raise ValueError(f"unknown weak variant {variant!r}")
    U = np.asarray(U, dtype=float)
    Z, _ = net.forward(encoder, U)
    if coeffs.shape != (library.n_features(Z.shape[1]), Z.shape[1]):
        raise ValueError(f"coefficient shape {coeffs.shape} does not match library/latent size")
    rhs = weak_integral(build_library(Z, library), testfns) @ coeffs
    data = -weak_integral(U, testfns, use_derivative=True)
    c = testfns.centers
    if variant == TYPE_I:
        _, lhs, _ = net.forward_tangent(encoder, U[c], data)
        _, model, _ = net.forward_tangent(decoder, Z[c], rhs)
    else:
        lhs = -weak_integral(Z, testfns, use_derivative=True)
        U_hat, _ = net.forward(decoder, Z)
        model = -weak_integral(U_hat, testfns, use_derivative=True)
    return lhs - rhs, data - model


def strong_residual_terms(U, encoder, decoder, coeffs, udot,
                          library: LibrarySpec = LibrarySpec()):
    """Per-snapshot residuals (J_e(u_n) udot_n - Theta(z_n) Xi, udot_n - J_d(z_n) Theta(z_n) Xi)."""
    U = np.asarray(U, dtype=float)
    udot = np.asarray(udot, dtype=float)
    if udot.shape != U.shape:
        raise ValueError("udot must have the same shape as U")
    Z, zdot, _ = net.forward_tangent(encoder, U, udot)
    F = build_library(Z, library) @ coeffs
    _, udot_hat, _ = net.forward_tangent(decoder, Z, F)
    return zdot - F, udot - udot_hat
