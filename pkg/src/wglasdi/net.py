"""Dense ReLU networks with forward-mode tangents and exact reverse-mode gradients.

Every derivative the training losses need is either a plain forward pass or a
Jacobian-vector product of a piecewise-linear network.  Both are handled by
:func:`forward_tangent`, and :func:`backward_tangent` pulls cotangents on the
primal output *and* on the tangent output back to the weights.  Activation
masks are frozen per forward pass, so the pulled-back gradient is exact almost
everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NetSpec:
    """Layer widths, input first.  Hidden layers use ReLU, the output is linear."""

    widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if len(widths) < 2:
            raise ValueError("a network needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"all widths must be >= 1, got {widths}")
        object.__setattr__(self, "widths", widths)

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    def mirrored(self) -> "NetSpec":
        return NetSpec(tuple(reversed(self.widths)))


@dataclass
class NetParams:
    weights: list[np.ndarray]  # layer l: (widths[l+1], widths[l])
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "NetParams":
        arrays = list(arrays)
        return cls(weights=arrays[0::2], biases=arrays[1::2])

    def copy(self) -> "NetParams":
        return NetParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "NetParams":
        return NetParams([np.zeros_like(W) for W in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    @property
    def spec(self) -> NetSpec:
        return NetSpec((self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights))


def init_params(spec: NetSpec, rng: np.random.Generator, final_scale: float = 0.1) -> NetParams:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases; last layer scaled down."""
    weights, biases = [], []
    for l in range(spec.n_layers):
        fan_in, fan_out = spec.widths[l], spec.widths[l + 1]
        bound = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        if l == spec.n_layers - 1:
            W *= final_scale
        weights.append(W)
        biases.append(np.zeros(fan_out))
    return NetParams(weights, biases)


def _check_input(params: NetParams, x: np.ndarray) -> None:
    n_in = params.weights[0].shape[1]
    if x.shape[-1] != n_in:
        raise ValueError(f"input has width {x.shape[-1]}, network expects {n_in}")


def forward(params: NetParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network on a vector or a batch of row vectors.

    Returns the output and the boolean activation mask of every hidden layer.
    """
    x = np.asarray(x, dtype=float)
    _check_input(params, x)
    masks = []
    a = x
    n = len(params.weights)
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = a @ W.T + b
        if l < n - 1:
            m = h > 0.0  # subgradient 0 at the kink
            masks.append(m)
            a = np.where(m, h, 0.0)
        else:
            a = h
    return a, masks


def input_jacobian(params: NetParams, x: np.ndarray) -> np.ndarray:
    """Exact Jacobian d(output)/d(input) at a single point x."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("input_jacobian takes a single input vector")
    _, masks = forward(params, x)
    J = params.weights[0]
    for m, W in zip(masks, params.weights[1:]):
        J = W @ (m[:, None] * J)
    return J.copy()


@dataclass
class TangentCache:
    inputs: list[np.ndarray] = field(default_factory=list)    # layer inputs, primal
    tangents: list[np.ndarray] = field(default_factory=list)  # layer inputs, tangent
    masks: list[np.ndarray] = field(default_factory=list)


def forward_tangent(params: NetParams, x: np.ndarray, v: np.ndarray | None = None):
    """Forward pass that also pushes the tangent ``v`` through the network.

    With x and v both of shape (batch, n_in) the tangent output row b is
    J(x_b) @ v_b.  Pass ``v=None`` for a plain forward pass that still records
    what :func:`backward_tangent` needs.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_input(params, x)
    if v is not None:
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if v.shape != x.shape:
            raise ValueError(f"tangent shape {v.shape} does not match input shape {x.shape}")
    cache = TangentCache()
    a, da = x, v
    n = len(params.weights)
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(a)
        cache.tangents.append(da)
        h = a @ W.T + b
        dh = None if da is None else da @ W.T
        if l < n - 1:
            m = h > 0.0
            cache.masks.append(m)
            a = np.where(m, h, 0.0)
            da = None if dh is None else np.where(m, dh, 0.0)
        else:
            a, da = h, dh
    return a, da, cache


def backward_tangent(params: NetParams, cache: TangentCache,
                     g_out: np.ndarray | None, g_tan: np.ndarray | None = None,
                     need_input_grad: bool = True):
    """Reverse pass for :func:`forward_tangent`.

    ``g_out`` and ``g_tan`` are cotangents of the primal and tangent outputs
    (either may be None).  Returns (parameter gradients, input gradient,
    tangent-input gradient).  Masks are constants, so the tangent path never
    feeds back into the primal input.
    """
    grads = params.zeros_like()
    n = len(params.weights)
    g, gt = g_out, g_tan
    for l in range(n - 1, -1, -1):
        W = params.weights[l]
        if l < n - 1:
            m = cache.masks[l]
            g = None if g is None else np.where(m, g, 0.0)
            gt = None if gt is None else np.where(m, gt, 0.0)
        if g is not None:
            grads.weights[l] += g.T @ cache.inputs[l]
            grads.biases[l] += g.sum(axis=0)
        if gt is not None and cache.tangents[l] is not None:
            grads.weights[l] += gt.T @ cache.tangents[l]
        if l > 0 or need_input_grad:
            g = None if g is None else g @ W
            gt = None if gt is None else gt @ W
    if not need_input_grad:
        return grads, None, None
    return grads, g, gt


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def register(self, arrays) -> None:
        """Add zero moments for newly trainable arrays (appended at the end)."""
        for a in arrays:
            self.m.append(np.zeros_like(a))
            self.v.append(np.zeros_like(a))


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> None:
    """In-place Adam update of ``params``; moment lists must mirror ``params``."""
    if len(state.m) != len(params):
        raise ValueError("Adam state does not mirror the parameter list")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
