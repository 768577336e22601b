"""Dense MLP parameters, initialization, forward passes and the Adam optimizer.

The same parameter container backs every network in the package: the operator
MLPs (ReLU/Tanh/Mish hidden activations) and the sinusoidal basis networks of
the function encoder (Sine activation). Hidden layers are activated, the
output layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tape as tp
from .errors import ConfigError, ShapeError, TrainingError

Array = np.ndarray

ACTIVATIONS = ("relu", "tanh", "mish", "sine")

_TAPE_ACT = {"relu": tp.relu, "tanh": tp.tanh, "mish": tp.mish, "sine": tp.sin}


def activation_eval(kind: str, x: float) -> float:
    """Evaluate one activation at a scalar."""
    if kind not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {kind!r}")
    x = np.float64(x)
    if kind == "relu":
        return float(max(x, 0.0))
    if kind == "tanh":
        return float(np.tanh(x))
    if kind == "sine":
        return float(np.sin(x))
    return float(tp._mish(np.asarray(x)))


def activation_derivative(kind: str, x: float) -> float:
    """Derivative paired with ``activation_eval`` (used for tape recording)."""
    if kind not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {kind!r}")
    x = np.float64(x)
    if kind == "relu":
        return 1.0 if x > 0 else 0.0
    if kind == "tanh":
        t = np.tanh(x)
        return float(1.0 - t * t)
    if kind == "sine":
        return float(np.cos(x))
    return float(tp._mish_grad(np.asarray(x)))


@dataclass
class MlpParams:
    """Weights/biases of a dense MLP; weight l maps layer l to l+1 as x @ W + b."""

    layer_sizes: tuple
    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        if len(sizes) < 2 or any(n < 1 for n in sizes):
            raise ConfigError(f"layer_sizes must hold >=2 positive ints, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        self.layer_sizes = sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("number of weight/bias arrays must be len(layer_sizes)-1")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                raise ShapeError(
                    f"layer {l}: weight {w.shape} / bias {b.shape} inconsistent "
                    f"with sizes {sizes[l]}->{sizes[l + 1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ShapeError(f"layer {l} holds non-finite entries")

    def arrays(self) -> list:
        """Flat parameter list (weights then biases, layer order)."""
        return list(self.weights) + list(self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def xavier_init(layer_sizes, seed, activation: str = "tanh") -> MlpParams:
    """Glorot-uniform weights on +-sqrt(6/(fan_in+fan_out)); zero biases."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise ConfigError(f"layer_sizes must hold >=2 positive ints, got {sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases, activation)


class BoundMlp:
    """MLP parameters registered as leaves on one tape."""

    def __init__(self, tape: tp.Tape, params: MlpParams):
        self.params = params
        self.weights = [tape.param(w) for w in params.weights]
        self.biases = [tape.param(b) for b in params.biases]
        self.act = _TAPE_ACT[params.activation]

    def apply(self, x: tp.Var) -> tp.Var:
        """Forward pass for a (n, d_in) input Var; returns (n, d_out)."""
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if l < last:
                h = self.act(h)
        return h

    def param_vars(self) -> list:
        return self.weights + self.biases

    def gradients(self, grads_by_node: dict) -> list:
        """Extract this MLP's gradients from a ``tape.grad`` result."""
        out = []
        for v in self.param_vars():
            g = grads_by_node.get(v.idx)
            out.append(np.zeros_like(v.value) if g is None else g)
        return out


def mlp_forward(params: MlpParams, x, tape: tp.Tape) -> tp.Var:
    """Record a forward pass of one input vector; returns the output Var (1-D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.layer_sizes[0]:
        raise ShapeError(
            f"input length {x.shape} does not match input width {params.layer_sizes[0]}"
        )
    bound = BoundMlp(tape, params)
    out = bound.apply(tape.constant(x[None, :]))
    return out.reshape((params.layer_sizes[-1],))


def mlp_apply(params: MlpParams, x: Array) -> Array:
    """Plain numpy forward pass for a (n, d_in) batch (no tape)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.layer_sizes[0]:
        raise ShapeError(
            f"input shape {x.shape} does not match input width {params.layer_sizes[0]}"
        )
    h = x
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if l < last:
            if params.activation == "relu":
                h = np.maximum(h, 0.0)
            elif params.activation == "tanh":
                h = np.tanh(h)
            elif params.activation == "sine":
                h = np.sin(h)
            else:
                h = tp._mish(h)
    return h


@dataclass
class AdamState:
    """Adam optimizer state for a flat list of parameter arrays."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def init(cls, params: list, lr: float, beta1: float = 0.9, beta2: float = 0.999,
             eps: float = 1e-8) -> "AdamState":
        if lr < 0:
            raise ConfigError("learning rate must be >= 0")
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, step_count=0,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list, grads: list) -> None:
    """One bias-corrected Adam update, applied to `params` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state lengths differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise TrainingError("non-finite gradient encountered")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
