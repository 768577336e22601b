"""Reverse-mode automatic differentiation on an append-only tape.

Every recorded node holds an op kind, the indices of its input nodes, the
primal value (a float64 ndarray; scalars are 0-d arrays) and enough context
to recompute the op, so the whole tape can be replayed forward and checked
bit-for-bit. Nodes are appended in execution order, which guarantees the
topological invariant needed by the single reverse sweep in ``backward``.

Values may be full arrays: an elementwise op then records one node acting on
the whole array instead of one node per scalar, which is what makes training
full MLPs feasible in pure numpy while keeping tape semantics intact. Ops may
stash value-derived intermediates in a side cache to avoid recomputing
transcendentals in the backward pass; the cache never feeds ``replay``.
"""

from __future__ import annotations

import numpy as np

from .errors import GraphError

Array = np.ndarray


def _f64(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: Array) -> Array:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _mish_parts(x: Array):
    # tanh(softplus(x)) via (1+e^x): one transcendental pass, f64-equivalent
    # to the textbook composition (exp underflow is graceful; overflow clipped).
    w = np.exp(np.minimum(x, 300.0))
    z = (1.0 + w) ** 2
    t = (z - 1.0) / (z + 1.0)
    return t, w


def _mish(x: Array) -> Array:
    return x * _mish_parts(x)[0]


def _mish_grad(x: Array) -> Array:
    # d/dx [x * tanh(softplus(x))] = tanh(sp) + x * sigmoid(x) * (1 - tanh(sp)^2)
    t, w = _mish_parts(x)
    return t + x * (w / (1.0 + w)) * (1.0 - t * t)


# Op registry. Forward: f(ctx, *inputs) -> value or (value, cache).
# Backward: f(ctx, grad, inputs, out, cache, needs) -> per-input grads
# (entries for inputs with needs[i] False may be None and are skipped).

def _fw_add(ctx, a, b):
    return a + b


def _bw_add(ctx, g, ins, out, cache, needs):
    return (
        _unbroadcast(g, ins[0].shape) if needs[0] else None,
        _unbroadcast(g, ins[1].shape) if needs[1] else None,
    )


def _fw_sub(ctx, a, b):
    return a - b


def _bw_sub(ctx, g, ins, out, cache, needs):
    return (
        _unbroadcast(g, ins[0].shape) if needs[0] else None,
        _unbroadcast(-g, ins[1].shape) if needs[1] else None,
    )


def _fw_mul(ctx, a, b):
    return a * b


def _bw_mul(ctx, g, ins, out, cache, needs):
    a, b = ins
    return (
        _unbroadcast(g * b, a.shape) if needs[0] else None,
        _unbroadcast(g * a, b.shape) if needs[1] else None,
    )


def _fw_div(ctx, a, b):
    return a / b


def _bw_div(ctx, g, ins, out, cache, needs):
    a, b = ins
    return (
        _unbroadcast(g / b, a.shape) if needs[0] else None,
        _unbroadcast(-g * a / (b * b), b.shape) if needs[1] else None,
    )


def _fw_neg(ctx, a):
    return -a


def _bw_neg(ctx, g, ins, out, cache, needs):
    return (-g,)


def _fw_pow(ctx, a):
    return a ** ctx


def _bw_pow(ctx, g, ins, out, cache, needs):
    return (g * ctx * ins[0] ** (ctx - 1),)


def _fw_matmul(ctx, a, b):
    return a @ b


def _bw_matmul(ctx, g, ins, out, cache, needs):
    a, b = ins
    return (
        g @ b.T if needs[0] else None,
        a.T @ g if needs[1] else None,
    )


def _fw_getitem(ctx, a):
    return a[ctx]


def _bw_getitem(ctx, g, ins, out, cache, needs):
    full = np.zeros(ins[0].shape)
    full[ctx] = g
    return (full,)


def _fw_reshape(ctx, a):
    return a.reshape(ctx)


def _bw_reshape(ctx, g, ins, out, cache, needs):
    return (g.reshape(ins[0].shape),)


def _fw_sum(ctx, a):
    axis, keepdims = ctx
    return np.asarray(a.sum(axis=axis, keepdims=keepdims))


def _bw_sum(ctx, g, ins, out, cache, needs):
    axis, keepdims = ctx
    shape = ins[0].shape
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape).copy(),)


def _fw_mean(ctx, a):
    axis, keepdims = ctx
    return np.asarray(a.mean(axis=axis, keepdims=keepdims))


def _bw_mean(ctx, g, ins, out, cache, needs):
    axis, keepdims = ctx
    shape = ins[0].shape
    count = ins[0].size if axis is None else np.prod([shape[i] for i in np.atleast_1d(axis)])
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g / count, shape).copy(),)


def _fw_exp(ctx, a):
    return np.exp(a)


def _bw_exp(ctx, g, ins, out, cache, needs):
    return (g * out,)


def _fw_tanh(ctx, a):
    return np.tanh(a)


def _bw_tanh(ctx, g, ins, out, cache, needs):
    return (g * (1.0 - out * out),)


def _fw_sin(ctx, a):
    return np.sin(a)


def _bw_sin(ctx, g, ins, out, cache, needs):
    return (g * np.cos(ins[0]),)


def _fw_cos(ctx, a):
    return np.cos(a)


def _bw_cos(ctx, g, ins, out, cache, needs):
    return (-g * np.sin(ins[0]),)


def _fw_sigmoid(ctx, a):
    return _sigmoid(a)


def _bw_sigmoid(ctx, g, ins, out, cache, needs):
    return (g * out * (1.0 - out),)


def _fw_softplus(ctx, a):
    value = _softplus(a)
    return value, np.exp(a - value)  # cache sigmoid(a) = exp(a - softplus(a))


def _bw_softplus(ctx, g, ins, out, cache, needs):
    sig = cache if cache is not None else _sigmoid(ins[0])
    return (g * sig,)


def _fw_relu(ctx, a):
    return np.maximum(a, 0.0)


def _bw_relu(ctx, g, ins, out, cache, needs):
    return (g * (ins[0] > 0.0),)


def _fw_mish(ctx, a):
    t, w = _mish_parts(a)
    dm = t + a * (w / (1.0 + w)) * (1.0 - t * t)
    return a * t, dm  # cache d(mish)/dx for the backward pass


def _bw_mish(ctx, g, ins, out, cache, needs):
    dm = cache if cache is not None else _mish_grad(ins[0])
    return (g * dm,)


OPS = {
    "add": (_fw_add, _bw_add),
    "sub": (_fw_sub, _bw_sub),
    "mul": (_fw_mul, _bw_mul),
    "div": (_fw_div, _bw_div),
    "neg": (_fw_neg, _bw_neg),
    "pow": (_fw_pow, _bw_pow),
    "matmul": (_fw_matmul, _bw_matmul),
    "getitem": (_fw_getitem, _bw_getitem),
    "reshape": (_fw_reshape, _bw_reshape),
    "sum": (_fw_sum, _bw_sum),
    "mean": (_fw_mean, _bw_mean),
    "exp": (_fw_exp, _bw_exp),
    "tanh": (_fw_tanh, _bw_tanh),
    "sin": (_fw_sin, _bw_sin),
    "cos": (_fw_cos, _bw_cos),
    "sigmoid": (_fw_sigmoid, _bw_sigmoid),
    "softplus": (_fw_softplus, _bw_softplus),
    "relu": (_fw_relu, _bw_relu),
    "mish": (_fw_mish, _bw_mish),
}

_CACHED_OPS = frozenset({"softplus", "mish"})


class Node:
    __slots__ = ("op", "inputs", "value", "ctx", "needs_grad", "cache")

    def __init__(self, op, inputs, value, ctx, needs_grad, cache=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.ctx = ctx
        self.needs_grad = needs_grad
        self.cache = cache


class Tape:
    """Append-only record of a forward computation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def _record(self, op: str, inputs: tuple["Var", ...], ctx=None) -> "Var":
        for v in inputs:
            if v.tape is not self:
                raise GraphError("input node belongs to a different tape")
        values = tuple(self.nodes[v.idx].value for v in inputs)
        result = OPS[op][0](ctx, *values)
        cache = None
        if op in _CACHED_OPS:
            result, cache = result
        needs = any(self.nodes[v.idx].needs_grad for v in inputs)
        self.nodes.append(
            Node(op, tuple(v.idx for v in inputs), _f64(result), ctx, needs, cache)
        )
        return Var(self, len(self.nodes) - 1)

    def param(self, value) -> "Var":
        """Register a differentiable leaf (a parameter)."""
        self.nodes.append(Node("leaf", (), _f64(value), None, True))
        return Var(self, len(self.nodes) - 1)

    def constant(self, value) -> "Var":
        """Register a non-differentiable leaf (data, coordinates, ...)."""
        self.nodes.append(Node("leaf", (), _f64(value), None, False))
        return Var(self, len(self.nodes) - 1)

    def lift(self, x) -> "Var":
        return x if isinstance(x, Var) else self.constant(x)

    def replay(self) -> bool:
        """Re-execute every recorded op; True iff all primals match bit-for-bit."""
        for node in self.nodes:
            if node.op == "leaf":
                continue
            values = tuple(self.nodes[i].value for i in node.inputs)
            redone = OPS[node.op][0](node.ctx, *values)
            if node.op in _CACHED_OPS:
                redone = redone[0]
            redone = _f64(redone)
            if redone.shape != node.value.shape or not np.array_equal(redone, node.value):
                return False
        return True


class Var:
    """Handle to one tape node; arithmetic on Vars records new nodes."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: Tape, idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.shape})"

    def _binary(self, op, other, swap=False):
        other = self.tape.lift(other)
        pair = (other, self) if swap else (self, other)
        return self.tape._record(op, pair)

    def __add__(self, other):
        return self._binary("add", other)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary("sub", other)

    def __rsub__(self, other):
        return self._binary("sub", other, swap=True)

    def __mul__(self, other):
        return self._binary("mul", other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary("div", other)

    def __rtruediv__(self, other):
        return self._binary("div", other, swap=True)

    def __neg__(self):
        return self.tape._record("neg", (self,))

    def __pow__(self, exponent):
        return self.tape._record("pow", (self,), ctx=float(exponent))

    def __matmul__(self, other):
        return self._binary("matmul", other)

    def __rmatmul__(self, other):
        return self._binary("matmul", other, swap=True)

    def __getitem__(self, key):
        return self.tape._record("getitem", (self,), ctx=key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape._record("reshape", (self,), ctx=shape)

    def sum(self, axis=None, keepdims=False):
        return self.tape._record("sum", (self,), ctx=(axis, keepdims))

    def mean(self, axis=None, keepdims=False):
        return self.tape._record("mean", (self,), ctx=(axis, keepdims))


def _unary(name):
    def fn(v: Var) -> Var:
        return v.tape._record(name, (v,))

    fn.__name__ = name
    return fn


exp = _unary("exp")
tanh = _unary("tanh")
sin = _unary("sin")
cos = _unary("cos")
sigmoid = _unary("sigmoid")
softplus = _unary("softplus")
relu = _unary("relu")
mish = _unary("mish")


def backward(tape: Tape, loss: Var) -> list:
    """Reverse sweep from `loss`; returns per-node gradients (None where unused).

    Visits each node exactly once, in reverse recording order.
    """
    if loss.tape is not tape or not (0 <= loss.idx < len(tape.nodes)):
        raise GraphError("loss node is not on this tape")
    if tape.nodes[loss.idx].value.size != 1:
        raise GraphError("loss node must be scalar-valued")
    nodes = tape.nodes
    grads: list = [None] * len(nodes)
    grads[loss.idx] = np.ones_like(nodes[loss.idx].value)
    for i in range(loss.idx, -1, -1):
        g = grads[i]
        node = nodes[i]
        if g is None or node.op == "leaf" or not node.needs_grad:
            continue
        values = tuple(nodes[j].value for j in node.inputs)
        needs = tuple(nodes[j].needs_grad for j in node.inputs)
        input_grads = OPS[node.op][1](node.ctx, g, values, node.value, node.cache, needs)
        for j, gj in zip(node.inputs, input_grads):
            if gj is None or not nodes[j].needs_grad:
                continue
            grads[j] = gj if grads[j] is None else grads[j] + gj
    return grads


def grad(tape: Tape, loss: Var) -> dict:
    """Gradient of `loss` w.r.t. every parameter leaf, keyed by node id."""
    grads = backward(tape, loss)
    out = {}
    for i, node in enumerate(tape.nodes):
        if node.op == "leaf" and node.needs_grad:
            out[i] = grads[i] if grads[i] is not None else np.zeros_like(node.value)
    return out
