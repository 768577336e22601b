"""Finite-difference PDE residuals and the autodiff spatial-derivative baseline.

The stencil functions come in two flavors: per-point evaluations matching the
tabulated discrete forms (plain numpy, used by tests and diagnostics) and
whole-grid slice-based versions that work identically on numpy arrays and on
tape Vars, so the same expressions build training losses.

Sign conventions (documented deviations are in the project notes):
  - antiderivative: r = (s[p+1] - s[p-1]) / (2 dy) - u[p]
  - heat2d (main-text convention, -kappa lap s = u): r = kappa * lap_h s + u;
    the alternative printed form kappa * lap_h s - u is selectable.
  - biot mechanics: r = nu * d2u/dy2 - dp/dy  (effective-stress coupling; the
    only sign for which the reference solution satisfies the stencil).
  - biot flow: r = a * backward-dt p + mixed d2u/dydt - kappa * d2p/dy2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tape as tp
from .errors import ConfigError, UnsupportedConfigError

Array = np.ndarray

HEAT_SIGN_MAIN = "main_text"  # residual kappa*lap(s) + u
HEAT_SIGN_APPENDIX = "appendix"  # residual kappa*lap(s) - u

CASES = ("antiderivative", "heat2d", "biot")
BACKENDS = ("fd", "autodiff")


@dataclass
class ResidualSpec:
    """Which benchmark residual to assemble and with which derivative backend."""

    case: str
    backend: str = "fd"
    kappa: float = 1.0  # heat conductivity (biot kappa is a per-sample field)
    nu: float = 1.0
    a: float = 0.0
    heat_sign: str = HEAT_SIGN_MAIN

    def __post_init__(self):
        if self.case not in CASES:
            raise ConfigError(f"unknown residual case {self.case!r}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.heat_sign not in (HEAT_SIGN_MAIN, HEAT_SIGN_APPENDIX):
            raise ConfigError(f"unknown heat sign convention {self.heat_sign!r}")
        if self.case == "heat2d" and self.kappa <= 0:
            raise ConfigError("heat conductivity must be positive")


def fd_derivatives(values: Array, spacing, index):
    """Difference quotients of a gridded field at one (interior) index.

    1-D fields: returns {'d1', 'd2'}. 2-D fields with spacing (d1, d2): returns
    central first/second quotients per axis, the backward quotient along axis 2
    (the time axis, index q >= 1) and the mixed backward-in-q central-in-p
    quotient used by the consolidation flow residual.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        p = int(index) if np.isscalar(index) or isinstance(index, (int, np.integer)) else int(index[0])
        if not (1 <= p <= values.shape[0] - 2):
            raise IndexError(f"index {p} lacks a full 3-point stencil")
        h = float(spacing) if np.isscalar(spacing) else float(spacing[0])
        return {
            "d1": (values[p + 1] - values[p - 1]) / (2.0 * h),
            "d2": (values[p + 1] - 2.0 * values[p] + values[p - 1]) / h ** 2,
        }
    if values.ndim != 2:
        raise ConfigError("fd_derivatives supports 1-D and 2-D grids")
    p, q = (int(index[0]), int(index[1]))
    n1, n2 = values.shape
    h1, h2 = (float(spacing[0]), float(spacing[1]))
    out = {}
    if 1 <= p <= n1 - 2:
        out["dy1"] = (values[p + 1, q] - values[p - 1, q]) / (2.0 * h1)
        out["dy1y1"] = (values[p + 1, q] - 2.0 * values[p, q] + values[p - 1, q]) / h1 ** 2
    if 1 <= q <= n2 - 2:
        out["dy2"] = (values[p, q + 1] - values[p, q - 1]) / (2.0 * h2)
        out["dy2y2"] = (values[p, q + 1] - 2.0 * values[p, q] + values[p, q - 1]) / h2 ** 2
    if q >= 1:
        out["dt_back"] = (values[p, q] - values[p, q - 1]) / h2
        if 1 <= p <= n1 - 2:
            out["dydt"] = (
                values[p + 1, q] - values[p + 1, q - 1]
                - values[p - 1, q] + values[p - 1, q - 1]
            ) / (2.0 * h1 * h2)
    if not out:
        raise IndexError(f"index {(p, q)} lacks every stencil")
    return out


# Per-point residuals (the tabulated discrete forms, before squaring).

def residual_antiderivative(s: Array, u: Array, p: int, dy: float) -> float:
    if not (1 <= p <= len(s) - 2):
        raise IndexError(f"index {p} is not interior")
    return (s[p + 1] - s[p - 1]) / (2.0 * dy) - u[p]


def residual_heat2d(s: Array, u: Array, kappa: float, index, spacing,
                    sign: str = HEAT_SIGN_MAIN) -> float:
    p, q = index
    n1, n2 = np.asarray(s).shape
    if not (1 <= p <= n1 - 2 and 1 <= q <= n2 - 2):
        raise IndexError(f"index {(p, q)} is not interior")
    h1, h2 = spacing
    lap = (
        (s[p + 1, q] - 2.0 * s[p, q] + s[p - 1, q]) / h1 ** 2
        + (s[p, q + 1] - 2.0 * s[p, q] + s[p, q - 1]) / h2 ** 2
    )
    return kappa * lap + u[p, q] if sign == HEAT_SIGN_MAIN else kappa * lap - u[p, q]


def residual_biot(u: Array, p_field: Array, kappa: Array, nu: float, a: float,
                  index, spacing) -> tuple:
    """(mechanics, flow) residuals at grid index (p, q); axis q is time."""
    kappa = np.asarray(kappa, dtype=np.float64)
    if np.any(kappa <= 0):
        raise ConfigError("kappa must be positive at every node")
    p, q = index
    n1, n2 = np.asarray(u).shape
    if not (1 <= p <= n1 - 2 and 1 <= q <= n2 - 1):
        raise IndexError(f"index {(p, q)} is outside the residual region")
    dy, dt = spacing
    mech = (
        nu * (u[p + 1, q] - 2.0 * u[p, q] + u[p - 1, q]) / dy ** 2
        - (p_field[p + 1, q] - p_field[p - 1, q]) / (2.0 * dy)
    )
    flow = (
        a * (p_field[p, q] - p_field[p, q - 1]) / dt
        + (u[p + 1, q] - u[p + 1, q - 1] - u[p - 1, q] + u[p - 1, q - 1]) / (2.0 * dy * dt)
        - kappa[p] * (p_field[p + 1, q] - 2.0 * p_field[p, q] + p_field[p - 1, q]) / dy ** 2
    )
    return mech, flow


# Whole-grid residual fields (tape-compatible: slicing + arithmetic only).
# Leading axes (e.g. the sample batch) pass through untouched.

def antiderivative_residual_field(s, u, dy: float):
    """Residual on interior nodes 1..n-2; input fields shaped (..., n)."""
    return (s[..., 2:] - s[..., :-2]) * (1.0 / (2.0 * dy)) - u[..., 1:-1]


def heat2d_residual_field(s, u, kappa: float, spacing, sign: str = HEAT_SIGN_MAIN):
    """Residual on the interior of (..., n1, n2) grids."""
    h1, h2 = spacing
    lap = (
        (s[..., 2:, 1:-1] - s[..., 1:-1, 1:-1] * 2.0 + s[..., :-2, 1:-1]) * (1.0 / h1 ** 2)
        + (s[..., 1:-1, 2:] - s[..., 1:-1, 1:-1] * 2.0 + s[..., 1:-1, :-2]) * (1.0 / h2 ** 2)
    )
    inner = u[..., 1:-1, 1:-1]
    return lap * kappa + inner if sign == HEAT_SIGN_MAIN else lap * kappa - inner


def biot_residual_fields(u, p, kappa, nu: float, a: float, spacing):
    """(mechanics, flow) residual grids on p in 1..ny-2, q in 1..nt-1.

    `kappa` holds the reconstructed conductivity at the spatial nodes, shaped
    (..., ny) to broadcast across the time axis.
    """
    dy, dt = spacing
    mech = (
        (u[..., 2:, 1:] - u[..., 1:-1, 1:] * 2.0 + u[..., :-2, 1:]) * (nu / dy ** 2)
        - (p[..., 2:, 1:] - p[..., :-2, 1:]) * (1.0 / (2.0 * dy))
    )
    kap = kappa[..., 1:-1]
    kap = kap.reshape((*kap.shape, 1))  # broadcast across the time axis
    flow = (
        (p[..., 1:-1, 1:] - p[..., 1:-1, :-1]) * (a / dt)
        + (u[..., 2:, 1:] - u[..., 2:, :-1] - u[..., :-2, 1:] + u[..., :-2, :-1])
        * (1.0 / (2.0 * dy * dt))
        - (p[..., 2:, 1:] - p[..., 1:-1, 1:] * 2.0 + p[..., :-2, 1:]) * kap * (1.0 / dy ** 2)
    )
    return mech, flow


class TaylorVar:
    """Second-order forward-mode value on a tape: primal + per-direction tangents.

    Each component is a tape Var (or a plain array treated as constant), so a
    reverse sweep over any function of the propagated derivatives yields
    parameter gradients: forward-over-reverse.
    """

    __slots__ = ("val", "d1", "d2", "order")

    def __init__(self, val, d1, d2, order: int):
        self.val = val
        self.d1 = list(d1)  # one entry per direction
        self.d2 = list(d2)
        self.order = order

    def __add__(self, other):
        if isinstance(other, TaylorVar):
            return TaylorVar(
                self.val + other.val,
                [a + b for a, b in zip(self.d1, other.d1)],
                [a + b for a, b in zip(self.d2, other.d2)] if self.order == 2 else [],
                self.order,
            )
        return TaylorVar(self.val + other, list(self.d1), list(self.d2), self.order)

    def const_mul(self, c):
        return TaylorVar(
            self.val * c,
            [d * c for d in self.d1],
            [d * c for d in self.d2] if self.order == 2 else [],
            self.order,
        )

    def matmul(self, w):
        return TaylorVar(
            self.val @ w,
            [d @ w for d in self.d1],
            [d @ w for d in self.d2] if self.order == 2 else [],
            self.order,
        )

    def chain(self, f, df, ddf=None):
        """Apply an elementwise primitive given tape-expression builders.

        `f` maps the primal Var to f(x); `df`/`ddf` build f'(x), f''(x) Vars
        from (x, f(x), previous derivative), so computed nodes are reused and
        the tangents stay differentiable by the reverse sweep.
        """
        y = f(self.val)
        dy = df(self.val, y)
        d1 = [dy * d for d in self.d1]
        if self.order == 2:
            ddy = ddf(self.val, y, dy)
            d2 = [ddy * a * a + dy * b for a, b in zip(self.d1, self.d2)]
        else:
            d2 = []
        return TaylorVar(y, d1, d2, self.order)


def _act_chain(activation: str, h: TaylorVar) -> TaylorVar:
    if activation == "tanh":
        return h.chain(
            tp.tanh,
            lambda x, y: 1.0 - y * y,
            lambda x, y, dy: y * dy * -2.0,
        )
    if activation == "sine":
        return h.chain(tp.sin, lambda x, y: tp.cos(x), lambda x, y, dy: -y)
    if activation == "mish":
        # mish(x) = x * tanh(softplus(x)), decomposed so the tangents stay
        # differentiable:  sp' = sigmoid, tanh' = 1 - tanh^2.
        sp = h.chain(
            tp.softplus,
            lambda x, y: tp.sigmoid(x),
            lambda x, y, dy: dy * (1.0 - dy),
        )
        th = sp.chain(
            tp.tanh,
            lambda x, y: 1.0 - y * y,
            lambda x, y, dy: y * dy * -2.0,
        )
        # product rule for x * th
        val = h.val * th.val
        d1 = [ha * th.val + h.val * ta for ha, ta in zip(h.d1, th.d1)]
        if h.order == 2:
            d2 = [
                hb * th.val + ha * ta * 2.0 + h.val * tb
                for ha, hb, ta, tb in zip(h.d1, h.d2, th.d1, th.d2)
            ]
        else:
            d2 = []
        return TaylorVar(val, d1, d2, h.order)
    raise UnsupportedConfigError(
        f"activation {activation!r} is not smooth enough for the autodiff backend"
    )


def mlp_taylor_forward(bound, x: Array, directions, order: int, tape: tp.Tape) -> TaylorVar:
    """Propagate (value, d/dv, d2/dv2) through a BoundMlp for unit directions.

    `x` is the (n, d_in) input batch; `directions` lists input-space unit
    vectors (coordinate axes). ReLU is rejected when order 2 is requested.
    """
    if bound.params.activation == "relu" and order == 2:
        raise UnsupportedConfigError("ReLU has no second derivative; use tanh/mish/sine")
    n = x.shape[0]
    d1 = [tape.constant(np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape).copy())
          for v in directions]
    d2 = [tape.constant(np.zeros(x.shape)) for _ in directions] if order == 2 else []
    h = TaylorVar(tape.constant(x), d1, d2, order)
    last = len(bound.weights) - 1
    for l, (w, b) in enumerate(zip(bound.weights, bound.biases)):
        h = h.matmul(w) + b
        if l < last:
            h = _act_chain(bound.params.activation, h)
    # flatten the (n, 1) output so downstream broadcasts stay elementwise
    return TaylorVar(
        h.val.reshape((n,)),
        [d.reshape((n,)) for d in h.d1],
        [d.reshape((n,)) for d in h.d2] if order == 2 else [],
        order,
    )


def autodiff_spatial_residual(model, alpha, spec: ResidualSpec, y, u_value: float = 0.0) -> float:
    """Pointwise residual with network-evaluated spatial derivatives.

    Derivatives of the constrained output come from second-order dual
    propagation (see TaylorVar); `u_value` is the reconstructed input at `y`.
    Supports the antiderivative and heat cases; ReLU models are rejected when
    a second derivative is required.
    """
    from .nn import BoundMlp  # local import to avoid a cycle

    alpha = np.asarray(alpha, dtype=np.float64)
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if spec.case == "biot":
        raise UnsupportedConfigError(
            "the autodiff spatial backend covers the antiderivative and heat cases"
        )
    q = alpha.shape[0]
    d = y.shape[0]
    x = np.concatenate([alpha, y])[None, :]
    t = tp.Tape()
    bound = BoundMlp(t, model.mlp)
    if spec.case == "antiderivative":
        direction = np.zeros(q + d)
        direction[q] = 1.0
        h = mlp_taylor_forward(bound, x, [direction], order=1, tape=t)
        if model.constraint.mode == "hard":
            h = constrained_taylor(model.constraint, h, y[None, :], [np.ones(1)])
        return float(np.asarray(h.d1[0].value).ravel()[0]) - u_value
    dirs = []
    for axis in range(2):
        v = np.zeros(q + d)
        v[q + axis] = 1.0
        dirs.append(v)
    h = mlp_taylor_forward(bound, x, dirs, order=2, tape=t)
    if model.constraint.mode == "hard":
        axes = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        h = constrained_taylor(model.constraint, h, y[None, :], axes)
    lap = h.d2[0].value.ravel()[0] + h.d2[1].value.ravel()[0]
    core = spec.kappa * lap
    return float(core + u_value if spec.heat_sign == HEAT_SIGN_MAIN else core - u_value)


def constrained_taylor(recipe, model_out: TaylorVar, coords: Array, directions) -> TaylorVar:
    """Apply s = phi * m + P through the second-order chain/product rule."""
    phi0 = recipe.phi(coords)
    p0 = recipe.extension(coords)
    val = model_out.val * phi0 + p0
    d1, d2 = [], []
    for k, v in enumerate(directions):
        axis = int(np.argmax(np.abs(v)))
        phi1 = recipe.phi_grad(coords, axis)
        p1 = recipe.extension_grad(coords, axis)
        d1.append(model_out.val * phi1 + model_out.d1[k] * phi0 + p1)
        if model_out.order == 2:
            phi2 = recipe.phi_hess(coords, axis)
            p2 = recipe.extension_hess(coords, axis)
            d2.append(
                model_out.val * phi2
                + model_out.d1[k] * (2.0 * phi1)
                + model_out.d2[k] * phi0
                + p2
            )
    return TaylorVar(val, d1, d2, model_out.order)
