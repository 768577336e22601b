"""The neural operator: latent code + coordinate MLP with hard-constrained outputs.

A model evaluates s(alpha, y) = phi(y) * MLP([alpha, y]) + P(y) so Dirichlet
and initial values hold identically wherever phi vanishes. Losses are built on
a tape from finite-difference (or dual-propagation) residuals over a structured
collocation grid, batched across samples only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import residuals as rs
from . import tape as tp
from .errors import ConfigError, DomainError, ShapeError, TrainingDiverged, TrainingError
from .nn import AdamState, BoundMlp, MlpParams, adam_step, mlp_apply
from .oracles import BIOT_IC_EPS

Array = np.ndarray

DIVERGENCE_LIMIT = 1e6


class ConstraintRecipe:
    """Closed-form (phi, P) pair: phi vanishes on the constrained loci where P
    attains the prescribed values. Derivative closures serve the autodiff backend."""

    def __init__(self, name: str, phi: Callable, extension: Callable,
                 phi_grad: Callable, phi_hess: Callable,
                 extension_grad: Callable, extension_hess: Callable,
                 mode: str = "hard"):
        if mode not in ("hard", "soft"):
            raise ConfigError(f"unknown constraint mode {mode!r}")
        self.name = name
        self.mode = mode
        self.phi = phi
        self.extension = extension
        self.phi_grad = phi_grad
        self.phi_hess = phi_hess
        self.extension_grad = extension_grad
        self.extension_hess = extension_hess

    def as_soft(self) -> "ConstraintRecipe":
        soft = ConstraintRecipe(self.name, self.phi, self.extension, self.phi_grad,
                                self.phi_hess, self.extension_grad, self.extension_hess,
                                mode="soft")
        return soft


@dataclass
class CollocationGrid:
    """Uniform tensor-product grid; flat index = row-major over the axes."""

    box: tuple  # ((lo, hi), ...) per axis
    counts: tuple

    def __post_init__(self):
        self.box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        self.counts = tuple(int(c) for c in self.counts)
        if len(self.box) != len(self.counts):
            raise ConfigError("box and counts must have equal length")
        for (lo, hi), c in zip(self.box, self.counts):
            if c < 3:
                raise ConfigError("need >= 3 nodes per axis for interior stencils")
            if hi <= lo:
                raise ConfigError("axis extent must be positive")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacings(self) -> tuple:
        return tuple((hi - lo) / (c - 1) for (lo, hi), c in zip(self.box, self.counts))

    @property
    def axes(self) -> tuple:
        return tuple(np.linspace(lo, hi, c) for (lo, hi), c in zip(self.box, self.counts))

    @property
    def coords(self) -> Array:
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([g.ravel() for g in grids])


def build_grid(box, counts) -> CollocationGrid:
    """Structured collocation grid with boundary nodes included."""
    return CollocationGrid(tuple(box), tuple(counts))


@dataclass
class OperatorModel:
    """One output field: MLP over [alpha, y] plus its constraint recipe."""

    mlp: MlpParams
    constraint: ConstraintRecipe
    embedding_size: int
    coord_dim: int
    domain: tuple = ((0.0, 1.0),)

    def __post_init__(self):
        expected = self.embedding_size + self.coord_dim
        if self.mlp.layer_sizes[0] != expected:
            raise ShapeError(
                f"MLP input width {self.mlp.layer_sizes[0]} != Q + coord_dim = {expected}"
            )
        if self.mlp.layer_sizes[-1] != 1:
            raise ShapeError("operator MLP output must be scalar")


def _check_domain(model: OperatorModel, y: Array) -> None:
    for k, (lo, hi) in enumerate(model.domain):
        if np.any(y[..., k] < lo - 1e-9) or np.any(y[..., k] > hi + 1e-9):
            raise DomainError(f"coordinate axis {k} outside [{lo}, {hi}]")


def constrained_forward(model: OperatorModel, alpha: Array, y) -> float:
    """Evaluate the (hard-)constrained operator at a single coordinate."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape[0] != model.embedding_size:
        raise ShapeError(f"expected {model.embedding_size} latent coefficients")
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    _check_domain(model, y)
    return float(predict(model, alpha, y[None, :])[0])


def predict(model: OperatorModel, alpha: Array, coords: Array) -> Array:
    """Vectorized constrained forward pass at (n, coord_dim) locations (no tape)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    x = np.hstack([np.broadcast_to(alpha, (coords.shape[0], alpha.shape[0])), coords])
    out = mlp_apply(model.mlp, x)[:, 0]
    if model.constraint.mode == "hard":
        return model.constraint.phi(coords) * out + model.constraint.extension(coords)
    return out


@dataclass
class LossBreakdown:
    tape: tp.Tape
    total: tp.Var
    terms: dict  # name -> Var


def _batch_inputs(alphas: Array, coords: Array) -> Array:
    b, q = alphas.shape
    m = coords.shape[0]
    return np.hstack([np.repeat(alphas, m, axis=0), np.tile(coords, (b, 1))])


def _constrained_grid_output(tape, bound, recipe, x, coords, batch, grid_shape):
    raw = bound.apply(tape.constant(x)).reshape((batch, *grid_shape))
    if recipe.mode != "hard":
        return raw
    phi = recipe.phi(coords).reshape(grid_shape)
    ext = recipe.extension(coords).reshape(grid_shape)
    return raw * tape.constant(phi) + tape.constant(ext)


def _check_finite_residual(value: Array, what: str, sample_ids) -> None:
    if np.isfinite(value).all():
        return
    flat_bad = np.argwhere(~np.isfinite(value))[0]
    sid = sample_ids[flat_bad[0]] if sample_ids is not None else flat_bad[0]
    raise TrainingError(
        f"non-finite {what} residual at sample {sid}, grid index {tuple(flat_bad[1:])}"
    )


def assemble_loss(problem, models: dict, alphas: Array, recon: dict, grid: CollocationGrid,
                  spec: rs.ResidualSpec, data: Optional[dict] = None,
                  sample_ids=None) -> LossBreakdown:
    """Physics loss for one batch: mean squared residual over samples and
    collocation points, plus boundary/initial penalties where the recipe is
    soft (or where only soft enforcement exists, e.g. Neumann conditions),
    plus an optional mean-squared data misfit.

    `recon` carries the per-sample reconstructed input on the grid:
    key "u" shaped (B, *grid.shape) for the scalar cases, key "kappa" shaped
    (B, n_y) for consolidation. Batching happens across samples only; each
    sample couples all its collocation points through the stencils.
    """
    t = tp.Tape()
    batch = alphas.shape[0]
    coords = grid.coords
    x = _batch_inputs(alphas, coords)
    terms: dict = {}

    bounds = {f: BoundMlp(t, models[f].mlp) for f in problem.fields}
    outs = {
        f: _constrained_grid_output(t, bounds[f], models[f].constraint, x, coords,
                                    batch, grid.shape)
        for f in problem.fields
    }

    if spec.backend == "autodiff":
        _autodiff_pde_terms(problem, models, t, bounds, x, coords, batch, grid, spec,
                            recon, terms, sample_ids)
    else:
        _fd_pde_terms(problem, t, outs, grid, spec, recon, terms, sample_ids)

    if any(models[f].constraint.mode == "soft" for f in problem.fields):
        _soft_constraint_terms(problem, models, t, outs, grid, batch, terms)

    if data is not None:
        _data_terms(problem, models, t, data, alphas, batch, terms)

    total = None
    for v in terms.values():
        total = v if total is None else total + v
    return LossBreakdown(t, total, terms)


def _fd_pde_terms(problem, t, outs, grid, spec, recon, terms, sample_ids):
    if spec.case == "antiderivative":
        (dy,) = grid.spacings
        r = rs.antiderivative_residual_field(outs["s"], t.constant(recon["u"]), dy)
        _check_finite_residual(r.value, "pde", sample_ids)
        terms["pde"] = (r * r).mean()
    elif spec.case == "heat2d":
        r = rs.heat2d_residual_field(outs["s"], t.constant(recon["u"]), spec.kappa,
                                     grid.spacings, spec.heat_sign)
        _check_finite_residual(r.value, "pde", sample_ids)
        terms["pde"] = (r * r).mean()
    else:
        kappa = recon["kappa"]
        if np.any(kappa <= 0):
            raise ConfigError("reconstructed kappa must be positive at all nodes")
        dy, dt = grid.spacings
        mech, flow = rs.biot_residual_fields(
            outs["u"], outs["p"], t.constant(kappa), spec.nu, spec.a, grid.spacings,
        )
        # drop spatial nodes inside the regularized-IC layer (the corner
        # singularity's footprint): stencils cannot resolve the sub-grid layer
        drop = int(np.searchsorted(grid.axes[0], 4.0 * BIOT_IC_EPS) - 1)
        if drop > 0:
            mech = mech[:, drop:, :]
            flow = flow[:, drop:, :]
        _check_finite_residual(mech.value, "mechanics", sample_ids)
        _check_finite_residual(flow.value, "flow", sample_ids)
        terms["pde_mechanics"] = (mech * mech).mean()
        terms["pde_flow"] = (flow * flow).mean()
        # Neumann data enter softly: traction nu u_y = -1 at y=0 and no flux
        # kappa p_y = 0 at y=1, one-sided first-order quotients, t > 0 nodes.
        u = outs["u"]
        p = outs["p"]
        traction = (u[:, 1, 1:] - u[:, 0, 1:]) * (spec.nu / dy) + 1.0
        flux = (p[:, -1, 1:] - p[:, -2, 1:]) * t.constant(kappa[:, -1:] / dy)
        terms["bc_traction"] = (traction * traction).mean()
        terms["bc_flux"] = (flux * flux).mean()


def _autodiff_pde_terms(problem, models, t, bounds, x, coords, batch, grid, spec,
                        recon, terms, sample_ids):
    if spec.case == "biot":
        raise rs.UnsupportedConfigError(
            "the autodiff spatial backend covers the antiderivative and heat cases"
        )
    q = models["s"].embedding_size
    d = models["s"].coord_dim
    recipe = models["s"].constraint
    if spec.case == "antiderivative":
        direction = np.zeros(q + d)
        direction[q] = 1.0
        h = rs.mlp_taylor_forward(bounds["s"], x, [direction], order=1, tape=t)
        if recipe.mode == "hard":
            s = rs.constrained_taylor(recipe, h, np.tile(coords, (batch, 1)),
                                      [np.array([1.0])])
        else:
            s = h
        ds = s.d1[0].reshape((batch, *grid.shape))
        r = ds[:, 1:-1] - t.constant(recon["u"][:, 1:-1])
    else:
        dirs = []
        for axis in range(2):
            v = np.zeros(q + d)
            v[q + axis] = 1.0
            dirs.append(v)
        h = rs.mlp_taylor_forward(bounds["s"], x, dirs, order=2, tape=t)
        if recipe.mode == "hard":
            s = rs.constrained_taylor(recipe, h, np.tile(coords, (batch, 1)),
                                      [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
        else:
            s = h
        lap = (s.d2[0] + s.d2[1]).reshape((batch, *grid.shape))
        inner = t.constant(recon["u"][:, 1:-1, 1:-1])
        core = lap[:, 1:-1, 1:-1] * spec.kappa
        r = core + inner if spec.heat_sign == rs.HEAT_SIGN_MAIN else core - inner
    _check_finite_residual(r.value, "pde", sample_ids)
    terms["pde"] = (r * r).mean()


def _soft_constraint_terms(problem, models, t, outs, grid, batch, terms):
    for f, kind, idx, target in problem.soft_loci(grid):
        if models[f].constraint.mode != "soft":
            continue
        s_flat = outs[f].reshape((batch, grid.size))
        miss = s_flat[:, idx] - t.constant(np.asarray(target, dtype=np.float64))
        key = f"{kind}_{f}" if len(problem.fields) > 1 else kind
        term = (miss * miss).mean()
        terms[key] = terms[key] + term if key in terms else term


def _data_terms(problem, models, t, data, alphas, batch, terms):
    coords = data["coords"]
    targets = data["targets"]
    xd = _batch_inputs(alphas, coords)
    for f in problem.fields:
        bound = BoundMlp(t, models[f].mlp)
        pred = _constrained_grid_output(t, bound, models[f].constraint, xd, coords,
                                        batch, (coords.shape[0],))
        miss = pred - t.constant(np.asarray(targets[f], dtype=np.float64))
        key = f"data_{f}" if len(problem.fields) > 1 else "data"
        terms[key] = (miss * miss).mean()


@dataclass
class TrainSchedule:
    steps: int
    batch_size: int
    lr: float
    seed: int = 0
    log_every: int = 100
    divergence_limit: float = DIVERGENCE_LIMIT


@dataclass
class TrainResult:
    models: dict
    log: list  # one dict per logged step


def train(problem, models: dict, alphas: Array, recon: dict, grid: CollocationGrid,
          spec: rs.ResidualSpec, schedule: TrainSchedule, data: Optional[dict] = None,
          eval_hook: Optional[Callable] = None) -> TrainResult:
    """Mini-batch Adam on the physics loss; batches are sets of samples.

    Returns the trained models plus a metric log (every `log_every` steps and
    at the final step). Raises TrainingDiverged, carrying the last good
    checkpoint, if the loss exceeds the divergence limit or turns non-finite.
    """
    n = alphas.shape[0]
    if n == 0:
        raise ConfigError("no training samples")
    rng = np.random.default_rng(schedule.seed)
    states = {
        f: AdamState.init(models[f].mlp.arrays(), schedule.lr) for f in problem.fields
    }
    log: list = []
    last_good = checkpoint_state(models)
    order = rng.permutation(n)
    cursor = 0
    for step in range(1, schedule.steps + 1):
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + schedule.batch_size]
        cursor += schedule.batch_size
        batch_recon = {k: v[idx] for k, v in recon.items()}
        batch_data = None
        if data is not None:
            batch_data = {
                "coords": data["coords"],
                "targets": {f: data["targets"][f][idx] for f in data["targets"]},
            }
        breakdown = assemble_loss(problem, models, alphas[idx], batch_recon, grid,
                                  spec, data=batch_data, sample_ids=idx)
        loss_value = float(breakdown.total.value)
        if not np.isfinite(loss_value) or loss_value > schedule.divergence_limit:
            raise TrainingDiverged(
                f"loss {loss_value:g} at step {step}", checkpoint=last_good, log=log,
            )
        if schedule.lr > 0.0:
            grads = tp.grad(breakdown.tape, breakdown.total)
            for f in problem.fields:
                adam_step(states[f], models[f].mlp.arrays(),
                          bound_gradients(breakdown.tape, grads, models[f].mlp))
        if step % schedule.log_every == 0 or step == schedule.steps or step == 1:
            row = {"step": step, "loss": loss_value}
            for name, var in breakdown.terms.items():
                row[f"loss_{name}"] = float(var.value)
            if eval_hook is not None:
                row.update(eval_hook(models, step))
            log.append(row)
            last_good = checkpoint_state(models)
    return TrainResult(models, log)


def bound_gradients(tape: tp.Tape, grads_by_node: dict, params: MlpParams) -> list:
    """Match parameter leaves on the tape to `params` arrays by identity."""
    wanted = {id(a): k for k, a in enumerate(params.arrays())}
    out: list = [None] * len(wanted)
    for i, node in enumerate(tape.nodes):
        if node.op == "leaf" and node.needs_grad and id(node.value) in wanted:
            g = grads_by_node.get(i)
            k = wanted[id(node.value)]
            out[k] = np.zeros_like(node.value) if g is None else g
    if any(g is None for g in out):
        raise TrainingError("some parameters never appeared on the loss tape")
    return out


def checkpoint_state(models: dict) -> dict:
    """Deep-copied parameter snapshot, JSON-serializable."""
    state = {}
    for f, m in models.items():
        state[f] = {
            "layer_sizes": list(m.mlp.layer_sizes),
            "activation": m.mlp.activation,
            "weights": [w.tolist() for w in m.mlp.weights],
            "biases": [b.tolist() for b in m.mlp.biases],
            "constraint": m.constraint.name,
            "constraint_mode": m.constraint.mode,
            "embedding_size": m.embedding_size,
            "coord_dim": m.coord_dim,
            "domain": [list(ax) for ax in m.domain],
        }
    return state


def save_checkpoint(models: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_state(models), fh)


def load_checkpoint(path, recipe_registry) -> dict:
    """Rebuild models from a checkpoint; recipes come from the named registry."""
    with open(path) as fh:
        state = json.load(fh)
    models = {}
    for f, doc in state.items():
        params = MlpParams(
            tuple(doc["layer_sizes"]),
            [np.asarray(w, dtype=np.float64) for w in doc["weights"]],
            [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
            doc["activation"],
        )
        recipe = recipe_registry[doc["constraint"]]
        if doc["constraint_mode"] == "soft":
            recipe = recipe.as_soft()
        models[f] = OperatorModel(
            mlp=params,
            constraint=recipe,
            embedding_size=doc["embedding_size"],
            coord_dim=doc["coord_dim"],
            domain=tuple(tuple(ax) for ax in doc["domain"]),
        )
    return models
