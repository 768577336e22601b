"""Shared basis-function dictionary for embedding scattered input functions.

A dictionary starts as the single constant function and grows greedily: each
stage adds one randomly initialized sinusoidal network, trained on the pooled
reconstruction residual while all earlier bases stay frozen. Any point cloud
is embedded by closed-form ridge regression onto the dictionary, giving a
fixed-length coefficient vector independent of where the function was sampled.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import tape as tp
from .errors import ConfigError, ShapeError, TrainingError
from .fields import PointCloudSample
from .nn import AdamState, BoundMlp, MlpParams, adam_step, mlp_apply

Array = np.ndarray

FALLBACK_RIDGE = 1e-10


class ConstantBasis:
    """The exact constant function 1 (the dictionary's seed entry)."""

    kind = "constant"

    def evaluate(self, x: Array) -> Array:
        return np.ones(np.atleast_2d(x).shape[0])


@dataclass
class SirenBasis:
    """One sinusoidal-network basis function: sin-activated MLP, linear output."""

    params: MlpParams
    omega0: float = 30.0

    def __post_init__(self):
        if self.params.activation != "sine":
            raise ConfigError("SirenBasis requires the sine activation")
        if self.params.layer_sizes[-1] != 1:
            raise ConfigError("SirenBasis output must be scalar")

    kind = "siren"

    def evaluate(self, x: Array) -> Array:
        return mlp_apply(self.params, np.atleast_2d(x))[:, 0]


def siren_init(layer_sizes, omega0: float, seed) -> SirenBasis:
    """Standard SIREN uniform initialization with omega0 folded into layer 1."""
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or sizes[-1] != 1:
        raise ConfigError("SIREN needs >=2 layer sizes and scalar output")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for l, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if l == 0:
            wb = omega0 / fan_in
            bb = omega0 / math.sqrt(fan_in)
        elif l < n_layers - 1:
            wb = math.sqrt(6.0 / fan_in)
            bb = 1.0 / math.sqrt(fan_in)
        else:
            wb = math.sqrt(6.0 / fan_in) / omega0
            bb = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-wb, wb, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bb, bb, size=fan_out))
    return SirenBasis(MlpParams(sizes, weights, biases, "sine"), omega0)


def siren_eval(basis: SirenBasis, x) -> float:
    """Evaluate one basis network at a single d-dimensional location."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(basis.evaluate(x[None, :])[0])


@dataclass
class Embedding:
    """Ridge-projection coefficients of one sample onto the dictionary."""

    alpha: Array
    sample_id: int = -1

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if not np.isfinite(self.alpha).all():
            raise ShapeError("embedding coefficients must be finite")


@dataclass
class Dictionary:
    """Ordered basis functions shared by all realizations, plus the ridge weight."""

    bases: list
    lam: float = 1e-6
    tol: float = 1e-3

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("ridge weight must be >= 0")
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")

    def __len__(self):
        return len(self.bases)

    def evaluate(self, x: Array) -> Array:
        """Design matrix Psi(x): shape (P, n) for n query locations."""
        if not self.bases:
            raise ConfigError("dictionary is empty")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.vstack([b.evaluate(x) for b in self.bases])

    def project(self, locations: Array, values: Array, sample_id: int = -1) -> Embedding:
        """Solve the ridge normal equations (Psi Psi^T + lam I) alpha = Psi u."""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ConfigError("cannot project an empty sample")
        psi = self.evaluate(locations)
        return Embedding(_ridge_solve(psi, values, self.lam), sample_id)

    def project_sample(self, sample: PointCloudSample) -> Embedding:
        return self.project(sample.locations, sample.values, sample.id)

    def reconstruct(self, alpha, query: Array) -> Array:
        """Pointwise sum_l alpha_l psi_l(y) at arbitrary query locations."""
        coeffs = alpha.alpha if isinstance(alpha, Embedding) else np.asarray(alpha, dtype=np.float64)
        if coeffs.shape[0] != len(self.bases):
            raise ShapeError(f"expected {len(self.bases)} coefficients, got {coeffs.shape[0]}")
        return self.evaluate(query).T @ coeffs


def _ridge_solve(psi: Array, u: Array, lam: float) -> Array:
    gram = psi @ psi.T
    rhs = psi @ u
    alpha, ok = _try_solve(gram, rhs, lam)
    if not ok:
        warnings.warn(
            f"ridge system singular at lam={lam:g}; retrying with lam={FALLBACK_RIDGE:g}",
            RuntimeWarning,
        )
        alpha, ok = _try_solve(gram, rhs, FALLBACK_RIDGE)
        if not ok:
            raise ConfigError("projection system is singular even with fallback ridge")
    return alpha


def _try_solve(gram: Array, rhs: Array, lam: float):
    a = gram + lam * np.eye(gram.shape[0])
    try:
        alpha = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        return None, False
    resid = np.linalg.norm(a @ alpha - rhs)
    if not np.isfinite(alpha).all() or resid > 1e-8 * (1.0 + np.linalg.norm(rhs)):
        return None, False
    return alpha, True


def relative_mse(values: Array, recon: Array) -> float:
    """||u - u_tilde||^2 / ||u||^2 (absolute when u is numerically zero)."""
    num = float(np.sum((values - recon) ** 2))
    den = float(np.sum(values ** 2))
    return num / den if den > 1e-300 else num


def reconstruction_errors(dictionary: Dictionary, samples) -> Array:
    """Per-sample relative reconstruction MSE at each sample's own points."""
    errs = np.empty(len(samples))
    for i, s in enumerate(samples):
        emb = dictionary.project_sample(s)
        errs[i] = relative_mse(s.values, dictionary.reconstruct(emb, s.locations))
    return errs


@dataclass
class DictionaryFitReport:
    """Diagnostics from one fit: stage-end errors, final per-sample errors, Gram stats."""

    stage_errors: list = field(default_factory=list)  # (n_bases, mean rel MSE)
    sample_errors: Array = None
    gram_offdiag_mean: float = float("nan")
    reached_tol: bool = False

    @property
    def final_error(self) -> float:
        return self.stage_errors[-1][1] if self.stage_errors else float("nan")


def _gram_offdiag(dictionary: Dictionary, probe: Array) -> float:
    """Mean |cos angle| between distinct bases on a probe grid (orthogonality diagnostic)."""
    psi = dictionary.evaluate(probe)
    norms = np.linalg.norm(psi, axis=1)
    norms[norms == 0] = 1.0
    g = (psi / norms[:, None]) @ (psi / norms[:, None]).T
    p = g.shape[0]
    if p < 2:
        return 0.0
    off = np.abs(g[~np.eye(p, dtype=bool)])
    return float(off.mean())


def fit_dictionary(samples, tol: float, max_bases: int, stage_epochs: int, lr: float,
                   seed, hidden=(64, 64), omega0: float = 30.0, lam: float = 1e-6,
                   probe: Array = None, verbose: bool = False):
    """Grow a dictionary until mean relative reconstruction MSE <= tol or max_bases.

    Per outer epoch: every sample is projected onto the frozen dictionary plus
    the in-training basis, then one Adam step is taken on the pooled
    reconstruction loss with respect to the new basis parameters only.
    Returns (Dictionary, DictionaryFitReport).
    """
    if not samples:
        raise ConfigError("dataset must be non-empty")
    if max_bases < 1 or stage_epochs < 1:
        raise ConfigError("max_bases and stage_epochs must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    d_in = np.atleast_2d(samples[0].locations).shape[1]
    dictionary = Dictionary([ConstantBasis()], lam=lam, tol=tol)

    # Pooled point data, with per-point 1/(N*M_i) loss weights.
    x_all = np.vstack([np.atleast_2d(s.locations) for s in samples])
    u_all = np.concatenate([s.values for s in samples])
    sizes = [s.size for s in samples]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    n = len(samples)
    point_w = np.concatenate([np.full(m, 1.0 / (n * m)) for m in sizes])

    err = float(np.mean(reconstruction_errors(dictionary, samples)))
    report = DictionaryFitReport(stage_errors=[(1, err)])
    if verbose:
        print(f"[encoder] bases=1 mean rel MSE={err:.3e}")

    while err > tol and len(dictionary) < max_bases:
        basis = siren_init((d_in, *hidden, 1), omega0, rng)
        adam = AdamState.init(basis.params.arrays(), lr)
        frozen = dictionary.evaluate(x_all)  # (P_old, n_pts), fixed this stage
        gram_old = [
            frozen[:, a:b] @ frozen[:, a:b].T for a, b in zip(bounds[:-1], bounds[1:])
        ]
        rhs_old = [frozen[:, a:b] @ u_all[a:b] for a, b in zip(bounds[:-1], bounds[1:])]

        for _ in range(stage_epochs):
            t = tp.Tape()
            bound = BoundMlp(t, basis.params)
            psi_var = bound.apply(t.constant(x_all)).reshape((x_all.shape[0],))
            psi = psi_var.value

            # Closed-form ridge projection per sample, new basis included.
            alphas = np.empty((n, len(dictionary) + 1))
            for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
                pn = psi[a:b]
                cross = frozen[:, a:b] @ pn
                g = np.empty((gram_old[i].shape[0] + 1,) * 2)
                g[:-1, :-1] = gram_old[i]
                g[:-1, -1] = cross
                g[-1, :-1] = cross
                g[-1, -1] = pn @ pn
                rhs = np.concatenate([rhs_old[i], [pn @ u_all[a:b]]])
                alphas[i] = np.linalg.solve(g + lam * np.eye(g.shape[0]), rhs)

            # One Adam step on the pooled loss, old bases and alphas frozen.
            resid_const = u_all - np.concatenate([
                frozen[:, a:b].T @ alphas[i, :-1]
                for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
            ])
            w_new = np.concatenate([
                np.full(b - a, alphas[i, -1])
                for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))
            ])
            r = t.constant(resid_const) - t.constant(w_new) * psi_var
            loss = (r * r * t.constant(point_w)).sum()
            if not np.isfinite(loss.value):
                raise TrainingError("non-finite dictionary-training loss")
            grads = tp.grad(t, loss)
            adam_step(adam, basis.params.arrays(), bound.gradients(grads))

        dictionary.bases.append(basis)
        err = float(np.mean(reconstruction_errors(dictionary, samples)))
        report.stage_errors.append((len(dictionary), err))
        if verbose:
            print(f"[encoder] bases={len(dictionary)} mean rel MSE={err:.3e}")

    report.sample_errors = reconstruction_errors(dictionary, samples)
    report.reached_tol = err <= tol
    if probe is None:
        probe = x_all[:: max(1, x_all.shape[0] // 2048)]
    report.gram_offdiag_mean = _gram_offdiag(dictionary, probe)
    return dictionary, report


def save_dictionary(dictionary: Dictionary, path) -> None:
    """Persist to JSON with shortest round-trip decimals (bit-exact reload)."""
    entries = []
    for b in dictionary.bases:
        if b.kind == "constant":
            entries.append({"kind": "constant"})
        else:
            entries.append({
                "kind": "siren",
                "omega0": b.omega0,
                "layer_sizes": list(b.params.layer_sizes),
                "weights": [w.tolist() for w in b.params.weights],
                "biases": [v.tolist() for v in b.params.biases],
            })
    doc = {"lam": dictionary.lam, "tol": dictionary.tol, "bases": entries}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dictionary(path) -> Dictionary:
    with open(path) as fh:
        doc = json.load(fh)
    bases = []
    for e in doc["bases"]:
        if e["kind"] == "constant":
            bases.append(ConstantBasis())
        else:
            params = MlpParams(
                tuple(e["layer_sizes"]),
                [np.asarray(w, dtype=np.float64) for w in e["weights"]],
                [np.asarray(v, dtype=np.float64) for v in e["biases"]],
                "sine",
            )
            bases.append(SirenBasis(params, e["omega0"]))
    return Dictionary(bases, lam=doc["lam"], tol=doc["tol"])
