"""End-to-end experiment driver: data, encoder, training, evaluation, cost bench.

Every command reads an ExperimentConfig, writes its artifacts into a run
directory together with a manifest (config hash, seeds, library versions),
and is deterministic for fixed seeds. Dataset splits are JSON arrays of
records {id, x, u, y_ref, s_ref}; metric logs and per-sample errors are CSV.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import BIOT_IC_EPS, RECIPES, get_problem
from .encoder import (Dictionary, fit_dictionary, load_dictionary, relative_mse,
                      save_dictionary)
from .errors import ConfigError, EvaluationError
from .fields import (GrfConfig, PointCloudSample, sample_grf, subsample_multires,
                     tensor_grid_2d, uniform_grid_1d)
from .nn import xavier_init
from .operator import (OperatorModel, TrainSchedule, assemble_loss, bound_gradients,
                       build_grid, load_checkpoint, predict, save_checkpoint, train)
from .oracles import oracle_antiderivative, oracle_biot1d, oracle_poisson2d
from .residuals import ResidualSpec
from . import tape as tp
from .nn import AdamState, adam_step

Array = np.ndarray

KAPPA_FLOOR = 0.05  # Biot inputs are resampled until min kappa clears this


@dataclass
class DataConfig:
    n_train: int
    n_test: int
    m_min: int
    m_max: int
    grf_mean: float = 0.0
    grf_lengthscale: float = 0.2
    fine_grid: tuple = (101,)
    ref_grid: tuple = None  # defaults to fine_grid (scalar cases) / collocation (biot)
    seed: int = 0


@dataclass
class EncoderConfig:
    tol: float = 1e-4
    max_bases: int = 10
    stage_epochs: int = 600
    lr: float = 1e-3
    lam: float = 1e-6
    hidden: tuple = (64, 64)
    omega0: float = 30.0
    seed: int = 1


@dataclass
class OperatorConfig:
    hidden: tuple = (128, 128, 128)
    input_width: int = None  # validated against Q + coord_dim when set
    activation: str = "mish"
    collocation: tuple = (100,)
    steps: int = 25000
    batch_size: int = 64
    lr: float = 5e-5
    constraint_mode: str = "hard"
    backend: str = "fd"
    log_every: int = 100
    seed: int = 2


@dataclass
class PathsConfig:
    data_dir: str = "data"
    dictionary: str = "encoder/dictionary.json"
    checkpoint: str = "train/checkpoint.json"


@dataclass
class PhysicsConfig:
    heat_kappa: float = 1.0
    heat_sign: str = "main_text"
    nu: float = 1.0
    a: float = 0.0
    ic_eps: float = BIOT_IC_EPS


@dataclass
class ExperimentConfig:
    benchmark: str
    data: DataConfig
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    operator: OperatorConfig = field(default_factory=OperatorConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        get_problem(self.benchmark)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for section in ("data", "encoder", "operator"):
            for key, value in doc[section].items():
                if isinstance(value, tuple):
                    doc[section][key] = list(value)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        def tup(d, *keys):
            for k in keys:
                if d.get(k) is not None:
                    d[k] = tuple(d[k])
        data = dict(doc["data"])
        tup(data, "fine_grid", "ref_grid")
        enc = dict(doc.get("encoder", {}))
        tup(enc, "hidden")
        op = dict(doc.get("operator", {}))
        tup(op, "hidden", "collocation")
        return cls(
            benchmark=doc["benchmark"],
            data=DataConfig(**data),
            encoder=EncoderConfig(**enc),
            operator=OperatorConfig(**op),
            physics=PhysicsConfig(**doc.get("physics", {})),
            paths=PathsConfig(**doc.get("paths", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def override_seed(self, seed: int) -> "ExperimentConfig":
        """Re-seed all stages from one base value (CLI --seed)."""
        return replace(
            self,
            data=replace(self.data, seed=seed),
            encoder=replace(self.encoder, seed=seed + 1),
            operator=replace(self.operator, seed=seed + 2),
        )


def preset(benchmark: str) -> ExperimentConfig:
    """Full-scale configurations with the published hyper-parameter defaults."""
    if benchmark == "antiderivative":
        return ExperimentConfig(
            benchmark="antiderivative",
            data=DataConfig(n_train=150, n_test=1000, m_min=10, m_max=60,
                            grf_lengthscale=0.2, fine_grid=(101,)),
            encoder=EncoderConfig(tol=1e-8, max_bases=10),
            operator=OperatorConfig(hidden=(128, 128, 128), input_width=11,
                                    activation="mish", collocation=(100,),
                                    steps=25000, batch_size=64, lr=5e-5),
        )
    if benchmark == "heat2d":
        return ExperimentConfig(
            benchmark="heat2d",
            data=DataConfig(n_train=800, n_test=200, m_min=100, m_max=280,
                            grf_lengthscale=0.2, fine_grid=(20, 20)),
            encoder=EncoderConfig(tol=1e-8, max_bases=57),
            operator=OperatorConfig(hidden=(128, 128, 128, 128), input_width=59,
                                    activation="mish", collocation=(20, 20),
                                    steps=25000, batch_size=64, lr=1e-4),
        )
    if benchmark == "biot":
        return ExperimentConfig(
            benchmark="biot",
            data=DataConfig(n_train=500, n_test=200, m_min=35, m_max=55,
                            grf_mean=1.25, grf_lengthscale=0.2, fine_grid=(101,),
                            ref_grid=(75, 75)),
            encoder=EncoderConfig(tol=1e-8, max_bases=10),
            operator=OperatorConfig(hidden=(100, 100, 100), input_width=12,
                                    activation="tanh", collocation=(75, 75),
                                    steps=50000, batch_size=64, lr=1e-4),
        )
    raise ConfigError(f"no preset for benchmark {benchmark!r}")


# ---------------------------------------------------------------------------
# dataset generation and IO

def _fine_locations(config: ExperimentConfig) -> Array:
    shape = config.data.fine_grid
    if len(shape) == 1:
        return uniform_grid_1d(shape[0])
    if len(shape) == 2:
        return tensor_grid_2d(shape[0], shape[1])
    raise ConfigError("fine_grid must be 1-D or 2-D")


def _ref_grid_shape(config: ExperimentConfig) -> tuple:
    if config.data.ref_grid is not None:
        return tuple(config.data.ref_grid)
    if config.benchmark == "biot":
        return tuple(config.operator.collocation)
    return tuple(config.data.fine_grid)


def _ref_locations(config: ExperimentConfig) -> Array:
    shape = _ref_grid_shape(config)
    return uniform_grid_1d(shape[0]) if len(shape) == 1 else tensor_grid_2d(*shape)


def _reference_solution(config: ExperimentConfig, field_on_fine: Array) -> dict:
    """Oracle outputs for one input field sampled on the fine grid."""
    shape = _ref_grid_shape(config)
    if config.benchmark == "antiderivative":
        return {"s": oracle_antiderivative(field_on_fine)}
    if config.benchmark == "heat2d":
        s = oracle_poisson2d(field_on_fine.reshape(config.data.fine_grid),
                             config.physics.heat_kappa)
        return {"s": s.ravel()}
    fine_y = np.linspace(0.0, 1.0, config.data.fine_grid[0])
    kappa = np.interp(np.linspace(0.0, 1.0, shape[0]), fine_y, field_on_fine)
    u, p = oracle_biot1d(kappa, nu=config.physics.nu, a=config.physics.a,
                         n_t=shape[1], ic_eps=config.physics.ic_eps)
    return {"u": u.ravel(), "p": p.ravel()}


def _draw_fields(config: ExperimentConfig, count: int, rng) -> Array:
    locations = _fine_locations(config)
    grf = GrfConfig(mean=config.data.grf_mean, lengthscale=config.data.grf_lengthscale,
                    grid=locations)
    if config.benchmark != "biot":
        return sample_grf(grf, rng, count)
    # conductivities must stay positive: resample rejected realizations
    fields = np.empty((count, locations.shape[0]))
    got = 0
    while got < count:
        draw = sample_grf(grf, rng, count - got)
        keep = draw.min(axis=1) >= KAPPA_FLOOR
        kept = draw[keep]
        fields[got:got + kept.shape[0]] = kept
        got += kept.shape[0]
    return fields


def generate_split(config: ExperimentConfig, count: int, rng, id_offset: int = 0) -> list:
    """Point-cloud samples with reference grids and oracle solutions attached."""
    locations = _fine_locations(config)
    y_ref = _ref_locations(config)
    fields = _draw_fields(config, count, rng)
    samples = []
    for i in range(count):
        s = subsample_multires(locations, fields[i], config.data.m_min,
                               config.data.m_max, rng, sample_id=id_offset + i)
        s.y_ref = y_ref
        s.s_ref = _reference_solution(config, fields[i])
        samples.append(s)
    return samples


def save_split(samples: list, path) -> None:
    records = []
    for s in samples:
        rec = {
            "id": s.id,
            "x": s.locations.tolist(),
            "u": s.values.tolist(),
        }
        if s.y_ref is not None:
            rec["y_ref"] = s.y_ref.tolist()
        if s.s_ref is not None:
            rec["s_ref"] = {k: np.asarray(v).tolist() for k, v in s.s_ref.items()}
        records.append(rec)
    with open(path, "w") as fh:
        json.dump(records, fh)


def load_split(path) -> list:
    with open(path) as fh:
        records = json.load(fh)
    samples = []
    for rec in records:
        samples.append(PointCloudSample(
            id=rec["id"],
            locations=np.asarray(rec["x"], dtype=np.float64),
            values=np.asarray(rec["u"], dtype=np.float64),
            y_ref=np.asarray(rec["y_ref"], dtype=np.float64) if "y_ref" in rec else None,
            s_ref={k: np.asarray(v, dtype=np.float64) for k, v in rec["s_ref"].items()}
            if "s_ref" in rec else None,
        ))
    return samples


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(config: ExperimentConfig, out_dir: Path, command: str) -> None:
    import scipy
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "seeds": {
            "data": config.data.seed,
            "encoder": config.encoder.seed,
            "operator": config.operator.seed,
        },
        "versions": {
            "resop": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


# ---------------------------------------------------------------------------
# commands

def cmd_generate_data(config: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.data.seed)
    train_samples = generate_split(config, config.data.n_train, rng)
    test_samples = generate_split(config, config.data.n_test, rng,
                                  id_offset=config.data.n_train)
    save_split(train_samples, out_dir / "train.json")
    save_split(test_samples, out_dir / "test.json")
    write_manifest(config, out_dir, "generate-data")
    return {"train": len(train_samples), "test": len(test_samples)}


def cmd_fit_encoder(config: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = load_split(Path(config.paths.data_dir) / "train.json")
    enc = config.encoder
    dictionary, report = fit_dictionary(
        samples, tol=enc.tol, max_bases=enc.max_bases, stage_epochs=enc.stage_epochs,
        lr=enc.lr, seed=enc.seed, hidden=enc.hidden, omega0=enc.omega0, lam=enc.lam,
    )
    if not report.reached_tol:
        warnings.warn(
            f"encoder stopped at {len(dictionary)} bases with error "
            f"{report.final_error:.3e} > tol {enc.tol:g}", RuntimeWarning,
        )
    save_dictionary(dictionary, out_dir / "dictionary.json")
    with open(out_dir / "reconstruction_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "relative_mse"])
        for s, err in zip(samples, report.sample_errors):
            writer.writerow([s.id, repr(float(err))])
    summary = {
        "n_bases": len(dictionary),
        "stage_errors": [[int(p), float(e)] for p, e in report.stage_errors],
        "final_error": report.final_error,
        "reached_tol": report.reached_tol,
        "gram_offdiag_mean": report.gram_offdiag_mean,
    }
    with open(out_dir / "encoder_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    write_manifest(config, out_dir, "fit-encoder")
    return summary


def _residual_spec(config: ExperimentConfig, backend: str = None) -> ResidualSpec:
    problem = get_problem(config.benchmark)
    return ResidualSpec(
        case=problem.residual_case,
        backend=backend or config.operator.backend,
        kappa=config.physics.heat_kappa,
        nu=config.physics.nu,
        a=config.physics.a,
        heat_sign=config.physics.heat_sign,
    )


def _build_models(config: ExperimentConfig, q: int, seed: int) -> dict:
    problem = get_problem(config.benchmark)
    width = q + problem.coord_dim
    if config.operator.input_width is not None and config.operator.input_width != width:
        raise ConfigError(
            f"configured input width {config.operator.input_width} != "
            f"embedding size {q} + coord_dim {problem.coord_dim}"
        )
    recipes = problem.recipes(config.operator.constraint_mode)
    domain = tuple((0.0, 1.0) for _ in range(problem.coord_dim))
    models = {}
    for k, f in enumerate(problem.fields):
        layers = (width, *config.operator.hidden, 1)
        models[f] = OperatorModel(
            mlp=xavier_init(layers, seed=seed + 17 * k,
                            activation=config.operator.activation),
            constraint=recipes[f], embedding_size=q, coord_dim=problem.coord_dim,
            domain=domain,
        )
    return models


def _embed_samples(dictionary: Dictionary, samples: list) -> Array:
    return np.vstack([dictionary.project_sample(s).alpha for s in samples])


def _reconstruct_inputs(config: ExperimentConfig, dictionary: Dictionary,
                        alphas: Array, grid) -> dict:
    """Per-sample reconstructed inputs needed by the residuals on `grid`."""
    if config.benchmark == "biot":
        y_nodes = uniform_grid_1d(grid.shape[0])
        kappa = np.vstack([dictionary.reconstruct(a, y_nodes) for a in alphas])
        bad = kappa.min(axis=1) < 1e-6
        if bad.any():
            # reconstructions may dip despite positive data; clamp to a floor
            warnings.warn(
                f"{int(bad.sum())} reconstructed conductivity fields clipped to 1e-6",
                RuntimeWarning,
            )
            kappa = np.maximum(kappa, 1e-6)
        return {"kappa": kappa}
    coords = grid.coords
    u = np.vstack([dictionary.reconstruct(a, coords) for a in alphas])
    return {"u": u.reshape(len(alphas), *grid.shape)}


def _reference_from_reconstruction(config: ExperimentConfig, dictionary: Dictionary,
                                   alphas: Array, ref_locations: Array) -> dict:
    """Oracle ground truth recomputed from each sample's reconstruction."""
    shape = _ref_grid_shape(config)
    out = {}
    if config.benchmark == "antiderivative":
        u = np.vstack([dictionary.reconstruct(a, ref_locations) for a in alphas])
        out["s"] = np.vstack([oracle_antiderivative(ui) for ui in u])
    elif config.benchmark == "heat2d":
        u = np.vstack([dictionary.reconstruct(a, ref_locations) for a in alphas])
        out["s"] = np.vstack([
            oracle_poisson2d(ui.reshape(shape), config.physics.heat_kappa).ravel()
            for ui in u
        ])
    else:
        y_nodes = uniform_grid_1d(shape[0])
        fields_u, fields_p = [], []
        for a in alphas:
            kappa = np.maximum(dictionary.reconstruct(a, y_nodes), 1e-6)
            u_f, p_f = oracle_biot1d(kappa, nu=config.physics.nu, a=config.physics.a,
                                     n_t=shape[1], ic_eps=config.physics.ic_eps)
            fields_u.append(u_f.ravel())
            fields_p.append(p_f.ravel())
        out["u"] = np.vstack(fields_u)
        out["p"] = np.vstack(fields_p)
    return out


def _prediction_errors(config: ExperimentConfig, models: dict, alphas: Array,
                       refs: dict, ref_locations: Array) -> dict:
    """Per-sample relative MSE of the constrained predictions, per output field."""
    problem = get_problem(config.benchmark)
    errors = {}
    for f in problem.fields:
        errs = np.empty(alphas.shape[0])
        for i, a in enumerate(alphas):
            pred = predict(models[f], a, ref_locations)
            errs[i] = relative_mse(refs[f][i], pred)
        errors[f] = errs
    return errors


def _metric_columns(log_rows: list) -> list:
    cols = ["step", "loss"]
    seen = set(cols)
    for row in log_rows:
        for key in row:
            if key not in seen:
                cols.append(key)
                seen.add(key)
    return cols


def write_metrics_csv(log_rows: list, columns: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in log_rows:
            writer.writerow([
                repr(float(row[c])) if c in row and isinstance(row[c], float)
                else row.get(c, "") for c in columns
            ])


def cmd_train(config: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = get_problem(config.benchmark)
    train_samples = load_split(Path(config.paths.data_dir) / "train.json")
    test_samples = load_split(Path(config.paths.data_dir) / "test.json")
    dictionary = load_dictionary(config.paths.dictionary)
    q = len(dictionary)

    alphas_train = _embed_samples(dictionary, train_samples)
    alphas_test = _embed_samples(dictionary, test_samples)
    box = tuple((0.0, 1.0) for _ in range(problem.coord_dim))
    grid = build_grid(box, config.operator.collocation)
    recon = _reconstruct_inputs(config, dictionary, alphas_train, grid)
    spec = _residual_spec(config)
    models = _build_models(config, q, config.operator.seed)

    ref_locations = _ref_locations(config)
    refs_train = _reference_from_reconstruction(config, dictionary, alphas_train,
                                                ref_locations)
    refs_test = _reference_from_reconstruction(config, dictionary, alphas_test,
                                               ref_locations)

    def eval_hook(mods, step):
        row = {}
        tr = _prediction_errors(config, mods, alphas_train, refs_train, ref_locations)
        te = _prediction_errors(config, mods, alphas_test, refs_test, ref_locations)
        for f in problem.fields:
            suffix = f"_{f}" if len(problem.fields) > 1 else ""
            row[f"train_err{suffix}"] = float(tr[f].mean())
            row[f"test_err{suffix}"] = float(te[f].mean())
        return row

    schedule = TrainSchedule(
        steps=config.operator.steps, batch_size=config.operator.batch_size,
        lr=config.operator.lr, seed=config.operator.seed,
        log_every=config.operator.log_every,
    )
    result = train(problem, models, alphas_train, recon, grid, spec, schedule,
                   eval_hook=eval_hook)
    save_checkpoint(result.models, out_dir / "checkpoint.json")
    write_metrics_csv(result.log, _metric_columns(result.log), out_dir / "metrics.csv")
    write_manifest(config, out_dir, "train")
    return {"final": result.log[-1] if result.log else {}}


def _percentile_id(errors: Array, ids: list, q: float) -> int:
    order = np.argsort(errors)
    pos = int(round(q * (len(ids) - 1)))
    return ids[order[pos]]


@dataclass
class ErrorStats:
    """Summary of per-sample relative errors for one split and output field."""

    mean: float
    std: float
    max: float
    q1: float
    worst_id: int
    q1_id: int

    @classmethod
    def from_errors(cls, errors: Array, ids: list) -> "ErrorStats":
        errors = np.asarray(errors, dtype=np.float64)
        if errors.size == 0:
            raise EvaluationError("no samples to aggregate")
        if np.any(errors < 0):
            raise EvaluationError("relative errors must be non-negative")
        return cls(
            mean=float(errors.mean()),
            std=float(errors.std()),
            max=float(errors.max()),
            q1=float(np.percentile(errors, 25)),
            worst_id=ids[int(np.argmax(errors))],
            q1_id=_percentile_id(errors, ids, 0.25),
        )


def cmd_evaluate(config: ExperimentConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = get_problem(config.benchmark)
    dictionary = load_dictionary(config.paths.dictionary)
    models = load_checkpoint(config.paths.checkpoint, RECIPES)

    stats: dict = {}
    for split in ("train", "test"):
        samples = load_split(Path(config.paths.data_dir) / f"{split}.json")
        if any(s.y_ref is None for s in samples):
            raise EvaluationError(f"{split} split carries no reference grid")
        ref_locations = samples[0].y_ref
        alphas = _embed_samples(dictionary, samples)
        refs = _reference_from_reconstruction(config, dictionary, alphas, ref_locations)
        errors = _prediction_errors(config, models, alphas, refs, ref_locations)
        ids = [s.id for s in samples]
        with open(out_dir / f"per_sample_{split}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id"] + [f"rel_mse_{f}" for f in problem.fields])
            for i, sid in enumerate(ids):
                writer.writerow([sid] + [repr(float(errors[f][i])) for f in problem.fields])
        stats[split] = {
            f: asdict(ErrorStats.from_errors(errors[f], ids)) for f in problem.fields
        }
    with open(out_dir / "error_stats.json", "w") as fh:
        json.dump(stats, fh, indent=2)
    write_manifest(config, out_dir, "evaluate")
    return stats


def cmd_bench_cost(config: ExperimentConfig, out_dir, steps: int = 300,
                   warmup: int = 30, min_timed: int = 100,
                   backends: tuple = ("fd", "autodiff")) -> dict:
    """Wall-clock per optimizer step, FD vs autodiff backends, plus loss parity.

    Both backends start from identical parameters and run the same number of
    steps on the same batches; timing covers loss construction + backward +
    optimizer update only (shared data preparation is excluded). The reported
    cost is sec_per_step(backends[1]) / sec_per_step(backends[0]).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = get_problem(config.benchmark)
    train_samples = load_split(Path(config.paths.data_dir) / "train.json")
    dictionary = load_dictionary(config.paths.dictionary)
    q = len(dictionary)
    alphas = _embed_samples(dictionary, train_samples)
    box = tuple((0.0, 1.0) for _ in range(problem.coord_dim))
    grid = build_grid(box, config.operator.collocation)
    recon = _reconstruct_inputs(config, dictionary, alphas, grid)
    if steps <= warmup + min_timed - 1:
        steps = warmup + min_timed

    report = {}
    keys = []
    for backend in backends:
        spec = _residual_spec(config, backend=backend)
        models = _build_models(config, q, config.operator.seed)
        states = {f: AdamState.init(models[f].mlp.arrays(), config.operator.lr)
                  for f in problem.fields}
        rng = np.random.default_rng(config.operator.seed)
        n = alphas.shape[0]
        order = rng.permutation(n)
        cursor = 0
        timed = 0.0
        timed_steps = 0
        last_loss = float("nan")
        for step in range(1, steps + 1):
            if cursor >= n:
                order = rng.permutation(n)
                cursor = 0
            idx = order[cursor:cursor + config.operator.batch_size]
            cursor += config.operator.batch_size
            batch_recon = {k: v[idx] for k, v in recon.items()}
            t0 = time.perf_counter()
            breakdown = assemble_loss(problem, models, alphas[idx], batch_recon,
                                      grid, spec, sample_ids=idx)
            grads = tp.grad(breakdown.tape, breakdown.total)
            for f in problem.fields:
                adam_step(states[f], models[f].mlp.arrays(),
                          bound_gradients(breakdown.tape, grads, models[f].mlp))
            dt = time.perf_counter() - t0
            last_loss = float(breakdown.total.value)
            if step > warmup:
                timed += dt
                timed_steps += 1
        key = backend if backend not in report else f"{backend}_b"
        keys.append(key)
        report[key] = {
            "sec_per_step": timed / timed_steps,
            "timed_steps": timed_steps,
            "final_loss": last_loss,
        }
    report["cost_ratio"] = (report[keys[1]]["sec_per_step"]
                            / report[keys[0]]["sec_per_step"])
    la, lb = report[keys[0]]["final_loss"], report[keys[1]]["final_loss"]
    report["loss_ratio"] = max(la, lb) / max(min(la, lb), 1e-300)
    with open(out_dir / "cost_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
    write_manifest(config, out_dir, "bench-cost")
    return report
