"""Gaussian-random-field inputs and their degradation into multi-resolution point clouds.

Input functions are drawn from a GP with squared-exponential covariance
k(x1, x2) = exp(-||x1 - x2||^2 / (2 l^2)) on a fine structured grid, then each
realization is subsampled to a random number of sensor locations so that no
two samples share a discretization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NumericalError

Array = np.ndarray

MAX_JITTER = 1e-6


def uniform_grid_1d(n: int, lo: float = 0.0, hi: float = 1.0) -> Array:
    """n equally spaced locations on [lo, hi], shaped (n, 1)."""
    return np.linspace(lo, hi, n)[:, None]


def tensor_grid_2d(n1: int, n2: int, box=((0.0, 1.0), (0.0, 1.0))) -> Array:
    """Row-major flattening of an n1 x n2 tensor-product grid, shaped (n1*n2, 2)."""
    a = np.linspace(box[0][0], box[0][1], n1)
    b = np.linspace(box[1][0], box[1][1], n2)
    A, B = np.meshgrid(a, b, indexing="ij")
    return np.column_stack([A.ravel(), B.ravel()])


def squared_exp_kernel(xa: Array, xb: Array, lengthscale: float) -> Array:
    """exp(-||x1-x2||^2 / (2 l^2)) for all location pairs."""
    xa = np.atleast_2d(np.asarray(xa, dtype=np.float64))
    xb = np.atleast_2d(np.asarray(xb, dtype=np.float64))
    sq = ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-sq / (2.0 * lengthscale ** 2))


@dataclass
class GrfConfig:
    """Sampling configuration: GP mean/lengthscale plus the fine grid it lives on."""

    mean: float
    lengthscale: float
    grid: Array
    jitter: float = 1e-10

    def __post_init__(self):
        if self.lengthscale <= 0:
            raise ConfigError("lengthscale must be positive")
        if self.jitter <= 0:
            raise ConfigError("jitter must be positive")
        self.grid = np.atleast_2d(np.asarray(self.grid, dtype=np.float64))
        uniq = np.unique(self.grid, axis=0)
        if uniq.shape[0] != self.grid.shape[0]:
            raise ConfigError("grid locations must be distinct")


@dataclass
class PointCloudSample:
    """One realization: scattered (location, value) pairs plus optional reference output."""

    id: int
    locations: Array
    values: Array
    y_ref: Optional[Array] = None
    s_ref: Optional[dict] = None  # field name -> values on y_ref

    def __post_init__(self):
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.locations.shape[0] != self.values.shape[0]:
            raise ConfigError("locations and values must have equal length")

    @property
    def size(self) -> int:
        return self.values.shape[0]


def _cholesky_with_jitter(cov: Array, jitter: float):
    """Cholesky of cov + jitter*I, escalating jitter x10 up to MAX_JITTER."""
    n = cov.shape[0]
    j = jitter
    while True:
        try:
            return np.linalg.cholesky(cov + j * np.eye(n)), j
        except np.linalg.LinAlgError:
            if j >= MAX_JITTER:
                raise NumericalError(
                    f"covariance not positive definite even with jitter {j:g}"
                )
            j *= 10.0


def sample_grf(config: GrfConfig, seed, count: int) -> Array:
    """Draw `count` realizations on the full grid; returns (count, n) rows = fields."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    cov = squared_exp_kernel(config.grid, config.grid, config.lengthscale)
    L, _ = _cholesky_with_jitter(cov, config.jitter)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal((count, cov.shape[0]))
    return config.mean + z @ L.T


def subsample_multires(locations: Array, values: Array, m_min: int, m_max: int,
                       seed, sample_id: int = 0) -> PointCloudSample:
    """Keep M_rand ~ Uniform{m_min..m_max} points of one full-grid field, without replacement."""
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64)
    m = locations.shape[0]
    if not (0 < m_min <= m_max <= m):
        raise ConfigError(f"need 0 < m_min <= m_max <= {m}, got [{m_min}, {m_max}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m_rand = int(rng.integers(m_min, m_max + 1))
    idx = rng.choice(m, size=m_rand, replace=False)
    return PointCloudSample(id=sample_id, locations=locations[idx], values=values[idx])
