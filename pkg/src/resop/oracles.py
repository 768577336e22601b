"""Reference solvers producing ground-truth output fields for evaluation.

These routines are deliberately independent of the learning stack: they use
direct quadrature / sparse linear algebra only, so they can serve as oracles
for the trained operators and for the finite-difference residual modules.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError

Array = np.ndarray

BIOT_IC_EPS = 0.01  # width of the regularized initial-pressure layer


def oracle_antiderivative(u: Array, lo: float = 0.0, hi: float = 1.0) -> Array:
    """Cumulative trapezoid of u on a uniform grid of [lo, hi], with s(lo) = 0."""
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.shape[0] < 2:
        raise ConfigError("need >= 2 nodes on a 1-D uniform grid")
    h = (hi - lo) / (u.shape[0] - 1)
    s = np.empty_like(u)
    s[0] = 0.0
    np.cumsum(0.5 * h * (u[1:] + u[:-1]), out=s[1:])
    return s


def oracle_poisson2d(u: Array, kappa: float = 1.0, box=((0.0, 1.0), (0.0, 1.0))) -> Array:
    """Solve -kappa * Laplacian(s) = u with s = 0 on all four sides.

    `u` is given on the full n1 x n2 tensor grid (including boundary rows); the
    solution is returned on the same grid with its boundary pinned to zero.
    Uses the standard 5-point stencil and a direct sparse solve.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or min(u.shape) < 4:
        raise ConfigError("need a full n1 x n2 grid with n >= 4 per axis")
    if kappa <= 0:
        raise ConfigError("kappa must be positive")
    n1, n2 = u.shape
    h1 = (box[0][1] - box[0][0]) / (n1 - 1)
    h2 = (box[1][1] - box[1][0]) / (n2 - 1)
    m1, m2 = n1 - 2, n2 - 2
    d1 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m1, m1)) / h1 ** 2
    d2 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m2, m2)) / h2 ** 2
    lap = sp.kronsum(d2, d1)  # acts on row-major flattened (m1, m2) interior
    a = (-kappa * lap).tocsc()
    rhs = u[1:-1, 1:-1].ravel()
    sol = spla.spsolve(a, rhs)
    resid = np.linalg.norm(a @ sol - rhs)
    if not np.isfinite(sol).all() or resid > 1e-10 * (1.0 + np.linalg.norm(rhs)):
        raise NumericalError("Poisson solve did not reach the required residual")
    s = np.zeros((n1, n2))
    s[1:-1, 1:-1] = sol.reshape(m1, m2)
    return s


def terzaghi_series(y: Array, t, n_terms: int = 50, diffusivity: float = 1.0) -> Array:
    """Classical consolidation pressure with drainage at y=0, no-flux at y=1.

    p(y, t) = sum_n 4/((2n+1) pi) * sin((2n+1) pi y / 2) * exp(-((2n+1) pi/2)^2 c t)
    for the unit initial overpressure p(y, 0+) = 1.
    """
    y = np.asarray(y, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    p = np.zeros(np.broadcast_shapes(y.shape, t.shape))
    for n in range(n_terms):
        k = (2 * n + 1) * np.pi / 2.0
        p += (2.0 / k) * np.sin(k * y) * np.exp(-k * k * diffusivity * t)
    return p


def regularized_step(y: Array, eps: float) -> Array:
    """Smoothed Biot initial pressure: 0 at y=0, ~1 away from it (layer width eps)."""
    return 1.0 - np.exp(-np.asarray(y, dtype=np.float64) / eps)


def oracle_biot1d(kappa: Array, nu: float = 1.0, a: float = 0.0,
                  n_t: int = 75, t_final: float = 1.0, ic_eps: float = BIOT_IC_EPS,
                  time_substeps: int = 16):
    """Implicit monolithic solve of 1-D consolidation; returns (u, p) on (n_y, n_t).

    Governing system (effective-stress convention):
        nu u_yy - p_y = 0
        d/dt(a p + u_y) - d/dy(kappa p_y) = 0
    with traction nu u_y = -1 at y=0, u = 0 at y=1, p = 0 at y=0,
    kappa p_y = 0 at y=1, u(y,0) = 0 and the regularized unit initial pressure.
    `kappa` holds nodal conductivities on the uniform spatial grid. Each output
    step is integrated with `time_substeps` backward-Euler substeps.
    """
    kappa = np.asarray(kappa, dtype=np.float64)
    n_y = kappa.shape[0]
    if n_y < 4 or n_t < 2:
        raise ConfigError("need n_y >= 4 and n_t >= 2")
    if np.any(kappa <= 0):
        raise ConfigError("kappa must be positive at every node")
    if a < 0 or nu <= 0:
        raise ConfigError("need a >= 0 and nu > 0")
    dy = 1.0 / (n_y - 1)
    dt = t_final / (n_t - 1) / time_substeps
    y = np.linspace(0.0, 1.0, n_y)

    # Unknown ordering: [u_0 .. u_{ny-1}, p_0 .. p_{ny-1}].
    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    iu = lambda j: j
    ip = lambda j: n_y + j

    # Mechanics rows: interior central stencil, one-sided traction at y=0, u(1)=0.
    for j in range(1, n_y - 1):
        add(iu(j), iu(j - 1), nu / dy ** 2)
        add(iu(j), iu(j), -2.0 * nu / dy ** 2)
        add(iu(j), iu(j + 1), nu / dy ** 2)
        add(iu(j), ip(j - 1), 1.0 / (2.0 * dy))
        add(iu(j), ip(j + 1), -1.0 / (2.0 * dy))
    add(iu(0), iu(0), -3.0 * nu / (2.0 * dy))
    add(iu(0), iu(1), 4.0 * nu / (2.0 * dy))
    add(iu(0), iu(2), -nu / (2.0 * dy))
    add(iu(n_y - 1), iu(n_y - 1), 1.0)

    # Flow rows: backward Euler in time, conservative diffusion in space.
    kface = 0.5 * (kappa[:-1] + kappa[1:])  # interface conductivities
    for j in range(1, n_y - 1):
        add(ip(j), ip(j), a / dt + (kface[j - 1] + kface[j]) / dy ** 2)
        add(ip(j), ip(j - 1), -kface[j - 1] / dy ** 2)
        add(ip(j), ip(j + 1), -kface[j] / dy ** 2)
        add(ip(j), iu(j - 1), -1.0 / (2.0 * dy * dt))
        add(ip(j), iu(j + 1), 1.0 / (2.0 * dy * dt))
    add(ip(0), ip(0), 1.0)
    # No-flux end: mirrored stencil (ghost p_{n} = p_{n-2}); keeps the M-matrix
    # structure, so no extrapolation overshoot. u_y there is one-sided.
    j = n_y - 1
    add(ip(j), ip(j), a / dt + 2.0 * kface[j - 1] / dy ** 2)
    add(ip(j), ip(j - 1), -2.0 * kface[j - 1] / dy ** 2)
    add(ip(j), iu(j), 3.0 / (2.0 * dy * dt))
    add(ip(j), iu(j - 1), -4.0 / (2.0 * dy * dt))
    add(ip(j), iu(j - 2), 1.0 / (2.0 * dy * dt))

    mat = sp.csc_matrix((vals, (rows, cols)), shape=(2 * n_y, 2 * n_y))
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        raise NumericalError(f"Biot step matrix is singular: {exc}") from None

    u_out = np.zeros((n_y, n_t))
    p_out = np.zeros((n_y, n_t))
    u_prev = np.zeros(n_y)
    p_prev = regularized_step(y, ic_eps)
    p_out[:, 0] = p_prev

    rhs = np.zeros(2 * n_y)
    for q in range(1, n_t):
        for _ in range(time_substeps):
            rhs[:] = 0.0
            rhs[iu(0)] = -1.0  # applied traction
            duy = (u_prev[2:] - u_prev[:-2]) / (2.0 * dy)
            rhs[n_y + 1:2 * n_y - 1] = a * p_prev[1:-1] / dt + duy / dt
            duy_end = (3.0 * u_prev[-1] - 4.0 * u_prev[-2] + u_prev[-3]) / (2.0 * dy)
            rhs[2 * n_y - 1] = a * p_prev[-1] / dt + duy_end / dt
            sol = lu.solve(rhs)
            step_resid = np.linalg.norm(mat @ sol - rhs)
            if not np.isfinite(sol).all() or step_resid > 1e-10 * (1.0 + np.linalg.norm(rhs)):
                raise NumericalError("Biot step solve did not reach the required residual")
            u_prev = sol[:n_y]
            p_prev = sol[n_y:]
        u_out[:, q] = u_prev
        p_out[:, q] = p_prev
    return u_out, p_out
