"""The three benchmark problems and their constraint recipes.

Each problem bundles: the output fields, the hard-constraint recipe per field
(phi vanishing on the Dirichlet/initial loci, P attaining the prescribed
values there), the residual case, and the loci used when constraints are
enforced softly instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .operator import ConstraintRecipe
from .oracles import BIOT_IC_EPS, regularized_step

Array = np.ndarray

_zeros = lambda y: np.zeros(np.atleast_2d(y).shape[0])


def _recipe_antiderivative() -> ConstraintRecipe:
    # phi = y, P = 0: pins s(0) = 0.
    return ConstraintRecipe(
        "antiderivative",
        phi=lambda y: np.atleast_2d(y)[:, 0].copy(),
        extension=_zeros,
        phi_grad=lambda y, axis: np.ones(np.atleast_2d(y).shape[0]),
        phi_hess=lambda y, axis: _zeros(y),
        extension_grad=lambda y, axis: _zeros(y),
        extension_hess=lambda y, axis: _zeros(y),
    )


def _recipe_heat2d() -> ConstraintRecipe:
    # phi = y1 (1-y1) y2 (1-y2), P = 0: pins s = 0 on all four sides.
    def phi(y):
        y = np.atleast_2d(y)
        return y[:, 0] * (1.0 - y[:, 0]) * y[:, 1] * (1.0 - y[:, 1])

    def phi_grad(y, axis):
        y = np.atleast_2d(y)
        other = y[:, 1 - axis] * (1.0 - y[:, 1 - axis])
        return (1.0 - 2.0 * y[:, axis]) * other

    def phi_hess(y, axis):
        y = np.atleast_2d(y)
        other = y[:, 1 - axis] * (1.0 - y[:, 1 - axis])
        return -2.0 * other

    return ConstraintRecipe(
        "heat2d", phi=phi, extension=_zeros, phi_grad=phi_grad, phi_hess=phi_hess,
        extension_grad=lambda y, axis: _zeros(y),
        extension_hess=lambda y, axis: _zeros(y),
    )


def _recipe_biot_pressure(eps: float = BIOT_IC_EPS) -> ConstraintRecipe:
    # Coordinates are (y, t). phi = y t vanishes on the p(0,t)=0 Dirichlet side
    # and at t=0; P = (1 - exp(-y/eps)) (1 - t) matches the regularized unit
    # initial pressure and stays zero at y=0.
    def phi(c):
        c = np.atleast_2d(c)
        return c[:, 0] * c[:, 1]

    def phi_grad(c, axis):
        c = np.atleast_2d(c)
        return c[:, 1].copy() if axis == 0 else c[:, 0].copy()

    def ext(c):
        c = np.atleast_2d(c)
        return regularized_step(c[:, 0], eps) * (1.0 - c[:, 1])

    def ext_grad(c, axis):
        c = np.atleast_2d(c)
        if axis == 0:
            return np.exp(-c[:, 0] / eps) / eps * (1.0 - c[:, 1])
        return -regularized_step(c[:, 0], eps)

    def ext_hess(c, axis):
        c = np.atleast_2d(c)
        if axis == 0:
            return -np.exp(-c[:, 0] / eps) / eps ** 2 * (1.0 - c[:, 1])
        return _zeros(c)

    return ConstraintRecipe(
        "biot_pressure", phi=phi, extension=ext,
        phi_grad=phi_grad, phi_hess=lambda c, axis: _zeros(c),
        extension_grad=ext_grad, extension_hess=ext_hess,
    )


def _recipe_biot_displacement() -> ConstraintRecipe:
    # phi = (1-y) t: pins u(1, t) = 0 and u(y, 0) = 0; P = 0.
    def phi(c):
        c = np.atleast_2d(c)
        return (1.0 - c[:, 0]) * c[:, 1]

    def phi_grad(c, axis):
        c = np.atleast_2d(c)
        return -c[:, 1] if axis == 0 else (1.0 - c[:, 0])

    return ConstraintRecipe(
        "biot_displacement", phi=phi, extension=_zeros,
        phi_grad=phi_grad, phi_hess=lambda c, axis: _zeros(c),
        extension_grad=lambda c, axis: _zeros(c),
        extension_hess=lambda c, axis: _zeros(c),
    )


RECIPES = {
    "antiderivative": _recipe_antiderivative(),
    "heat2d": _recipe_heat2d(),
    "biot_pressure": _recipe_biot_pressure(),
    "biot_displacement": _recipe_biot_displacement(),
}


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    coord_dim: int
    fields: tuple
    recipe_names: dict  # field -> recipe registry key
    residual_case: str

    def recipes(self, mode: str = "hard") -> dict:
        out = {}
        for f, key in self.recipe_names.items():
            r = RECIPES[key]
            out[f] = r if mode == "hard" else r.as_soft()
        return out

    def soft_loci(self, grid):
        """(field, kind, flat grid indices, target values) for soft penalties."""
        loci = []
        shape = grid.shape
        flat = np.arange(grid.size).reshape(shape)
        coords = grid.coords
        if self.name == "antiderivative":
            loci.append(("s", "ic", np.array([0]), np.array([0.0])))
        elif self.name == "heat2d":
            edge = np.concatenate([
                flat[0, :], flat[-1, :], flat[1:-1, 0], flat[1:-1, -1]
            ])
            loci.append(("s", "bc", edge, np.zeros(edge.shape[0])))
        else:
            # Dirichlet sides and initial rows; the Neumann data stay in the
            # always-on soft terms of the loss assembly.
            loci.append(("p", "bc", flat[0, :], np.zeros(shape[1])))
            loci.append(("u", "bc", flat[-1, :], np.zeros(shape[1])))
            ic_idx = flat[:, 0]
            p_ic = regularized_step(coords[ic_idx, 0], BIOT_IC_EPS)
            loci.append(("p", "ic", ic_idx, p_ic))
            loci.append(("u", "ic", ic_idx, np.zeros(shape[0])))
        return loci


PROBLEMS = {
    "antiderivative": BenchmarkProblem(
        "antiderivative", coord_dim=1, fields=("s",),
        recipe_names={"s": "antiderivative"}, residual_case="antiderivative",
    ),
    "heat2d": BenchmarkProblem(
        "heat2d", coord_dim=2, fields=("s",),
        recipe_names={"s": "heat2d"}, residual_case="heat2d",
    ),
    "biot": BenchmarkProblem(
        "biot", coord_dim=2, fields=("u", "p"),
        recipe_names={"u": "biot_displacement", "p": "biot_pressure"},
        residual_case="biot",
    ),
}


def get_problem(name: str) -> BenchmarkProblem:
    if name not in PROBLEMS:
        raise ConfigError(f"unknown benchmark {name!r}; choose from {sorted(PROBLEMS)}")
    return PROBLEMS[name]
