"""Bundled problem setup shared by the gradient drivers, CLI, and tests."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, meshing
from .constitutive import ViscosityModel
from .fields import AnalyticVectorField, BodyForce
from .functionals import DragContext, build_cutoff
from .geometry import ShapeConfig, fourier_direction_field
from .meshing import Mesh
from .solvers import TimeGrid, coriolis_tensor


@dataclass
class ProblemSetup:
    """Everything a drag/gradient computation needs, built once per shape."""

    shape: ShapeConfig
    mesh: Mesh
    space: fem.Space
    model: ViscosityModel
    C: np.ndarray
    force: BodyForce
    v0_field: AnalyticVectorField
    v0: np.ndarray  # projected divergence-free initial coefficients
    ctx: DragContext
    grid: TimeGrid
    mesh_seed: int = 0

    def direction_field(self, mode_index: int):
        return fourier_direction_field(self.shape, mode_index)


def make_problem(
    shape: ShapeConfig,
    model: ViscosityModel,
    omega: float,
    force: BodyForce,
    v0_field: AnalyticVectorField,
    grid: TimeGrid,
    h: float,
    drag_direction=(1.0, 0.0),
    cutoff_radii=None,
    mesh_seed: int = 0,
) -> ProblemSetup:
    shape = shape.validate()
    mesh = meshing.generate(shape, h, seed=mesh_seed)
    space = fem.Space(mesh)
    if cutoff_radii is None:
        rmax = shape.radial_range()[1]
        wall = float(np.abs(shape.container_distance(np.atleast_2d(shape.obstacle_center)))[0])
        cutoff_radii = (rmax + 0.3 * (wall - rmax), rmax + 0.8 * (wall - rmax))
    ctx = build_cutoff(shape, np.asarray(drag_direction, dtype=float), *cutoff_radii)
    v0q = v0_field.value(space.qp.reshape(-1, 2)).reshape(space.n_t, fem.N_QP, 2)
    v0 = fem.project_div_free(space, v0q)
    return ProblemSetup(
        shape=shape,
        mesh=mesh,
        space=space,
        model=model,
        C=coriolis_tensor(omega),
        force=force,
        v0_field=v0_field,
        v0=v0,
        ctx=ctx,
        grid=grid,
        mesh_seed=mesh_seed,
    )
