"""Drag functional in boundary, volume, and fixed-domain transformed forms.

The volume form tests the momentum balance against a divergence-free
cutoff field equal to the drag direction near the obstacle, which needs
no boundary traces and is the canonical J for all gradient formulas; the
boundary form integrates the traction directly and serves as the less
accurate cross-check.  The transformed form evaluates the perturbed-domain
functional on the fixed mesh and is bitwise the volume form at eps = 0.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from . import fem
from .constitutive import ViscosityModel
from .fem import N_QP, Space, TransformData, identity_transform
from .fields import AnalyticVectorField, BodyForce, BumpProfile
from .geometry import DeformationField, ShapeConfig
from .solvers import FlowTrajectory


@dataclass(frozen=True)
class DragContext:
    """Drag direction and the divergence-free cutoff used by the volume form."""

    d: np.ndarray
    xi: AnalyticVectorField
    r_in: float
    r_out: float
    center: tuple = (0.0, 0.0)

    def with_field(self, xi: AnalyticVectorField) -> "DragContext":
        return replace(self, xi=xi)


def build_cutoff(shape: ShapeConfig, d, r_in: float, r_out: float) -> DragContext:
    """Cutoff field xi = perp-grad(chi * psi) with stream psi = d1 x2 - d2 x1.

    chi is a quintic C^2 radial cutoff about the obstacle center (one inside
    r_in, zero outside r_out), so xi is divergence-free identically, equals
    d where chi is one, and vanishes near the container wall.
    """
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-12:
        raise ValueError("drag direction must be a unit vector")
    c = np.asarray(shape.obstacle_center, dtype=float)
    rmax = shape.radial_range()[1]
    pts = shape.obstacle_points(np.linspace(0, 2 * np.pi, 256, endpoint=False))
    wall = float(np.abs(shape.container_distance(np.atleast_2d(c)))[0])
    if not (rmax < r_in < r_out < wall):
        raise ValueError(
            f"cutoff radii must satisfy obstacle({rmax:.3g}) < r_in < r_out < wall({wall:.3g})"
        )
    chi = BumpProfile(0.0, 0.0, r_in, r_out)

    def _frames(X):
        X = np.asarray(X, dtype=float)
        u = X - c
        r = np.linalg.norm(u, axis=1)
        e = u / np.maximum(r, 1e-300)[:, None]
        psi = d[0] * X[:, 1] - d[1] * X[:, 0]
        gpsi = np.broadcast_to(np.array([-d[1], d[0]]), (len(X), 2))
        return X, u, r, e, psi, gpsi

    def value(X):
        X, u, r, e, psi, gpsi = _frames(X)
        gw = chi.d1(r)[:, None] * e * psi[:, None] + chi.val(r)[:, None] * gpsi
        return np.stack([gw[:, 1], -gw[:, 0]], axis=1)

    def grad(X):
        X, u, r, e, psi, gpsi = _frames(X)
        t = np.stack([-e[:, 1], e[:, 0]], axis=1)
        rr = np.maximum(r, 1e-300)
        H = (
            chi.d2(r)[:, None, None] * e[:, :, None] * e[:, None, :]
            + (chi.d1(r) / rr)[:, None, None] * t[:, :, None] * t[:, None, :]
        ) * psi[:, None, None]
        H += chi.d1(r)[:, None, None] * (
            e[:, :, None] * gpsi[:, None, :] + gpsi[:, :, None] * e[:, None, :]
        )
        G = np.empty((len(X), 2, 2))
        G[:, 0, :] = H[:, 1, :]
        G[:, 1, :] = -H[:, 0, :]
        return G

    xi = AnalyticVectorField(value=value, grad=grad, name="drag_cutoff")
    return DragContext(d=d, xi=xi, r_in=r_in, r_out=r_out, center=tuple(c))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _stress_at(model: ViscosityModel, Dv):
    s = np.einsum("eqab,eqab->eq", Dv, Dv)
    return model.nu(s)[..., None, None] * Dv


def _drag_eval(
    space: Space,
    traj: FlowTrajectory,
    ctx: DragContext,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0,
    td: TransformData,
) -> float:
    """Shared volume-form evaluator; identity weights give the plain form.

    The identity and transformed cases run the same expressions on the
    respective weight tables, so equal tables give bitwise-equal values.
    """
    C = np.asarray(C, dtype=float)
    X = space.qp.reshape(-1, 2)
    xi = ctx.xi.value(X).reshape(space.n_t, N_QP, 2)
    gxi = ctx.xi.grad(X).reshape(space.n_t, N_QP, 2, 2)
    # grad(N^{-T} xi) via the pointwise derivative of N^{-T}
    gxi_t = np.einsum("eqal,eqlb->eqab", td.NiT, gxi) + np.einsum(
        "eqalb,eql->eqab", td.dNiT, xi
    )
    dt = traj.grid.dt
    N = traj.grid.n_steps
    times = traj.grid.times()

    dv_end = space.eval_u(traj.u[N]) - space.eval_u(v0)
    J = space.integrate(np.einsum("eqab,eqb,eqa->eq", td.Wt, dv_end, xi))
    for n in range(1, N + 1):
        un = traj.u[n]
        v = space.eval_u(un)
        Dv = fem.eval_deps(space, td, un)
        S = _stress_at(model, Dv)
        fy = force.value(times[n], td.y_qp.reshape(-1, 2)).reshape(space.n_t, N_QP, 2)
        # g (N^{-1} C N^{-T} v - N^{-1} f o y) . xi
        vec = td.gdet[..., None] * (
            np.einsum("eqab,bc,eqdc,eqd->eqa", td.Ninv, C, td.Ninv, v)
            - np.einsum("eqab,eqb->eqa", td.Ninv, fy)
        )
        term = np.einsum("eqa,eqa->eq", vec, xi)
        # (N^T S - v x N^{-T}v) : grad(N^{-T} xi)
        NS = np.einsum("eqla,eqlb->eqab", td.N, S)
        bv = np.einsum("eqab,eqb->eqa", td.NiT, v)
        mat = NS - v[..., :, None] * bv[..., None, :]
        term += np.einsum("eqab,eqab->eq", mat, gxi_t)
        J += dt * space.integrate(term)
    return float(J)


def drag_volume(
    space: Space,
    traj: FlowTrajectory,
    ctx: DragContext,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0,
) -> float:
    """Volume form of J with right-endpoint time sums (the canonical J)."""
    return _drag_eval(space, traj, ctx, model, C, force, v0, identity_transform(space))


def drag_transformed(
    space: Space,
    traj_eps: FlowTrajectory,
    ctx: DragContext,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0_eps,
    td: TransformData,
) -> float:
    """J(Omega_eps) evaluated on the fixed mesh from the transformed solve.

    ``td`` must be the same transform tables the trajectory was solved
    with; at eps = 0 the value is bitwise ``drag_volume``.
    """
    return _drag_eval(space, traj_eps, ctx, model, C, force, v0_eps, td)


def drag_boundary(space: Space, traj: FlowTrajectory, model: ViscosityModel, d) -> float:
    """Boundary form: time-integrated traction flux through the obstacle."""
    d = np.asarray(d, dtype=float)
    sel = space.obstacle_edges()
    nrm = space.bnormal[sel]
    dt = traj.grid.dt
    out = 0.0
    for n in range(1, traj.grid.n_steps + 1):
        G = space.trace_grad_u(traj.u[n], sel)
        Dv = 0.5 * (G + np.swapaxes(G, 2, 3))
        s2 = np.einsum("eqab,eqab->eq", Dv, Dv)
        S = model.nu(s2)[..., None, None] * Dv
        p = space.trace_p(traj.p[n], sel)
        tr = np.einsum("eqab,eb->eqa", S, nrm) - p[..., None] * nrm[:, None, :]
        out += dt * space.integrate_boundary(tr @ d, sel)
    return float(out)


# ---------------------------------------------------------------------------
# run log
# ---------------------------------------------------------------------------


def log_drag(path, run_id: str, formula: str, eps: float, value: float):
    """Append one J evaluation to the CSV run log."""
    new = not os.path.exists(path)
    with open(path, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["run_id", "formula", "eps", "value"])
        w.writerow([run_id, formula, f"{eps:.16g}", f"{value:.16g}"])
