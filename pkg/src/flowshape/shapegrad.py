"""Shape derivative of the drag by three mutually cross-checkable formulas.

Route 1 (material): solve the linearized system with the geometric load
A0' and transported initial datum, then dJ = J_v(tilde v) + J_e(T).  The
load and both functional parts are assembled as the exact derivative in
the perturbation magnitude of the discrete transformed system and
functional, so the Taylor remainder against the fixed-domain finite
difference is genuinely second order and degree-1 homogeneity in T holds
to roundoff.

Route 2 (shape-derivative volume form): solve the linearized system with
boundary datum -dv/dn (T.n) on the obstacle and evaluate the volume-form
gradient plus the boundary force term.

Route 3 (adjoint boundary form): one backward adjoint solve localizes the
gradient on the obstacle boundary; the terminal incompatibility is cut
back by delta (default two time steps) and exposed through a delta sweep.

Finite differences on the fixed-domain route and on deformed meshes with
the Piola-transported cutoff arbitrate all formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, meshing
from .constitutive import ViscosityModel
from .fem import N_QP, Space, identity_transform
from .fields import AnalyticVectorField, BodyForce
from .functionals import DragContext, drag_transformed, drag_volume, _stress_at
from .geometry import DeformationField, ShapeConfig, piola_transform, transform_quantities
from .meshing import OBSTACLE
from .problem import ProblemSetup
from .solvers import FlowTrajectory, LinearizedOperator, solve_state, solve_state_transformed


# ---------------------------------------------------------------------------
# transported data
# ---------------------------------------------------------------------------


def transported_initial_datum(space: Space, v0_field, T: DeformationField, eps: float):
    """Divergence-free projection of N^T (v0 o y) for the transformed solve."""
    X = space.qp.reshape(-1, 2)
    tq = transform_quantities(T, eps, X)
    v0y = v0_field.value(X + eps * T.value(X))
    vals = np.einsum("nji,nj->ni", tq.N, v0y).reshape(space.n_t, N_QP, 2)
    return fem.project_div_free(space, vals)


def material_initial_datum(space: Space, v0_field, T: DeformationField):
    """Projection of O^T v0 + (grad v0) T, the derivative of the datum above."""
    X = space.qp.reshape(-1, 2)
    tq = transform_quantities(T, 0.0, X)
    v0 = v0_field.value(X)
    g0 = v0_field.grad(X)
    vals = np.einsum("nji,nj->ni", tq.O, v0) + np.einsum("nij,nj->ni", g0, T.value(X))
    return fem.project_div_free(space, vals.reshape(space.n_t, N_QP, 2))


@dataclass
class MaterialData:
    """Dual-pairing provider for the geometric load plus the initial field."""

    provider: object  # callable (n, t) -> dual vector over velocity dofs
    tilde_v0: np.ndarray


def assemble_A0prime(
    space: Space,
    model: ViscosityModel,
    C,
    force: BodyForce,
    state: FlowTrajectory,
    T: DeformationField,
    v0_field=None,
) -> MaterialData:
    """Weak form of the geometric load, exactly dual to the transformed system.

    Every divergence is integrated by parts onto the test gradient; the
    terms that carry the transform matrix outside a divergence pair against
    grad(O^T phi), and the body-force derivative term pairs directly with
    the analytic gradient of f so that the assembled functional is the
    exact eps-derivative of the discrete transformed residual (the time
    factor uses the backward difference of the state trajectory for the
    same reason).
    """
    C = np.asarray(C, dtype=float)
    otab = fem.build_transform(space, T, 0.0)
    O, trO, dO, Tq = otab.O, otab.trO, otab.dO, otab.Tq
    dt = state.grid.dt
    times = state.grid.times()
    Xflat = space.qp.reshape(-1, 2)

    def provider(n, t):
        un = state.u[n]
        v = space.eval_u(un)
        dvdt = space.eval_u((state.u[n] - state.u[n - 1]) / dt)
        Gv = space.eval_grad_u(un)
        Dv = 0.5 * (Gv + np.swapaxes(Gv, 2, 3))
        s = np.einsum("eqab,eqab->eq", Dv, Dv)
        nu = model.nu(s)
        nup = model.nu_prime(s)
        S = nu[..., None, None] * Dv

        Ogv = np.einsum("eqal,eqlb->eqab", O, Gv)
        gOv = np.einsum("eqkab,eqk->eqab", dO, v) + np.einsum("eqka,eqkb->eqab", O, Gv)
        E = 0.5 * ((Ogv - gOv) + np.swapaxes(Ogv - gOv, 2, 3)) - trO[..., None, None] * Dv
        SpE = nu[..., None, None] * E + (
            2.0 * nup * np.einsum("eqab,eqab->eq", Dv, E)
        )[..., None, None] * Dv

        Ov = np.einsum("eqka,eqk->eqa", O, v)
        Cv = np.einsum("ab,eqb->eqa", C, v)
        fq = force.value(t, Xflat).reshape(space.n_t, N_QP, 2)
        gf = force.grad(t, Xflat).reshape(space.n_t, N_QP, 2, 2)

        vec = (
            np.einsum("eqab,eqb->eqa", O, dvdt)
            + np.einsum("eqba,eqb->eqa", O, dvdt)
            - trO[..., None] * dvdt
            + np.einsum("eqab,eqb->eqa", O, Cv)
            - trO[..., None] * Cv
            + np.einsum("ab,eqb->eqa", C, Ov)
            + trO[..., None] * fq
            - np.einsum("eqab,eqb->eqa", O, fq)
            + np.einsum("eqab,eqb->eqa", gf, Tq)
        )
        OtS = np.einsum("eqla,eqlb->eqab", O, S)
        mat = -(SpE + OtS) - v[..., :, None] * Ov[..., None, :]
        mat_O = S - v[..., :, None] * v[..., None, :]
        return fem.assemble_load(space, vec=vec, mat=mat, mat_O=mat_O, td=otab)

    tilde_v0 = (
        material_initial_datum(space, v0_field, T)
        if v0_field is not None
        else np.zeros(space.n_u)
    )
    return MaterialData(provider=provider, tilde_v0=tilde_v0)


def solve_tilde_v(
    space: Space,
    model: ViscosityModel,
    C,
    force: BodyForce,
    state: FlowTrajectory,
    T: DeformationField,
    v0_field,
    op: LinearizedOperator | None = None,
) -> FlowTrajectory:
    """Material-type derivative trajectory (linearized solve with load A0')."""
    data = assemble_A0prime(space, model, C, force, state, T, v0_field)
    if op is None:
        op = LinearizedOperator(space, model, C, state)
    return op.solve_forward(F=data.provider, u0=data.tilde_v0)


# ---------------------------------------------------------------------------
# the three gradient formulas
# ---------------------------------------------------------------------------


def _xi_tables(space: Space, ctx: DragContext):
    X = space.qp.reshape(-1, 2)
    xi = ctx.xi.value(X).reshape(space.n_t, N_QP, 2)
    gxi = ctx.xi.grad(X).reshape(space.n_t, N_QP, 2, 2)
    return xi, gxi


def dJ_material(
    space: Space,
    state: FlowTrajectory,
    tilde: FlowTrajectory,
    ctx: DragContext,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0,
    tilde_v0,
    T: DeformationField,
):
    """Gradient as dynamical part J_v(tilde v) plus geometrical part J_e(T)."""
    C = np.asarray(C, dtype=float)
    xi, gxi = _xi_tables(space, ctx)
    otab = fem.build_transform(space, T, 0.0)
    O, trO, dO, Tq = otab.O, otab.trO, otab.dO, otab.Tq
    dt = state.grid.dt
    Nst = state.grid.n_steps
    times = state.grid.times()

    # J_v
    dte = space.eval_u(tilde.u[Nst]) - space.eval_u(tilde_v0)
    J_v = space.integrate(np.einsum("eqa,eqa->eq", dte, xi))
    for n in range(1, Nst + 1):
        v = space.eval_u(state.u[n])
        w = space.eval_u(tilde.u[n])
        Gv = space.eval_grad_u(state.u[n])
        Gw = space.eval_grad_u(tilde.u[n])
        Dv = 0.5 * (Gv + np.swapaxes(Gv, 2, 3))
        Dw = 0.5 * (Gw + np.swapaxes(Gw, 2, 3))
        s = np.einsum("eqab,eqab->eq", Dv, Dv)
        SpDw = model.nu(s)[..., None, None] * Dw + (
            2.0 * model.nu_prime(s) * np.einsum("eqab,eqab->eq", Dv, Dw)
        )[..., None, None] * Dv
        Cw = np.einsum("ab,eqb->eqa", C, w)
        mat = SpDw - w[..., :, None] * v[..., None, :] - v[..., :, None] * w[..., None, :]
        J_v += dt * space.integrate(
            np.einsum("eqa,eqa->eq", Cw, xi) + np.einsum("eqab,eqab->eq", mat, gxi)
        )

    # J_e
    dve = space.eval_u(state.u[Nst]) - space.eval_u(v0)
    w_end = trO[..., None] * dve - np.einsum("eqab,eqb->eqa", O, dve) - np.einsum(
        "eqba,eqb->eqa", O, dve
    )
    J_e = space.integrate(np.einsum("eqa,eqa->eq", w_end, xi))
    for n in range(1, Nst + 1):
        v = space.eval_u(state.u[n])
        Gv = space.eval_grad_u(state.u[n])
        Dv = 0.5 * (Gv + np.swapaxes(Gv, 2, 3))
        s = np.einsum("eqab,eqab->eq", Dv, Dv)
        nu = model.nu(s)
        nup = model.nu_prime(s)
        S = nu[..., None, None] * Dv
        Ogv = np.einsum("eqal,eqlb->eqab", O, Gv)
        gOv = np.einsum("eqkab,eqk->eqab", dO, v) + np.einsum("eqka,eqkb->eqab", O, Gv)
        E = 0.5 * ((Ogv - gOv) + np.swapaxes(Ogv - gOv, 2, 3)) - trO[..., None, None] * Dv
        SpE = nu[..., None, None] * E + (
            2.0 * nup * np.einsum("eqab,eqab->eq", Dv, E)
        )[..., None, None] * Dv
        Cv = np.einsum("ab,eqb->eqa", C, v)
        Ov = np.einsum("eqka,eqk->eqa", O, v)
        fq = force.value(times[n], space.qp.reshape(-1, 2)).reshape(space.n_t, N_QP, 2)
        gf = force.grad(times[n], space.qp.reshape(-1, 2)).reshape(space.n_t, N_QP, 2, 2)
        vec = (
            trO[..., None] * Cv
            - np.einsum("eqab,eqb->eqa", O, Cv)
            - np.einsum("ab,eqb->eqa", C, Ov)
            - trO[..., None] * fq
            + np.einsum("eqab,eqb->eqa", O, fq)
            - np.einsum("eqab,eqb->eqa", gf, Tq)
        )
        OtS = np.einsum("eqla,eqlb->eqab", O, S)
        mat = v[..., :, None] * Ov[..., None, :] + SpE + OtS
        gOxi_n = np.einsum("eqkab,eqk->eqab", dO, xi) + np.einsum(
            "eqka,eqkb->eqab", O, gxi
        )
        mat2 = v[..., :, None] * v[..., None, :] - S
        J_e += dt * space.integrate(
            np.einsum("eqa,eqa->eq", vec, xi)
            + np.einsum("eqab,eqab->eq", mat, gxi)
            + np.einsum("eqab,eqab->eq", mat2, gOxi_n)
        )
    return float(J_v + J_e), float(J_v), float(J_e)


class _ObstacleNodeGradients:
    """Patch-recovered P2 gradient at obstacle boundary nodes.

    The raw element gradient of a quadratic field is only first-order
    accurate at boundary nodes; a least-squares linear fit of the gradient
    sampled at the patch's edge midpoints and centroids (where it is
    markedly more accurate) restores the order needed by the shape
    derivative's boundary datum.  The patch of a node contains every
    element within two layers of the node.
    """

    def __init__(self, space: Space):
        self.space = space
        nodes = space.boundary_nodes((OBSTACLE,))
        self.nodes = nodes
        pos = space.node_coords[nodes]
        self.pos = pos
        node_set = {int(n): k for k, n in enumerate(nodes)}
        hits = [set() for _ in nodes]
        touch = {}
        for e in range(space.n_t):
            for k in range(6):
                touch.setdefault(int(space.tri_nodes[e, k]), []).append(e)
        for e in range(space.n_t):
            for k in range(6):
                g = int(space.tri_nodes[e, k])
                if g in node_set:
                    slot = node_set[g]
                    hits[slot].add(e)
                    # second layer through the element's vertex neighbors
                    for kk in range(6):
                        for e2 in touch[int(space.tri_nodes[e, kk])]:
                            hits[slot].add(e2)
        # sample points per element: 3 edge midpoints + centroid (ref coords)
        sample_bary = np.array(
            [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [1 / 3, 1 / 3, 1 / 3]]
        )
        self._dref = fem.ref_p2_grad_bary(sample_bary)  # (4,6,2)
        N2s = fem.ref_p2(sample_bary)
        self.patches = []
        pts = space.mesh.points
        tris = space.mesh.triangles
        for slot, els in enumerate(hits):
            els = sorted(els)
            xs = []
            for e in els:
                v = pts[tris[e]]
                xs.append(sample_bary @ v)
            xs = np.concatenate(xs)  # (4*len(els), 2)
            A = np.column_stack(
                [np.ones(len(xs)), xs[:, 0] - pos[slot, 0], xs[:, 1] - pos[slot, 1]]
            )
            # pseudo-inverse row extracting the fit value at the node
            coefrow = np.linalg.pinv(A)[0]
            self.patches.append((np.array(els), coefrow))

    def gradients(self, u):
        space = self.space
        Cel = space.gather(u).reshape(space.n_t, 6, 2)
        out = np.zeros((len(self.nodes), 2, 2))
        for slot, (els, coefrow) in enumerate(self.patches):
            # gradient samples at the 4 points of each patch element
            G = np.einsum("skm,emb->eskb", self._dref, space.Jinv[els])
            samples = np.einsum("eskb,eka->esab", G, Cel[els]).reshape(-1, 2, 2)
            out[slot] = np.einsum("s,sab->ab", coefrow, samples)
        return out


def solve_shape_derivative(
    space: Space,
    model: ViscosityModel,
    C,
    state: FlowTrajectory,
    T: DeformationField,
    shape: ShapeConfig,
    op: LinearizedOperator | None = None,
) -> FlowTrajectory:
    """Linearized solve with boundary datum -dv/dn (T.n), re-lifted per step."""
    if op is None:
        op = LinearizedOperator(space, model, C, state)
    bg = _ObstacleNodeGradients(space)
    pos = bg.pos
    u = pos - np.asarray(shape.obstacle_center)
    theta = np.arctan2(u[:, 1], u[:, 0])
    nrm = shape.obstacle_normal(theta)
    Tn = np.einsum("ni,ni->n", T.value(pos), nrm)

    def lift(n, t):
        Gv = bg.gradients(state.u[n])
        dvdn = np.einsum("nab,nb->na", Gv, nrm)
        vals = -dvdn * Tn[:, None]
        return fem.lift_boundary_data(space, tags=(OBSTACLE,), values=vals)

    return op.solve_forward(h=lift)


def _obstacle_geom(space: Space, shape: ShapeConfig, T: DeformationField):
    sel = space.obstacle_edges()
    qp = space.bqp[sel]
    u = qp - np.asarray(shape.obstacle_center)
    theta = np.arctan2(u[..., 1], u[..., 0])
    nrm = shape.obstacle_normal(theta.ravel()).reshape(theta.shape + (2,))
    Tn = np.einsum("eqi,eqi->eq", T.value(qp.reshape(-1, 2)).reshape(qp.shape), nrm)
    return sel, qp, nrm, Tn


def dJ_shape_volume(
    space: Space,
    state: FlowTrajectory,
    vprime: FlowTrajectory,
    ctx: DragContext,
    model: ViscosityModel,
    C,
    force: BodyForce,
    T: DeformationField,
    shape: ShapeConfig,
) -> float:
    """Volume-form gradient from the shape derivative v' plus the f.d term."""
    C = np.asarray(C, dtype=float)
    xi, gxi = _xi_tables(space, ctx)
    dt = state.grid.dt
    Nst = state.grid.n_steps
    times = state.grid.times()
    out = space.integrate(
        np.einsum("eqa,eqa->eq", space.eval_u(vprime.u[Nst]), xi)
    )
    for n in range(1, Nst + 1):
        v = space.eval_u(state.u[n])
        w = space.eval_u(vprime.u[n])
        Gv = space.eval_grad_u(state.u[n])
        Gw = space.eval_grad_u(vprime.u[n])
        Dv = 0.5 * (Gv + np.swapaxes(Gv, 2, 3))
        Dw = 0.5 * (Gw + np.swapaxes(Gw, 2, 3))
        s = np.einsum("eqab,eqab->eq", Dv, Dv)
        SpDw = model.nu(s)[..., None, None] * Dw + (
            2.0 * model.nu_prime(s) * np.einsum("eqab,eqab->eq", Dv, Dw)
        )[..., None, None] * Dv
        Cw = np.einsum("ab,eqb->eqa", C, w)
        mat = SpDw - w[..., :, None] * v[..., None, :] - v[..., :, None] * w[..., None, :]
        out += dt * space.integrate(
            np.einsum("eqa,eqa->eq", Cw, xi) + np.einsum("eqab,eqab->eq", mat, gxi)
        )
    # boundary force term: - int (f . d)(T . n) over the obstacle in time
    sel, qp, nrm, Tn = _obstacle_geom(space, shape, T)
    for n in range(1, Nst + 1):
        fq = force.value(times[n], qp.reshape(-1, 2)).reshape(qp.shape)
        out -= dt * space.integrate_boundary((fq @ ctx.d) * Tn, sel)
    return float(out)


def dJ_adjoint_boundary(
    space: Space,
    state: FlowTrajectory,
    adj: FlowTrajectory,
    model: ViscosityModel,
    force: BodyForce,
    T: DeformationField,
    shape: ShapeConfig,
    d,
    delta: float,
) -> float:
    """Adjoint boundary representation with terminal cutback delta.

    Integrates -[(S'(Dv)^T Dw - s I) : (dv/dn x n) + f . d](T . n) over the
    obstacle boundary and t in (0, T_f - delta), with traces taken edge-wise
    from the owning elements.
    """
    d = np.asarray(d, dtype=float)
    dt = state.grid.dt
    Nst = state.grid.n_steps
    if not (0.0 <= delta < state.grid.t_final):
        raise ValueError("delta must lie in [0, t_final)")
    n_max = Nst - int(round(delta / dt))
    times = state.grid.times()
    sel, qp, nrm, Tn = _obstacle_geom(space, shape, T)
    out = 0.0
    for n in range(1, n_max + 1):
        Gv = space.trace_grad_u(state.u[n], sel)
        Dv = 0.5 * (Gv + np.swapaxes(Gv, 2, 3))
        Gw = space.trace_grad_u(adj.u[n], sel)
        Dw = 0.5 * (Gw + np.swapaxes(Gw, 2, 3))
        s2 = np.einsum("eqab,eqab->eq", Dv, Dv)
        SpDw = model.nu(s2)[..., None, None] * Dw + (
            2.0 * model.nu_prime(s2) * np.einsum("eqab,eqab->eq", Dv, Dw)
        )[..., None, None] * Dv
        sadj = space.trace_p(adj.p[n], sel)
        A = SpDw - sadj[..., None, None] * np.eye(2)
        dvdn = np.einsum("eqab,eqb->eqa", Gv, nrm)
        integrand = np.einsum("eqa,eqab,eqb->eq", dvdn, A, nrm)
        fq = force.value(times[n], qp.reshape(-1, 2)).reshape(qp.shape)
        integrand = integrand + fq @ d
        out -= dt * space.integrate_boundary(integrand * Tn, sel)
    return float(out)
