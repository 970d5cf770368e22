"""Taylor-Hood (P2/P1) spaces and assembly of all weak forms.

One ``Space`` per mesh precomputes dof maps, quadrature geometry, and
basis tables; one ``TransformData`` per deformation field and magnitude
precomputes the pointwise transform weights and the transformed basis
tables.  With eps = 0 (or ``identity_transform``) every weight collapses
to the exact identity, so the plain and transformed solvers share one
assembly path bit for bit.

The divergence constraint is enforced in mixed form with the pressure as
multiplier and the pressure nullspace of the enclosed flow is removed by a
single zero-mean Lagrange multiplier, so assembled saddle systems have
size n_u + n_p + 1 before Dirichlet reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .constitutive import ViscosityModel
from .geometry import DeformationField, transform_quantities
from .meshing import OBSTACLE, OUTER, Mesh

# 7-point degree-5 rule on the reference triangle (barycentric, weights sum 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
TRI_QP_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
TRI_QW = np.array(
    [0.225, 0.132394152788506, 0.132394152788506, 0.132394152788506,
     0.125939180544827, 0.125939180544827, 0.125939180544827]
)
N_QP = 7

_gx, _gw = np.polynomial.legendre.leggauss(4)
EDGE_QP = 0.5 * (_gx + 1.0)
EDGE_QW = 0.5 * _gw
N_EQP = 4


def ref_p2(bary):
    """P2 basis at barycentric points: 3 vertex then 3 opposite-midedge."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l1 * l2,
            4 * l2 * l0,
            4 * l0 * l1,
        ],
        axis=-1,
    )


def ref_p2_grad_bary(bary):
    """Gradient of the P2 basis w.r.t. (l1, l2) with l0 = 1 - l1 - l2."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros_like(l0)
    d1 = np.stack([-(4 * l0 - 1), 4 * l1 - 1, z, 4 * l2, -4 * l2, 4 * (l0 - l1)], axis=-1)
    d2 = np.stack([-(4 * l0 - 1), z, 4 * l2 - 1, 4 * l1, 4 * (l0 - l2), -4 * l1], axis=-1)
    return np.stack([d1, d2], axis=-1)  # (..., 6, 2)


def ref_p1(bary):
    return np.asarray(bary)


class Space:
    """Mesh-level dof maps, quadrature geometry and basis tables."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        pts, tris = mesh.points, mesh.triangles
        self.n_v = mesh.n_vertices
        self.n_t = mesh.n_triangles

        edges = mesh.edge_array()
        self.edges = edges
        self.n_e = len(edges)
        keys = edges[:, 0] * self.n_v + edges[:, 1]
        order = np.argsort(keys)
        self._edge_keys = keys[order]
        self._edge_perm = order

        def edge_index(a, b):
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            k = lo * self.n_v + hi
            pos = np.searchsorted(self._edge_keys, k)
            return self._edge_perm[pos]

        self._edge_index = edge_index

        mid = [edge_index(tris[:, (i + 1) % 3], tris[:, (i + 2) % 3]) for i in range(3)]
        self.tri_nodes = np.concatenate([tris, self.n_v + np.stack(mid, axis=1)], axis=1)
        self.n_nodes = self.n_v + self.n_e
        self.node_coords = np.concatenate(
            [pts, 0.5 * (pts[edges[:, 0]] + pts[edges[:, 1]])]
        )
        self.n_u = 2 * self.n_nodes
        self.n_p = self.n_v

        # element geometry
        v0 = pts[tris[:, 0]]
        J = np.stack([pts[tris[:, 1]] - v0, pts[tris[:, 2]] - v0], axis=2)  # (e,2,2) cols
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        self.detJ = detJ
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1]
        Jinv[:, 1, 1] = J[:, 0, 0]
        Jinv[:, 0, 1] = -J[:, 0, 1]
        Jinv[:, 1, 0] = -J[:, 1, 0]
        Jinv /= detJ[:, None, None]
        self.Jinv = Jinv

        self.N2 = ref_p2(TRI_QP_BARY)  # (q,6)
        self.N1 = ref_p1(TRI_QP_BARY)  # (q,3)
        dref = ref_p2_grad_bary(TRI_QP_BARY)  # (q,6,2)
        # physical scalar gradients: G[e,q,k,b] = dref[q,k,m] Jinv[e,m,b]
        self.G = np.einsum("qkm,emb->eqkb", dref, Jinv)
        dref1 = np.zeros((3, 2))
        dref1[0] = [-1, -1]
        dref1[1] = [1, 0]
        dref1[2] = [0, 1]
        self.G1 = np.einsum("km,emb->ekb", dref1, Jinv)  # P1 grads, constant per element

        self.qw = 0.5 * np.abs(detJ)[:, None] * TRI_QW[None, :]
        bar = TRI_QP_BARY
        self.qp = np.einsum("qi,eia->eqa", bar, pts[tris])

        # velocity basis tables
        PHIV = np.zeros((N_QP, 12, 2))
        for k in range(6):
            for a in range(2):
                PHIV[:, 2 * k + a, a] = self.N2[:, k]
        self.PHIV = PHIV
        GRADV = np.zeros((self.n_t, N_QP, 12, 2, 2))
        for k in range(6):
            for a in range(2):
                GRADV[:, :, 2 * k + a, a, :] = self.G[:, :, k, :]
        self.GRADV = GRADV

        # global dof gather maps
        nodes = self.tri_nodes  # (e,6)
        gdof = np.empty((self.n_t, 12), dtype=np.int64)
        gdof[:, 0::2] = 2 * nodes
        gdof[:, 1::2] = 2 * nodes + 1
        self.gdof_u = gdof
        self.gdof_p = tris.copy()

        self.rows_uu = np.repeat(gdof, 12, axis=1).ravel()
        self.cols_uu = np.tile(gdof, (1, 12)).ravel()
        self.rows_pu = np.repeat(self.gdof_p, 12, axis=1).ravel()
        self.cols_pu = np.tile(gdof, (1, 3)).ravel()

        self._build_boundary()
        self._div = None
        self._gauge = None
        self._mass = None

    # -- boundary tables ----------------------------------------------------

    def _build_boundary(self):
        mesh = self.mesh
        pts = mesh.points
        tris = mesh.triangles
        owner_of = {}
        for t, tri in enumerate(tris):
            for i in range(3):
                a, b = tri[(i + 1) % 3], tri[(i + 2) % 3]
                owner_of.setdefault((min(a, b), max(a, b)), []).append(t)
        be = mesh.boundary_edges
        n_be = len(be)
        owner = np.empty(n_be, dtype=np.int64)
        for k, (a, b) in enumerate(be):
            cand = owner_of[(min(a, b), max(a, b))]
            assert len(cand) == 1
            owner[k] = cand[0]
        self.bowner = owner

        A, B = pts[be[:, 0]], pts[be[:, 1]]
        self.bqp = A[:, None, :] + EDGE_QP[None, :, None] * (B - A)[:, None, :]
        self.blen = np.linalg.norm(B - A, axis=1)
        self.bqw = self.blen[:, None] * EDGE_QW[None, :]
        nrm = np.stack([(B - A)[:, 1], -(B - A)[:, 0]], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        othr = tris[owner].sum(axis=1) - be.sum(axis=1)  # opposite vertex id
        flip = ((0.5 * (A + B) - pts[othr]) * nrm).sum(axis=1) < 0
        nrm[flip] *= -1
        self.bnormal = nrm  # outward of the fluid domain on both boundaries

        # owner-element reference coordinates of edge quadrature points
        v0 = pts[tris[owner, 0]]
        Jc = np.stack([pts[tris[owner, 1]] - v0, pts[tris[owner, 2]] - v0], axis=2)
        rhs = self.bqp - v0[:, None, :]
        Jinv = np.linalg.inv(Jc)
        xy = np.einsum("emb,eqb->eqm", Jinv, rhs)
        bary = np.stack([1 - xy[..., 0] - xy[..., 1], xy[..., 0], xy[..., 1]], axis=-1)
        self.btrace_N2 = ref_p2(bary)  # (n_be, qe, 6)
        self.btrace_N1 = ref_p1(bary)
        dref = ref_p2_grad_bary(bary)  # (n_be, qe, 6, 2)
        self.btrace_G = np.einsum("eqkm,emb->eqkb", dref, Jinv)

        # boundary node sets (vertices plus midedge nodes) per tag
        self._bnodes = {}
        for tag in (OUTER, OBSTACLE):
            sel = mesh.boundary_tags == tag
            vs = np.unique(be[sel])
            mids = self.n_v + self._edge_index(be[sel, 0], be[sel, 1])
            self._bnodes[tag] = np.unique(np.concatenate([vs, mids]))

    def boundary_nodes(self, tags=(OUTER, OBSTACLE)):
        return np.unique(np.concatenate([self._bnodes[t] for t in tags]))

    def dirichlet_dofs(self, tags=(OUTER, OBSTACLE)):
        nodes = self.boundary_nodes(tags)
        return np.unique(np.concatenate([2 * nodes, 2 * nodes + 1]))

    def free_dofs(self, tags=(OUTER, OBSTACLE)):
        mask = np.ones(self.n_u, dtype=bool)
        mask[self.dirichlet_dofs(tags)] = False
        return np.where(mask)[0]

    # -- field evaluation ---------------------------------------------------

    def gather(self, u):
        return np.asarray(u)[self.gdof_u]  # (e, 12)

    def eval_u(self, u):
        C = self.gather(u).reshape(self.n_t, 6, 2)
        return np.einsum("qk,eka->eqa", self.N2, C)

    def eval_grad_u(self, u):
        C = self.gather(u).reshape(self.n_t, 6, 2)
        return np.einsum("eqkb,eka->eqab", self.G, C)

    def eval_p(self, p):
        return np.einsum("qk,ek->eq", self.N1, np.asarray(p)[self.gdof_p])

    def interpolate(self, fun):
        """P2 interpolant (coefficient vector) of an analytic vector field."""
        vals = fun(self.node_coords)
        out = np.empty(self.n_u)
        out[0::2] = vals[:, 0]
        out[1::2] = vals[:, 1]
        return out

    def integrate(self, vals):
        """Integrate pointwise values (e, q) over the mesh."""
        return float((self.qw * vals).sum())

    def l2_norm_u(self, u):
        v = self.eval_u(u)
        return np.sqrt(self.integrate((v**2).sum(axis=2)))

    # -- boundary traces ----------------------------------------------------

    def trace_u(self, u, sel):
        C = self.gather(u).reshape(self.n_t, 6, 2)[self.bowner[sel]]
        return np.einsum("eqk,eka->eqa", self.btrace_N2[sel], C)

    def trace_grad_u(self, u, sel):
        C = self.gather(u).reshape(self.n_t, 6, 2)[self.bowner[sel]]
        return np.einsum("eqkb,eka->eqab", self.btrace_G[sel], C)

    def trace_p(self, p, sel):
        return np.einsum("eqk,ek->eq", self.btrace_N1[sel], np.asarray(p)[self.gdof_p[self.bowner[sel]]])

    def obstacle_edges(self):
        return np.where(self.mesh.boundary_tags == OBSTACLE)[0]

    def integrate_boundary(self, vals, sel):
        return float((self.bqw[sel] * vals).sum())

    # -- fixed sparse pieces --------------------------------------------------

    def div_matrix(self):
        """B with B[q, u] = integral of psi_q * div(phi_u)."""
        if self._div is None:
            dloc = np.einsum("eq,qk,eqiab,ab->eki", self.qw, self.N1, self.GRADV, np.eye(2))
            self._div = sp.coo_matrix(
                (dloc.ravel(), (self.rows_pu, self.cols_pu)), shape=(self.n_p, self.n_u)
            ).tocsr()
        return self._div

    def gauge_vector(self):
        if self._gauge is None:
            g = np.zeros(self.n_p)
            np.add.at(g, self.gdof_p.ravel(), np.einsum("eq,qk->ek", self.qw, self.N1).ravel())
            self._gauge = g
        return self._gauge

    def mass_matrix(self):
        """Plain velocity mass matrix (identity weight)."""
        if self._mass is None:
            W = np.broadcast_to(np.eye(2), (self.n_t, N_QP, 2, 2)).copy()
            A = kernels.wmass_kernel(self.qw, W, self.PHIV)
            self._mass = self._scatter_uu(A)
        return self._mass

    def _scatter_uu(self, Aloc):
        return sp.coo_matrix(
            (Aloc.ravel(), (self.rows_uu, self.cols_uu)), shape=(self.n_u, self.n_u)
        ).tocsr()

    def scatter_load(self, rloc):
        out = np.zeros(self.n_u)
        np.add.at(out, self.gdof_u.ravel(), rloc.ravel())
        return out


# ---------------------------------------------------------------------------
# transform-dependent tables
# ---------------------------------------------------------------------------


@dataclass
class TransformData:
    """Pointwise transform weights and transformed basis tables."""

    T: DeformationField | None
    eps: float
    gdet: np.ndarray  # (e,q)
    Wt: np.ndarray  # (e,q,2,2) time/mass weight g N^{-1} N^{-T}
    N: np.ndarray  # (e,q,2,2)
    NiT: np.ndarray  # (e,q,2,2)
    Ninv: np.ndarray  # (e,q,2,2)
    dNiT: np.ndarray  # (e,q,2,2,2)
    DEPS: np.ndarray  # (e,q,12,2,2)
    GPHI: np.ndarray  # (e,q,12,2,2)
    y_qp: np.ndarray  # (e,q,2) transported quadrature points
    O: np.ndarray | None = None
    trO: np.ndarray | None = None
    dO: np.ndarray | None = None
    Tq: np.ndarray | None = None
    OGPHI: np.ndarray | None = None

    def is_identity(self):
        return self.T is None or self.eps == 0.0


def identity_transform(space: Space) -> TransformData:
    e, q = space.n_t, N_QP
    I2 = np.broadcast_to(np.eye(2), (e, q, 2, 2)).copy()
    return TransformData(
        T=None,
        eps=0.0,
        gdet=np.ones((e, q)),
        Wt=I2.copy(),
        N=I2.copy(),
        NiT=I2.copy(),
        Ninv=I2.copy(),
        dNiT=np.zeros((e, q, 2, 2, 2)),
        DEPS=0.5 * (space.GRADV + np.swapaxes(space.GRADV, 3, 4)),
        GPHI=space.GRADV,
        y_qp=space.qp,
    )


def build_transform(space: Space, T: DeformationField, eps: float) -> TransformData:
    """Exact transform tables at the quadrature points for y = x + eps T."""
    X = space.qp.reshape(-1, 2)
    tq = transform_quantities(T, eps, X)
    e, q = space.n_t, N_QP

    def rs(a, shape):
        return a.reshape((e, q) + shape)

    g = rs(tq.g, ())
    N = rs(tq.N, (2, 2))
    Ninv = rs(tq.Ninv, (2, 2))
    NiT = rs(tq.NiT, (2, 2))
    dNiT = rs(tq.dNiT, (2, 2, 2))
    M = rs(tq.M, (2, 2))
    O = rs(tq.O, (2, 2))
    trO = rs(tq.trO, ())
    dO = rs(tq.dO, (2, 2, 2))

    Wt = g[..., None, None] * np.einsum("eqab,eqcb->eqac", Ninv, Ninv)
    # D_eps tables: g^{-1} sym( P grad(phi) + [N dNiT] phi ), P = M^{-1} M^T
    Minv = np.empty_like(M)
    Minv[..., 0, 0] = M[..., 1, 1]
    Minv[..., 1, 1] = M[..., 0, 0]
    Minv[..., 0, 1] = -M[..., 0, 1]
    Minv[..., 1, 0] = -M[..., 1, 0]
    Minv = Minv / g[..., None, None]
    P = np.einsum("eqal,eqml->eqam", Minv, M)  # M^{-1} M^T
    ND = np.einsum("eqal,eqlcb->eqacb", N, dNiT)
    full = np.einsum("eqal,eqilb->eqiab", P, space.GRADV) + np.einsum(
        "eqacb,qic->eqiab", ND, space.PHIV
    )
    DEPS = 0.5 * (full + np.swapaxes(full, 3, 4)) / g[..., None, None, None]

    GPHI = np.einsum("eqal,eqilb->eqiab", NiT, space.GRADV) + np.einsum(
        "eqacb,qic->eqiab", dNiT, space.PHIV
    )
    OGPHI = np.einsum("eqla,eqilb->eqiab", O, space.GRADV) + np.einsum(
        "eqcab,qic->eqiab", dO, space.PHIV
    )
    Tq = rs(T.value(X), (2,))
    return TransformData(
        T=T,
        eps=eps,
        gdet=g,
        Wt=Wt,
        N=N,
        NiT=NiT,
        Ninv=Ninv,
        dNiT=dNiT,
        DEPS=DEPS,
        GPHI=GPHI,
        y_qp=space.qp + eps * Tq,
        O=O,
        trO=trO,
        dO=dO,
        Tq=Tq,
        OGPHI=OGPHI,
    )


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def eval_deps(space: Space, td: TransformData, u):
    """Transformed symmetric gradient of a discrete field at the qps."""
    return np.einsum("ei,eqiab->eqab", space.gather(u), td.DEPS)


def eval_gphi(space: Space, td: TransformData, u):
    return np.einsum("ei,eqiab->eqab", space.gather(u), td.GPHI)


def assemble_viscous(space: Space, td: TransformData, model: ViscosityModel, u, want_tangent=True):
    """Residual of the viscous form and its Newton tangent (csr)."""
    Dv = eval_deps(space, td, u)
    s = np.einsum("eqab,eqab->eq", Dv, Dv)
    nu = model.nu(s)
    nup = model.nu_prime(s)
    r, A = kernels.visc_kernel(space.qw, td.gdet, nu, nup, Dv, td.DEPS, want_tangent)
    return space.scatter_load(r), (space._scatter_uu(A) if want_tangent else None)


def assemble_convection(space: Space, td: TransformData, u, want_tangent=True):
    """Residual of -(v x N^{-T}v):grad(N^{-T}phi) and its linearization."""
    v = space.eval_u(u)
    bv = np.einsum("eqab,eqb->eqa", td.NiT, v)
    r, A = kernels.conv_kernel(space.qw, v, bv, td.NiT, space.PHIV, td.GPHI, want_tangent)
    return space.scatter_load(r), (space._scatter_uu(A) if want_tangent else None)


def assemble_convection_linearized(space: Space, td: TransformData, v):
    """Matrix of the convection linearization around v (drops the residual)."""
    return assemble_convection(space, td, v)[1]


def assemble_weighted_mass(space: Space, td: TransformData):
    return space._scatter_uu(kernels.wmass_kernel(space.qw, td.Wt, space.PHIV))


def assemble_coriolis(space: Space, td: TransformData, C):
    """Matrix of the weighted Coriolis form g (N^{-1} C N^{-T}) v . phi."""
    C = np.asarray(C, dtype=float)
    if np.abs(C + C.T).max() > 1e-12:
        raise ValueError("Coriolis tensor must be skew-symmetric")
    Wc = td.gdet[..., None, None] * np.einsum(
        "eqab,bc,eqdc->eqad", td.Ninv, C, td.Ninv
    )
    return space._scatter_uu(kernels.wmass_kernel(space.qw, Wc, space.PHIV))


def assemble_body_force(space: Space, td: TransformData, force, t: float):
    """Load vector of g N^{-1} f(t, y(x)) . phi with analytic f."""
    fy = force.value(t, td.y_qp.reshape(-1, 2)).reshape(space.n_t, N_QP, 2)
    vec = td.gdet[..., None] * np.einsum("eqab,eqb->eqa", td.Ninv, fy)
    return space.scatter_load(kernels.load_kernel(space.qw, vec, space.PHIV))


def assemble_load(space: Space, vec=None, mat=None, mat_O=None, td: TransformData = None):
    """Generic dual vector: vec.phi + mat:grad(phi) + mat_O:grad(O^T phi)."""
    r = 0.0
    if vec is not None or mat is not None:
        r = kernels.load_kernel(space.qw, vec, space.PHIV, mat, space.GRADV)
    if mat_O is not None:
        r = r + kernels.load_kernel(space.qw, None, space.PHIV, mat_O, td.OGPHI)
    return space.scatter_load(r)


def lift_boundary_data(space: Space, fun=None, tags=(OUTER, OBSTACLE), values=None):
    """P2 field equal to interpolated data on tagged boundary nodes, else 0.

    ``fun`` maps positions (n, 2) to values (n, 2); alternatively pass
    precomputed ``values`` for the nodes of ``space.boundary_nodes(tags)``.
    """
    u = np.zeros(space.n_u)
    nodes = space.boundary_nodes(tags)
    if values is None:
        values = fun(space.node_coords[nodes])
    u[2 * nodes] = values[:, 0]
    u[2 * nodes + 1] = values[:, 1]
    return u


def project_div_free(space: Space, pointwise, dirichlet_tags=(OUTER, OBSTACLE)):
    """Discretely divergence-free L2 projection of pointwise data (e, q, 2).

    Solves the mass/divergence saddle system with homogeneous Dirichlet
    values; the projection operator is linear and independent of any domain
    transform, so it commutes with differentiation in the perturbation
    magnitude.
    """
    rhs_u = space.scatter_load(kernels.load_kernel(space.qw, pointwise, space.PHIV))
    M = space.mass_matrix()
    B = space.div_matrix().tocsc()[:, :]
    free = space.free_dofs(dirichlet_tags)
    nf = len(free)
    BfK = B[:-1, free]  # last continuity row dropped, see solvers._Saddle
    K = sp.bmat([[M[free][:, free], -BfK.T], [BfK, None]], format="csc")
    rhs = np.concatenate([rhs_u[free], np.zeros(space.n_p - 1)])
    sol = spla.splu(K).solve(rhs)
    u = np.zeros(space.n_u)
    u[free] = sol[:nf]
    return u


def inf_sup_constant(space: Space, seed=0):
    """Discrete inf-sup constant of the P2/P1 pair (eigenvalue probe).

    Smallest nonzero eigenvalue lambda of B K^{-1} B^T p = lambda M_p p
    with K the Dirichlet-reduced vector stiffness; returns sqrt(lambda).
    """
    free = space.free_dofs()
    W = np.broadcast_to(np.eye(2), (space.n_t, N_QP, 2, 2)).copy()
    # vector stiffness via the viscous kernel with nu = 1 on sym gradients
    td = identity_transform(space)
    ones = np.ones((space.n_t, N_QP))
    _, Kfull = kernels.visc_kernel(space.qw, ones, 2.0 * ones, 0.0 * ones, np.zeros((space.n_t, N_QP, 2, 2)), td.DEPS)
    K = space._scatter_uu(Kfull)[free][:, free].tocsc()
    B = space.div_matrix()[:, free].tocsr()
    lu = spla.splu(K)

    def op(x):
        return B @ lu.solve(B.T @ x)

    n_p = space.n_p
    qw1 = np.einsum("eq,qk,ql->ekl", space.qw, space.N1, space.N1)
    Mp = sp.coo_matrix(
        (
            qw1.ravel(),
            (
                np.repeat(space.gdof_p, 3, axis=1).ravel(),
                np.tile(space.gdof_p, (1, 3)).ravel(),
            ),
        ),
        shape=(n_p, n_p),
    ).tocsr()
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_p, 3))
    m = space.gauge_vector()
    vals, _ = spla.lobpcg(
        spla.LinearOperator((n_p, n_p), matvec=op),
        X,
        B=Mp,
        Y=m[:, None],
        largest=False,
        tol=1e-6,
        maxiter=300,
    )
    return float(np.sqrt(max(vals.min(), 0.0)))
