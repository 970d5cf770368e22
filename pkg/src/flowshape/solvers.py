"""Implicit-Euler time stepping for the state, linearized, and adjoint systems.

All systems share one saddle-point layout per step,

    [[M/dt + K_n, -B^T, 0], [B, 0, m], [0, m^T, 0]]

over (velocity, pressure, mean-pressure multiplier), reduced over the free
velocity dofs, and are solved by sparse direct factorization.  The adjoint
uses the exact transposes of the tangent step matrices (one factorization
serves both directions), which makes the discrete tangent/adjoint duality
an identity up to solver roundoff rather than a discretization statement.

The transformed state solve reuses the same Newton loop with the transform
weight tables swapped in; at eps = 0 the tables are exact identities and
the trajectory is bitwise that of the plain solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem, meshing
from .constitutive import ViscosityModel
from .fem import Space, TransformData, identity_transform
from .fields import BodyForce
from .geometry import DeformationField


class SolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on (0, t_final] with n_steps implicit-Euler steps."""

    t_final: float
    n_steps: int

    def __post_init__(self):
        if self.t_final <= 0 or self.n_steps < 1:
            raise ValueError("need t_final > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    def times(self):
        return np.linspace(0.0, self.t_final, self.n_steps + 1)


@dataclass
class FlowTrajectory:
    """Velocity/pressure trajectory on a time grid (arrays over nodes 0..N)."""

    grid: TimeGrid
    u: np.ndarray  # (N+1, n_u)
    p: np.ndarray  # (N+1, n_p)

    def __post_init__(self):
        assert self.u.shape[0] == self.grid.n_steps + 1

    def l2q_norm(self, space: Space) -> float:
        """L2(Q) norm by right-endpoint sums matching implicit Euler."""
        dt = self.grid.dt
        acc = sum(space.l2_norm_u(self.u[n]) ** 2 for n in range(1, self.grid.n_steps + 1))
        return float(np.sqrt(dt * acc))

    def minus(self, other: "FlowTrajectory") -> "FlowTrajectory":
        return FlowTrajectory(self.grid, self.u - other.u, self.p - other.p)

    def scaled(self, a: float) -> "FlowTrajectory":
        return FlowTrajectory(self.grid, a * self.u, a * self.p)


def coriolis_tensor(omega: float):
    return np.array([[0.0, omega], [-omega, 0.0]])


# ---------------------------------------------------------------------------
# saddle helpers
# ---------------------------------------------------------------------------


class _Saddle:
    """Reduced saddle wrapper with the pressure nullspace pinned.

    The mixed system is solved with the last pressure dof pinned to zero
    (its continuity row is implied by the others for compatible data,
    since the pressure test functions sum to one); solutions are shifted
    to the zero-weighted-mean gauge afterwards.  Pinning instead of a
    dense mean-constraint row keeps the sparse factorization fill low.
    """

    def __init__(self, space: Space, free):
        self.space = space
        self.free = free
        self.B = space.div_matrix().tocsc()
        self.Bf = self.B[:, free].tocsr()
        mask = np.ones(space.n_u, dtype=bool)
        mask[free] = False
        self.dir_idx = np.where(mask)[0]
        self.Bd = self.B[:, self.dir_idx].tocsr()
        self.m = space.gauge_vector()
        self.n_f = len(free)
        self.n_p = space.n_p
        self.keep_p = np.arange(self.n_p - 1)
        self.BfK = self.Bf[self.keep_p]
        self.BdK = self.Bd[self.keep_p]

    def reduce(self, K_full):
        Kff = K_full[self.free][:, self.free]
        return sp.bmat([[Kff, -self.BfK.T], [self.BfK, None]], format="csc")

    def split(self, sol):
        p = np.zeros(self.n_p)
        p[: self.n_p - 1] = sol[self.n_f :]
        return sol[: self.n_f], p

    def pack(self, ru_free, rp_full):
        return np.concatenate([ru_free, rp_full[self.keep_p]])

    def zero_mean(self, p):
        return p - (self.m @ p) / self.m.sum()


# ---------------------------------------------------------------------------
# nonlinear state solve
# ---------------------------------------------------------------------------


def solve_state(
    space: Space,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0,
    grid: TimeGrid,
    td: TransformData | None = None,
    bc_fun=None,
    newton_atol: float = 1e-10,
    newton_rtol: float = 1e-8,
    newton_maxit: int = 25,
) -> FlowTrajectory:
    """Implicit-Euler trajectory of the nonlinear momentum system.

    ``v0`` is the initial coefficient vector (discretely divergence-free
    with zero trace); ``bc_fun``, when given, imposes time-independent
    Dirichlet velocity data instead of the no-slip default (used by
    manufactured-solution verification).  Passing a transform table solves
    the fixed-domain transformed system instead; see
    ``solve_state_transformed`` for the user-facing entry.
    """
    C = np.asarray(C, dtype=float)
    if np.abs(C + C.T).max() > 1e-12:
        raise ValueError("Coriolis tensor must be skew-symmetric")
    if td is None:
        td = identity_transform(space)
    dt = grid.dt
    N = grid.n_steps
    free = space.free_dofs()
    sad = _Saddle(space, free)

    Mt = fem.assemble_weighted_mass(space, td)
    Kcor = fem.assemble_coriolis(space, td, C)
    lift = np.zeros(space.n_u) if bc_fun is None else fem.lift_boundary_data(space, bc_fun)

    u = np.empty((N + 1, space.n_u))
    p = np.zeros((N + 1, space.n_p))
    u[0] = v0
    un = v0.copy()
    un[sad.dir_idx] = lift[sad.dir_idx]
    pn = np.zeros(space.n_p)

    # the Jacobian factorization is lagged: it is rebuilt only when the
    # residual reduction per iteration degrades, which keeps the number of
    # sparse factorizations low without touching the converged solution
    lu_cached = None
    times = grid.times()
    for n in range(1, N + 1):
        Fn = fem.assemble_body_force(space, td, force, times[n])
        uprev = u[n - 1]
        res0 = None
        prev_norm = None
        history = []
        for _ in range(newton_maxit):
            r_visc, _ = fem.assemble_viscous(space, td, model, un, want_tangent=False)
            r_conv, _ = fem.assemble_convection(space, td, un, want_tangent=False)
            res_u = Mt @ ((un - uprev) / dt) + r_visc + r_conv + Kcor @ un
            res_u -= sad.B.T @ pn + Fn
            res = sad.pack(res_u[free], sad.B @ un)
            rnorm = float(np.linalg.norm(res))
            history.append(rnorm)
            if res0 is None:
                res0 = max(rnorm, 1e-300)
            if rnorm <= newton_atol or rnorm <= newton_rtol * res0:
                break
            if lu_cached is None or (prev_norm is not None and rnorm > 0.25 * prev_norm):
                _, K_visc = fem.assemble_viscous(space, td, model, un)
                _, K_conv = fem.assemble_convection(space, td, un)
                lu_cached = spla.splu(sad.reduce(Mt / dt + K_visc + K_conv + Kcor))
            dx = lu_cached.solve(-res)
            du, dp = sad.split(dx)
            un = un.copy()
            un[free] += du
            pn = pn + dp
            prev_norm = rnorm
        else:
            raise SolverError(
                f"Newton stalled at step {n} (t={times[n]:.4g}); residuals {history}",
                history,
            )
        u[n] = un
        p[n] = sad.zero_mean(pn)
    return FlowTrajectory(grid, u, p)


def solve_state_transformed(
    space: Space,
    model: ViscosityModel,
    C,
    force: BodyForce,
    v0_eps,
    grid: TimeGrid,
    T: DeformationField,
    eps: float,
    **kw,
) -> FlowTrajectory:
    """State solve mapped to the fixed domain for the perturbation eps*T.

    ``v0_eps`` must be the transported initial datum (see
    ``shapegrad.transported_initial_datum``); with eps = 0 this is bitwise
    identical to ``solve_state``.
    """
    td = fem.build_transform(space, T, eps)
    return solve_state(space, model, C, force, v0_eps, grid, td=td, **kw)


# ---------------------------------------------------------------------------
# linearized operator: forward, transpose, adjoint
# ---------------------------------------------------------------------------


class LinearizedOperator:
    """Per-step saddle matrices of the linearization around a state trajectory.

    Holds, for every time node n, the full velocity-block matrix

        A_n = M/dt + K_visc'(v_n) + K_conv'(v_n) + K_cor

    and hands out (cached) factorizations of the reduced saddle systems.
    One factorization serves the forward solve and, via transposed
    triangular solves, the adjoint/transpose recursions.
    """

    def __init__(self, space: Space, model: ViscosityModel, C, state: FlowTrajectory):
        self.space = space
        self.grid = state.grid
        self.dt = state.grid.dt
        td = identity_transform(space)
        self.td = td
        free = space.free_dofs()
        self.free = free
        self.sad = _Saddle(space, free)
        self.M = fem.assemble_weighted_mass(space, td)
        Kcor = fem.assemble_coriolis(space, td, np.asarray(C, dtype=float))
        self.A_full = []
        for n in range(self.grid.n_steps + 1):
            _, K_visc = fem.assemble_viscous(space, td, model, state.u[n])
            K_conv = fem.assemble_convection_linearized(space, td, state.u[n])
            self.A_full.append((self.M / self.dt + K_visc + K_conv + Kcor).tocsr())
        self._lu = {}

    def lu(self, n):
        if n not in self._lu:
            self._lu[n] = spla.splu(self.sad.reduce(self.A_full[n]))
        return self._lu[n]

    def solve_forward(self, F=None, h=None, u0=None) -> FlowTrajectory:
        """March the linear system; F maps (n, t) to a dual vector, h to a lift."""
        space, sad, dt = self.space, self.sad, self.dt
        N = self.grid.n_steps
        times = self.grid.times()
        u = np.zeros((N + 1, space.n_u))
        p = np.zeros((N + 1, space.n_p))
        if u0 is not None:
            u[0] = u0
        for n in range(1, N + 1):
            lift = h(n, times[n]) if h is not None else None
            Fn = F(n, times[n]) if F is not None else None
            rhs_u = self.M @ (u[n - 1] / dt)
            if Fn is not None:
                rhs_u = rhs_u + Fn
            rhs_p = np.zeros(space.n_p)
            if lift is not None:
                rhs_u = rhs_u - self.A_full[n] @ lift
                rhs_p = -(sad.Bd @ lift[sad.dir_idx])
            sol = self.lu(n).solve(sad.pack(rhs_u[self.free], rhs_p))
            du, dp = sad.split(sol)
            un = lift.copy() if lift is not None else np.zeros(space.n_u)
            un[self.free] += du
            u[n] = un
            p[n] = sad.zero_mean(dp)
        return FlowTrajectory(self.grid, u, p)

    def solve_transpose(self, loads, terminal=None):
        """Exact-transpose recursion for duality: returns lambda_1..lambda_N.

        ``loads[n-1]`` is the dual vector paired with u_n in the functional
        sum_n loads_n . u_n (+ terminal . u_N); the returned velocity
        multipliers satisfy dL/dF_n = lambda_n on the free dofs.
        """
        space, sad = self.space, self.sad
        N = self.grid.n_steps
        lam_u = np.zeros((N + 1, space.n_u))
        lam_p = np.zeros((N + 1, space.n_p))
        carry = np.zeros(space.n_u)
        for n in range(N, 0, -1):
            rhs_u = loads[n - 1] + self.M.T @ (carry / self.dt)
            if n == N and terminal is not None:
                rhs_u = rhs_u + terminal
            sol = self.lu(n).solve(sad.pack(rhs_u[self.free], np.zeros(space.n_p)), trans="T")
            lu_, lp_ = sad.split(sol)
            lam = np.zeros(space.n_u)
            lam[self.free] = lu_
            lam_u[n] = lam
            lam_p[n] = sad.zero_mean(-lp_)  # transposed multiplier has opposite sign
            carry = lam
        return FlowTrajectory(self.grid, lam_u, lam_p)

    def solve_adjoint(self, d, datum_tags=(meshing.OBSTACLE,)) -> FlowTrajectory:
        """Backward adjoint trajectory with boundary value d and w(T) = 0.

        Implemented as implicit Euler in reversed time on the transposed
        step matrices; node N holds the terminal condition, the boundary
        datum is imposed from the first backward step onward.  The datum
        is carried on the obstacle boundary and zero on the container wall
        (the trace of the drag cutoff): that is the boundary configuration
        under which testing the linearized system by the adjoint state
        reproduces the volume-form gradient, since the cutoff itself
        vanishes near the wall.
        """
        space, sad = self.space, self.sad
        N = self.grid.n_steps
        d = np.asarray(d, dtype=float)
        lift = fem.lift_boundary_data(
            space, lambda X: np.broadcast_to(d, (len(X), 2)).copy(), tags=datum_tags
        )
        w = np.zeros((N + 1, space.n_u))
        s = np.zeros((N + 1, space.n_p))
        wnext = w[N]
        for n in range(N - 1, -1, -1):
            rhs_u = self.M.T @ (wnext / self.dt) - self.A_full[n].T @ lift
            rhs_p = sad.Bd @ lift[sad.dir_idx]
            sol = self.lu(n).solve(sad.pack(rhs_u[self.free], rhs_p), trans="T")
            wu, ws = sad.split(sol)
            wn = lift.copy()
            wn[self.free] += wu
            w[n] = wn
            s[n] = sad.zero_mean(-ws)
            wnext = wn
        return FlowTrajectory(self.grid, w, s)


def solve_linearized(
    space: Space,
    model: ViscosityModel,
    C,
    state: FlowTrajectory,
    F=None,
    h=None,
    u0=None,
) -> FlowTrajectory:
    """One-shot linearized solve (builds the operator and discards it)."""
    op = LinearizedOperator(space, model, C, state)
    return op.solve_forward(F=F, h=h, u0=u0)


def solve_adjoint(
    space: Space,
    model: ViscosityModel,
    C,
    state: FlowTrajectory,
    d,
    datum_tags=(meshing.OBSTACLE,),
) -> FlowTrajectory:
    """Adjoint trajectory (w, s) with w = d on the tagged boundary, w(T)=0."""
    op = LinearizedOperator(space, model, C, state)
    return op.solve_adjoint(d, datum_tags=datum_tags)


# ---------------------------------------------------------------------------
# energy accounting
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    """Term-by-term discrete energy budget of a state trajectory.

    ``defect`` is the residual of the continuous energy equality evaluated
    discretely; it decomposes exactly (up to Newton tolerance) into the
    implicit-Euler stepping dissipation, the convective defect of the
    mixed discretization, and the (roundoff-size) Coriolis contribution,
    whose step maxima are tracked separately.  ``closure`` is defect minus
    that decomposition.
    """

    kinetic_initial: float
    kinetic_final: float
    dissipation: float
    work: float
    defect: float
    stepping_dissipation: float
    convective_defect: float
    coriolis_total: float
    coriolis_max_step: float
    closure: float
    per_step: dict = field(default_factory=dict)


def energy_report(space: Space, model, C, force: BodyForce, traj: FlowTrajectory) -> EnergyReport:
    td = identity_transform(space)
    dt = traj.grid.dt
    N = traj.grid.n_steps
    times = traj.grid.times()
    Kcor = fem.assemble_coriolis(space, td, np.asarray(C, dtype=float))
    Mt = space.mass_matrix()

    kin0 = 0.5 * float(traj.u[0] @ (Mt @ traj.u[0]))
    kinT = 0.5 * float(traj.u[N] @ (Mt @ traj.u[N]))
    diss = work = conv = cor = stepd = 0.0
    cor_steps = []
    for n in range(1, N + 1):
        un = traj.u[n]
        Dv = fem.eval_deps(space, td, un)
        s = np.einsum("eqab,eqab->eq", Dv, Dv)
        diss += dt * space.integrate(model.nu(s) * s)
        v = space.eval_u(un)
        fq = force.value(times[n], space.qp.reshape(-1, 2)).reshape(space.n_t, fem.N_QP, 2)
        work += dt * space.integrate((fq * v).sum(axis=2))
        G = space.eval_grad_u(un)
        conv += dt * space.integrate(np.einsum("eqa,eqb,eqab->eq", v, v, G))
        c_n = float(un @ (Kcor @ un))
        cor_steps.append(abs(c_n))
        cor += dt * c_n
        dun = un - traj.u[n - 1]
        stepd += 0.5 * float(dun @ (Mt @ dun))
    defect = kinT + diss - work - kin0
    closure = defect - (-stepd + conv - cor)
    return EnergyReport(
        kinetic_initial=kin0,
        kinetic_final=kinT,
        dissipation=diss,
        work=work,
        defect=defect,
        stepping_dissipation=stepd,
        convective_defect=conv,
        coriolis_total=cor,
        coriolis_max_step=max(cor_steps) if cor_steps else 0.0,
        closure=closure,
    )


def divergence_residual(space: Space, traj: FlowTrajectory) -> float:
    """Max over time nodes of |B u_n| (discrete incompressibility)."""
    B = space.div_matrix()
    return float(max(np.linalg.norm(B @ traj.u[n]) for n in range(traj.grid.n_steps + 1)))
