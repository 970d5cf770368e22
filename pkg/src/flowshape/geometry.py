"""Obstacle geometry, speed-method deformation fields, and transform calculus.

The fluid domain is a container (disk or axis-aligned rectangle) minus a
star-shaped obstacle rho(theta) about a center point.  Shapes are perturbed
by the map y(x) = x + eps*T(x) where T is a C^2 field vanishing near the
container wall; everything downstream (mesh deformation, the fixed-domain
transformed solve, the gradient formulas) consumes the quantities

    M = I + eps*DT,  g = det M,  N = g M^{-1},  O = (div T) I - DT,

with the convention DT_ij = d T_j / d x_i, together with their exact
spatial derivatives evaluated from the analytic Hessian of T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import AnalyticVectorField, BumpProfile


# ---------------------------------------------------------------------------
# obstacle / container description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShapeConfig:
    """Container plus star-shaped obstacle rho(theta) = rho0 + sum a_k cos + b_k sin."""

    container: str = "disk"  # "disk" or "rect"
    container_center: tuple = (0.0, 0.0)
    container_radius: float = 1.0
    container_halfwidth: tuple = (1.0, 1.0)  # rect only
    obstacle_center: tuple = (0.0, 0.0)
    rho0: float = 0.25
    cos_coeffs: tuple = ()
    sin_coeffs: tuple = ()
    rho_min: float = 0.05
    clearance: float = 0.15

    def __post_init__(self):
        if self.container not in ("disk", "rect"):
            raise ValueError(f"unknown container {self.container!r}")

    def rho(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full_like(theta, self.rho0)
        for k, a in enumerate(self.cos_coeffs, start=1):
            out = out + a * np.cos(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            out = out + b * np.sin(k * theta)
        return out

    def drho(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k, a in enumerate(self.cos_coeffs, start=1):
            out = out - a * k * np.sin(k * theta)
        for k, b in enumerate(self.sin_coeffs, start=1):
            out = out + b * k * np.cos(k * theta)
        return out

    def obstacle_points(self, thetas):
        thetas = np.asarray(thetas, dtype=float)
        c = np.asarray(self.obstacle_center)
        r = self.rho(thetas)
        return c + np.stack([r * np.cos(thetas), r * np.sin(thetas)], axis=1)

    def obstacle_normal(self, thetas):
        """Outward normal of the fluid domain on the obstacle boundary.

        Points from the fluid into the obstacle: n = -(rho e_r - rho' e_t)
        normalized, with e_r, e_t the polar unit vectors about the obstacle
        center.
        """
        thetas = np.asarray(thetas, dtype=float)
        r = self.rho(thetas)
        dr = self.drho(thetas)
        er = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
        et = np.stack([-np.sin(thetas), np.cos(thetas)], axis=1)
        n = -(r[:, None] * er - dr[:, None] * et)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def radial_range(self):
        th = np.linspace(0.0, 2.0 * np.pi, 1024, endpoint=False)
        r = self.rho(th)
        return float(r.min()), float(r.max())

    def container_distance(self, X):
        """Signed distance to the container wall (negative inside)."""
        X = np.asarray(X, dtype=float)
        if self.container == "disk":
            c = np.asarray(self.container_center)
            return np.linalg.norm(X - c, axis=1) - self.container_radius
        c = np.asarray(self.container_center)
        hw = np.asarray(self.container_halfwidth)
        q = np.abs(X - c) - hw
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        return outside + inside

    def obstacle_distance(self, X):
        """Approximate signed distance to the obstacle boundary (negative inside)."""
        X = np.asarray(X, dtype=float)
        u = X - np.asarray(self.obstacle_center)
        r = np.linalg.norm(u, axis=1)
        theta = np.arctan2(u[:, 1], u[:, 0])
        return r - self.rho(theta)

    def validate(self):
        rmin, rmax = self.radial_range()
        if rmin < self.rho_min:
            raise ValueError(
                f"obstacle radius dips to {rmin:.4g} below rho_min={self.rho_min}"
            )
        pts = self.obstacle_points(np.linspace(0, 2 * np.pi, 512, endpoint=False))
        gap = -self.container_distance(pts)
        if gap.min() < self.clearance:
            raise ValueError(
                f"obstacle-to-container gap {gap.min():.4g} below clearance={self.clearance}"
            )
        return self

    def params(self) -> np.ndarray:
        return np.concatenate([[self.rho0], self.cos_coeffs, self.sin_coeffs])

    def with_params(self, theta_vec) -> "ShapeConfig":
        theta_vec = np.asarray(theta_vec, dtype=float)
        K = len(self.cos_coeffs)
        return ShapeConfig(
            container=self.container,
            container_center=self.container_center,
            container_radius=self.container_radius,
            container_halfwidth=self.container_halfwidth,
            obstacle_center=self.obstacle_center,
            rho0=float(theta_vec[0]),
            cos_coeffs=tuple(theta_vec[1 : 1 + K]),
            sin_coeffs=tuple(theta_vec[1 + K : 1 + 2 * K]),
            rho_min=self.rho_min,
            clearance=self.clearance,
        )


# ---------------------------------------------------------------------------
# deformation fields: separable polar form T = beta(r) * psi(theta) * e_dir
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _TrigMode:
    """psi(theta) in {1, cos k theta, sin k theta} with derivatives."""

    k: int = 0
    kind: str = "one"  # "one" | "cos" | "sin"

    def val(self, th):
        th = np.asarray(th, dtype=float)
        if self.kind == "one":
            return np.ones_like(th)
        f = np.cos if self.kind == "cos" else np.sin
        return f(self.k * th)

    def d1(self, th):
        th = np.asarray(th, dtype=float)
        if self.kind == "one":
            return np.zeros_like(th)
        if self.kind == "cos":
            return -self.k * np.sin(self.k * th)
        return self.k * np.cos(self.k * th)

    def d2(self, th):
        return -self.k**2 * self.val(th) if self.kind != "one" else np.zeros_like(np.asarray(th, dtype=float))


@dataclass(frozen=True)
class DeformationField:
    """C^2 velocity field of the speed method with exact derivatives.

    value(X) -> (n, 2)
    jacobian(X) -> (n, 2, 2), [i, j] = d T_i / d x_j
    hessian(X) -> (n, 2, 2, 2), [i, j, k] = d^2 T_i / (d x_j d x_k)

    The field is supported in the annulus (r_in, r_out) about ``center``
    and vanishes identically outside; sup|DT| is estimated on a dense grid
    at construction and caps the admissible perturbation magnitude.
    """

    value: Callable
    jacobian: Callable
    hessian: Callable
    center: tuple = (0.0, 0.0)
    r_in: float = 0.0
    r_out: float = np.inf
    sup_jac: float = 1.0
    name: str = ""

    def eps_max(self) -> float:
        return 0.5 / max(self.sup_jac, 1e-30)

    def scaled(self, alpha: float) -> "DeformationField":
        a = float(alpha)
        return DeformationField(
            value=lambda X, _v=self.value: a * _v(X),
            jacobian=lambda X, _j=self.jacobian: a * _j(X),
            hessian=lambda X, _h=self.hessian: a * _h(X),
            center=self.center,
            r_in=self.r_in,
            r_out=self.r_out,
            sup_jac=abs(a) * self.sup_jac,
            name=f"{abs(a):g}*{self.name}",
        )


def _polar_frames(X, center):
    X = np.asarray(X, dtype=float)
    u = X - np.asarray(center, dtype=float)
    r = np.linalg.norm(u, axis=1)
    safe = np.maximum(r, 1e-300)
    e = u / safe[:, None]
    t = np.stack([-e[:, 1], e[:, 0]], axis=1)
    th = np.arctan2(u[:, 1], u[:, 0])
    return r, th, e, t


def _polar_field(profile: BumpProfile, mode: _TrigMode, center, component: str, name=""):
    """Field g e_r + h e_theta with separable g or h = beta(r) psi(theta).

    The Cartesian Jacobian and Hessian are assembled from the exact polar
    partial derivatives; points inside the inner support radius evaluate
    to zero, which keeps the polar frame singularity out of play.
    """
    radial_comp = component == "radial"

    def _parts(X):
        r, th, e, t = _polar_frames(X, center)
        b, b1, b2 = profile.val(r), profile.d1(r), profile.d2(r)
        p, p1, p2 = mode.val(th), mode.d1(th), mode.d2(th)
        return r, e, t, (b, b1, b2), (p, p1, p2)

    def value(X):
        r, e, t, (b, _, _), (p, _, _) = _parts(X)
        base = e if radial_comp else t
        return (b * p)[:, None] * base

    def jacobian(X):
        r, e, t, (b, b1, _), (p, p1, _) = _parts(X)
        rr = np.maximum(r, 1e-300)
        if radial_comp:
            g_r, g_th, g = b1 * p, b * p1, b * p
            A, B, C, D = g_r, g_th / rr, np.zeros_like(r), g / rr
        else:
            h_r, h_th, h = b1 * p, b * p1, b * p
            A, B, C, D = np.zeros_like(r), -h / rr, h_r, h_th / rr
        return (
            A[:, None, None] * e[:, :, None] * e[:, None, :]
            + B[:, None, None] * e[:, :, None] * t[:, None, :]
            + C[:, None, None] * t[:, :, None] * e[:, None, :]
            + D[:, None, None] * t[:, :, None] * t[:, None, :]
        )

    def hessian(X):
        r, e, t, (b, b1, b2), (p, p1, p2) = _parts(X)
        rr = np.maximum(r, 1e-300)
        z = np.zeros_like(r)
        if radial_comp:
            g, g_r, g_th = b * p, b1 * p, b * p1
            g_rr, g_rth, g_thth = b2 * p, b1 * p1, b * p2
            h = h_r = h_th = h_rr = h_rth = h_thth = z
        else:
            h, h_r, h_th = b * p, b1 * p, b * p1
            h_rr, h_rth, h_thth = b2 * p, b1 * p1, b * p2
            g = g_r = g_th = g_rr = g_rth = g_thth = z
        # coefficients of DT = A e e + B e t + C t e + D t t
        A, B = g_r, (g_th - h) / rr
        C, D = h_r, (h_th + g) / rr
        A_r, A_th = g_rr, g_rth
        B_r = (g_rth - h_r) / rr - (g_th - h) / rr**2
        B_th = (g_thth - h_th) / rr
        C_r, C_th = h_rr, h_rth
        D_r = (h_rth + g_r) / rr - (h_th + g) / rr**2
        D_th = (h_thth + g_th) / rr

        ee = e[:, :, None] * e[:, None, :]
        et = e[:, :, None] * t[:, None, :]
        te = t[:, :, None] * e[:, None, :]
        tt = t[:, :, None] * t[:, None, :]

        def outer3(M2, v):
            return M2[:, :, :, None] * v[:, None, None, :]

        tk = t / rr[:, None]
        H = outer3(ee, A_r[:, None] * e + A_th[:, None] * tk)
        H += outer3(et + te, A[:, None] * tk)
        H += outer3(et, B_r[:, None] * e + B_th[:, None] * tk)
        H += outer3(tt - ee, B[:, None] * tk)
        H += outer3(te, C_r[:, None] * e + C_th[:, None] * tk)
        H += outer3(tt - ee, C[:, None] * tk)
        H += outer3(tt, D_r[:, None] * e + D_th[:, None] * tk)
        H -= outer3(et + te, D[:, None] * tk)
        return H

    # sup |DT| sampled densely from the plateau outward: the steep inner
    # ramp lies inside the obstacle, where the transport map is never
    # applied, so it does not constrain the admissible eps.
    rs = np.linspace(profile.r1 + 1e-9, profile.r3 - 1e-9, 160)
    ths = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
    Rg, Tg = np.meshgrid(rs, ths)
    pts = np.asarray(center) + np.stack(
        [Rg.ravel() * np.cos(Tg.ravel()), Rg.ravel() * np.sin(Tg.ravel())], axis=1
    )
    J = jacobian(pts)
    sup_jac = float(np.sqrt((J**2).sum(axis=(1, 2))).max())

    return DeformationField(
        value=value,
        jacobian=jacobian,
        hessian=hessian,
        center=tuple(np.asarray(center, dtype=float)),
        r_in=profile.r0,
        r_out=profile.r3,
        sup_jac=sup_jac,
        name=name,
    )


def deformation_profile(shape: ShapeConfig, pad: float = 0.08) -> BumpProfile:
    """Default radial blend for direction fields on this shape.

    The plateau covers the obstacle boundary band with margin ``pad``; the
    outer ramp ends well inside the container so the field vanishes near
    the wall.
    """
    rmin, rmax = shape.radial_range()
    pts = shape.obstacle_points(np.linspace(0, 2 * np.pi, 256, endpoint=False))
    wall = float((-shape.container_distance(pts)).min()) + rmin  # rough wall distance
    r3 = rmax + 0.75 * (wall - rmax)
    r0 = max(0.25 * rmin, rmin - 3 * pad)
    r1 = max(r0 + 0.5 * (rmin - r0), rmin - pad)
    r2 = rmax + pad
    if not (r0 < r1 <= rmin and rmax <= r2 < r3):
        raise ValueError("shape leaves no room for the deformation blend")
    return BumpProfile(r0, r1, r2, r3)


def fourier_direction_field(
    shape: ShapeConfig, mode_index: int, profile: BumpProfile | None = None
) -> DeformationField:
    """Radial direction field matching one Fourier shape parameter.

    Index 0 perturbs rho0 (psi = 1); odd index 2k-1 the cos-k coefficient;
    even index 2k the sin-k coefficient.  On the obstacle boundary the
    field is psi_k(theta) e_r, so moving the shape with eps*T_k changes the
    corresponding Fourier parameter by eps at first order.
    """
    if profile is None:
        profile = deformation_profile(shape)
    if mode_index == 0:
        mode = _TrigMode(0, "one")
    elif mode_index % 2 == 1:
        mode = _TrigMode((mode_index + 1) // 2, "cos")
    else:
        mode = _TrigMode(mode_index // 2, "sin")
    return _polar_field(
        profile, mode, shape.obstacle_center, "radial", name=f"mode{mode_index}"
    )


def tangential_test_field(shape: ShapeConfig, k: int = 1) -> DeformationField:
    """Purely tangential field on the obstacle boundary (T . n = 0 there)."""
    profile = deformation_profile(shape)
    return _polar_field(
        profile, _TrigMode(k, "cos"), shape.obstacle_center, "angular", name=f"tang{k}"
    )


def sum_fields(fields, name="") -> DeformationField:
    """Pointwise sum of deformation fields (support is the union)."""
    fields = list(fields)

    def value(X):
        return sum(f.value(X) for f in fields)

    def jacobian(X):
        return sum(f.jacobian(X) for f in fields)

    def hessian(X):
        return sum(f.hessian(X) for f in fields)

    return DeformationField(
        value=value,
        jacobian=jacobian,
        hessian=hessian,
        center=fields[0].center,
        r_in=min(f.r_in for f in fields),
        r_out=max(f.r_out for f in fields),
        sup_jac=sum(f.sup_jac for f in fields),
        name=name or "+".join(f.name for f in fields),
    )


def translation_direction_field(
    shape: ShapeConfig, c, profile: BumpProfile | None = None
) -> DeformationField:
    """Field equal to the constant vector c wherever the blend is one.

    Rigid near the obstacle (DT = 0 on the plateau), which makes the
    transported drag cutoff coincide with the plain one there; used for
    rigid-shift sensitivities and formula cross-checks.
    """
    if profile is None:
        profile = deformation_profile(shape)
    c = np.asarray(c, dtype=float)
    parts = []
    # c . e_r = c1 cos + c2 sin;  c . e_theta = -c1 sin + c2 cos
    if c[0] != 0.0:
        parts.append(_polar_field(profile, _TrigMode(1, "cos"), shape.obstacle_center, "radial").scaled(c[0]))
        parts.append(_polar_field(profile, _TrigMode(1, "sin"), shape.obstacle_center, "angular").scaled(-c[0]))
    if c[1] != 0.0:
        parts.append(_polar_field(profile, _TrigMode(1, "sin"), shape.obstacle_center, "radial").scaled(c[1]))
        parts.append(_polar_field(profile, _TrigMode(1, "cos"), shape.obstacle_center, "angular").scaled(c[1]))
    return sum_fields(parts, name=f"shift({c[0]:g},{c[1]:g})")


# ---------------------------------------------------------------------------
# transport map and transform quantities
# ---------------------------------------------------------------------------


def check_eps(T: DeformationField, eps: float):
    if abs(eps) > T.eps_max():
        raise ValueError(
            f"|eps|={abs(eps):.4g} exceeds eps_max={T.eps_max():.4g} (0.5/sup|DT|)"
        )


def transport_map(T: DeformationField, eps: float, X):
    """y = x + eps T(x); diffeomorphic onto its image for |eps| <= eps_max."""
    check_eps(T, eps)
    X = np.asarray(X, dtype=float)
    return X + eps * T.value(X)


def inverse_transport(T: DeformationField, eps: float, Y, tol=1e-12, maxit=60):
    """Solve y(x) = Y pointwise by Newton iteration, starting from x = Y."""
    check_eps(T, eps)
    Y = np.asarray(Y, dtype=float)
    X = Y.copy()
    for _ in range(maxit):
        res = X + eps * T.value(X) - Y
        if np.abs(res).max() < tol:
            return X
        J = np.eye(2) + eps * T.jacobian(X)
        X = X - np.linalg.solve(J, res[:, :, None])[:, :, 0]
    raise RuntimeError(
        f"inverse transport Newton stalled at |res|={np.abs(res).max():.3g} "
        "(eps too large or point outside the image)"
    )


@dataclass
class TransformQuantities:
    """Pointwise transform calculus of y = x + eps T.

    All arrays are batched over the evaluation points.  Index conventions:
    DT[i, j] = d T_j / d x_i (so M = I + eps DT), dNiT[l, k, j] = d_j of
    (N^{-T})_{lk}, dO[i, k, j] = d_j of O_{ik}.
    """

    eps: float
    M: np.ndarray
    g: np.ndarray
    N: np.ndarray
    Ninv: np.ndarray
    NiT: np.ndarray
    O: np.ndarray
    trO: np.ndarray
    dNiT: np.ndarray
    dO: np.ndarray


def transform_quantities(T: DeformationField, eps: float, X) -> TransformQuantities:
    """Evaluate M, g, N, O and their exact spatial derivatives at points X."""
    check_eps(T, eps)
    X = np.asarray(X, dtype=float)
    Jf = T.jacobian(X)  # [i, j] = d T_i / d x_j
    H = T.hessian(X)  # [i, j, k] = d^2 T_i / dx_j dx_k
    DT = np.swapaxes(Jf, 1, 2)  # paper convention DT_ij = d_i T_j
    n = len(X)
    I2 = np.broadcast_to(np.eye(2), (n, 2, 2))
    M = I2 + eps * DT
    g = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    if np.any(g <= 0.0):
        raise ValueError("transform not orientation preserving at some point")
    Minv = np.empty_like(M)
    Minv[:, 0, 0] = M[:, 1, 1]
    Minv[:, 1, 1] = M[:, 0, 0]
    Minv[:, 0, 1] = -M[:, 0, 1]
    Minv[:, 1, 0] = -M[:, 1, 0]
    Minv = Minv / g[:, None, None]
    N = g[:, None, None] * Minv
    Ninv = M / g[:, None, None]
    NiT = np.swapaxes(M, 1, 2) / g[:, None, None]

    trJ = Jf[:, 0, 0] + Jf[:, 1, 1]
    O = trJ[:, None, None] * I2 - DT
    trO = trJ

    # dM[a, b, j] = eps * d_j DT_ab = eps * H[b, a, j]
    dM = eps * np.transpose(H, (0, 2, 1, 3))
    # dg_j = g * tr(M^{-1} dM_j)
    dg = g[:, None] * np.einsum("nab,nbaj->nj", Minv, dM)
    # d(N^{-T})_{lk,j} = d(M^T)_{lk,j}/g - (M^T)_{lk} dg_j / g^2
    dMT = np.transpose(dM, (0, 2, 1, 3))
    dNiT = dMT / g[:, None, None, None] - (
        np.swapaxes(M, 1, 2)[:, :, :, None] * dg[:, None, None, :]
    ) / (g**2)[:, None, None, None]
    # dO[i, k, j] = d_j(trJ) delta_ik - H[k, i, j]
    dtrJ = H[:, 0, 0, :] + H[:, 1, 1, :]
    dO = np.einsum("nj,ik->nikj", dtrJ, np.eye(2)) - np.transpose(H, (0, 2, 1, 3))

    return TransformQuantities(
        eps=eps, M=M, g=g, N=N, Ninv=Ninv, NiT=NiT, O=O, trO=trO, dNiT=dNiT, dO=dO
    )


def piola_transform(
    xi: AnalyticVectorField, T: DeformationField, eps: float
) -> AnalyticVectorField:
    """Push a divergence-free field forward to the deformed domain.

    Returns xi_eps = (N^{-T} xi) o y^{-1} with exact gradient via the chain
    rule; divergence-freeness is preserved by construction of the Piola
    transform.
    """
    check_eps(T, eps)

    def value(Yp):
        Xp = inverse_transport(T, eps, Yp)
        tq = transform_quantities(T, eps, Xp)
        return np.einsum("nlk,nk->nl", tq.NiT, xi.value(Xp))

    def grad(Yp):
        Xp = inverse_transport(T, eps, Yp)
        tq = transform_quantities(T, eps, Xp)
        v = xi.value(Xp)
        Gv = xi.grad(Xp)
        # W(x) = N^{-T}(x) xi(x); dW_l/dx_j = NiT_lk dxi_k/dx_j + dNiT_lkj xi_k
        GW = np.einsum("nlk,nkj->nlj", tq.NiT, Gv) + np.einsum("nlkj,nk->nlj", tq.dNiT, v)
        # d/dy = d/dx * (dy/dx)^{-1}, and (dy/dx) = M^T
        MTinv = np.linalg.inv(np.swapaxes(tq.M, 1, 2))
        return np.einsum("nlj,njm->nlm", GW, MTinv)

    return AnalyticVectorField(value=value, grad=grad, name=f"piola({xi.name})")


def boundary_normal_speed(T: DeformationField, shape: ShapeConfig, thetas):
    """T . n at obstacle boundary points rho(theta), n outward of the fluid."""
    thetas = np.asarray(thetas, dtype=float)
    pts = shape.obstacle_points(thetas)
    n = shape.obstacle_normal(thetas)
    return np.einsum("ni,ni->n", T.value(pts), n)


def boundary_speed_at_points(T: DeformationField, shape: ShapeConfig, X, tol=1e-10):
    """T . n at arbitrary points that must lie on the obstacle boundary."""
    X = np.asarray(X, dtype=float)
    u = X - np.asarray(shape.obstacle_center)
    theta = np.arctan2(u[:, 1], u[:, 0])
    r = np.linalg.norm(u, axis=1)
    off = np.abs(r - shape.rho(theta))
    if off.max() > tol * max(1.0, shape.rho0):
        raise ValueError(f"point off the obstacle boundary by {off.max():.3g}")
    n = shape.obstacle_normal(theta)
    return np.einsum("ni,ni->n", T.value(X), n)
