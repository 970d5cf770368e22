"""Analytic scalar and vector fields with exact derivatives.

Everything the solver needs pointwise (body force, initial velocity, the
divergence-free drag cutoff, deformation blend profiles) is built from a
small set of closed-form pieces so that gradients and Hessians entering the
assembly are exact, never finite-differenced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


# ---------------------------------------------------------------------------
# scalar profiles
# ---------------------------------------------------------------------------


def _smoothstep5(t):
    """Quintic ramp q with q(0)=0, q(1)=1 and q'=q''=0 at both ends."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def _smoothstep5_d1(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t**2 * (1.0 - t) ** 2, 0.0)


def _smoothstep5_d2(t):
    inside = (t > 0.0) & (t < 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t), 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """C^2 radial plateau profile.

    Zero for r <= r0, quintic ramp up on [r0, r1], one on [r1, r2], quintic
    ramp down on [r2, r3], zero for r >= r3.  Setting r0 = r1 = 0 gives a
    pure cutoff that equals one out to r2.
    """

    r0: float
    r1: float
    r2: float
    r3: float

    def __post_init__(self):
        if not (self.r0 <= self.r1 <= self.r2 <= self.r3):
            raise ValueError(f"profile radii must be ordered, got {self}")

    def _pieces(self, r):
        r = np.asarray(r, dtype=float)
        up = (r - self.r0) / max(self.r1 - self.r0, 1e-300)
        dn = (self.r3 - r) / max(self.r3 - self.r2, 1e-300)
        return r, up, dn

    def val(self, r):
        r, up, dn = self._pieces(r)
        out = np.ones_like(r)
        out = np.where(r < self.r1, _smoothstep5(up), out)
        out = np.where(r > self.r2, _smoothstep5(dn), out)
        return out

    def d1(self, r):
        r, up, dn = self._pieces(r)
        out = np.zeros_like(r)
        if self.r1 > self.r0:
            out = np.where(r < self.r1, _smoothstep5_d1(up) / (self.r1 - self.r0), out)
        if self.r3 > self.r2:
            out = np.where(r > self.r2, -_smoothstep5_d1(dn) / (self.r3 - self.r2), out)
        return out

    def d2(self, r):
        r, up, dn = self._pieces(r)
        out = np.zeros_like(r)
        if self.r1 > self.r0:
            out = np.where(r < self.r1, _smoothstep5_d2(up) / (self.r1 - self.r0) ** 2, out)
        if self.r3 > self.r2:
            out = np.where(r > self.r2, _smoothstep5_d2(dn) / (self.r3 - self.r2) ** 2, out)
        return out


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticVectorField:
    """Time-independent vector field with exact first derivatives.

    value(X) -> (n, 2); grad(X) -> (n, 2, 2) with grad[:, i, j] = d v_i / d x_j.
    """

    value: Callable
    grad: Callable
    name: str = ""


def zero_field() -> AnalyticVectorField:
    return AnalyticVectorField(
        value=lambda X: np.zeros_like(np.asarray(X, dtype=float)),
        grad=lambda X: np.zeros((len(X), 2, 2)),
        name="zero",
    )


def constant_field(c) -> AnalyticVectorField:
    c = np.asarray(c, dtype=float)
    return AnalyticVectorField(
        value=lambda X: np.broadcast_to(c, (len(X), 2)).copy(),
        grad=lambda X: np.zeros((len(X), 2, 2)),
        name="constant",
    )


def gaussian_field(center, width, direction, amplitude=1.0) -> AnalyticVectorField:
    """f(x) = A exp(-|x-c|^2 / w^2) * direction."""
    c = np.asarray(center, dtype=float)
    d = np.asarray(direction, dtype=float)
    w2 = float(width) ** 2

    def value(X):
        X = np.asarray(X, dtype=float)
        s = np.exp(-((X - c) ** 2).sum(axis=1) / w2)
        return amplitude * s[:, None] * d

    def grad(X):
        X = np.asarray(X, dtype=float)
        u = X - c
        s = np.exp(-(u**2).sum(axis=1) / w2)
        # d f_i / d x_j = A s * d_i * (-2 u_j / w^2)
        return amplitude * s[:, None, None] * d[None, :, None] * (-2.0 / w2) * u[:, None, :]

    return AnalyticVectorField(value=value, grad=grad, name="gaussian")


def curl_bump_field(center, radius, amplitude=1.0) -> AnalyticVectorField:
    """Divergence-free field supported in a disk: perp-gradient of a bump.

    Stream function w(x) = A (1 - s^2)^3 with s = |x - c| / R inside the
    disk, zero outside; the field is C^2 and vanishes together with its
    gradient on the support boundary.
    """
    c = np.asarray(center, dtype=float)
    R = float(radius)

    def _stream_derivs(X):
        X = np.asarray(X, dtype=float)
        u = X - c
        s2 = (u**2).sum(axis=1) / R**2
        inside = s2 < 1.0
        q = np.where(inside, 1.0 - s2, 0.0)
        # w = A q^3; dw/ds2 = -3A q^2; d2w/ds2^2 = 6A q
        w1 = -3.0 * amplitude * q**2
        w2 = 6.0 * amplitude * q
        return u, s2, w1, w2

    def value(X):
        u, _, w1, _ = _stream_derivs(X)
        # grad w = w1 * 2u/R^2; perp-grad = (d2 w, -d1 w)
        g = w1[:, None] * (2.0 / R**2) * u
        return np.stack([g[:, 1], -g[:, 0]], axis=1)

    def grad(X):
        u, _, w1, w2 = _stream_derivs(X)
        # Hessian of w: (2/R^2) w1 I + (4/R^4) w2 u u^T
        n = len(u)
        H = np.zeros((n, 2, 2))
        H[:, 0, 0] = H[:, 1, 1] = (2.0 / R**2) * w1
        H += (4.0 / R**4) * w2[:, None, None] * u[:, :, None] * u[:, None, :]
        G = np.zeros((n, 2, 2))
        G[:, 0, :] = H[:, 1, :]
        G[:, 1, :] = -H[:, 0, :]
        return G

    return AnalyticVectorField(value=value, grad=grad, name="curl_bump")


# ---------------------------------------------------------------------------
# body force with a scalar time factor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BodyForce:
    """Separable body force f(t, x) = time_factor(t) * spatial(x)."""

    spatial: AnalyticVectorField
    time_factor: Callable = None

    def _tf(self, t) -> float:
        return 1.0 if self.time_factor is None else float(self.time_factor(t))

    def value(self, t, X):
        return self._tf(t) * self.spatial.value(X)

    def grad(self, t, X):
        return self._tf(t) * self.spatial.grad(X)


def zero_force() -> BodyForce:
    return BodyForce(spatial=zero_field())
