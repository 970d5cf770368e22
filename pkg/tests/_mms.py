"""Manufactured solutions on the concentric annulus (rho0=0.25, R=1).

Stream function psi = amp * q(|x|^2) with q having double roots at both
circle radii squared, so v = perp-grad(psi) is divergence-free with zero
trace on both boundaries for every time amplitude.
"""

import numpy as np
from numpy.polynomial import Polynomial

from flowshape.fields import AnalyticVectorField, BodyForce

S0, S1 = 0.25**2, 1.0**2
_q = Polynomial.fromroots([S0, S0, S1, S1])
_q1 = _q.deriv()
_q2 = _q1.deriv()
_q3 = _q2.deriv()


def _perp(X):
    return np.stack([X[:, 1], -X[:, 0]], axis=1)


def velocity(X, amp=8.0):
    X = np.asarray(X, dtype=float)
    s = (X**2).sum(axis=1)
    return 2.0 * amp * _q1(s)[:, None] * _perp(X)


def velocity_grad(X, amp=8.0):
    X = np.asarray(X, dtype=float)
    s = (X**2).sum(axis=1)
    P = _perp(X)
    G = 4.0 * amp * _q2(s)[:, None, None] * P[:, :, None] * X[:, None, :]
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    G += 2.0 * amp * _q1(s)[:, None, None] * rot
    return G


def _laplacian(X, amp):
    s = (X**2).sum(axis=1)
    return amp * (8.0 * _q3(s) * s + 16.0 * _q2(s))[:, None] * _perp(X)


def _conv(X, amp):
    s = (X**2).sum(axis=1)
    return -4.0 * amp**2 * (_q1(s) ** 2)[:, None] * X


def pressure(X, t=0.0):
    X = np.asarray(X, dtype=float)
    return np.sin(X[:, 0]) * np.cos(X[:, 1]) * (1.0 + 0.3 * np.cos(t))


def pressure_grad(X, t=0.0):
    X = np.asarray(X, dtype=float)
    b = 1.0 + 0.3 * np.cos(t)
    return b * np.stack(
        [np.cos(X[:, 0]) * np.cos(X[:, 1]), -np.sin(X[:, 0]) * np.sin(X[:, 1])], axis=1
    )


def alpha(t):
    return 1.0 + 0.5 * np.sin(2.0 * t)


def dalpha(t):
    return 1.0 * np.cos(2.0 * t)


def manufactured_force(nu0, C, amp=8.0) -> BodyForce:
    """f = dt v + (grad v)v - nu0/2 lap v + grad p + C v for the exact fields."""
    C = np.asarray(C, dtype=float)

    class _F:
        def value(self, t, X):
            X = np.asarray(X, dtype=float)
            a = alpha(t)
            out = dalpha(t) * velocity(X, amp)
            out += a**2 * _conv(X, amp)
            out -= 0.5 * nu0 * a * _laplacian(X, amp)
            out += pressure_grad(X, t)
            out += a * velocity(X, amp) @ C.T
            return out

        def grad(self, t, X):  # not used by the state solver
            raise NotImplementedError

    return _F()


def exact_velocity_field(t, amp=8.0) -> AnalyticVectorField:
    return AnalyticVectorField(
        value=lambda X: alpha(t) * velocity(X, amp),
        grad=lambda X: alpha(t) * velocity_grad(X, amp),
        name="mms",
    )
