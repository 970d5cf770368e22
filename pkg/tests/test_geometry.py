import numpy as np
import pytest

from flowshape.fields import AnalyticVectorField, BumpProfile, curl_bump_field
from flowshape.geometry import (
    ShapeConfig,
    boundary_normal_speed,
    deformation_profile,
    fourier_direction_field,
    inverse_transport,
    piola_transform,
    tangential_test_field,
    transform_quantities,
    transport_map,
)

SHAPE = ShapeConfig(rho0=0.25, cos_coeffs=(0.02,), sin_coeffs=(0.0,)).validate()


def sample_points(rng, n=40, lo=0.18, hi=0.8):
    r = rng.uniform(lo, hi, n)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


@pytest.mark.parametrize("mode_index", [0, 1, 2, 3])
def test_direction_field_jacobian_matches_fd(mode_index):
    T = fourier_direction_field(SHAPE, mode_index)
    rng = np.random.default_rng(mode_index)
    X = sample_points(rng)
    J = T.jacobian(X)
    h = 1e-6
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        fd = (T.value(X + dx) - T.value(X - dx)) / (2 * h)
        np.testing.assert_allclose(J[:, :, j], fd, atol=5e-9)


@pytest.mark.parametrize("mode_index", [0, 2])
def test_direction_field_hessian_matches_fd(mode_index):
    T = fourier_direction_field(SHAPE, mode_index)
    rng = np.random.default_rng(10 + mode_index)
    X = sample_points(rng, n=25)
    H = T.hessian(X)
    h = 1e-5
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        fd = (T.jacobian(X + dx) - T.jacobian(X - dx)) / (2 * h)
        np.testing.assert_allclose(H[:, :, :, j], fd, atol=2e-7)


def test_field_vanishes_outside_support():
    T = fourier_direction_field(SHAPE, 1)
    X = np.array([[0.0, 0.01], [0.95, 0.0], [0.0, -0.99]])
    assert np.all(T.value(X) == 0.0)
    assert np.all(T.jacobian(X) == 0.0)


def test_transport_identity_at_zero_eps():
    T = fourier_direction_field(SHAPE, 0)
    X = sample_points(np.random.default_rng(0))
    np.testing.assert_array_equal(transport_map(T, 0.0, X), X)


def test_transport_rejects_large_eps():
    T = fourier_direction_field(SHAPE, 1)
    with pytest.raises(ValueError):
        transport_map(T, 10 * T.eps_max(), np.zeros((1, 2)))


def test_inverse_transport_roundtrip():
    T = fourier_direction_field(SHAPE, 2)
    eps = 0.5 * T.eps_max()
    X = sample_points(np.random.default_rng(1))
    Y = transport_map(T, eps, X)
    np.testing.assert_allclose(inverse_transport(T, eps, Y), X, atol=1e-10)


def test_transform_quantities_at_zero_eps_are_exact_identities():
    T = fourier_direction_field(SHAPE, 1)
    X = sample_points(np.random.default_rng(2))
    tq = transform_quantities(T, 0.0, X)
    assert np.all(tq.g == 1.0)
    assert np.all(tq.M == np.eye(2))
    assert np.all(tq.N == np.eye(2))
    assert np.all(tq.NiT == np.eye(2))
    assert np.all(tq.dNiT == 0.0)


def test_O_identity_pointwise():
    # O + DT = (div T) I exactly at every evaluation point.
    T = fourier_direction_field(SHAPE, 2)
    X = sample_points(np.random.default_rng(3))
    tq = transform_quantities(T, 1e-3, X)
    J = T.jacobian(X)
    DT = np.swapaxes(J, 1, 2)
    divT = J[:, 0, 0] + J[:, 1, 1]
    np.testing.assert_allclose(
        tq.O + DT, divT[:, None, None] * np.eye(2), atol=1e-14
    )


def test_expansion_slopes_for_g_and_N():
    # |g - (1 + eps div T)| is O(eps^2); in 2D the adjugate identity makes
    # N = I + eps O exact, which is stronger than the O(eps^2) bound.
    T = fourier_direction_field(SHAPE, 1)
    X = sample_points(np.random.default_rng(4))
    J = T.jacobian(X)
    divT = J[:, 0, 0] + J[:, 1, 1]
    errs_g = []
    eps_list = [1e-2, 5e-3, 2.5e-3]
    for eps in eps_list:
        tq = transform_quantities(T, eps, X)
        errs_g.append(np.abs(tq.g - (1.0 + eps * divT)).max())
        assert np.abs(tq.N - (np.eye(2) + eps * tq.O)).max() < 1e-14
    slopes = np.diff(np.log(errs_g)) / np.diff(np.log(eps_list))
    assert np.all(slopes >= 1.95)


def test_dNiT_matches_fd():
    T = fourier_direction_field(SHAPE, 1)
    eps = 5e-3
    X = sample_points(np.random.default_rng(5), n=20)
    tq = transform_quantities(T, eps, X)
    h = 1e-6
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        fp = transform_quantities(T, eps, X + dx).NiT
        fm = transform_quantities(T, eps, X - dx).NiT
        np.testing.assert_allclose(tq.dNiT[:, :, :, j], (fp - fm) / (2 * h), atol=1e-8)


def test_dO_matches_fd():
    T = fourier_direction_field(SHAPE, 2)
    X = sample_points(np.random.default_rng(6), n=20)
    tq = transform_quantities(T, 1e-3, X)
    h = 1e-6
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        fp = transform_quantities(T, 1e-3, X + dx).O
        fm = transform_quantities(T, 1e-3, X - dx).O
        np.testing.assert_allclose(tq.dO[:, :, :, j], (fp - fm) / (2 * h), atol=1e-8)


def test_piola_transform_identity_at_zero():
    xi = curl_bump_field((0.4, 0.0), 0.3)
    T = fourier_direction_field(SHAPE, 1)
    xi0 = piola_transform(xi, T, 0.0)
    X = sample_points(np.random.default_rng(7))
    np.testing.assert_allclose(xi0.value(X), xi.value(X), atol=1e-12)
    np.testing.assert_allclose(xi0.grad(X), xi.grad(X), atol=1e-12)


def test_piola_gradient_matches_fd():
    xi = curl_bump_field((0.4, 0.0), 0.3)
    T = fourier_direction_field(SHAPE, 1)
    eps = 0.3 * T.eps_max()
    xie = piola_transform(xi, T, eps)
    X = sample_points(np.random.default_rng(8), n=15, lo=0.3, hi=0.7)
    G = xie.grad(X)
    h = 1e-6
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = h
        fd = (xie.value(X + dx) - xie.value(X - dx)) / (2 * h)
        np.testing.assert_allclose(G[:, :, j], fd, atol=1e-7)


def test_normal_speed_conventions():
    # Circle: radial field has T.n = -1 with n outward of the fluid domain.
    circle = ShapeConfig(rho0=0.25).validate()
    T = fourier_direction_field(circle, 0)
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    np.testing.assert_allclose(boundary_normal_speed(T, circle, th), -1.0, atol=1e-12)
    # Tangential field: T.n = 0.
    Tt = tangential_test_field(circle, 2)
    np.testing.assert_allclose(boundary_normal_speed(Tt, circle, th), 0.0, atol=1e-12)


def test_constant_in_plateau_translates():
    # Where the blend is one the mode-0 field is exactly the radial unit field.
    T = fourier_direction_field(SHAPE, 0)
    prof = deformation_profile(SHAPE)
    th = np.array([0.3, 2.0])
    r = 0.5 * (prof.r1 + prof.r2)
    X = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    eps = 0.5 * T.eps_max()
    y = transport_map(T, eps, X)
    np.testing.assert_allclose(y, X + eps * X / r, atol=1e-14)
