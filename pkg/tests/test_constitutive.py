import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowshape.constitutive import (
    ViscosityModel,
    certify_assumptions,
    stress,
    stress_tangent,
    stress_tangent_transpose,
)

CARREAU = ViscosityModel(kind="carreau", nu0=2.0, nu_inf=1.0, lam=1.0, r=3.0)


def sym(m):
    return 0.5 * (m + m.T)


def rand_sym(rng, scale=1.0):
    return sym(rng.uniform(-scale, scale, (2, 2)))


def test_newtonian_identity():
    model = ViscosityModel(kind="newtonian", nu0=1.0)
    np.testing.assert_allclose(stress(model, np.eye(2)), np.eye(2))


def test_zero_input_gives_zero_stress():
    np.testing.assert_allclose(stress(CARREAU, np.zeros((2, 2))), 0.0)


def test_carreau_scalar_oracle():
    # Independent scalar evaluation of nu at s = |diag(1,-1)|^2 = 2.
    D = np.diag([1.0, -1.0])
    nu2 = 1.0 + (2.0 - 1.0) * (1.0 + 1.0 * 2.0) ** ((3.0 - 2.0) / 2.0)
    np.testing.assert_allclose(stress(CARREAU, D), nu2 * D, rtol=1e-14)


def test_tangent_newtonian_is_scaled_identity():
    model = ViscosityModel(kind="newtonian", nu0=2.5)
    D = np.array([[0.3, 0.1], [0.1, -0.2]])
    E = np.diag([1.0, 0.0])
    np.testing.assert_allclose(stress_tangent(model, D, E), 2.5 * E)


def test_tangent_at_zero_is_nu0_times_direction():
    E = np.array([[0.2, -0.4], [-0.4, 1.0]])
    np.testing.assert_allclose(
        stress_tangent(CARREAU, np.zeros((2, 2)), E), CARREAU.nu(0.0) * E
    )


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_tangent_matches_central_difference(seed):
    rng = np.random.default_rng(seed)
    D = rand_sym(rng, 2.0)
    E = rand_sym(rng, 2.0)
    h = 1e-5
    fd = (stress(CARREAU, D + h * E) - stress(CARREAU, D - h * E)) / (2 * h)
    an = stress_tangent(CARREAU, D, E)
    assert np.linalg.norm(fd - an) / np.linalg.norm(an) < 1e-6


def test_tangent_transpose_definition():
    rng = np.random.default_rng(3)
    D, E, F = (rand_sym(rng) for _ in range(3))
    lhs = np.tensordot(stress_tangent(CARREAU, D, E), F)
    rhs = np.tensordot(E, stress_tangent_transpose(CARREAU, D, F))
    assert abs(lhs - rhs) < 1e-12


def test_tangent_self_adjoint_by_expansion():
    # nu E + 2 nu' (D:E) D is symmetric in pairing E against F termwise.
    rng = np.random.default_rng(4)
    for _ in range(20):
        D, E = rand_sym(rng, 3.0), rand_sym(rng, 3.0)
        np.testing.assert_allclose(
            stress_tangent_transpose(CARREAU, D, E),
            stress_tangent(CARREAU, D, E),
            rtol=1e-14,
            atol=1e-14,
        )


def test_potential_consistency():
    # d/dt Phi(|D + tE|^2) at t=0 equals S(D):E.
    rng = np.random.default_rng(5)
    for _ in range(10):
        D, E = rand_sym(rng, 2.0), rand_sym(rng, 2.0)
        h = 1e-6
        sp = np.tensordot(D + h * E, D + h * E)
        sm = np.tensordot(D - h * E, D - h * E)
        fd = (CARREAU.potential(sp) - CARREAU.potential(sm)) / (2 * h)
        exact = np.tensordot(stress(CARREAU, D), E)
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))


@settings(max_examples=50, deadline=None)
@given(
    d=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    angle=st.floats(0, 2 * np.pi),
)
def test_frame_symmetry(d, angle):
    # S(Q D Q^T) = Q S(D) Q^T for rotations Q.
    D = np.array([[d[0], d[2]], [d[2], d[1]]])
    c, s = np.cos(angle), np.sin(angle)
    Q = np.array([[c, -s], [s, c]])
    lhs = stress(CARREAU, Q @ D @ Q.T)
    rhs = Q @ stress(CARREAU, D) @ Q.T
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_certify_newtonian_constants():
    # For r = 2 the normalizer 1 + |A|^(r-2) equals 2, so the extremal
    # ellipticity ratio of the linear law is nu0/2; monotonicity gives nu0.
    model = ViscosityModel(kind="newtonian", nu0=1.7)
    rep = certify_assumptions(model, n_samples=2000, radius=5.0, seed=1)
    assert rep.admissible()
    np.testing.assert_allclose([rep.c1, rep.c2], [0.85, 0.85], rtol=1e-12)
    np.testing.assert_allclose(rep.c5, 1.7, rtol=1e-10)


def test_certify_carreau_all_positive():
    rep = certify_assumptions(CARREAU, n_samples=10_000, radius=10.0, seed=2)
    assert rep.admissible()
    assert rep.c1 <= rep.c2
    assert min(rep.c1, rep.c3, rep.c4, rep.c5) > 0.0


def test_certify_regularized_law_near_origin():
    # nu_inf = 0 keeps nu(0) = nu0 > 0 under the regularized form, so the
    # ellipticity estimate stays away from zero even with samples near A = 0.
    model = ViscosityModel(kind="carreau", nu0=1.0, nu_inf=0.0, lam=1.0, r=3.0)
    rep = certify_assumptions(model, n_samples=5000, radius=10.0, seed=3)
    assert rep.c1 > 0.05


def test_growth_and_monotonicity_hold_on_samples():
    rng = np.random.default_rng(6)
    A = np.array([rand_sym(rng, 10.0) for _ in range(200)])
    B = np.array([rand_sym(rng, 10.0) for _ in range(200)])
    rep = certify_assumptions(CARREAU, n_samples=4000, radius=10.0, seed=4)
    nA = np.sqrt(np.einsum("nij,nij->n", A, A))
    SA = stress(CARREAU, A)
    assert np.all(
        np.sqrt(np.einsum("nij,nij->n", SA, SA)) <= rep.c4 * (1 + nA ** (CARREAU.r - 1)) + 1e-9
    )
    diff = A - B
    mono = np.einsum("nij,nij->n", stress(CARREAU, A) - stress(CARREAU, B), diff)
    dn = np.sqrt(np.einsum("nij,nij->n", diff, diff))
    assert np.all(mono >= rep.c5 * dn**CARREAU.r - 1e-9)


def test_invalid_models_rejected():
    with pytest.raises(ValueError):
        ViscosityModel(kind="carreau", r=4.5)
    with pytest.raises(ValueError):
        ViscosityModel(kind="newtonian", r=3.0)
    with pytest.raises(ValueError):
        ViscosityModel(kind="stokes")
