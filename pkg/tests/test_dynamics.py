import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from contactfie import dynamics as D
from contactfie.model import model_from_dict
from conftest import arm_doc, particle_doc


def body(hx=0.0, hy=0.0, m=2.0, iz=0.5, gravity=(0.0, -9.81)):
    doc = particle_doc(gravity=gravity, m=m, iz=iz)
    doc["links"][0]["inertia"].update(hx=hx, hy=hy)
    doc["contacts"] = []
    return model_from_dict(doc)


def random_state(model, rng):
    q = rng.normal(0, 0.6, model.nv)
    v = rng.normal(0, 1.0, model.nv)
    return q, v


# --- mass matrix ----------------------------------------------------------

def test_free_body_mass_matrix():
    np.testing.assert_allclose(D.mass_matrix(body(), np.zeros(3)), np.diag([2.0, 2.0, 0.5]))
    M = D.mass_matrix(body(hx=0.3, hy=-0.2), np.zeros(3))
    np.testing.assert_allclose(M, [[2, 0, 0.2], [0, 2, 0.3], [0.2, 0.3, 0.5]], atol=1e-15)


@pytest.mark.parametrize("name", ["hopper", "arm"])
def test_mass_matrix_matches_energy_oracle(name, request, rng):
    model = request.getfixturevalue(name)
    for _ in range(100):
        q, v = random_state(model, rng)
        M = D.mass_matrix(model, q)
        Mo = O.mass_matrix(model, q)
        assert np.abs(M - Mo).max() <= 1e-9 * np.abs(Mo).max()
        np.testing.assert_allclose(M, M.T, atol=1e-14)
        assert np.linalg.eigvalsh(M)[0] > 0
        assert D.kinetic_energy(model, q, v) == pytest.approx(0.5 * v @ M @ v, rel=1e-12)


# --- bias -----------------------------------------------------------------

def test_free_body_gravity_at_rest():
    m, hx, g = 2.0, 0.3, 9.81
    h = D.bias(body(hx=hx, m=m), np.zeros(3), np.zeros(3))
    np.testing.assert_allclose(h, [0.0, m * g, g * hx], atol=1e-13)


def test_bias_zero_without_gravity_or_motion():
    doc = arm_doc()
    doc["gravity"] = [0.0, 0.0]
    q = np.array([0.1, 0.2, 0.3, -0.4, 0.05])
    np.testing.assert_allclose(D.bias(model_from_dict(doc), q, np.zeros(5)), 0.0, atol=1e-15)


@pytest.mark.parametrize("name", ["hopper", "arm"])
def test_bias_matches_lagrangian_oracle(name, request, rng):
    model = request.getfixturevalue(name)
    for _ in range(30):
        q, v = random_state(model, rng)
        h = D.bias(model, q, v)
        ho = O.bias(model, q, v)
        assert np.abs(h - ho).max() <= 1e-7 * (1 + np.abs(ho).max())
        np.testing.assert_allclose(D.bias(model, q, np.zeros(model.nv)),
                                   O.gravity_force(model, q), atol=1e-12)


# --- contact kinematics ---------------------------------------------------

def test_foot_on_ground_and_translation(hopper):
    q = np.array([0.0, 0.5, 0.0, 0.0])
    assert D.contact_kinematics(hopper, q).phi[0] == pytest.approx(0.0, abs=1e-15)
    up = q + np.array([0, 0.3, 0, 0])
    assert D.contact_kinematics(hopper, up).phi[0] == pytest.approx(0.3, abs=1e-15)


@pytest.mark.parametrize("name", ["hopper", "arm"])
def test_contact_jacobians_and_hessians(name, request, rng):
    model = request.getfixturevalue(name)
    for _ in range(30):
        q, _ = random_state(model, rng)
        kin = D.contact_kinematics(model, q, hessians=True)
        pts = lambda x: np.array(O.contact_points(model, x))
        np.testing.assert_allclose(kin.phi, pts(q)[:, 1], atol=1e-14)
        fd = O.jacobian_fd(pts, q)                   # (C, 2, N)
        assert np.abs(kin.Jt - fd[:, 0]).max() <= 1e-7
        assert np.abs(kin.Jn - fd[:, 1]).max() <= 1e-7
        Hn = O.jacobian_fd(lambda x: D.contact_kinematics(model, x).Jn, q)
        Ht = O.jacobian_fd(lambda x: D.contact_kinematics(model, x).Jt, q)
        assert np.abs(kin.Hn - Hn).max() <= 1e-6 * (1 + np.abs(Hn).max())
        assert np.abs(kin.Ht - Ht).max() <= 1e-6 * (1 + np.abs(Ht).max())


# --- derivative tensors ---------------------------------------------------

@pytest.mark.parametrize("name", ["hopper", "arm"])
def test_dynamics_derivatives(name, request, rng):
    model = request.getfixturevalue(name)
    for _ in range(20):
        q, v = random_state(model, rng)
        t = D.dynamics_terms(model, q, v, derivatives=True, params=True)
        dM = O.jacobian_fd(lambda x: D.mass_matrix(model, x), q)
        dhq = O.jacobian_fd(lambda x: D.bias(model, x, v), q)
        dhv = O.jacobian_fd(lambda x: D.bias(model, q, x), v)
        for an, fd in ((t.dM_dq, dM), (t.dh_dq, dhq), (t.dh_dv, dhv)):
            assert np.abs(an - fd).max() <= 1e-6 * (1 + np.abs(fd).max())
        pi = model.pi_vector()
        Mp = O.jacobian_fd(lambda p: D.mass_matrix(model.with_pi(p), q), pi)
        hp = O.jacobian_fd(lambda p: D.bias(model.with_pi(p), q, v), pi)
        assert np.abs(np.moveaxis(t.M_pi, 0, -1) - Mp).max() <= 1e-7 * (1 + np.abs(Mp).max())
        assert np.abs(t.h_pi.T - hp).max() <= 1e-7 * (1 + np.abs(hp).max())


# --- free velocity and integration -----------------------------------------

def test_free_velocity_examples(particle, hopper, rng):
    weightless = model_from_dict(particle_doc(gravity=(0.0, 0.0)))
    v0 = np.array([0.3, -0.2, 0.1])
    np.testing.assert_allclose(D.free_velocity(weightless, np.zeros(3), v0, [], 0.01), v0)
    vf = D.free_velocity(particle, np.zeros(3), np.zeros(3), [], 0.01)
    assert vf[1] == pytest.approx(-0.0981, abs=1e-15)
    for _ in range(10):
        q, v = random_state(hopper, rng)
        u = rng.normal(0, 50, 1)
        M = O.mass_matrix(hopper, q)
        expected = v + 0.025 * np.linalg.inv(M) @ (hopper.actuation_matrix() @ u
                                                  - O.bias(hopper, q, v))
        np.testing.assert_allclose(D.free_velocity(hopper, q, v, u, 0.025), expected, rtol=1e-7,
                                   atol=1e-9)
    with pytest.raises(ValueError):
        D.free_velocity(hopper, np.zeros(4), np.zeros(4), [0.0], 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.floats(1e-3, 0.1), st.integers(1, 20))
def test_integrate_config(q, v, dt, n):
    q, v = np.array(q), np.array(v)
    np.testing.assert_array_equal(D.integrate_config(q, np.zeros(4), dt), q)
    k = 2
    e = np.zeros(4)
    e[k] = 1.0 / dt
    assert D.integrate_config(q, e, dt)[k] == pytest.approx(q[k] + 1.0, rel=1e-12, abs=1e-12)
    x = q.copy()
    for _ in range(n):
        x = D.integrate_config(x, v, dt)
    np.testing.assert_allclose(x, q + n * dt * v, rtol=1e-10, atol=1e-10)


def test_free_body_momentum_without_gravity():
    model = body(gravity=(0.0, 0.0))
    q = np.array([0.1, 0.2, 0.3])
    v = np.array([0.5, -0.3, 2.0])
    p0 = D.mass_matrix(model, q) @ v
    for _ in range(50):
        v = D.free_velocity(model, q, v, [], 0.01)
        q = D.integrate_config(q, v, 0.01)
        np.testing.assert_array_equal(D.mass_matrix(model, q) @ v, p0)


# --- regressor ------------------------------------------------------------

@pytest.mark.parametrize("name", ["hopper", "arm"])
def test_regressor_identity(name, request, rng):
    model = request.getfixturevalue(name)
    pi = model.pi_vector()
    for _ in range(100):
        q, v = random_state(model, rng)
        a = rng.normal(0, 2, model.nv)
        Y = D.regressor(model, q, v, a)
        rhs = D.mass_matrix(model, q) @ a + D.bias(model, q, v)
        assert np.abs(Y @ pi - rhs).max() <= 1e-10 * (1 + np.abs(rhs).max())
        twice = model.with_pi(2 * pi)
        np.testing.assert_allclose(D.regressor(twice, q, v, a) @ (2 * pi), 2 * (Y @ pi),
                                   rtol=1e-12, atol=1e-12)


def test_regressor_gravity_only(hopper):
    q = np.array([0.0, 0.5, 0.2, 0.05])
    Y = D.regressor(hopper, q, np.zeros(4), np.zeros(4))
    np.testing.assert_allclose(Y @ hopper.pi_vector(), O.gravity_force(hopper, q), atol=1e-12)
    # gravity does not involve rotational inertia
    np.testing.assert_array_equal(Y[:, 3::4], 0.0)
