from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np
import pytest

from auxetic_tensegrity.differentiation import (
    DifferentiableMap,
    EvaluationFailure,
    audit_system,
    check_gradient,
    fd_jacobian,
    system_maps,
)
from auxetic_tensegrity.energy import cable_energy, tetra_rows
from auxetic_tensegrity.scene import bundled_scenes, load_bundled

from .conftest import clasp_points


def test_square_at_three():
    rep = check_gradient(DifferentiableMap(lambda x: x**2, lambda x: 2 * x, "square"), 3.0)
    assert rep.analytic == pytest.approx(6.0)
    assert rep.max_error <= 1e-9


def test_cable_energy_gradient_taut():
    def q(p):
        return cable_energy(p[:3], p[3:], 0.1, 1.0)

    def grad(p):
        d = p[3:] - p[:3]
        dist = np.linalg.norm(d)
        g = (dist - 0.1) * d / dist
        return np.concatenate([-g, g])

    p = np.array([0.0, 0.0, 0.0, 1.1, 0.0, 0.0])
    assert check_gradient(DifferentiableMap(q, grad), p).max_error <= 1e-6


def test_tetra_jacobian_at_symmetric_clasp():
    r = np.array([0.25])

    def f(x):
        return np.asarray(tetra_rows(jnp.asarray(x).reshape(1, 2, 4, 3), r)).ravel()

    jac = jax.jit(jax.jacfwd(lambda x: tetra_rows(x.reshape(1, 2, 4, 3), r).ravel()))
    x = clasp_points(np.pi / 2, 0.25).ravel()
    assert check_gradient(DifferentiableMap(f, lambda x: np.asarray(jac(x))), x).max_error <= 1e-6


def test_wrong_jacobian_is_caught():
    rep = check_gradient(DifferentiableMap(lambda x: np.sin(x), lambda x: np.diag(np.cos(x) * 1.01)), [0.3, 1.2])
    assert not rep.passed()
    assert rep.worst_entry in {(0, 0), (1, 1)}


def test_fd_failure_reports_probe():
    def bad(x):
        if x[1] > 0.5:
            raise FloatingPointError("boom")
        return x

    with pytest.raises(EvaluationFailure, match="probe 1"):
        fd_jacobian(bad, np.array([0.0, 0.5]))


@pytest.mark.parametrize("name", bundled_scenes())
def test_bundled_scene_audit(name):
    system = load_bundled(name).system()
    for rep in audit_system(system, samples=5, seed=3):
        assert rep.passed(1e-6), rep


def test_second_order_maps_honeycomb(honeycomb_system):
    names = [m.name for m in system_maps(honeycomb_system, second_order=True)]
    assert names == ["residual", "energy", "energy_gradient", "lagrangian"]
    for rep in audit_system(honeycomb_system, samples=5, second_order=True):
        assert rep.passed(1e-6), rep


def test_second_order_clasp(clasp_system):
    for rep in audit_system(clasp_system, samples=3, second_order=True):
        assert rep.passed(1e-6), rep


def test_lagrangian_jacobian_symmetric(clasp_system):
    s = clasp_system
    lag = s.lagrangian()
    z = lag.pack(s.x0, np.random.default_rng(0).standard_normal(s.m))
    jac = lag.jacobian(z, s.tau0)
    np.testing.assert_allclose(jac, jac.T, atol=1e-12)
