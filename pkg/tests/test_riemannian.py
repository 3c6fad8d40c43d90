from __future__ import annotations

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auxetic_tensegrity.energy import ConstraintSystem
from auxetic_tensegrity.riemannian import (
    DescentSettings,
    MaxIters,
    SingularVariety,
    ed_retract,
    minimize,
    project_to_variety,
    tangent_project,
)


def sphere(energy=lambda x, t: 0.0 * x[0], dim=3):
    return ConstraintSystem(lambda x, t: jnp.array([x @ x - 1.0]), energy, dim, 1)


def test_tangent_project_sphere_pole():
    np.testing.assert_allclose(tangent_project([[0.0, 0.0, 2.0]], [1.0, 1.0, 1.0]), [1.0, 1.0, 0.0], atol=1e-15)


def test_tangent_project_keeps_tangent_vectors():
    v = np.array([0.3, -0.2, 0.0])
    np.testing.assert_allclose(tangent_project([[0.0, 0.0, 2.0]], v), v, atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
@settings(max_examples=50, deadline=None)
def test_tangent_project_idempotent(seed, m):
    rng = np.random.default_rng(seed)
    jac = rng.standard_normal((m, 6))
    v = rng.standard_normal(6)
    once = tangent_project(jac, v)
    np.testing.assert_allclose(tangent_project(jac, once), once, atol=1e-12)
    assert np.linalg.norm(jac @ once) <= 1e-10 * np.linalg.norm(v)


def test_tangent_project_rank_deficient():
    with pytest.raises(SingularVariety):
        tangent_project([[1.0, 0.0], [2.0, 0.0]], [1.0, 1.0])


def test_retract_sphere_radial():
    s = sphere()
    y = ed_retract(s, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.1, 0.0]))
    np.testing.assert_allclose(y, np.array([1.0, 0.1, 0.0]) / np.linalg.norm([1.0, 0.1, 0.0]), atol=1e-12)
    np.testing.assert_allclose(y, [0.995037, 0.099504, 0.0], atol=1e-6)


def test_retract_zero_step_is_identity():
    s = sphere()
    x = np.array([0.0, 0.6, 0.8])
    y = ed_retract(s, x, np.zeros(3))
    assert np.array_equal(y, x)


def test_retract_circle_second_order():
    s = sphere(dim=2)
    x = np.array([1.0, 0.0])
    gaps = []
    for step in (1e-3, 1e-2, 1e-1):
        v = np.array([0.0, step])
        gaps.append(np.linalg.norm(ed_retract(s, x, v) - (x + v)))
    # closest point on the unit circle: gap = sqrt(1 + s^2) - 1 ~ s^2 / 2
    for step, gap in zip((1e-3, 1e-2, 1e-1), gaps):
        assert gap == pytest.approx(np.sqrt(1 + step**2) - 1, rel=1e-6)
        assert gap <= step**2


def test_project_to_variety():
    s = sphere()
    y = project_to_variety(s, [0.3, 2.0, -0.5])
    assert abs(y @ y - 1) <= 1e-12


def test_minimize_nearest_point_on_circle():
    s = sphere(lambda x, t: (x[0] - 2.0) ** 2 + x[1] ** 2, dim=2)
    res = minimize(s, np.array([0.0, 1.0]))
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-8)
    assert res.grad_norm <= 1e-8
    assert res.max_residual <= 1e-9
    energies = np.array(res.energies)
    for k, alpha in enumerate(res.steps):
        assert energies[k + 1] <= energies[k] + 1e-14 * (1 + abs(energies[k]))


def test_minimize_constant_energy():
    s = sphere()
    x0 = np.array([0.0, 0.6, 0.8])
    res = minimize(s, x0)
    assert res.iterations == 1
    np.testing.assert_allclose(res.x, x0)


def test_minimize_max_iters():
    s = sphere(lambda x, t: (x[0] - 2.0) ** 2 + x[1] ** 2, dim=2)
    with pytest.raises(MaxIters) as info:
        minimize(s, np.array([-0.6, 0.8]), settings=DescentSettings(max_iters=2, grad_tol=1e-14))
    assert info.value.x.shape == (2,)


def test_descent_settings_validation():
    with pytest.raises(ValueError):
        DescentSettings(armijo_factor=1.5)
    with pytest.raises(ValueError):
        DescentSettings(backtrack_ratio=0.0)


def retraction_slope(system, x, v, tau=None, scales=(1e-2, 5e-3, 2.5e-3)):
    gaps = [np.linalg.norm(ed_retract(system, x, s * v, tau) - (x + s * v)) for s in scales]
    return [np.log2(gaps[k] / gaps[k + 1]) for k in range(len(gaps) - 1)]


def test_retraction_slope_sphere():
    s = sphere()
    x = np.array([0.0, 0.6, 0.8])
    v = tangent_project(s.jacobian(x), np.array([1.0, 0.3, -0.2]))
    assert min(retraction_slope(s, x, v)) >= 1.9
