from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from auxetic_tensegrity.framework import (
    Bar,
    Cable,
    ControlSplit,
    Edge,
    Framework,
    Lattice,
    PeriodicGraph,
    Placement,
    TauControl,
    edge_vector,
    gauge_fix,
    realized_edges,
    rigid_motion,
    supercell,
)

seeds = st.integers(0, 2**32 - 1)


def _square(p_j, lift):
    graph = PeriodicGraph(2, ("i", "j"), (Edge(0, 1, lift, Bar(1.0)),))
    return graph, Placement(np.array([[0.0, 0.0], p_j])), Lattice(np.eye(2))


def test_edge_vector_zero_lift():
    g, p, lat = _square([0.3, 0.0], (0, 0))
    np.testing.assert_allclose(edge_vector(g, p, lat, 0), [0.3, 0.0])


def test_edge_vector_unit_lift():
    g, p, lat = _square([0.3, 0.0], (1, 0))
    np.testing.assert_allclose(edge_vector(g, p, lat, 0), [1.3, 0.0])


def test_edge_vector_honeycomb_image(honeycomb):
    fw = honeycomb.framework
    np.testing.assert_allclose(fw.point("v3"), [1.0, 1.0])
    v, lift = fw.resolve("v3")
    graph = PeriodicGraph(2, fw.graph.labels, (Edge(0, v, lift, Bar(np.sqrt(2))),), check_connected=False)
    np.testing.assert_allclose(edge_vector(graph, fw.placement, fw.lattice, 0), [1.0, 1.0])


def test_edge_vector_out_of_range():
    g, p, lat = _square([0.3, 0.0], (0, 0))
    with pytest.raises(IndexError):
        edge_vector(g, p, lat, 1)


def test_supercell_counts(honeycomb):
    cell = supercell(honeycomb.framework, (3, 3))
    assert len(cell.vertices) == 36
    assert len(cell.segments) == 27
    assert cell.kinds.count("bar") == 27


def test_supercell_identity(honeycomb):
    fw = honeycomb.framework
    cell = supercell(fw, (1, 1))
    expect = np.array([fw.point(lab) for lab in fw.motif_labels()])
    np.testing.assert_allclose(cell.vertices, expect)
    np.testing.assert_allclose(cell.segments[:, 1] - cell.segments[:, 0], realized_edges(fw))


def test_supercell_pi_plus_eight_cells():
    from auxetic_tensegrity.scene import load_bundled

    fw = load_bundled("pi_plus").framework
    cell = supercell(fw, (2, 2, 2))
    assert len(cell.vertices) == 8 * len(fw.motif_labels())
    assert len(cell.segments) == 8 * len(fw.graph.edges)


@pytest.mark.parametrize("reps", [(0, 1), (1,), (1, 2, 3)])
def test_supercell_rejects_bad_reps(honeycomb, reps):
    with pytest.raises(ValueError):
        supercell(honeycomb.framework, reps)


@given(seeds, st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=20, deadline=None)
def test_supercell_scales_multiplicatively(seed, a, b):
    rng = np.random.default_rng(seed)
    nv = int(rng.integers(1, 4))
    labels = tuple(f"v{k}" for k in range(nv))
    edges = [Edge(k, k + 1, (0, 0), Bar(1.0)) for k in range(nv - 1)] + [Edge(0, 0, (1, 0), Bar(1.0))]
    fw = Framework(PeriodicGraph(2, labels, tuple(edges)), Placement(rng.random((nv, 2))), Lattice(np.eye(2)))
    cell = supercell(fw, (a, b))
    assert len(cell.vertices) == nv * a * b
    assert len(cell.segments) == len(edges) * a * b


def test_gauge_fix_lower_triangular_unchanged():
    lat = Lattice(np.array([[2.0, 0.0], [1.0, 1.0]]))
    fixed, rot = gauge_fix(lat)
    np.testing.assert_allclose(fixed.generators, lat.generators, atol=1e-15)
    np.testing.assert_allclose(rot, np.eye(2), atol=1e-15)


def test_gauge_fix_swapped_rows_by_hand():
    # by hand: a reflection across the diagonal swaps the rows into the identity
    fixed, rot = gauge_fix(Lattice(np.array([[0.0, 1.0], [1.0, 0.0]])))
    np.testing.assert_allclose(fixed.generators, np.eye(2), atol=1e-15)
    assert abs(abs(np.linalg.det(fixed.generators)) - 1.0) < 1e-15
    np.testing.assert_allclose(rot @ rot.T, np.eye(2), atol=1e-15)


def test_gauge_fix_right_handed_is_rotation():
    g = np.array([[1.0, 2.0, 0.5], [-0.3, 1.0, 0.2], [0.1, 0.4, 1.5]])
    assert np.linalg.det(g) > 0
    _, rot = gauge_fix(Lattice(g))
    assert np.linalg.det(rot) == pytest.approx(1.0)


def test_gauge_fix_rejects_rank_deficient():
    with pytest.raises(ValueError):
        gauge_fix(Lattice(np.array([[1.0, 2.0], [2.0, 4.0]])))


@given(seeds)
@settings(max_examples=50, deadline=None)
def test_gauge_fix_preserves_gram(seed):
    g = np.random.default_rng(seed).standard_normal((3, 3))
    if abs(np.linalg.det(g)) < 1e-3:
        return
    fixed, rot = gauge_fix(Lattice(g))
    low = fixed.generators
    assert fixed.is_lower_triangular()
    assert np.all(np.diag(low) > 0)
    np.testing.assert_allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(low, g @ rot.T, atol=1e-12)
    gram = g @ g.T
    assert np.abs(low @ low.T - gram).max() <= 1e-12 * np.abs(gram).max()


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_edge_lengths_invariant_under_rigid_motion(seed):
    rng = np.random.default_rng(seed)
    rot = Rotation.random(random_state=rng).as_matrix()
    coords = rng.random((3, 3))
    edges = (
        Edge(0, 1, (0, 0, 0), Bar(1.0)),
        Edge(1, 2, (1, 0, -1), Cable(0.1, 1.0)),
        Edge(2, 0, (0, 1, 1), Bar(1.0)),
    )
    fw = Framework(PeriodicGraph(3, ("a", "b", "c"), edges), Placement(coords), Lattice(np.eye(3) + 0.2 * rng.random((3, 3))))
    moved = rigid_motion(fw, rot, rng.standard_normal(3))
    np.testing.assert_allclose(
        np.linalg.norm(realized_edges(moved), axis=1), np.linalg.norm(realized_edges(fw), axis=1), rtol=1e-12
    )


def test_graph_validation():
    with pytest.raises(ValueError, match="loop"):
        PeriodicGraph(2, ("a",), (Edge(0, 0, (0, 0), Bar(1.0)),))
    with pytest.raises(ValueError, match="duplicates"):
        PeriodicGraph(2, ("a", "b"), (Edge(0, 1, (0, 0), Bar(1.0)), Edge(1, 0, (0, 0), Bar(1.0))))
    with pytest.raises(ValueError, match="connected"):
        PeriodicGraph(2, ("a", "b"), (Edge(0, 0, (1, 0), Bar(1.0)),))
    with pytest.raises(ValueError):
        Bar(0.0)
    with pytest.raises(ValueError):
        Cable(0.1, 0.0)


def test_control_split_validation():
    with pytest.raises(ValueError):
        ControlSplit((), ())
    with pytest.raises(ValueError, match="both driven and fixed"):
        ControlSplit((TauControl("L11"),), ("L11",))
    with pytest.raises(ValueError, match="lattice entries"):
        ControlSplit((TauControl("v.x"),), ())
    default = ControlSplit.default(3, "a")
    assert default.fixed == ("L12", "L13", "L23", "a.x", "a.y", "a.z")
