import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from formation_mismatch.graph import (
    FormationGraph,
    as_multipoint,
    edge_vectors,
    incidence_transpose,
    neighbor_split,
    tail_selector,
)


def test_triangle_incidence_rows(triangle):
    H = incidence_transpose(triangle)
    np.testing.assert_array_equal(H, [[1, -1, 0], [0, 1, -1], [-1, 0, 1]])


def test_path_graph_rank():
    g = FormationGraph(3, [(0, 1), (1, 2)])
    assert np.linalg.matrix_rank(incidence_transpose(g)) == 2


@pytest.mark.parametrize("n", [3, 4, 5, 6, 8])
def test_connected_graph_rank_is_n_minus_1(n):
    for g in (FormationGraph.complete(n), FormationGraph(n, [(i, (i + 1) % n) for i in range(n)])):
        s = np.linalg.svd(incidence_transpose(g), compute_uv=False)
        assert int(np.sum(s > 1e-9 * s[0])) == n - 1


def test_tail_selector_is_positive_part_of_minus_h(k4):
    np.testing.assert_array_equal(tail_selector(k4), np.clip(-incidence_transpose(k4), 0, None))


def test_coincident_endpoints_give_zero_vector(triangle):
    x = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0]])
    np.testing.assert_array_equal(edge_vectors(triangle, x)[0], [0.0, 0.0])


def test_edge_vectors_match_definition(k4, rng):
    x = rng.normal(size=(4, 2))
    z = edge_vectors(k4, x)
    for k, (t, h) in enumerate(k4.edges):
        np.testing.assert_array_equal(z[k], x[h] - x[t])


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 2), elements=st.floats(-100, 100)))
def test_cycle_edges_sum_to_zero(x):
    z = edge_vectors(FormationGraph.cycle_triangle(), x)
    np.testing.assert_allclose(z.sum(axis=0), 0.0, atol=1e-12)


def test_single_tail_edge():
    g = FormationGraph(3, [(0, 1), (1, 2)])
    assert neighbor_split(g, 0) == ([], [0])


def test_cycle_triangle_one_head_one_tail(triangle):
    for i in range(3):
        heads, tails = neighbor_split(triangle, i)
        assert len(heads) == 1 and len(tails) == 1


def test_k4_degree(k4):
    for i in range(4):
        heads, tails = neighbor_split(k4, i)
        assert len(heads) + len(tails) == 3


def test_neighbor_split_out_of_range(triangle):
    with pytest.raises(IndexError):
        neighbor_split(triangle, 3)


@pytest.mark.parametrize("n,edges", [
    (2, [(0, 1)]),
    (3, []),
    (3, [(0, 0), (1, 2)]),
    (3, [(0, 1), (1, 0), (1, 2)]),
    (3, [(0, 1), (1, 5)]),
    (4, [(0, 1), (1, 2), (0, 2)]),
])
def test_invalid_graphs(n, edges):
    with pytest.raises(ValueError):
        FormationGraph(n, edges)


def test_edge_label_either_orientation(triangle):
    assert triangle.edge_label(0, 1) == triangle.edge_label(1, 0) == 0
    with pytest.raises(KeyError):
        FormationGraph(3, [(0, 1), (1, 2)]).edge_label(0, 2)


def test_as_multipoint_accepts_flat_and_rejects_bad_shape(triangle):
    assert as_multipoint(triangle, np.arange(6.0)).shape == (3, 2)
    with pytest.raises(ValueError):
        as_multipoint(triangle, np.arange(8.0))
