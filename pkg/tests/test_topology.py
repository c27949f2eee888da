import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nrhc.scenarios import preset
from nrhc.topology import (
    Topology,
    TopologyError,
    augmented_matrix,
    degree_and_laplacian,
    is_connected,
    is_strongly_connected,
    leader_reaches_all,
    neighbors,
)


def test_lorenz5_degrees_and_neighbors():
    topo = preset("lorenz5").topology
    D, L = degree_and_laplacian(topo)
    np.testing.assert_array_equal(np.diag(D), [1, 2, 2, 2, 1])
    assert neighbors(topo, 0) == {2}
    assert neighbors(topo, 3) == {0, 4}
    np.testing.assert_array_equal(L.sum(axis=1), 0)


def test_ring_is_connected():
    topo = preset("lu4").topology
    assert is_connected(topo)
    assert is_strongly_connected(topo)


def test_directed_chain_weak_but_not_strong():
    topo = Topology([[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert is_connected(topo)
    assert not is_strongly_connected(topo)


def test_self_loop_rejected():
    with pytest.raises(TopologyError, match="self-loop"):
        Topology([[1, 0], [0, 0]])


def test_negative_weight_rejected():
    with pytest.raises(TopologyError, match="negative"):
        Topology([[0, -1], [1, 0]])


def test_asymmetric_undirected_rejected():
    with pytest.raises(TopologyError, match="symmetric"):
        Topology([[0, 1], [0, 0]], directed=False)


def test_bad_leader_length():
    with pytest.raises(TopologyError):
        Topology([[0, 1], [1, 0]], leader_adjacency=[1, 0, 1])


def test_neighbors_index_error():
    with pytest.raises(IndexError):
        neighbors(Topology([[0, 1], [1, 0]]), 2)


def test_augmented_split_roundtrip():
    H = [[1, 1, 1, 1], [1, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 1]]
    topo = Topology.from_augmented(H)
    np.testing.assert_array_equal(topo.leader_adjacency, [1, 0, 0, 1])
    np.testing.assert_array_equal(np.diag(topo.adjacency), 0)
    np.testing.assert_array_equal(augmented_matrix(topo), H)


def test_leader_reachability():
    assert leader_reaches_all(preset("leader_lorenz").topology)
    assert leader_reaches_all(preset("leader_chen").topology)
    # nobody listens to agent 2 and it does not hear the leader
    topo = Topology([[0, 0, 0], [1, 0, 0], [0, 0, 0]], leader_adjacency=[1, 0, 0])
    assert not leader_reaches_all(topo)


def test_augmented_needs_leader():
    with pytest.raises(TopologyError):
        augmented_matrix(Topology([[0, 1], [1, 0]]))


@st.composite
def adjacency(draw):
    n = draw(st.integers(1, 7))
    A = draw(arrays(float, (n, n), elements=st.floats(0, 5, allow_nan=False)))
    np.fill_diagonal(A, 0.0)
    return A


@settings(max_examples=60, deadline=None)
@given(adjacency())
def test_laplacian_rows_sum_to_zero(A):
    D, L = degree_and_laplacian(Topology(A))
    np.testing.assert_allclose(L.sum(axis=1), 0.0, atol=1e-12 * (1 + A.sum()))
    np.testing.assert_allclose(np.diag(D), A.sum(axis=1), rtol=1e-14)


@settings(max_examples=60, deadline=None)
@given(adjacency(), st.randoms(use_true_random=False))
def test_relabelling_preserves_degrees(A, rnd):
    perm = list(range(len(A)))
    rnd.shuffle(perm)
    topo = Topology(A)
    D, _ = degree_and_laplacian(topo)
    Dp, _ = degree_and_laplacian(topo.permuted(perm))
    np.testing.assert_array_equal(np.diag(Dp), np.diag(D)[perm])
    assert is_connected(topo) == is_connected(topo.permuted(perm))


def test_trivial_neighbor_sets():
    assert neighbors(Topology(np.zeros((3, 3))), 1) == set()
    assert neighbors(Topology(np.ones((3, 3)) - np.eye(3), directed=False), 1) == {0, 2}


def test_ring_degrees_and_empty_graph():
    D, L = degree_and_laplacian(preset("lu4").topology)
    np.testing.assert_array_equal(D, 2 * np.eye(4))
    np.testing.assert_array_equal(L, D - preset("lu4").topology.adjacency)
    D0, L0 = degree_and_laplacian(Topology(np.zeros((3, 3))))
    assert not D0.any() and not L0.any()


def test_isolated_nodes_not_connected():
    assert not is_connected(Topology(np.zeros((2, 2))))
    assert is_connected(preset("lorenz5").topology)


def test_augmented_examples():
    H = [[1, 1, 0, 0], [1, 0, 1, 0], [0, 1, 1, 1], [0, 0, 1, 0]]
    topo = Topology.from_augmented(H)
    np.testing.assert_array_equal(topo.leader_adjacency, [1, 0, 1, 0])
    A = np.array(H) - np.diag(np.diag(H))
    np.testing.assert_array_equal(topo.adjacency, A)
    # no leader links: H is just A
    plain = Topology.from_augmented(A)
    np.testing.assert_array_equal(augmented_matrix(plain), A)
