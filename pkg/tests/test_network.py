import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifasim.errors import ClusterError, ConstructionError, ShapeError
from lifasim.network import (
    CountMode,
    LayerConnectivity,
    Topology,
    assign_clusters,
    attach_astrocyte,
    build_feedforward,
    cover_all,
    effective_connectivity,
    fingerprint,
    synapse_count,
    total_neurons,
    with_clusters,
)

BENCH_TOPOLOGY = [1024, 768, 2048, 512, 100]


def test_two_by_two_dense():
    spec = build_feedforward([2, 2])
    assert spec.layers[0].nnz == 4
    assert synapse_count(spec, "unidirectional") == 4


def test_benchmark_topology_counts():
    spec = build_feedforward(BENCH_TOPOLOGY)
    assert total_neurons(spec) == 4452
    assert synapse_count(spec, CountMode.BIDIRECTIONAL) == 6_918_144
    # independent oracle: sum of adjacent layer products
    assert synapse_count(spec, CountMode.UNIDIRECTIONAL) == 786432 + 1572864 + 1048576 + 51200 == 3_459_072


def test_same_seed_same_weights():
    a = build_feedforward([6, 5, 3], density=0.5, seed=4)
    b = build_feedforward([6, 5, 3], density=0.5, seed=4)
    c = build_feedforward([6, 5, 3], density=0.5, seed=5)
    assert fingerprint(a) == fingerprint(b)
    for la, lb in zip(a.layers, b.layers):
        assert la.w.tobytes() == lb.w.tobytes()
    assert fingerprint(a) != fingerprint(c)


def test_bad_topologies():
    with pytest.raises(ConstructionError):
        build_feedforward([])
    with pytest.raises(ConstructionError):
        build_feedforward([3, 0])
    with pytest.raises(ConstructionError):
        build_feedforward([3, 2], density=0.0)


def test_density_edge_count():
    spec = build_feedforward([10, 7], density=0.33, seed=1)
    assert spec.layers[0].nnz == int(np.ceil(0.33 * 70))


def test_clusters_k1_and_round_robin():
    spec = build_feedforward([4, 3])
    assert np.all(assign_clusters(spec, 1).cluster_of == 0)
    cm = assign_clusters(spec, 2, "round-robin")
    assert list(cm.cluster_of[:4]) == [0, 1, 0, 1]


def test_benchmark_topology_seven_clusters():
    spec = build_feedforward(BENCH_TOPOLOGY, density=0.001)
    cm = assign_clusters(spec, 7)
    assert set(np.unique(cm.cluster_of)) == set(range(7))
    for layer, size in enumerate(BENCH_TOPOLOGY):
        sizes = [cm.members(c, layer).size for c in range(7)]
        # integer division oracle
        assert sorted(sizes) == sorted([size // 7 + (1 if i < size % 7 else 0) for i in range(7)])


def test_cluster_errors():
    spec = build_feedforward([3, 2])
    with pytest.raises(ClusterError):
        assign_clusters(spec, 5)
    with pytest.raises(ClusterError):
        assign_clusters(spec, 0)
    covered = cover_all(spec)
    with pytest.raises(ClusterError):
        with_clusters(covered, assign_clusters(spec, 2, "round-robin"))


def test_attach_examples():
    spec = build_feedforward([10, 4])
    spec, sat, astro = attach_astrocyte(spec, 0, 0, 4452)
    assert not sat and len(astro.neurons) == 10
    assert attach_astrocyte(spec, 0, 0, 4452).saturated

    spec = build_feedforward([3, 2])
    covers = []
    for _ in range(3):
        spec, sat, astro = attach_astrocyte(spec, 0, 0, 1)
        covers.append(set(astro.neurons))
    assert all(len(c) == 1 for c in covers)
    assert set().union(*covers) == {0, 1, 2}
    assert attach_astrocyte(spec, 0, 0, 1).saturated


def test_effective_connectivity():
    spec = build_feedforward([4, 3], density=0.5, seed=3)
    lc = spec.layers[0]
    M = effective_connectivity(spec)[0].toarray()
    A, R, W = lc.adjacency(), lc.kernel(), lc.dense_weights()
    # scalar loop oracle
    for i in range(4):
        for j in range(3):
            assert M[i, j] == A[i, j] * R[i, j] * W[i, j]
    # R = 1 on every edge, so M equals M_hat exactly
    assert np.array_equal(M, W)


def test_all_zero_adjacency():
    spec = build_feedforward([3, 3])
    empty = LayerConnectivity(3, 3, np.zeros(4, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0))
    spec = spec.replace(layers=(empty,))
    assert not effective_connectivity(spec)[0].toarray().any()


def test_layer_shape_mismatch():
    a = build_feedforward([3, 2])
    with pytest.raises(ShapeError):
        a.replace(topology=Topology((3, 4)))


topologies = st.lists(st.integers(1, 12), min_size=2, max_size=5)


@given(topologies, st.floats(0.05, 1.0), st.integers(0, 1000))
def test_bidirectional_is_twice_unidirectional(sizes, density, seed):
    spec = build_feedforward(sizes, density=density, seed=seed)
    assert synapse_count(spec, "bidirectional") == 2 * synapse_count(spec, "unidirectional")


@given(topologies, st.integers(1, 6), st.sampled_from(["by-layer-block", "round-robin"]))
def test_clusters_partition_neurons(sizes, k, policy):
    spec = build_feedforward(sizes)
    if policy == "by-layer-block" and max(sizes) < k or k > sum(sizes):
        return
    cm = assign_clusters(spec, k, policy)
    members = np.concatenate([cm.members(c) for c in range(k)])
    assert np.array_equal(np.sort(members), np.arange(sum(sizes)))


@given(topologies, st.integers(1, 5))
def test_covers_disjoint_and_inside_layer(sizes, budget):
    spec = cover_all(build_feedforward(sizes), budget)
    seen = []
    for a in spec.roster.astrocytes:
        assert len(a.neurons) <= budget
        layer = spec.topology.layer_slice(a.layer)
        assert all(layer.start <= n < layer.stop for n in a.neurons)
        seen.extend(a.neurons)
    assert sorted(seen) == list(range(sum(sizes)))
