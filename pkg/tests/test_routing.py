import itertools

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifasim.errors import ContractError, RoutingError
from lifasim.network import assign_clusters, build_feedforward, with_clusters
from lifasim.routing import (
    Mesh,
    RouteMode,
    cluster_bench,
    cluster_traffic,
    evaluate_modes,
    manhattan,
    map_clusters_to_cores,
    random_traffic,
    route,
    sample_node_faults,
)


def _graph(mesh: Mesh) -> nx.Graph:
    g = nx.grid_2d_graph(mesh.height, mesh.width)
    g.remove_nodes_from(mesh.faulty_nodes)
    return g


def test_corner_to_corner_unicast():
    plan = route(Mesh(4, 4), "unicast", (0, 0), [(3, 3)])
    assert plan.total_hops == 6
    assert plan.paths[(3, 3)][:4] == [(0, 0), (0, 1), (0, 2), (0, 3)]


def test_broadcast_tree_size():
    plan = route(Mesh(4, 4), "broadcast", (0, 0))
    assert plan.total_hops == 15
    assert plan.delivered == 1.0


def test_detour_around_turn_node():
    mesh = Mesh(4, 4).with_faults(nodes=[(0, 3)])
    path = route(mesh, "unicast", (0, 0), [(3, 3)]).paths[(3, 3)]
    assert len(path) - 1 >= 6
    assert all(mesh.healthy(n) for n in path)
    assert all(manhattan(a, b) == 1 for a, b in zip(path, path[1:]))


def test_unreachable_is_recorded():
    mesh = Mesh(3, 3).with_faults(nodes=[(0, 1), (1, 0)])
    plan = route(mesh, "multicast", (0, 0), [(2, 2), (0, 0)])
    assert plan.unreachable == ((2, 2),)
    assert plan.delivered == 0.5


def test_bad_requests():
    mesh = Mesh(3, 3).with_faults(nodes=[(1, 1)])
    with pytest.raises(RoutingError):
        route(mesh, "unicast", (1, 1), [(0, 0)])
    with pytest.raises(RoutingError):
        route(mesh, "unicast", (0, 0), [])
    with pytest.raises(RoutingError):
        route(mesh, "unicast", (0, 0), [(5, 5)])
    with pytest.raises(ContractError):
        sample_node_faults(mesh, 1.0, 0)
    with pytest.raises(ContractError):
        Mesh(3, 3, faulty_links={((0, 0), (2, 2))})


def test_fault_free_delivers_everything():
    mesh = Mesh(4, 4)
    table = evaluate_modes(mesh, random_traffic(mesh, 10, 3, seed=0), 0.0, range(3))
    for mode in RouteMode:
        assert table.mean(mode, 0.0)[0] == 1.0


def test_cluster_mapping_row_major():
    assert map_clusters_to_cores(7, Mesh(3, 3)) == {
        0: (0, 0), 1: (0, 1), 2: (0, 2), 3: (1, 0), 4: (1, 1), 5: (1, 2), 6: (2, 0)
    }
    with pytest.raises(RoutingError):
        map_clusters_to_cores(10, Mesh(3, 3))


def test_single_cluster_makes_no_traffic():
    spec = build_feedforward([6, 4, 2])
    assert cluster_traffic(spec, map_clusters_to_cores(1, Mesh(2, 2))) == []
    table = cluster_bench(spec, 2, 2, [0.0], [0])
    assert all(r[4] == 0 for r in table.rows)


def test_cluster_traffic_follows_synapses():
    spec = build_feedforward([6, 4, 2])
    spec = with_clusters(spec, assign_clusters(spec, 3))
    mapping = map_clusters_to_cores(3, Mesh(2, 2))
    flows = dict(cluster_traffic(spec, mapping))
    assert flows  # dense layers always cross the layer-block boundaries
    for src, dests in flows.items():
        assert src not in dests


def test_routing_table_csv():
    mesh = Mesh(3, 3)
    table = evaluate_modes(mesh, random_traffic(mesh, 4, 2, 0), 0.2, [0, 1])
    lines = table.to_csv().splitlines()
    assert lines[0] == "mode,fault_fraction,seed,delivered,total_hops,max_latency"
    assert len(lines) == 1 + 2 * 3


def test_fault_free_lengths_are_manhattan_exhaustively():
    for w, h in itertools.product(range(1, 5), repeat=2):
        mesh = Mesh(w, h)
        for s, d in itertools.product(mesh.nodes, repeat=2):
            if s != d:
                assert route(mesh, "unicast", s, [d]).total_hops == manhattan(s, d)


@given(
    w=st.integers(2, 6),
    h=st.integers(2, 6),
    frac=st.floats(0, 0.5),
    seed=st.integers(0, 10_000),
    data=st.data(),
)
def test_faulted_routes_match_networkx(w, h, frac, seed, data):
    mesh = sample_node_faults(Mesh(w, h), frac, seed)
    src = data.draw(st.sampled_from(mesh.healthy_nodes()))
    dests = data.draw(st.lists(st.sampled_from(mesh.nodes), min_size=1, max_size=6))
    g = _graph(mesh)
    lengths = nx.single_source_shortest_path_length(g, src)
    uni = route(mesh, "unicast", src, dests)
    multi = route(mesh, "multicast", src, dests)
    for d in dict.fromkeys(dests):
        if d in lengths:
            assert len(uni.paths[d]) - 1 == lengths[d]
            assert all(mesh.healthy(n) for n in uni.paths[d])
        else:
            assert d in uni.unreachable
    assert multi.total_hops <= uni.total_hops
    assert multi.delivered == uni.delivered
    # a multicast route set is a tree rooted at the source
    tree = nx.DiGraph(list(multi.edges))
    if multi.edges:
        assert nx.is_arborescence(tree)
        assert len(multi.edges) == len(multi.nodes) - 1
        assert all(mesh.healthy(n) for n in multi.nodes)


@given(seed=st.integers(0, 10_000), traffic_seed=st.integers(0, 100))
def test_delivery_non_increasing_in_fault_fraction(seed, traffic_seed):
    mesh = Mesh(4, 4)
    traffic = random_traffic(mesh, 8, 3, traffic_seed)
    for mode in RouteMode:
        prev = 1.0
        for frac in (0.0, 0.1, 0.2, 0.3, 0.5):
            cur = evaluate_modes(mesh, traffic, frac, [seed], [mode]).rows[0][3]
            assert cur <= prev + 1e-12
            prev = cur
