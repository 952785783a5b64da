import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ballast.errors import GenerationFailure, InvalidParameter, InvalidState
from ballast.graphs import (
    BinGraph,
    clique_union_for_epsilon,
    gen_clique_union,
    gen_complete,
    gen_complete_bipartite,
    gen_random_regular,
    gen_ring_distance,
    load_graph,
    save_graph,
)


def edge_set(g):
    return {tuple(map(int, e)) for e in g.edges}


def k_regular_graphs(n, k):
    """Every simple k-regular graph on n labeled nodes, by brute force."""
    pairs = list(itertools.combinations(range(n), 2))
    found = []
    for subset in itertools.combinations(pairs, n * k // 2):
        deg = [0] * n
        for u, v in subset:
            deg[u] += 1
            deg[v] += 1
        if all(x == k for x in deg):
            found.append(frozenset(subset))
    return found


class TestComplete:
    def test_single_node_has_no_edges(self):
        g = gen_complete(1)
        assert g.num_edges == 0
        assert g.edges.shape == (0, 2)

    def test_three_nodes(self):
        assert edge_set(gen_complete(3)) == {(0, 1), (0, 2), (1, 2)}

    def test_four_nodes(self):
        g = gen_complete(4)
        assert g.num_edges == 6
        assert g.degree.tolist() == [3, 3, 3, 3]

    def test_zero_rejected(self):
        with pytest.raises(InvalidParameter):
            gen_complete(0)

    @pytest.mark.parametrize("n", [2, 5, 17, 64])
    def test_edges_are_all_pairs(self, n):
        assert edge_set(gen_complete(n)) == set(itertools.combinations(range(n), 2))

    def test_index_decoding_at_scale(self):
        n = 1 << 20
        g = gen_complete(n)
        last = g.num_edges - 1
        assert tuple(g.edge_at(last)) == (n - 2, n - 1)
        # colex index j*(j-1)/2 + i for a few arbitrary pairs
        for i, j in [(0, 1), (5, 999_999), (123_456, 654_321), (n - 3, n - 1)]:
            assert tuple(g.edge_at(j * (j - 1) // 2 + i)) == (i, j)


class TestRing:
    def test_cycle(self):
        g = gen_ring_distance(8, 2)
        assert edge_set(g) == {tuple(sorted((i, (i + 1) % 8))) for i in range(8)}
        assert set(g.degree.tolist()) == {2}

    def test_distance_two(self):
        g = gen_ring_distance(6, 4)
        assert g.degree.tolist() == [4] * 6
        for i in range(6):
            assert set(g.neighbors(i).tolist()) == {(i + d) % 6 for d in (-2, -1, 1, 2)}

    def test_five_nodes_delta_four_is_complete(self):
        # every pair of a 5-ring is within distance 2
        ring_dist = {(i, j): min(j - i, 5 - (j - i)) for i, j in itertools.combinations(range(5), 2)}
        assert all(d <= 2 for d in ring_dist.values())
        assert edge_set(gen_ring_distance(5, 4)) == set(ring_dist)

    @pytest.mark.parametrize("n,delta", [(8, 3), (8, 8), (8, 10), (3, 0)])
    def test_bad_delta(self, n, delta):
        with pytest.raises(InvalidParameter):
            gen_ring_distance(n, delta)


class TestRandomRegular:
    def test_four_nodes_degree_three_is_k4(self):
        only = k_regular_graphs(4, 3)
        assert only == [frozenset(itertools.combinations(range(4), 2))]
        g = gen_random_regular(4, 3, seed=1)
        assert frozenset(edge_set(g)) == only[0]

    def test_five_nodes_degree_two_is_a_five_cycle(self):
        cycles = set(k_regular_graphs(5, 2))
        assert len(cycles) == 12  # 4!/2 labeled 5-cycles
        for seed in range(20):
            assert frozenset(edge_set(gen_random_regular(5, 2, seed=seed))) in cycles

    def test_pairing_is_uniform_over_five_cycles(self):
        cycles = sorted(map(sorted, k_regular_graphs(5, 2)))
        index = {tuple(map(tuple, c)): i for i, c in enumerate(cycles)}
        rng = np.random.default_rng(99)
        counts = np.zeros(len(cycles))
        for _ in range(2400):
            g = gen_random_regular(5, 2, seed=rng)
            counts[index[tuple(sorted(edge_set(g)))]] += 1
        assert stats.chisquare(counts).pvalue > 0.01

    def test_odd_handshake(self):
        with pytest.raises(InvalidParameter, match="handshake"):
            gen_random_regular(3, 1, seed=0)

    @pytest.mark.parametrize("n,delta", [(4, 4), (4, 0), (6, 7)])
    def test_degree_out_of_range(self, n, delta):
        with pytest.raises(InvalidParameter):
            gen_random_regular(n, delta, seed=0)

    def test_cap_exceeded_reports_attempts(self):
        with pytest.raises(GenerationFailure) as info:
            gen_random_regular(40, 12, seed=0, max_attempts=25)
        assert info.value.attempts == 25
        assert "25 attempts" in str(info.value)

    def test_repair_method_handles_high_degree(self):
        g = gen_random_regular(200, 20, seed=3, method="repair")
        g.validate()
        assert set(g.degree.tolist()) == {20}

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(4, 40), delta=st.integers(1, 4), seed=st.integers(0, 2**64 - 1))
    def test_regular_and_simple(self, n, delta, seed):
        if (n * delta) % 2 or delta >= n:
            return
        g = gen_random_regular(n, delta, seed=seed)
        g.validate()
        assert set(g.degree.tolist()) == {delta}

    def test_same_seed_same_graph(self):
        a = gen_random_regular(30, 4, seed=77)
        b = gen_random_regular(30, 4, seed=77)
        assert np.array_equal(a.edges, b.edges)


class TestBipartite:
    def test_six_two(self):
        g = gen_complete_bipartite(6, 2)
        assert g.num_edges == 8
        assert g.degree.tolist() == [2, 2, 2, 2, 4, 4]
        assert edge_set(g) == {(u, v) for u in range(4) for v in (4, 5)}

    def test_k22(self):
        g = gen_complete_bipartite(4, 2)
        assert g.num_edges == 4
        assert g.degree.tolist() == [2, 2, 2, 2]

    @pytest.mark.parametrize("n,delta", [(3, 3), (3, 0), (5, 9)])
    def test_empty_side(self, n, delta):
        with pytest.raises(InvalidParameter):
            gen_complete_bipartite(n, delta)

    @pytest.mark.parametrize("n,delta", [(10, 1), (10, 3), (10, 7), (33, 16)])
    def test_min_degree(self, n, delta):
        g = gen_complete_bipartite(n, delta)
        g.validate()
        assert g.degree.min() == min(delta, n - delta)


class TestCliqueUnion:
    def test_four_by_four(self):
        g = gen_clique_union(4, 4)
        assert g.n == 16 and g.num_edges == 24
        assert set(g.degree.tolist()) == {3}

    def test_single_clique_is_complete(self):
        assert edge_set(gen_clique_union(1, 5)) == edge_set(gen_complete(5))

    def test_two_disjoint_edges(self):
        assert edge_set(gen_clique_union(2, 2)) == {(0, 1), (2, 3)}

    def test_cliques_are_positional(self):
        g = gen_clique_union(3, 4)
        for u, v in g.edges:
            assert u // 4 == v // 4

    @pytest.mark.parametrize("k,s", [(2, 1), (0, 3)])
    def test_rejects(self, k, s):
        with pytest.raises(InvalidParameter):
            gen_clique_union(k, s)

    def test_epsilon_mapping(self):
        assert clique_union_for_epsilon(1 << 14, 8 / 14) == (64, 256)
        k, s = clique_union_for_epsilon(1000, 0.5)
        assert k * s == 1000 and s in (25, 40)


class TestSampleEdge:
    def test_single_edge(self, rng):
        g = gen_complete(2)
        assert {g.sample_edge(rng) for _ in range(20)} == {(0, 1)}

    def test_uniform_on_k4(self):
        g = gen_complete(4)
        rng = np.random.default_rng(2024)
        samples = g.sample_edges(rng, 6000)
        keys = samples[:, 0] * 4 + samples[:, 1]
        counts = np.array([np.count_nonzero(keys == u * 4 + v) for u, v in g.edges])
        assert counts.sum() == 6000
        assert np.all(np.abs(counts - 1000) <= 150)
        assert stats.chisquare(counts).pvalue > 0.01

    def test_scalar_sampler_uniform_on_k4(self):
        g = gen_complete(4)
        rng = np.random.default_rng(7)
        counts = {tuple(map(int, e)): 0 for e in g.edges}
        for _ in range(6000):
            counts[g.sample_edge(rng)] += 1
        assert stats.chisquare(list(counts.values())).pvalue > 0.01

    @pytest.mark.parametrize(
        "graph",
        [gen_ring_distance(9, 4), gen_complete_bipartite(7, 3), gen_clique_union(3, 3),
         BinGraph.from_edges(5, [(0, 1), (1, 2), (3, 4), (0, 4)])],
        ids=["ring", "bipartite", "cliques", "explicit"],
    )
    def test_uniform_over_edge_list(self, graph):
        rng = np.random.default_rng(5)
        idx = {tuple(map(int, e)): i for i, e in enumerate(graph.edges)}
        counts = np.zeros(graph.num_edges)
        for u, v in graph.sample_edges(rng, 400 * graph.num_edges):
            counts[idx[(u, v)]] += 1
        assert stats.chisquare(counts).pvalue > 0.01

    def test_determinism(self):
        g = gen_ring_distance(50, 6)
        a = [g.sample_edge(np.random.default_rng(3)) for _ in range(1)] + list(
            map(tuple, g.sample_edges(np.random.default_rng(3), 100).tolist()))
        b = [g.sample_edge(np.random.default_rng(3)) for _ in range(1)] + list(
            map(tuple, g.sample_edges(np.random.default_rng(3), 100).tolist()))
        assert a == b

    def test_edgeless(self, rng):
        with pytest.raises(InvalidState):
            gen_complete(1).sample_edge(rng)


@settings(max_examples=40, deadline=None)
@given(
    family=st.sampled_from(["complete", "ring", "bipartite", "cliques"]),
    n=st.integers(3, 30),
    k=st.integers(1, 10),
)
def test_generators_satisfy_invariants(family, n, k):
    if family == "complete":
        g = gen_complete(n)
    elif family == "ring":
        delta = 2 * (1 + k % max(1, (n - 1) // 2))
        if delta > n - 1:
            return
        g = gen_ring_distance(n, delta)
        assert set(g.degree.tolist()) == {delta}
    elif family == "bipartite":
        g = gen_complete_bipartite(n, 1 + k % (n - 1))
    else:
        g = gen_clique_union(k, 2 + n % 5)
        assert set(g.degree.tolist()) == {1 + n % 5}
    g.validate()
    for u in range(min(g.n, 5)):
        assert len(g.neighbors(u)) == g.degree[u]


class TestFileImport:
    def test_round_trip(self, tmp_path):
        g = gen_ring_distance(10, 4)
        path = tmp_path / "g.txt"
        save_graph(g, path)
        h = load_graph(path)
        assert h.n == 10 and edge_set(h) == edge_set(g)

    @pytest.mark.parametrize(
        "body,line,what",
        [
            ("3 2\n0 1\n1 1\n", 3, "self-loop"),
            ("3 2\n0 1\n1 0\n", 3, "duplicate"),
            ("3 2\n0 1\n1 3\n", 3, "out of range"),
            ("3 2\n0 1\nx y\n", 3, "two integers"),
            ("3 3\n0 1\n1 2\n", 3, "declares 3 edges"),
        ],
    )
    def test_rejects_with_line_number(self, tmp_path, body, line, what):
        path = tmp_path / "bad.txt"
        path.write_text(body)
        with pytest.raises(InvalidParameter, match=f"line {line}: .*{what}"):
            load_graph(path)

    def test_from_edges_rejects_duplicates(self):
        with pytest.raises(InvalidParameter):
            BinGraph.from_edges(3, [(0, 1), (1, 0)])
