import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qaoa_transfer.graphgen import (
    FAMILIES,
    Graph,
    GraphFamily,
    GraphFormatError,
    assign_gaussian_weights,
    cut_value,
    deserialize_graph,
    exact_maxcut,
    generate_graph,
    serialize_graph,
)


def brute_maxcut(g):
    best = -np.inf
    for bits in itertools.product((0, 1), repeat=g.n):
        best = max(best, sum(w for u, v, w in g.edges if bits[u] != bits[v]))
    return best


def connected_edge_mean(n, p_edge):
    """E[|E|] for G(n, p) conditioned on connectivity, by exact counting."""
    total = lambda k, m: comb(comb(k, 2), m)
    conn = {}
    for k in range(1, n + 1):
        for m in range(comb(k, 2) + 1):
            c = total(k, m)
            # subtract graphs where vertex 1's component has j < k vertices
            for j in range(1, k):
                for mj in range(comb(j, 2) + 1):
                    if m - mj >= 0:
                        c -= comb(k - 1, j - 1) * conn.get((j, mj), 0) * total(k - j, m - mj)
            conn[(k, m)] = c
    ms = range(comb(n, 2) + 1)
    wts = [conn[(n, m)] * p_edge**m * (1 - p_edge) ** (comb(n, 2) - m) for m in ms]
    return sum(m * w for m, w in zip(ms, wts)) / sum(wts)


@st.composite
def random_graphs(draw, max_n=9, signed=False):
    n = draw(st.integers(2, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, min_size=1))
    lo = -2.0 if signed else 0.0
    ws = draw(st.lists(st.floats(lo, 3.0, allow_nan=False), min_size=len(chosen), max_size=len(chosen)))
    return Graph(n, tuple((u, v, w) for (u, v), w in zip(sorted(chosen), ws)))


class TestGenerate:
    def test_u3r_example(self):
        g = generate_graph("u3r", 8, seed=1)
        assert len(g.edges) == 12
        assert set(g.degrees()) == {3}

    def test_uba_edge_count(self):
        g = generate_graph(GraphFamily("uba", ba_m=6), 8, seed=1)
        assert len(g.edges) == (8 - 6) * 6

    @pytest.mark.parametrize("n,m", [(10, 2), (12, 3), (16, 6)])
    def test_ba_edge_count_general(self, n, m):
        g = generate_graph(GraphFamily("uba", ba_m=m), n, seed=3)
        assert len(g.edges) == (n - m) * m
        assert g.is_connected()

    def test_er_mean_edges_matches_exact_count(self):
        expected = connected_edge_mean(8, 0.5)
        counts = [len(generate_graph("uer", 8, seed=s).edges) for s in range(1000)]
        se = np.std(counts) / np.sqrt(len(counts))
        assert abs(np.mean(counts) - expected) < 4 * se
        assert 14.0 < expected < 14.6

    @pytest.mark.parametrize("tag", FAMILIES)
    def test_deterministic(self, tag):
        assert generate_graph(tag, 10, seed=42) == generate_graph(tag, 10, seed=42)

    @pytest.mark.parametrize("n", [4, 8, 12, 20, 24])
    def test_regular_degree_histogram(self, n):
        for seed in range(5):
            g = generate_graph("w3r", n, seed)
            assert np.all(g.degrees() == 3)
            assert len(g.edges) == 3 * n // 2

    @pytest.mark.parametrize("tag", ["uer", "wer", "uba", "wba"])
    def test_connected(self, tag):
        for seed in range(20):
            assert generate_graph(tag, 10, seed).is_connected()

    def test_unweighted_weights_are_one(self):
        for tag in ("u3r", "uba", "uer"):
            assert all(w == 1.0 for _, _, w in generate_graph(tag, 10, 0).edges)

    def test_weighted_topology_matches_unweighted(self):
        u = generate_graph("u3r", 12, seed=5)
        w = generate_graph("w3r", 12, seed=5)
        assert [(a, b) for a, b, _ in u.edges] == [(a, b) for a, b, _ in w.edges]
        assert any(x != 1.0 for _, _, x in w.edges)

    def test_rejects_odd_regular(self):
        with pytest.raises(ValueError, match="even"):
            generate_graph("u3r", 7, 0)

    def test_rejects_small_ba(self):
        with pytest.raises(ValueError, match="n > m"):
            generate_graph("uba", 6, 0)

    def test_family_weight_params(self):
        assert GraphFamily("w3r").mu == 1.0 and GraphFamily("w3r").sigma == 0.5
        assert GraphFamily("u3r").mu is None
        with pytest.raises(ValueError):
            GraphFamily("u3r", mu=1.0)
        with pytest.raises(ValueError):
            GraphFamily("x3r")


class TestWeights:
    def test_zero_sigma(self):
        g = assign_gaussian_weights(generate_graph("uer", 10, 0), 1.7, 0.0, seed=0)
        assert all(w == 1.7 for _, _, w in g.edges)

    def test_sample_moments(self):
        n = 450  # complete graph, ~10^5 edges
        k = Graph(n, tuple((u, v, 1.0) for u in range(n) for v in range(u + 1, n)))
        w = np.array([x for _, _, x in assign_gaussian_weights(k, 1.0, 0.5, seed=11).edges])
        assert w.size > 100_000
        assert abs(w.mean() - 1.0) < 0.01
        assert abs(w.std() - 0.5) < 0.01

    def test_bitwise_determinism(self):
        g = generate_graph("u3r", 16, 2)
        a = assign_gaussian_weights(g, 1.0, 0.5, seed=9)
        b = assign_gaussian_weights(g, 1.0, 0.5, seed=9)
        assert a.edges == b.edges


class TestCuts:
    def test_examples(self):
        edge = Graph(2, ((0, 1, 1.0),))
        assert cut_value(edge, [0, 1]) == 1.0
        assert cut_value(edge, [0, 0]) == 0.0
        k3 = Graph(3, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)))
        assert cut_value(k3, [0, 1, 1]) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            cut_value(Graph(2, ((0, 1, 1.0),)), [0, 1, 0])

    def test_exact_examples(self):
        assert exact_maxcut(Graph(2, ((0, 1, 2.5),))).c_max == 2.5
        k4 = Graph(4, tuple((u, v, 1.0) for u in range(4) for v in range(u + 1, 4)))
        assert exact_maxcut(k4).c_max == 4.0
        path = exact_maxcut(Graph(3, ((0, 1, 1.0), (1, 2, 1.0))))
        assert path.c_max == 2.0
        assert path.witness in ((0, 1, 0), (1, 0, 1))

    def test_refuses_large(self):
        g = Graph(31, ((0, 1, 1.0),))
        with pytest.raises(ValueError, match="refused"):
            exact_maxcut(g)

    @settings(max_examples=60, deadline=None)
    @given(random_graphs(signed=True), st.data())
    def test_complement_symmetry(self, g, data):
        x = data.draw(st.lists(st.integers(0, 1), min_size=g.n, max_size=g.n))
        assert cut_value(g, x) == pytest.approx(cut_value(g, [1 - b for b in x]), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(random_graphs(signed=True))
    def test_gray_code_matches_plain_enumeration(self, g):
        res = exact_maxcut(g)
        assert res.c_max == pytest.approx(brute_maxcut(g), abs=1e-12)
        assert cut_value(g, res.witness) == pytest.approx(res.c_max, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(random_graphs())
    def test_bounds_nonnegative(self, g):
        c = exact_maxcut(g).c_max
        assert g.total_weight / 2 - 1e-12 <= c <= g.total_weight + 1e-12

    def test_generated_families_against_brute_force(self):
        for tag in FAMILIES:
            n = 8 if tag.endswith("ba") else 10
            g = generate_graph(tag, n, 4)
            assert exact_maxcut(g).c_max == pytest.approx(brute_maxcut(g), abs=1e-12)


class TestSerialization:
    def test_round_trip_k4(self):
        k4 = Graph(4, tuple((u, v, 1.0) for u in range(4) for v in range(u + 1, 4)), "custom", 3)
        assert deserialize_graph(serialize_graph(k4)) == k4

    @pytest.mark.parametrize("tag", FAMILIES)
    def test_round_trip_generated(self, tag):
        g = generate_graph(tag, 10, 77)
        back = deserialize_graph(serialize_graph(g))
        assert back == g
        assert back.family == tag and back.seed == 77

    def test_header_format(self):
        text = serialize_graph(generate_graph("u3r", 4, 5))
        assert text.splitlines()[0] == "n 4 family u3r seed 5"

    def test_duplicate_edge(self):
        with pytest.raises(GraphFormatError, match="line 3"):
            deserialize_graph("n 3 family custom seed 0\n0 1 1\n1 0 1\n")

    def test_self_loop(self):
        with pytest.raises(GraphFormatError, match="self-loop"):
            deserialize_graph("n 3 family custom seed 0\n1 1 1\n")

    def test_garbage_line(self):
        with pytest.raises(GraphFormatError, match="line 2"):
            deserialize_graph("n 3 family custom seed 0\n0 x 1\n")
