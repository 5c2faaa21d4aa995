import numpy as np
import pytest

from plugplay.graph import (
    Graph,
    adjacency,
    is_connected,
    lambda2,
    laplacian,
    mohar_bound,
    r_matrix,
)


def path3():
    return Graph.from_edges([1, 2, 3], [(1, 2), (2, 3)])


def k3():
    return Graph.from_edges([1, 2, 3], [(1, 2), (2, 3), (1, 3)])


class TestConstruction:
    def test_self_loop_rejected(self):
        with pytest.raises(ValueError):
            Graph.from_edges([1, 2], [(1, 1)])

    def test_unknown_endpoint_rejected(self):
        with pytest.raises(ValueError):
            Graph.from_edges([1, 2], [(1, 3)])

    def test_duplicate_edges_rejected(self):
        with pytest.raises(ValueError):
            Graph.from_edges([1, 2], [(1, 2), (2, 1)])

    def test_ids_kept_sorted(self):
        g = Graph.from_edges([5, 1, 9], [(9, 1)])
        assert g.nodes == (1, 5, 9)
        assert g.index(5) == 1

    def test_edits(self):
        g = path3().with_node(7, [(7, 1)])
        assert g.neighbors(7) == (1,)
        g2 = g.without_node(2)
        assert g2.nodes == (1, 3, 7)
        assert g2.edges == ((1, 7),)
        g3 = g2.with_edges([(1, 3)])
        assert is_connected(g3)
        assert g3.subgraph([1, 3]).edges == ((1, 3),)


class TestLaplacian:
    def test_two_node(self):
        g = Graph.from_edges([1, 2], [(1, 2)])
        assert np.array_equal(laplacian(g), [[1, -1], [-1, 1]])

    def test_path3(self):
        assert np.array_equal(
            laplacian(path3()), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]
        )

    def test_k3(self):
        assert np.array_equal(laplacian(k3()), 3 * np.eye(3) - np.ones((3, 3)))

    def test_row_sums_vanish(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            g = _random_graph(rng, 8)
            assert np.abs(laplacian(g) @ np.ones(g.n)).max() < 1e-14

    def test_weighted(self):
        g = Graph.from_edges([1, 2], [(1, 2)], weights=[2.5])
        assert np.array_equal(adjacency(g), [[0, 2.5], [2.5, 0]])
        assert np.array_equal(laplacian(g), [[2.5, -2.5], [-2.5, 2.5]])


class TestLambda2:
    def test_two_node_edge(self):
        assert np.isclose(lambda2(Graph.from_edges([1, 2], [(1, 2)])), 2.0)

    def test_path3_spectrum(self):
        # P3 Laplacian spectrum {0, 1, 3} from its characteristic polynomial
        assert np.isclose(lambda2(path3()), 1.0)

    def test_disconnected_zero(self):
        g = Graph.from_edges([1, 2], [])
        assert np.isclose(lambda2(g), 0.0)

    def test_single_node_rejected(self):
        with pytest.raises(ValueError):
            lambda2(Graph.from_edges([1], []))


class TestConnectivity:
    def test_single_node(self):
        assert is_connected(Graph.from_edges([4], []))

    def test_path(self):
        assert is_connected(path3())

    def test_two_components(self):
        assert not is_connected(Graph.from_edges([1, 2, 3, 4], [(1, 2), (3, 4)]))

    def test_agrees_with_lambda2(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            g = _random_graph(rng, 6)
            assert is_connected(g) == (lambda2(g) > 1e-9)


class TestRMatrix:
    def test_two_node(self):
        g = Graph.from_edges([1, 2], [(1, 2)])
        r, lam = r_matrix(g)
        assert np.allclose(np.abs(r), [[1 / np.sqrt(2)], [1 / np.sqrt(2)]])
        assert r[0, 0] > 0  # deterministic sign
        assert np.allclose(lam, [[2.0]])

    def test_k3_identities(self):
        r, lam = r_matrix(k3())
        assert np.allclose(np.diag(lam), [3.0, 3.0])
        assert np.allclose(r.T @ r, np.eye(2), atol=1e-10)
        assert np.abs(np.ones(3) @ r).max() < 1e-10

    def test_identities_and_reconstruction(self):
        rng = np.random.default_rng(2)
        checked = 0
        while checked < 40:
            g = _random_graph(rng, 12)
            if not is_connected(g) or g.n < 2:
                continue
            checked += 1
            lap = laplacian(g)
            r, lam = r_matrix(g)
            assert np.abs(np.ones(g.n) @ r).max() < 1e-10
            assert np.allclose(r.T @ r, np.eye(g.n - 1), atol=1e-10)
            assert np.allclose(r.T @ lap @ r, lam, atol=1e-10)
            assert np.allclose(np.diag(lam), np.sort(np.diag(lam)))
            # spectral identity: the 1-direction contributes zero
            assert np.allclose(r @ lam @ r.T, lap, atol=1e-10)

    def test_disconnected_rejected(self):
        with pytest.raises(ValueError):
            r_matrix(Graph.from_edges([1, 2, 3], [(1, 2)]))

    def test_deterministic(self):
        r1, _ = r_matrix(path3())
        r2, _ = r_matrix(path3())
        assert np.array_equal(r1, r2)


class TestMohar:
    def test_values(self):
        assert mohar_bound(2) == 1.0
        assert np.isclose(mohar_bound(3), 4.0 / 9.0)
        assert mohar_bound(10) == 0.04

    def test_bound_examples(self):
        assert lambda2(Graph.from_edges([1, 2], [(1, 2)])) >= mohar_bound(2)
        assert lambda2(path3()) >= mohar_bound(3)

    def test_bound_on_random_connected(self):
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 80:
            g = _random_graph(rng, 12)
            if g.n < 2 or not is_connected(g):
                continue
            checked += 1
            assert lambda2(g) >= mohar_bound(g.n) - 1e-12


def _random_graph(rng, max_nodes):
    n = int(rng.integers(2, max_nodes + 1))
    ids = list(range(1, n + 1))
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                edges.add((ids[i], ids[j]))
    return Graph.from_edges(ids, sorted(edges))
