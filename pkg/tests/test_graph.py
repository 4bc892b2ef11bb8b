import numpy as np
import pytest

from alpharec import graph
from alpharec.corpus import DatasetSplit, IdMaps

from reference import (
    dense_adjacency,
    dense_multi_layer,
    dense_propagate,
    make_random_split,
)


def split_from_lists(train_lists, n_items):
    n_users = len(train_lists)
    train = [np.array(sorted(v), dtype=np.int64) for v in train_lists]
    empty = [np.array([], dtype=np.int64) for _ in range(n_users)]
    id_maps = IdMaps([f"u{k}" for k in range(n_users)], [f"i{k}" for k in range(n_items)])
    return DatasetSplit(train, list(empty), list(empty), id_maps, n_users, n_items)


class TestBuild:
    def test_hand_example_csr(self):
        # u0 -> {0, 2}, u1 -> {2}
        g = graph.build_graph(split_from_lists([[0, 2], [2]], 3))
        assert g.user_offsets.tolist() == [0, 2, 3]
        assert g.user_items.tolist() == [0, 2, 2]
        assert g.item_offsets.tolist() == [0, 1, 1, 3]
        assert g.item_users.tolist() == [0, 0, 1]
        assert g.user_degree.tolist() == [2, 1]
        assert g.item_degree.tolist() == [1, 0, 2]
        assert g.n_edges == 3

    def test_item_lists_sorted_within_rows(self):
        split = make_random_split(15, 25, seed=7)
        g = graph.build_graph(split)
        for i in range(g.n_items):
            row = g.item_users[g.item_offsets[i] : g.item_offsets[i + 1]]
            assert np.array_equal(row, np.sort(row))

    def test_empty_train_user_is_error(self):
        split = split_from_lists([[0], []], 2)
        with pytest.raises(ValueError, match="user index 1"):
            graph.build_graph(split)


class TestPropagate:
    def test_matches_dense_oracle_f64(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            split = make_random_split(rng.integers(2, 12), rng.integers(3, 15), seed=seed)
            g = graph.build_graph(split)
            dim = int(rng.integers(1, 6))
            e_u = rng.standard_normal((split.n_users, dim))
            e_i = rng.standard_normal((split.n_items, dim))
            atil = dense_adjacency(split.n_users, split.n_items, split.train)
            du, di = dense_propagate(atil, e_u, e_i)
            su, si = graph.propagate(g, e_u, e_i)
            assert np.abs(su - du).max() <= 1e-12
            assert np.abs(si - di).max() <= 1e-12

    def test_matches_dense_oracle_f32(self):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            split = make_random_split(rng.integers(2, 10), rng.integers(3, 12), seed=seed)
            g = graph.build_graph(split)
            e_u = rng.standard_normal((split.n_users, 4)).astype(np.float32)
            e_i = rng.standard_normal((split.n_items, 4)).astype(np.float32)
            atil = dense_adjacency(split.n_users, split.n_items, split.train)
            du, di = dense_propagate(atil, e_u.astype(np.float64), e_i.astype(np.float64))
            su, si = graph.propagate(g, e_u, e_i)
            assert su.dtype == np.float32 and si.dtype == np.float32
            assert np.abs(su.astype(np.float64) - du).max() <= 1e-6
            assert np.abs(si.astype(np.float64) - di).max() <= 1e-6

    def test_zero_degree_item_gets_zero_vector(self):
        g = graph.build_graph(split_from_lists([[0, 2], [2]], 3))
        e_u = np.ones((2, 2))
        e_i = np.ones((3, 2))
        _, si = graph.propagate(g, e_u, e_i)
        assert np.all(si[1] == 0.0)

    def test_self_adjoint(self):
        # <propagate(x), y> == <x, propagate(y)> since the operator is symmetric
        rng = np.random.default_rng(5)
        split = make_random_split(8, 11, seed=5)
        g = graph.build_graph(split)
        xu, xi = rng.standard_normal((8, 3)), rng.standard_normal((11, 3))
        yu, yi = rng.standard_normal((8, 3)), rng.standard_normal((11, 3))
        pxu, pxi = graph.propagate(g, xu, xi)
        pyu, pyi = graph.propagate(g, yu, yi)
        lhs = (pxu * yu).sum() + (pxi * yi).sum()
        rhs = (xu * pyu).sum() + (xi * pyi).sum()
        assert abs(lhs - rhs) <= 1e-9


class TestMultiLayer:
    def test_zero_layers_is_identity(self):
        split = make_random_split(5, 8, seed=2)
        g = graph.build_graph(split)
        rng = np.random.default_rng(2)
        e_u, e_i = rng.standard_normal((5, 3)), rng.standard_normal((8, 3))
        fu, fi, _, _ = graph.multi_layer(g, e_u, e_i, n_layers=0)
        assert np.array_equal(fu, e_u)
        assert np.array_equal(fi, e_i)

    def test_matches_dense_oracle(self):
        for n_layers in (1, 2, 3):
            split = make_random_split(7, 9, seed=n_layers)
            g = graph.build_graph(split)
            rng = np.random.default_rng(n_layers)
            e_u, e_i = rng.standard_normal((7, 4)), rng.standard_normal((9, 4))
            du, di = dense_multi_layer(dense_adjacency(split.n_users, split.n_items, split.train), e_u, e_i, n_layers)
            su, si, _, _ = graph.multi_layer(g, e_u, e_i, n_layers)
            assert np.abs(su - du).max() <= 1e-12
            assert np.abs(si - di).max() <= 1e-12

    def test_keep_layers_returns_all(self):
        split = make_random_split(4, 6, seed=9)
        g = graph.build_graph(split)
        rng = np.random.default_rng(9)
        e_u, e_i = rng.standard_normal((4, 2)), rng.standard_normal((6, 2))
        fu, fi, layers_u, layers_i = graph.multi_layer(
            g, e_u, e_i, n_layers=2, keep_layers=True
        )
        assert len(layers_u) == 3 and len(layers_i) == 3
        assert np.array_equal(layers_u[0], e_u)
        avg_u = (layers_u[0] + layers_u[1] + layers_u[2]) / 3.0
        assert np.abs(fu - avg_u).max() <= 1e-12
        cu, ci = graph.propagate(g, layers_u[1], layers_i[1])
        assert np.abs(layers_u[2] - cu).max() <= 1e-12
        assert np.abs(layers_i[2] - ci).max() <= 1e-12


class TestUserMean:
    def test_matches_brute_force(self):
        split = make_random_split(10, 14, seed=3)
        g = graph.build_graph(split)
        rng = np.random.default_rng(3)
        items = rng.standard_normal((14, 5))
        means = graph.user_mean(g, items)
        for u in range(10):
            expected = items[split.train[u]].mean(axis=0)
            assert np.abs(means[u] - expected).max() <= 1e-12

    def test_backward_is_adjoint(self):
        # <user_mean(X), G> == <X, user_mean_backward(G)>
        split = make_random_split(6, 9, seed=11)
        g = graph.build_graph(split)
        rng = np.random.default_rng(11)
        items = rng.standard_normal((9, 3))
        grad_out = rng.standard_normal((6, 3))
        lhs = (graph.user_mean(g, items) * grad_out).sum()
        rhs = (items * graph.user_mean_backward(g, grad_out)).sum()
        assert abs(lhs - rhs) <= 1e-9


class TestScatter:
    def test_matches_loop(self):
        rng = np.random.default_rng(17)
        idx = rng.integers(0, 7, size=40)
        rows = rng.standard_normal((40, 3))
        out = graph.scatter_add_rows(7, idx, rows)
        expected = np.zeros((7, 3))
        for k in range(40):
            expected[idx[k]] += rows[k]
        assert np.abs(out - expected).max() <= 1e-12

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(23)
        idx = rng.integers(0, 5, size=200)
        rows = rng.standard_normal((200, 4)).astype(np.float32)
        a = graph.scatter_add_rows(5, idx, rows)
        b = graph.scatter_add_rows(5, idx.copy(), rows.copy())
        assert a.tobytes() == b.tobytes()

    def test_empty_input(self):
        out = graph.scatter_add_rows(4, np.array([], dtype=np.int64), np.zeros((0, 3)))
        assert out.shape == (4, 3)
        assert np.all(out == 0.0)
