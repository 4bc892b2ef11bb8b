import math

import numpy as np
import pytest

from alpharec import graph, model

from reference import (
    cosine_direct,
    dense_adjacency,
    dense_multi_layer,
    make_random_split,
    mean_rows,
)


class TestInit:
    def test_glorot_bounds_and_spread(self):
        rng = np.random.default_rng(0)
        W = model.glorot_uniform(40, 60, rng)
        limit = math.sqrt(6.0 / 100)
        assert W.shape == (40, 60)
        assert W.dtype == np.float32
        assert np.abs(W).max() <= limit
        assert np.abs(W).max() > 0.5 * limit

    def test_mlp_init_shapes_and_zero_biases(self):
        p = model.init_mlp(12, d_hidden=8, d_out=4, seed=1)
        assert p.W1.shape == (12, 8) and p.W2.shape == (8, 4)
        assert np.all(p.b1 == 0.0) and np.all(p.b2 == 0.0)
        assert p.input_dim == 12 and p.hidden_dim == 8 and p.out_dim == 4
        assert p.kind == "mlp"

    def test_init_deterministic_per_seed(self):
        a = model.init_mlp(6, 5, 3, seed=7)
        b = model.init_mlp(6, 5, 3, seed=7)
        c = model.init_mlp(6, 5, 3, seed=8)
        assert a.W1.tobytes() == b.W1.tobytes()
        assert a.W2.tobytes() == b.W2.tobytes()
        assert a.W1.tobytes() != c.W1.tobytes()

    def test_tensor_streams_independent(self):
        p = model.init_mlp(6, 6, 6, seed=3)
        assert p.W1.tobytes() != p.W2.tobytes()
        q = model.init_id(6, 6, 6, seed=3)
        assert q.user_table.tobytes() != q.item_table.tobytes()

    def test_probe_init(self):
        p = model.init_probe(9, 4, seed=2)
        assert p.W.shape == (9, 4) and p.kind == "probe"

    def test_id_init(self):
        p = model.init_id(5, 7, 3, seed=2)
        assert p.user_table.shape == (5, 3) and p.item_table.shape == (7, 3)
        assert p.kind == "id" and p.out_dim == 3


class TestForward:
    def test_probe_matches_loop(self):
        rng = np.random.default_rng(4)
        p = model.init_probe(5, 3, seed=4, dtype=np.float64)
        x = rng.standard_normal((7, 5))
        out = model.probe_forward(p, x)
        for r in range(7):
            for c in range(3):
                expected = sum(x[r, k] * p.W[k, c] for k in range(5))
                assert abs(out[r, c] - expected) <= 1e-12

    def test_mlp_matches_loop(self):
        rng = np.random.default_rng(5)
        p = model.init_mlp(4, 6, 3, seed=5, dtype=np.float64)
        p.b1[:] = rng.standard_normal(6)
        p.b2[:] = rng.standard_normal(3)
        x = rng.standard_normal((5, 4))
        out, pre = model.mlp_forward(p, x, return_preact=True)
        for r in range(5):
            h = [sum(x[r, k] * p.W1[k, j] for k in range(4)) + p.b1[j] for j in range(6)]
            z = [v if v >= 0 else 0.01 * v for v in h]
            for j in range(6):
                assert abs(pre[r, j] - h[j]) <= 1e-12
            for c in range(3):
                expected = sum(z[j] * p.W2[j, c] for j in range(6)) + p.b2[c]
                assert abs(out[r, c] - expected) <= 1e-12

    def test_negative_region_uses_slope(self):
        p = model.AlphaRecParams(
            W1=np.array([[1.0]]), b1=np.zeros(1), W2=np.array([[1.0]]), b2=np.zeros(1),
            leaky_slope=0.25,
        )
        out = model.mlp_forward(p, np.array([[-2.0]]))
        assert abs(out[0, 0] - (-0.5)) <= 1e-12

    def test_dim_mismatch_is_error(self):
        p = model.init_mlp(4, 3, 2, seed=0)
        with pytest.raises(ValueError, match="dim"):
            model.mlp_forward(p, np.zeros((2, 5)))

    def test_item_layer0_dispatch(self):
        x = np.random.default_rng(0).standard_normal((6, 4)).astype(np.float32)
        mlp = model.init_mlp(4, 3, 2, seed=0)
        probe = model.init_probe(4, 2, seed=0)
        idp = model.init_id(3, 6, 2, seed=0)
        assert model.item_layer0(mlp, x).shape == (6, 2)
        assert model.item_layer0(probe, x).shape == (6, 2)
        assert model.item_layer0(idp, None) is idp.item_table
        with pytest.raises(ValueError, match="feature matrix"):
            model.item_layer0(mlp, None)


class TestFullForward:
    def test_language_model_matches_composed_oracle(self):
        split = make_random_split(8, 12, seed=6)
        g = graph.build_graph(split)
        rng = np.random.default_rng(6)
        feats = rng.standard_normal((12, 5))
        p = model.init_probe(5, 4, seed=6, dtype=np.float64)
        out = model.full_forward(p, feats, g, n_layers=2)

        e_i0 = feats @ p.W
        e_u0 = np.stack([mean_rows(e_i0, split.train[u].tolist()) for u in range(8)])
        adj = dense_adjacency(8, 12, split.train)
        du, di = dense_multi_layer(adj, e_u0, e_i0, 2)
        assert np.abs(out.users - du).max() <= 1e-10
        assert np.abs(out.items - di).max() <= 1e-10
        assert out.n_layers == 2
        assert len(out.user_layers) == 3

    def test_id_zero_layers_is_raw_tables(self):
        split = make_random_split(5, 9, seed=7)
        g = graph.build_graph(split)
        p = model.init_id(5, 9, 4, seed=7)
        out = model.full_forward(p, None, g, n_layers=0)
        assert np.array_equal(out.users, p.user_table)
        assert np.array_equal(out.items, p.item_table)

    def test_id_with_layers_matches_oracle(self):
        split = make_random_split(5, 9, seed=8)
        g = graph.build_graph(split)
        p = model.init_id(5, 9, 4, seed=8, dtype=np.float64)
        out = model.full_forward(p, None, g, n_layers=2)
        adj = dense_adjacency(5, 9, split.train)
        du, di = dense_multi_layer(adj, p.user_table, p.item_table, 2)
        assert np.abs(out.users - du).max() <= 1e-10
        assert np.abs(out.items - di).max() <= 1e-10

    def test_row_count_mismatch_is_error(self):
        split = make_random_split(4, 6, seed=9)
        g = graph.build_graph(split)
        p = model.init_probe(3, 2, seed=9)
        with pytest.raises(ValueError, match="item rows"):
            model.full_forward(p, np.zeros((7, 3), dtype=np.float32), g, 1)


class TestCosine:
    def test_matches_direct(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            u = rng.standard_normal(6)
            v = rng.standard_normal(6)
            assert abs(model.cosine_score(u, v) - cosine_direct(u, v)) <= 1e-12

    def test_self_similarity_is_one(self):
        v = np.array([3.0, -4.0])
        assert abs(model.cosine_score(v, v) - 1.0) <= 1e-12

    def test_scale_invariant(self):
        u = np.array([1.0, 2.0, 3.0])
        v = np.array([-1.0, 0.5, 2.0])
        assert abs(model.cosine_score(u, v) - model.cosine_score(10 * u, 0.1 * v)) <= 1e-12

    def test_zero_norm_is_error(self):
        with pytest.raises(ValueError, match="zero-norm"):
            model.cosine_score(np.zeros(3), np.ones(3))


class TestCheckpoint:
    def params_by_kind(self, kind):
        if kind == "probe":
            return model.init_probe(5, 3, seed=11)
        if kind == "mlp":
            p = model.init_mlp(5, 4, 3, seed=11, leaky_slope=0.05)
            p.b1[:] = 0.25
            return p
        return model.init_id(4, 6, 3, seed=11)

    @pytest.mark.parametrize("kind", ["probe", "mlp", "id"])
    def test_round_trip(self, tmp_path, kind):
        p = self.params_by_kind(kind)
        path = tmp_path / "ck.arck"
        model.save_checkpoint(path, p, n_layers=2)
        loaded, meta = model.load_checkpoint(path)
        assert meta["kind"] == kind and meta["n_layers"] == 2
        for name, arr in p.tensors().items():
            got = loaded.tensors()[name]
            assert got.shape == arr.shape
            assert np.array_equal(got, arr)
        if kind == "mlp":
            assert loaded.leaky_slope == pytest.approx(0.05)

    def test_file_bytes_deterministic(self, tmp_path):
        p = self.params_by_kind("mlp")
        model.save_checkpoint(tmp_path / "a.arck", p, 2, {"note": "x"})
        model.save_checkpoint(tmp_path / "b.arck", p, 2, {"note": "x"})
        assert (tmp_path / "a.arck").read_bytes() == (tmp_path / "b.arck").read_bytes()

    def test_extra_meta_round_trip(self, tmp_path):
        p = self.params_by_kind("probe")
        model.save_checkpoint(tmp_path / "ck.arck", p, 0, {"best_epoch": 4})
        _, meta = model.load_checkpoint(tmp_path / "ck.arck")
        assert meta["best_epoch"] == 4

    def test_extra_meta_collision_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="reserved"):
            model.save_checkpoint(
                tmp_path / "ck.arck", self.params_by_kind("probe"), 0, {"kind": "x"}
            )

    def test_header_layout(self, tmp_path):
        path = tmp_path / "ck.arck"
        model.save_checkpoint(path, self.params_by_kind("probe"), 1)
        raw = path.read_bytes()
        assert raw[:4] == b"ARCK"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 2  # __meta__ + W

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "ck.arck"
        path.write_bytes(b"XXXX" + b"\0" * 8)
        with pytest.raises(ValueError, match="magic"):
            model.load_checkpoint(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "ck.arck"
        model.save_checkpoint(path, self.params_by_kind("probe"), 1)
        raw = bytearray(path.read_bytes())
        raw[4] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            model.load_checkpoint(path)

    def test_truncated_tensor(self, tmp_path):
        path = tmp_path / "ck.arck"
        model.save_checkpoint(path, self.params_by_kind("probe"), 1)
        path.write_bytes(path.read_bytes()[:-6])
        with pytest.raises(ValueError, match="truncated"):
            model.load_checkpoint(path)
