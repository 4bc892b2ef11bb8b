import json
import math

import numpy as np
import pytest

from alpharec import corpus, train
from alpharec.model import init_mlp
from alpharec.seeding import rng_for

from reference import (
    bpr_direct,
    finite_difference_gradients,
    infonce_direct,
    make_random_split,
    max_relative_error,
)


class TestConfig:
    def test_defaults_validate(self):
        cfg = train.TrainConfig()
        assert cfg.temperature == 0.15 and cfg.n_negatives == 256
        assert cfg.batch_size == 1024 and cfg.n_layers == 2

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"temperature": 0.0},
            {"n_negatives": 0},
            {"batch_size": 0},
            {"patience": 0},
            {"eval_every": 0},
            {"n_layers": -1},
            {"loss_kind": "hinge"},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            train.TrainConfig(**kwargs)


class TestNegatives:
    def test_excludes_training_items_and_respects_range(self):
        rng = rng_for(0, "t")
        train_items = np.array([2, 3, 9], dtype=np.int64)
        for _ in range(50):
            out = train.sample_negatives(train_items, (0, 8), 16, rng)
            assert out.shape == (16,)
            assert out.min() >= 0 and out.max() < 8
            assert not np.isin(out, [2, 3]).any()  # 9 is outside the range anyway

    def test_uniform_over_allowed_items(self):
        # 8 allowed items, 8000 draws: each count within 5 sigma of 1000
        rng = rng_for(1, "t")
        draws = train.sample_negatives(
            np.array([1, 5], dtype=np.int64), (0, 10), 8000, rng
        )
        counts = np.bincount(draws, minlength=10)
        assert counts[1] == 0 and counts[5] == 0
        sigma = math.sqrt(8000 * (1 / 8) * (7 / 8))
        for i in range(10):
            if i in (1, 5):
                continue
            assert abs(counts[i] - 1000) <= 5 * sigma, (i, counts[i])

    def test_exhausted_pool_is_error(self):
        with pytest.raises(ValueError, match="every item"):
            train.sample_negatives(
                np.array([0, 1, 2], dtype=np.int64), (0, 3), 4, rng_for(0, "t")
            )


class TestLosses:
    def test_infonce_matches_direct(self):
        rng = np.random.default_rng(0)
        for tau in (1.0, 0.2, 0.05, 0.01):
            s_pos = rng.uniform(-1, 1, size=12)
            s_neg = rng.uniform(-1, 1, size=(12, 7))
            got = train.infonce_loss(s_pos, s_neg, tau)
            want = infonce_direct(s_pos, s_neg, tau)
            assert abs(got - want) <= 1e-9 * max(1.0, abs(want))

    def test_infonce_shift_invariance_at_extreme_logits(self):
        # adding a per-row constant leaves the loss unchanged; the unshifted
        # exponentials would overflow, so this exercises the stabilization
        rng = np.random.default_rng(1)
        s_pos = rng.uniform(-1, 1, size=5)
        s_neg = rng.uniform(-1, 1, size=(5, 4))
        base = train.infonce_loss(s_pos, s_neg, 0.1)
        shifted = train.infonce_loss(s_pos + 500.0, s_neg + 500.0, 0.1)
        assert math.isfinite(shifted)
        assert abs(shifted - base) <= 1e-6

    def test_infonce_grad_matches_fd(self):
        rng = np.random.default_rng(2)
        s_pos = rng.uniform(-1, 1, size=6)
        s_neg = rng.uniform(-1, 1, size=(6, 5))
        _, grad = train._infonce_loss_grad(s_pos, s_neg, 0.2)
        h = 1e-6
        for r in range(6):
            for c in range(6):
                sp, sn = s_pos.copy(), s_neg.copy()
                if c == 0:
                    sp[r] += h
                else:
                    sn[r, c - 1] += h
                plus = train.infonce_loss(sp, sn, 0.2)
                if c == 0:
                    sp[r] -= 2 * h
                else:
                    sn[r, c - 1] -= 2 * h
                minus = train.infonce_loss(sp, sn, 0.2)
                fd = (plus - minus) / (2 * h)
                assert abs(grad[r, c] - fd) <= 1e-6

    def test_bpr_matches_direct(self):
        rng = np.random.default_rng(3)
        s_pos = rng.uniform(-1, 1, size=20)
        s_neg = rng.uniform(-1, 1, size=20)
        got = train.bpr_loss(s_pos, s_neg)
        assert abs(got - bpr_direct(s_pos, s_neg)) <= 1e-10

    def test_bpr_stable_for_large_margins(self):
        assert train.bpr_loss(np.array([900.0]), np.array([0.0])) == pytest.approx(0.0, abs=1e-12)
        assert train.bpr_loss(np.array([0.0]), np.array([900.0])) == pytest.approx(900.0)

    def test_bpr_requires_single_negative(self):
        with pytest.raises(ValueError, match="one negative"):
            train.bpr_loss(np.zeros(3), np.zeros((3, 2)))

    def test_bpr_grad_signs_and_fd(self):
        s_pos = np.array([0.3, -0.2])
        s_neg = np.array([0.1, 0.4])
        _, grad = train._bpr_loss_grad(s_pos, s_neg)
        assert (grad[:, 0] < 0).all() and (grad[:, 1] > 0).all()
        h = 1e-6
        fd = (train.bpr_loss(s_pos + h, s_neg) - train.bpr_loss(s_pos - h, s_neg)) / (2 * h)
        assert abs(grad[:, 0].sum() - fd) <= 1e-6


def tiny_problem(seed, n_users=6, n_items=9, d_feat=4):
    split = make_random_split(n_users, n_items, seed=seed)
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n_items, d_feat))
    return split, feats


class TestGradients:
    @pytest.mark.parametrize(
        "kind,n_layers,loss",
        [("mlp", 2, "infonce"), ("probe", 0, "bpr"), ("id", 1, "infonce")],
    )
    def test_analytic_matches_finite_differences(self, kind, n_layers, loss):
        from alpharec.graph import build_graph
        from alpharec.model import init_id, init_probe

        split, feats = tiny_problem(seed=40 + n_layers)
        g = build_graph(split)
        x = feats if kind != "id" else None
        if kind == "mlp":
            params = init_mlp(4, 5, 3, seed=1, dtype=np.float64)
        elif kind == "probe":
            params = init_probe(4, 3, seed=1, dtype=np.float64)
        else:
            params = init_id(split.n_users, split.n_items, 3, seed=1, dtype=np.float64)
        cfg = train.TrainConfig(
            n_negatives=1 if loss == "bpr" else 3,
            n_layers=n_layers,
            loss_kind=loss,
            temperature=0.2,
        )
        rng = rng_for(9, "batch")
        users = np.array([0, 2, 4, 1], dtype=np.int64)
        pos = np.array([split.train[u][0] for u in users], dtype=np.int64)
        n_neg = 1 if loss == "bpr" else 3
        negs = np.stack(
            [train.sample_negatives(split.train[u], (0, split.n_items), n_neg, rng) for u in users]
        )
        batch = train.TrainBatch(users, pos, negs)

        loss_val, grads = train.compute_gradients(params, batch, x, g, cfg)
        assert math.isfinite(loss_val)
        numeric = finite_difference_gradients(
            lambda: train.batch_loss(params, batch, x, g, cfg), params
        )
        assert max_relative_error(grads, numeric) <= 1e-4

    def test_batch_loss_agrees_with_gradient_path(self):
        from alpharec.graph import build_graph

        split, feats = tiny_problem(seed=50)
        g = build_graph(split)
        params = init_mlp(4, 5, 3, seed=2, dtype=np.float64)
        cfg = train.TrainConfig(n_negatives=2, n_layers=2)
        users = np.array([0, 1], dtype=np.int64)
        pos = np.array([split.train[0][0], split.train[1][0]], dtype=np.int64)
        negs = np.stack(
            [
                train.sample_negatives(split.train[u], (0, split.n_items), 2, rng_for(1, "x"))
                for u in users
            ]
        )
        batch = train.TrainBatch(users, pos, negs)
        a = train.batch_loss(params, batch, feats, g, cfg)
        b, _ = train.compute_gradients(params, batch, feats, g, cfg)
        assert abs(a - b) <= 1e-12


class TestAdam:
    def test_two_steps_match_hand_trace(self):
        from alpharec.model import ProbeParams

        params = ProbeParams(np.array([[1.0]], dtype=np.float64))
        state = train.OptimState.for_params(params)
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        theta = 1.0
        m = v = 0.0
        for t, grad in enumerate([0.5, -0.25], start=1):
            train.adam_step(params, {"W": np.array([[grad]])}, state, lr, b1, b2, eps)
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            theta -= lr * m_hat / (math.sqrt(v_hat) + eps)
            assert abs(params.W[0, 0] - theta) <= 1e-12

    def test_zero_gradient_keeps_params(self):
        params = init_mlp(3, 4, 2, seed=5)
        before = {k: t.copy() for k, t in params.tensors().items()}
        state = train.OptimState.for_params(params)
        train.adam_step(params, {k: np.zeros_like(t) for k, t in before.items()}, state, 0.5)
        for k, t in params.tensors().items():
            assert np.array_equal(t, before[k])

    def test_first_step_magnitude_is_learning_rate(self):
        from alpharec.model import ProbeParams

        for grad in (1e-6, 3.0, 1e6):
            params = ProbeParams(np.zeros((1, 1), dtype=np.float64))
            state = train.OptimState.for_params(params)
            train.adam_step(params, {"W": np.array([[grad]])}, state, lr=0.01)
            # step = lr * g / (|g| + eps): within 1% of lr for any grad scale
            assert abs(abs(params.W[0, 0]) - 0.01) <= 1e-4


def quick_split(seed=0):
    raw_lines = []
    rng = np.random.default_rng(seed)
    for u in range(8):
        items = rng.choice(12, size=6, replace=False)
        for t, i in enumerate(items):
            raw_lines.append(f"user{u}\titem{i}\t{t}")
    return raw_lines


class TestFit:
    def small_fit(self, tmp_path, **over):
        split, feats = tiny_problem(seed=60, n_users=8, n_items=12, d_feat=5)
        kwargs = dict(
            temperature=0.2,
            n_negatives=4,
            batch_size=16,
            learning_rate=0.01,
            max_epochs=4,
            patience=10,
            n_layers=1,
            seed=3,
        )
        kwargs.update(over)
        cfg = train.TrainConfig(**kwargs)
        log_path = tmp_path / "log.jsonl"
        result = train.fit(
            "mlp", split, feats, cfg, hidden_dim=6, out_dim=4, log_path=str(log_path)
        )
        return result, log_path

    def test_loss_decreases(self, tmp_path):
        result, _ = self.small_fit(tmp_path)
        assert result.log[-1]["loss"] < result.log[0]["loss"]

    def test_log_structure_and_file(self, tmp_path):
        result, log_path = self.small_fit(tmp_path, eval_every=2, max_epochs=3)
        lines = [json.loads(s) for s in log_path.read_text().splitlines()]
        assert lines == [
            {k: v for k, v in entry.items()} for entry in result.log
        ]
        assert [e["epoch"] for e in result.log] == [1, 2, 3]
        assert result.log[0]["recall20_val"] is None
        assert isinstance(result.log[1]["recall20_val"], float)
        assert result.log[2]["recall20_val"] is None
        for e in result.log:
            assert set(e) == {"epoch", "loss", "recall20_val", "seconds"}

    def test_early_stop_with_frozen_params(self, tmp_path):
        # lr=0 keeps validation recall constant; strict improvement fails from
        # epoch 2, so patience=1 stops the run there
        result, _ = self.small_fit(
            tmp_path, learning_rate=0.0, patience=1, max_epochs=50
        )
        assert len(result.log) == 2
        assert result.best_epoch == 1

    def test_deterministic_given_seed(self, tmp_path):
        a, log_a = self.small_fit(tmp_path)
        (tmp_path / "log.jsonl").rename(tmp_path / "a.jsonl")
        b, log_b = self.small_fit(tmp_path)
        for k, t in a.params.tensors().items():
            assert t.tobytes() == b.params.tensors()[k].tobytes()
        strip = lambda log: [{k: v for k, v in e.items() if k != "seconds"} for e in log]
        assert strip(a.log) == strip(b.log)

    def test_seed_changes_outcome(self, tmp_path):
        a, _ = self.small_fit(tmp_path, seed=3)
        b, _ = self.small_fit(tmp_path, seed=4)
        assert any(
            a.params.tensors()[k].tobytes() != b.params.tensors()[k].tobytes()
            for k in a.params.tensors()
        )

    def test_divergence_raises(self, tmp_path):
        split, feats = tiny_problem(seed=61, n_users=6, n_items=10, d_feat=4)
        feats = feats.copy()
        feats[0, 0] = np.nan
        cfg = train.TrainConfig(max_epochs=2, batch_size=8, n_negatives=2, n_layers=1)
        with pytest.raises(train.TrainingDiverged):
            train.fit("mlp", split, feats, cfg, hidden_dim=4, out_dim=3)

    def test_id_model_trains(self, tmp_path):
        split, _ = tiny_problem(seed=62, n_users=8, n_items=12)
        cfg = train.TrainConfig(
            max_epochs=3, batch_size=16, n_negatives=3, n_layers=1, learning_rate=0.01, seed=1
        )
        result = train.fit("id", split, None, cfg, out_dim=4)
        assert result.params.kind == "id"
        assert result.params.user_table.shape == (8, 4)
        assert result.log[-1]["loss"] < result.log[0]["loss"]

    def test_merged_training_keeps_negatives_in_block(self):
        rng = np.random.default_rng(63)
        split_a = make_random_split(5, 7, seed=63, train_per_user=(2, 3))
        split_b = make_random_split(4, 6, seed=64, train_per_user=(2, 3))
        feats_a = rng.standard_normal((7, 4))
        feats_b = rng.standard_normal((6, 4))
        split_a = corpus.DatasetSplit(
            split_a.train, split_a.validation, split_a.test,
            split_a.id_maps, split_a.n_users, split_a.n_items, dataset_tag=1,
        )
        split_b = corpus.DatasetSplit(
            split_b.train, split_b.validation, split_b.test,
            split_b.id_maps, split_b.n_users, split_b.n_items, dataset_tag=2,
        )
        mixed = corpus.merge_datasets([split_a, split_b])
        feats = np.concatenate([feats_a, feats_b])
        cfg = train.TrainConfig(
            max_epochs=2, batch_size=8, n_negatives=3, n_layers=1, learning_rate=0.01, seed=2
        )
        result = train.fit("mlp", mixed, feats, cfg, hidden_dim=5, out_dim=3)
        assert result.graph.n_items == 13
        assert math.isfinite(result.log[-1]["loss"])

    def test_probe_needs_features(self):
        split, _ = tiny_problem(seed=65)
        with pytest.raises(ValueError, match="features"):
            train.fit("probe", split, None, train.TrainConfig(max_epochs=1))
