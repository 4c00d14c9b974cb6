import numpy as np
import pytest

from aidgn.errors import DimensionMismatch, EmptyDataset, EmptyDomain, ZeroVector
from aidgn.loss import AidgnHyper
from aidgn.net import (
    ClassifierHead,
    FeatureExtractor,
    cosine_scores,
    forward_batch,
    forward_features,
)
from aidgn.train import (
    TrainConfig,
    evaluate,
    init_state,
    load_checkpoint,
    lr_at_step,
    save_checkpoint,
    split_train_val,
    train,
    train_step,
)


class TestForward:
    def test_identity_layer(self):
        ext = FeatureExtractor(weights=[np.eye(3)], biases=[np.zeros(3)])
        x = np.array([0.3, -1.2, 4.0])
        assert forward_features(x, ext) == pytest.approx(x)

    def test_zero_weights_propagate_bias(self):
        # final layer is linear, so the latent is exactly the bias
        ext = FeatureExtractor(weights=[np.zeros((2, 3))], biases=[np.array([1.5, -2.0])])
        assert forward_features(np.ones(3), ext) == pytest.approx([1.5, -2.0])

    def test_finite_outputs(self):
        rng = np.random.default_rng(81)
        ext = FeatureExtractor.random([5, 8, 4], rng)
        x = rng.standard_normal((1000, 5)) * 3
        z = forward_batch(x, ext)
        assert np.all(np.isfinite(z))

    def test_dimension_mismatch(self):
        ext = FeatureExtractor(weights=[np.eye(3)], biases=[np.zeros(3)])
        with pytest.raises(DimensionMismatch):
            forward_features(np.ones(4), ext)


class TestCosineScores:
    def test_collinear_and_orthogonal(self):
        head = ClassifierHead(np.array([[1.0, 0.0], [0.0, 1.0]]))
        scores = cosine_scores(np.array([2.0, 0.0]), head)
        assert scores == pytest.approx([1.0, 0.0])

    def test_scale_invariance(self):
        rng = np.random.default_rng(82)
        head = ClassifierHead.random(4, 6, rng)
        z = rng.standard_normal(6)
        for c in (1e-6, 0.5, 3.0, 1e6):
            assert cosine_scores(c * z, head) == pytest.approx(
                cosine_scores(z, head), abs=1e-12
            )

    def test_zero_vector(self):
        head = ClassifierHead(np.eye(2))
        with pytest.raises(ZeroVector):
            cosine_scores(np.zeros(2), head)


def _toy_sets(rng, n_per=60):
    """Two linearly separable classes in two source domains with
    different norm scales."""
    sets = {}
    for d, scale in ((0, 1.0), (1, 3.0)):
        x, y = [], []
        for cls, center in ((0, np.array([1.0, 0.2])), (1, np.array([-0.3, 1.0]))):
            pts = center[None, :] + 0.05 * rng.standard_normal((n_per, 2))
            x.append(pts * scale)
            y.append(np.full(n_per, cls))
        sets[d] = (np.concatenate(x), np.concatenate(y))
    return sets


class TestTrainStep:
    def _setup(self, seed=0):
        rng = np.random.default_rng(91)
        state = init_state(2, [6], 3, 2, seed)
        batch = {
            0: (rng.standard_normal((4, 2)), rng.integers(0, 2, 4)),
            1: (rng.standard_normal((3, 2)), rng.integers(0, 2, 3)),
        }
        return state, batch

    def test_deterministic(self):
        hyper = AidgnHyper(kappa=10.0, gamma_delta=0.01, eta=0.02, mu_star=1.0)
        config = TrainConfig(seed=0, iterations=10)
        state1, batch = self._setup()
        state2 = state1.copy()
        s1, _ = train_step(state1, batch, hyper, config)
        s2, _ = train_step(state2, batch, hyper, config)
        for a, b in zip(s1.params(), s2.params()):
            assert np.array_equal(a, b)

    def test_head_rows_unit_after_step(self):
        hyper = AidgnHyper(kappa=10.0, gamma_delta=0.01, eta=0.02, mu_star=1.0)
        config = TrainConfig(seed=0, iterations=10)
        state, batch = self._setup()
        state, _ = train_step(state, batch, hyper, config)
        norms = np.linalg.norm(state.head.directions, axis=1)
        assert norms == pytest.approx(np.ones_like(norms), abs=1e-12)

    def test_descent_on_smooth_instance(self):
        from aidgn.loss import batch_objective
        from aidgn.net import forward_batch as fb

        hyper = AidgnHyper(kappa=5.0, gamma_delta=0.01, beta_rw=0.1, eta=0.02,
                           mu_star=1.5)
        config = TrainConfig(learning_rate=1e-6, seed=0, iterations=10)
        state = init_state(2, [4], 2, 2, 3)
        batch = {0: (np.array([[1.0, -0.4]]), np.array([1]))}

        def objective(s):
            z = fb(batch[0][0], s.extractor)
            t, _ = batch_objective(np.array([0]), z, batch[0][1],
                                   s.head.directions, hyper)
            return t

        before = objective(state)
        state, _ = train_step(state, batch, hyper, config)
        assert objective(state) <= before

    def test_empty_domain(self):
        hyper = AidgnHyper()
        config = TrainConfig(seed=0, iterations=10)
        state, batch = self._setup()
        batch[1] = (np.zeros((0, 2)), np.zeros(0, dtype=int))
        with pytest.raises(EmptyDomain):
            train_step(state, batch, hyper, config)

    def test_metrics_record_fields(self):
        hyper = AidgnHyper(kappa=10.0, eta=0.05, mu_star=1.0)
        config = TrainConfig(seed=0, iterations=10)
        state, batch = self._setup()
        _, record = train_step(state, batch, hyper, config)
        assert record.step == 1
        assert record.loss > 0
        assert set(record.mu_d) == {0, 1}


class TestLrSchedule:
    def test_halving_points(self):
        config = TrainConfig(learning_rate=1.0, iterations=5000)
        assert lr_at_step(config, 2000) == 1.0
        assert lr_at_step(config, 2001) == 0.5
        assert lr_at_step(config, 4000) == 0.5
        assert lr_at_step(config, 4001) == 0.25
        assert lr_at_step(config, 5000) == 0.25


class TestEvaluate:
    def test_collinear_latent(self):
        state = init_state(3, [], 3, 4, 0)
        state.extractor.weights[0] = np.eye(3)
        state.extractor.biases[0] = np.zeros(3)
        head = np.zeros((4, 3))
        head[2] = [0.0, 0.0, 1.0]
        head[0] = [1.0, 0.0, 0.0]
        head[1] = [0.0, 1.0, 0.0]
        head[3] = [0.70710678, 0.70710678, 0.0]
        state.head.directions = head
        acc, _ = evaluate(state, np.array([[0.0, 0.0, 5.0]]), np.array([2]), 10.0)
        assert acc == 1.0

    def test_chance_level_random_head(self):
        rng = np.random.default_rng(83)
        state = init_state(8, [], 8, 4, 1)
        state.extractor.weights[0] = np.eye(8)
        state.extractor.biases[0] = np.zeros(8)
        n = 4000
        x = rng.standard_normal((n, 8))
        y = rng.integers(0, 4, n)
        acc, _ = evaluate(state, x, y, 5.0)
        sigma = np.sqrt(0.25 * 0.75 / n)
        assert abs(acc - 0.25) <= 3 * sigma

    def test_order_invariance(self):
        rng = np.random.default_rng(84)
        state = init_state(3, [4], 3, 3, 2)
        x = rng.standard_normal((50, 3))
        y = rng.integers(0, 3, 50)
        acc1, ent1 = evaluate(state, x, y, 8.0)
        perm = rng.permutation(50)
        acc2, ent2 = evaluate(state, x[perm], y[perm], 8.0)
        assert acc1 == acc2
        assert ent1 == pytest.approx(ent2, abs=1e-12)

    def test_empty_dataset(self):
        state = init_state(2, [], 2, 2, 0)
        with pytest.raises(EmptyDataset):
            evaluate(state, np.zeros((0, 2)), np.zeros(0, dtype=int), 1.0)

    def test_latent_scaling_leaves_predictions_unchanged(self):
        rng = np.random.default_rng(85)
        state = init_state(4, [], 4, 3, 3)
        state.extractor.weights[0] = np.eye(4)
        state.extractor.biases[0] = np.zeros(4)
        x = rng.standard_normal((30, 4))
        y = rng.integers(0, 3, 30)
        acc1, _ = evaluate(state, x, y, 5.0)
        acc2, _ = evaluate(state, 7.5 * x, y, 5.0)
        assert acc1 == acc2


class TestTrainLoop:
    def test_overfits_separable_toy(self):
        rng = np.random.default_rng(86)
        sets = _toy_sets(rng)
        config = TrainConfig(learning_rate=1e-2, iterations=400, batch_per_domain=16,
                             seed=5, eval_interval=100)
        hyper = AidgnHyper(kappa=10.0, gamma_delta=0.01, beta_rw=0.2, eta=0.02,
                           mu_star=2.0)
        result = train(sets, config, hyper, hidden_dims=[8], latent_dim=2)
        pooled_x = np.concatenate([x for x, _ in sets.values()])
        pooled_y = np.concatenate([y for _, y in sets.values()])
        acc, _ = evaluate(result.state, pooled_x, pooled_y, hyper.kappa)
        assert acc >= 0.99

    def test_erm_mode_equals_zeroed_hyper(self):
        rng = np.random.default_rng(87)
        sets = _toy_sets(rng, n_per=30)
        config = TrainConfig(learning_rate=1e-3, iterations=50, batch_per_domain=8,
                             seed=9, eval_interval=25)
        base = AidgnHyper(kappa=20.0, gamma_delta=0.03, beta_rw=0.2, eta=0.05,
                          mu_star=2.0)
        zeroed = AidgnHyper(kappa=20.0, gamma_delta=0.0, beta_rw=0.2, eta=0.0,
                            mu_star=2.0)
        r_erm = train(sets, config, base, mode="erm_cosine", hidden_dims=[6],
                      latent_dim=2)
        r_zero = train(sets, config, zeroed, mode="aidgn", hidden_dims=[6],
                       latent_dim=2)
        for a, b in zip(r_erm.state.params(), r_zero.state.params()):
            assert np.array_equal(a, b)
        for rec_a, rec_b in zip(r_erm.history, r_zero.history):
            assert rec_a.loss == rec_b.loss

    def test_history_length(self):
        rng = np.random.default_rng(88)
        sets = _toy_sets(rng, n_per=20)
        for iters, interval in ((100, 30), (120, 40), (7, 10)):
            config = TrainConfig(learning_rate=1e-3, iterations=iters,
                                 batch_per_domain=8, seed=1, eval_interval=interval)
            result = train(sets, config, AidgnHyper(kappa=5.0, mu_star=1.0),
                           hidden_dims=[4], latent_dim=2)
            assert len(result.history) == int(np.ceil(iters / interval))

    def test_validation_selection_prefers_earlier_tie(self):
        rng = np.random.default_rng(89)
        sets = _toy_sets(rng, n_per=40)
        config = TrainConfig(learning_rate=1e-2, iterations=200, batch_per_domain=16,
                             seed=2, eval_interval=50)
        val = (np.concatenate([x for x, _ in sets.values()]),
               np.concatenate([y for _, y in sets.values()]))
        result = train(sets, config, AidgnHyper(kappa=10.0, mu_star=2.0),
                       hidden_dims=[8], latent_dim=2, val_set=val)
        accs = [r.val_acc for r in result.history]
        best = max(accs)
        first_best_step = result.history[accs.index(best)].step
        assert result.best_step == first_best_step
        assert result.best_val_acc == best

    def test_reproducible_given_seed(self):
        rng = np.random.default_rng(90)
        sets = _toy_sets(rng, n_per=20)
        config = TrainConfig(learning_rate=1e-3, iterations=30, batch_per_domain=8,
                             seed=77, eval_interval=10)
        hyper = AidgnHyper(kappa=8.0, mu_star=1.0)
        r1 = train(sets, config, hyper, hidden_dims=[4], latent_dim=2)
        r2 = train(sets, config, hyper, hidden_dims=[4], latent_dim=2)
        for a, b in zip(r1.state.params(), r2.state.params()):
            assert np.array_equal(a, b)


class TestSplit:
    def test_stratified_sizes(self):
        rng = np.random.default_rng(92)
        x = rng.standard_normal((100, 3))
        y = np.repeat(np.arange(4), 25)
        tx, ty, vx, vy = split_train_val(x, y, 0.2, rng)
        assert vx.shape[0] == 20 and tx.shape[0] == 80
        for cls in range(4):
            assert (vy == cls).sum() == 5
            assert (ty == cls).sum() == 20

    def test_no_overlap(self):
        rng = np.random.default_rng(93)
        x = np.arange(40, dtype=float).reshape(20, 2)
        y = np.repeat([0, 1], 10)
        tx, _, vx, _ = split_train_val(x, y, 0.2, rng)
        train_rows = {tuple(r) for r in tx}
        val_rows = {tuple(r) for r in vx}
        assert not train_rows & val_rows


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(94)
        sets = _toy_sets(rng, n_per=15)
        config = TrainConfig(learning_rate=1e-3, iterations=12, batch_per_domain=8,
                             seed=4, eval_interval=6)
        result = train(sets, config, AidgnHyper(kappa=8.0, mu_star=1.0),
                       hidden_dims=[4], latent_dim=2)
        path = tmp_path / "state.npz"
        save_checkpoint(path, result.state)
        loaded = load_checkpoint(path)
        assert loaded.step == result.state.step
        assert loaded.seed == result.state.seed
        assert loaded.mode == result.state.mode
        assert loaded.extractor.activation == result.state.extractor.activation
        for a, b in zip(loaded.params(), result.state.params()):
            assert np.array_equal(a, b)
        for a, b in zip(loaded.m + loaded.v, result.state.m + result.state.v):
            assert np.array_equal(a, b)

    def test_write_then_read_then_write_identical(self, tmp_path):
        state = init_state(3, [5], 3, 2, 11)
        p1 = tmp_path / "a.npz"
        p2 = tmp_path / "b.npz"
        save_checkpoint(p1, state)
        save_checkpoint(p2, load_checkpoint(p1))
        assert p1.read_bytes() == p2.read_bytes()
