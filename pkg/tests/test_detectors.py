import logging

import numpy as np
import pytest

from triage_align.detectors import (
    ForestConfig,
    ForestModel,
    LogisticModel,
    LogregConfig,
    Tree,
    fit_standardizer,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    train_forest,
    train_logreg,
)
from triage_align.detectors.logistic import _gradient, _loss
from triage_align.detectors.standardize import Standardizer

from conftest import make_stream


class TestStandardizer:
    def test_two_point_feature(self):
        s = fit_standardizer(make_stream([[0.0], [2.0]], [0, 1]))
        assert s.means[0] == 1.0
        assert s.stds[0] == 1.0  # population std

    def test_constant_feature_neutralized(self):
        s = fit_standardizer(make_stream([[5.0], [5.0]], [0, 1]))
        assert s.means[0] == 5.0 and s.stds[0] == 1.0
        assert np.allclose(s.transform(np.array([[5.0]])), 0.0)

    def test_training_data_centered(self):
        rng = np.random.default_rng(0)
        X = rng.normal(3.0, 2.5, size=(400, 4))
        stream = make_stream(X, rng.integers(0, 2, 400))
        s = fit_standardizer(stream)
        Z = s.transform(X)
        assert np.abs(Z.mean(axis=0)).max() < 1e-9
        assert np.allclose(Z.std(axis=0), 1.0)

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            fit_standardizer(make_stream(np.zeros((0, 1)), []))

    def test_dimension_mismatch(self):
        s = Standardizer(means=np.zeros(2), stds=np.ones(2))
        with pytest.raises(ValueError, match="dimension"):
            s.transform(np.zeros((3, 5)))


def separable_toy(n=80, seed=0):
    # oracle: verify separability by exhaustive search over boundary angles
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    X[: n // 2] -= 2.5
    X[n // 2 :] += 2.5
    y = np.array([0] * (n // 2) + [1] * (n // 2))
    separable = False
    for theta in np.linspace(0, np.pi, 721):
        proj = X @ np.array([np.cos(theta), np.sin(theta)])
        lo1, hi0 = proj[y == 1].min(), proj[y == 0].max()
        lo0, hi1 = proj[y == 0].min(), proj[y == 1].max()
        if lo1 > hi0 or lo0 > hi1:
            separable = True
            break
    assert separable, "toy set must be linearly separable"
    return make_stream(X, y)


class TestLogreg:
    def test_separable_perfect_accuracy(self):
        stream = separable_toy()
        model = train_logreg(stream, LogregConfig(l2_lambda=1e-4))
        acc = ((model.predict(stream.X) >= 0.5).astype(int) == stream.y).mean()
        assert acc == 1.0

    def test_no_signal_predicts_half(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(600, 3))
        y = np.array([0, 1] * 300)
        model = train_logreg(make_stream(X, y))
        assert np.abs(model.predict(X) - 0.5).mean() < 0.05

    def test_duplicated_rows_same_optimum(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 2))
        y = (rng.uniform(size=60) < 1 / (1 + np.exp(-X[:, 0]))).astype(int)
        m1 = train_logreg(make_stream(X, y))
        X2 = np.vstack([X, X])
        m2 = train_logreg(make_stream(X2, np.concatenate([y, y])))
        assert np.abs(m1.weights - m2.weights).max() < 1e-6
        assert abs(m1.bias - m2.bias) < 1e-6

    def test_monotone_descent(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(200, 3))
        y = (rng.uniform(size=200) < 0.3).astype(int)
        model = train_logreg(make_stream(X, y))
        losses = np.array(model.diagnostics.losses)
        assert (np.diff(losses) <= 1e-12).all()

    @staticmethod
    def _check_gradient_at(X, y, w, b, lam):
        gw, gb = _gradient(X, y, w, b, lam)
        h = 1e-6
        for j in range(len(w)):
            e = np.zeros(len(w))
            e[j] = h
            num = (_loss(X, y, w + e, b, lam) - _loss(X, y, w - e, b, lam)) / (2 * h)
            assert abs(num - gw[j]) <= 1e-5 * max(1.0, abs(num))
        num_b = (_loss(X, y, w, b + h, lam) - _loss(X, y, w, b - h, lam)) / (2 * h)
        assert abs(num_b - gb) <= 1e-5 * max(1.0, abs(num_b))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            n, d = 30, 3
            X = rng.normal(size=(n, d))
            y = rng.integers(0, 2, size=n).astype(float)
            self._check_gradient_at(X, y, rng.normal(size=d), float(rng.normal()), 1e-3)

    def test_gradient_matches_finite_differences_at_returned_weights(self):
        rng = np.random.default_rng(5)
        for trial in range(3):
            n, d = 40, 3
            X = rng.normal(size=(n, d))
            y = (rng.uniform(size=n) < 0.4).astype(float)
            stream = make_stream(X, y.astype(int))
            model = train_logreg(stream, LogregConfig(l2_lambda=1e-3))
            Xs = model.standardizer.transform(X)
            self._check_gradient_at(Xs, y, model.weights, model.bias, model.l2_lambda)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="single class"):
            train_logreg(make_stream([[0.0], [1.0]], [1, 1]))

    def test_nonconvergence_returns_model(self, caplog):
        stream = separable_toy()
        with caplog.at_level(logging.WARNING):
            model = train_logreg(stream, LogregConfig(max_iters=3, tol=1e-16))
        assert model.diagnostics.converged is False
        assert np.isfinite(model.diagnostics.final_grad_norm)
        assert any("without reaching" in r.message for r in caplog.records)

    def test_zero_weight_model_scores_half(self):
        model = LogisticModel(
            weights=np.zeros(2),
            bias=0.0,
            standardizer=Standardizer(means=np.zeros(2), stds=np.ones(2)),
            l2_lambda=0.0,
        )
        assert np.allclose(model.predict(np.random.default_rng(0).normal(size=(5, 2))), 0.5)

    def test_outputs_in_open_interval(self):
        stream = separable_toy()
        model = train_logreg(stream, LogregConfig())
        p = model.predict(stream.X * 50)
        assert (p > 0).all() and (p < 1).all()


def leaf_tree(value):
    return Tree(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.array([0.0]),
        left=np.array([-1], dtype=np.int32),
        right=np.array([-1], dtype=np.int32),
        value=np.array([value]),
    )


def xor_stream(n, seed):
    # oracle: recompute labels by brute-force quadrant parity
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(int)
    for i in range(n):
        assert y[i] == int((X[i, 0] > 0) != (X[i, 1] > 0))
    return make_stream(X, y)


class TestForest:
    @staticmethod
    def _gapped(n, rng):
        # feature 1 fully determines the class, with a margin around the cut
        X = rng.normal(size=(n, 3))
        X[:, 1] = np.where(
            rng.uniform(size=n) < 0.5,
            rng.uniform(-1.0, 0.2, size=n),
            rng.uniform(0.4, 1.0, size=n),
        )
        return X, (X[:, 1] > 0.3).astype(int)

    def test_pure_single_feature_split(self):
        rng = np.random.default_rng(0)
        X, y = self._gapped(200, rng)
        model = train_forest(
            make_stream(X, y),
            ForestConfig(n_trees=20, max_depth=1, min_samples_leaf=5, features_per_split=3, seed=0),
        )
        X_new, y_new = self._gapped(300, rng)
        acc = ((model.predict(X_new) >= 0.5).astype(int) == y_new).mean()
        assert acc == 1.0

    def test_xor_needs_depth(self):
        train = xor_stream(800, 1)
        test = xor_stream(400, 2)
        model = train_forest(
            train, ForestConfig(n_trees=50, max_depth=6, min_samples_leaf=5, features_per_split=2, seed=3)
        )
        acc = ((model.predict(test.X) >= 0.5).astype(int) == test.y).mean()
        assert acc > 0.9

    def test_same_seed_identical(self):
        stream = xor_stream(300, 4)
        cfg = ForestConfig(n_trees=10, max_depth=4, seed=9)
        p1 = train_forest(stream, cfg).predict(stream.X)
        p2 = train_forest(stream, cfg).predict(stream.X)
        assert np.array_equal(p1, p2)

    def test_parallel_matches_serial(self):
        stream = xor_stream(200, 5)
        p1 = train_forest(stream, ForestConfig(n_trees=6, max_depth=4, seed=2, n_jobs=1)).predict(stream.X)
        p2 = train_forest(stream, ForestConfig(n_trees=6, max_depth=4, seed=2, n_jobs=2)).predict(stream.X)
        assert np.array_equal(p1, p2)

    def test_probability_is_mean_of_trees(self, fixture_models):
        model = fixture_models["RF"]["model"]
        X = np.random.default_rng(0).normal(size=(50, model.n_features))
        per_tree = model.predict_trees(X)
        assert np.array_equal(model.predict(X), per_tree.mean(axis=0))

    def test_bootstrap_sample_is_first_draw(self):
        # a depth-0 tree's root value must equal the mean of the seeded
        # bootstrap draw, pinning both the resample and the seed rule
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 2))
        y = rng.integers(0, 2, size=40)
        stream = make_stream(X, y)
        seed = 123
        model = train_forest(stream, ForestConfig(n_trees=3, max_depth=0, seed=seed))
        for i, tree in enumerate(model.trees):
            boot = np.random.default_rng(seed + i).integers(0, 40, size=40)
            assert tree.value[0] == y[boot].astype(float).mean()

    def test_depth_and_leaf_size_respected(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(500, 4))
        y = (X[:, 0] + 0.5 * rng.normal(size=500) > 0).astype(int)
        msl, depth = 10, 3
        model = train_forest(make_stream(X, y), ForestConfig(n_trees=5, max_depth=depth, min_samples_leaf=msl, seed=1))
        for i, tree in enumerate(model.trees):
            assert tree.depth() <= depth
            boot = np.random.default_rng(1 + i).integers(0, 500, size=500)
            Xb = X[boot]
            cur = np.zeros(len(Xb), dtype=np.int32)
            for _ in range(depth + 1):
                f = tree.feature[cur]
                live = np.nonzero(f >= 0)[0]
                if live.size == 0:
                    break
                goes_left = Xb[live, f[live]] <= tree.threshold[cur[live]]
                cur[live] = np.where(goes_left, tree.left[cur[live]], tree.right[cur[live]])
            leaves, counts = np.unique(cur, return_counts=True)
            assert counts.min() >= msl

    def test_leaf_fraction_prediction(self):
        model = ForestModel(
            trees=[leaf_tree(0.75)],
            n_trees=1, max_depth=0, min_samples_leaf=1, features_per_split=1,
            rng_seed=0, n_features=2,
        )
        X = np.random.default_rng(0).normal(size=(7, 2))
        assert np.allclose(model.predict(X), 0.75)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="single class"):
            train_forest(make_stream([[0.0], [1.0]], [0, 0]))


class TestPredictOp:
    def test_order_preserving_and_permutation(self, fixture_streams, fixture_models):
        _, test = fixture_streams
        model = fixture_models["LR"]["model"]
        sub = test.subset(range(40))
        scores = predict(model, sub)
        assert [s[0] for s in scores] == sub.ids
        perm = list(reversed(range(40)))
        scores_perm = predict(model, sub.subset(perm))
        assert scores_perm == [scores[i] for i in perm]

    def test_dimension_mismatch(self):
        stream = make_stream([[0.0, 1.0]], [1])
        model = LogisticModel(
            weights=np.zeros(3), bias=0.0,
            standardizer=Standardizer(means=np.zeros(3), stds=np.ones(3)),
            l2_lambda=0.0,
        )
        with pytest.raises(ValueError, match="features"):
            predict(model, stream)

    def test_scores_in_unit_interval(self, fixture_streams, fixture_models):
        _, test = fixture_streams
        for name in ("LR", "RF"):
            scores = [s for _, s in fixture_models[name]["test_raw"]]
            assert min(scores) >= 0.0 and max(scores) <= 1.0


class TestModelPersistence:
    def test_logreg_roundtrip(self, tmp_path, fixture_models, fixture_streams):
        _, test = fixture_streams
        model = fixture_models["LR"]["model"]
        path = tmp_path / "m.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.predict(test.X[:100]), model.predict(test.X[:100]))

    def test_forest_roundtrip(self, tmp_path, fixture_models, fixture_streams):
        _, test = fixture_streams
        model = fixture_models["RF"]["model"]
        path = tmp_path / "m.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.predict(test.X[:100]), model.predict(test.X[:100]))

    def test_version_checked(self):
        doc = model_to_dict(
            LogisticModel(
                weights=np.zeros(1), bias=0.0,
                standardizer=Standardizer(means=np.zeros(1), stds=np.ones(1)),
                l2_lambda=0.0,
            )
        )
        doc["format_version"] = 99
        with pytest.raises(ValueError, match="format_version"):
            model_from_dict(doc)
