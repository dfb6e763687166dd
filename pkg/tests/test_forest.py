
import numpy as np
import pytest

from shelving.classify.forest import (FOREST_MAGIC, ForestModel, ForestParams, Tree, classify_pixels,
                                      train_classifier, transform)
from shelving.classify.report import error_report
from shelving.mc import Label


def leaf(label):
    return Tree(np.array([-1], np.int32), np.array([0.0]), np.array([-1], np.int32),
                np.array([-1], np.int32), np.array([label], np.int8))


def stump(feature, thr):
    return Tree(np.array([feature, -1, -1], np.int32), np.array([thr, 0, 0], float),
                np.array([1, -1, -1], np.int32), np.array([2, -1, -1], np.int32), np.array([0, 0, 1], np.int8))


def blobs(n, d, shift, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(2 * n, d))
    y = np.r_[np.zeros(n, int), np.ones(n, int)]
    X[y == 1] += shift
    return X, y


class TestParams:
    @pytest.mark.parametrize("kw", [dict(n_trees=0), dict(max_depth=-1), dict(features="pca")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ForestParams(**kw)

    def test_transform(self):
        X = np.array([[1.0, 3.0, 2.0]])
        assert transform(X, "sorted").tolist() == [[3.0, 2.0, 1.0]]
        assert transform(X, "raw") is X


class TestVoting:
    raw = ForestParams(features="raw")

    def test_single_tree(self):
        m = ForestModel([stump(0, 0.5)], 2, self.raw)
        assert classify_pixels(m, [0.2, 9.0]) is Label.DARK
        assert classify_pixels(m, [0.7, -9.0]) is Label.BRIGHT

    def test_unanimous(self):
        m = ForestModel([leaf(1)] * 3, 2, self.raw)
        assert classify_pixels(m, np.zeros((4, 2))).tolist() == [1] * 4

    def test_tie_is_dark(self):
        m = ForestModel([leaf(1), leaf(0)], 2, self.raw)
        assert classify_pixels(m, [0.0, 0.0]) is Label.DARK
        assert m.votes(np.zeros((1, 2))).tolist() == [1]

    def test_empty_forest(self):
        with pytest.raises(ValueError):
            ForestModel([], 2, self.raw)


class TestTraining:
    def test_separable(self):
        X, y = blobs(200, 4, 10.0, 0)
        for mode in ("raw", "sorted"):
            m = train_classifier(X, y, ForestParams(n_trees=15, features=mode))
            assert np.array_equal(m.predict(X), y)

    def test_chance_level(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(4000, 9))
        y = rng.integers(0, 2, 4000)
        m = train_classifier(X[:2000], y[:2000], ForestParams(n_trees=25, seed=2))
        r = error_report(m.predict(X[2000:]), y[2000:])
        assert abs(r.eps - 0.5) <= 3 * r.sigma

    def test_depth_and_determinism(self):
        X, y = blobs(300, 6, 0.8, 3)
        p = ForestParams(n_trees=10, max_depth=3, seed=7)
        a = train_classifier(X, y, p)
        b = train_classifier(X, y, p)
        assert a.dumps() == b.dumps()
        assert all(t.depth <= 3 for t in a.trees)
        c = train_classifier(X, y, ForestParams(n_trees=10, max_depth=3, seed=8))
        assert a.dumps() != c.dumps()

    def test_order_invariant_evaluation(self):
        X, y = blobs(300, 6, 0.8, 4)
        m = train_classifier(X, y, ForestParams(n_trees=10))
        Xe, ye = blobs(500, 6, 0.8, 5)
        perm = np.random.default_rng(6).permutation(len(ye))
        assert error_report(m.predict(Xe), ye) == error_report(m.predict(Xe[perm]), ye[perm])

    def test_errors(self):
        X, y = blobs(20, 3, 1.0, 0)
        with pytest.raises(ValueError):
            train_classifier(X, np.zeros(len(y), int))
        with pytest.raises(ValueError):
            train_classifier(X[:, 0], y)
        m = train_classifier(X, y, ForestParams(n_trees=3))
        with pytest.raises(ValueError):
            m.predict(np.zeros((2, 4)))
        with pytest.raises(ValueError):
            classify_pixels(m, [1.0, 2.0])


class TestDump:
    def test_roundtrip(self, tmp_path):
        X, y = blobs(200, 5, 1.0, 9)
        m = train_classifier(X, y, ForestParams(n_trees=7, max_depth=5, seed=123))
        data = m.dumps()
        assert data[:4] == FOREST_MAGIC
        m2 = ForestModel.loads(data)
        assert m2.params == m.params and m2.n_features == 5
        assert np.array_equal(m2.predict(X), m.predict(X))
        m.save(tmp_path / "f.bin")
        assert ForestModel.load(tmp_path / "f.bin").dumps() == data

    def test_rejects_bad_dump(self):
        with pytest.raises(ValueError):
            ForestModel.loads(b"NOPE" + bytes(40))
        X, y = blobs(20, 2, 3.0, 0)
        data = bytearray(train_classifier(X, y, ForestParams(n_trees=1)).dumps())
        data[4] = 99
        with pytest.raises(ValueError):
            ForestModel.loads(bytes(data))
