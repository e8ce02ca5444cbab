from __future__ import annotations

import numpy as np
import pytest

from gafnirs.errors import DimensionMismatch
from gafnirs.nn.baselines import KNN, LogisticRegression, knn_predict, train_logreg


def clusters(n, seed):
    r = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    x = r.normal(size=(n, 2)) + np.where(y[:, None] == 1, 3.0, -3.0)
    return x, y


def test_logreg_two_clusters():
    x, y = clusters(200, 0)
    xt, yt = clusters(200, 1)
    model = train_logreg(x, y)
    assert np.mean(model.predict(xt) == yt) >= 0.95
    p = model.predict_proba(xt)
    np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-12)
    assert np.all(p[:, 2] < 0.05)  # unseen class


def test_logreg_dimension_check():
    with pytest.raises(DimensionMismatch):
        LogisticRegression().fit(np.zeros((3, 2)), np.zeros(4, int))
    m = LogisticRegression(epochs=1).fit(np.ones((3, 2)), np.array([0, 1, 2]))
    with pytest.raises(DimensionMismatch):
        m.predict(np.zeros((1, 3)))


def test_knn_k1_returns_own_label():
    x, y = clusters(20, 2)
    for i in range(20):
        assert knn_predict(x, y, x[i], 1) == y[i]


def test_knn_tie_rule():
    x = np.array([[0.0], [1.0], [-3.0], [4.0], [10.0], [-10.0]])
    y = np.array([0, 0, 1, 1, 2, 2])
    # k = n: every class has 2 votes; mean distances from 0.5 are 0.5, 3.5, 10
    assert knn_predict(x, y, np.array([0.5]), 6) == 0
    # two classes with equal votes and equal mean distance -> lowest class index
    x2, y2 = np.array([[-1.0], [1.0]]), np.array([2, 1])
    assert knn_predict(x2, y2, np.array([0.0]), 2) == 1
    assert knn_predict(x2, y2, np.array([0.0]), 2) == knn_predict(x2, y2, np.array([0.0]), 2)


def test_knn_errors():
    with pytest.raises(ValueError):
        knn_predict(np.zeros((2, 1)), np.zeros(2, int), np.zeros(1), 0)
    with pytest.raises(DimensionMismatch):
        knn_predict(np.zeros((2, 1)), np.zeros(2, int), np.zeros(2), 1)


def test_knn_classifier_probabilities():
    x, y = clusters(40, 3)
    m = KNN(5).fit(x, y)
    p = m.predict_proba(x)
    np.testing.assert_allclose(p.sum(axis=1), 1)
    assert np.mean(m.predict(x) == y) == 1.0
