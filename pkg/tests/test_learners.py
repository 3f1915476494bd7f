import numpy as np
import pytest

from qstrat import learners
from qstrat.errors import DataError, DegenerateLabelsError, ParameterError, SchemaError
from qstrat.learners import KINDS, LearnerSpec
from qstrat.learners.logreg import penalized_loss

SMALL = {
    "SVM": {"kernel": "rbf", "C": 1.0},
    "RandomForest": {"n_trees": 15},
    "LogReg": {"penalty": "l2", "C": 1.0},
    "GradientBoost": {"n_trees": 15, "subsample": 0.8, "colsample": 0.8},
    "KNN": {"n_neighbors": 3},
}


def _blobs(n_classes=2, n=45, d=4, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array([f"c{i % n_classes}" for i in range(n)])
    X = rng.normal(size=(n, d))
    X[:, 0] += 2.5 * np.array([int(v[1]) for v in y])
    return X, y


def test_defaults_and_validation():
    spec = LearnerSpec("RandomForest", {"max_depth": "unbounded"})
    assert spec.hyperparameters["max_depth"] is None
    assert spec.hyperparameters["n_trees"] == 100
    assert LearnerSpec("KNN", {"n_neighbors": 3.0}).hyperparameters["n_neighbors"] == 3
    for kind, hp in [("SVM", {"C": -1}), ("SVM", {"kernel": "sigmoid"}), ("LogReg", {"penalty": "l3"}),
                     ("GradientBoost", {"learning_rate": 1.5}), ("KNN", {"n_neighbors": 0}),
                     ("RandomForest", {"bootstrap": 1}), ("KNN", {"bogus": 1}), ("Ridge", {})]:
        with pytest.raises(ParameterError):
            LearnerSpec(kind, hp)
    with pytest.raises(ParameterError):
        LearnerSpec("KNN", {}, seed=-1)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n_classes", [2, 3])
def test_fit_predict_and_json_roundtrip(kind, n_classes):
    X, y = _blobs(n_classes)
    model = learners.train(LearnerSpec(kind, SMALL[kind], 3), X, y)
    assert model.classes == tuple(sorted(set(y)))
    s = learners.decision_scores(model, X)
    assert s.scores.shape == (len(y), n_classes)
    assert np.mean(learners.predict(model, X) == y) > 0.8
    back = learners.model_from_json(learners.model_to_json(model))
    assert np.array_equal(learners.decision_scores(back, X).scores, s.scores)
    assert learners.model_to_json(back) == learners.model_to_json(model)


@pytest.mark.parametrize("kind", KINDS)
def test_training_is_deterministic(kind):
    X, y = _blobs(3, seed=1)
    a = learners.train(LearnerSpec(kind, SMALL[kind], 9), X, y)
    b = learners.train(LearnerSpec(kind, SMALL[kind], 9), X, y)
    assert learners.model_to_json(a) == learners.model_to_json(b)


def test_binary_scores_are_antisymmetric():
    X, y = _blobs(2)
    for kind in ("SVM", "LogReg", "GradientBoost"):
        s = learners.decision_scores(learners.train(LearnerSpec(kind, SMALL[kind]), X, y), X).scores
        assert np.array_equal(s[:, 0], -s[:, 1])


@pytest.mark.parametrize("kind", ["RandomForest", "GradientBoost"])
def test_truncation_equals_direct_training(kind):
    X, y = _blobs(3, seed=2)
    hp = dict(SMALL[kind], n_trees=30)
    big = learners.train(LearnerSpec(kind, hp, 4), X, y)
    small = learners.train(LearnerSpec(kind, dict(hp, n_trees=12), 4), X, y)
    cut = learners.truncate(big, 12)
    assert learners.model_to_json(cut) == learners.model_to_json(small)
    with pytest.raises(ParameterError):
        learners.truncate(big, 31)
    with pytest.raises(ParameterError):
        learners.truncate(learners.train(LearnerSpec("KNN"), X, y), 1)


def test_feature_importance():
    X, y = _blobs(2, d=5)
    for kind in ("RandomForest", "GradientBoost", "LogReg"):
        imp = learners.feature_importance(learners.train(LearnerSpec(kind, SMALL[kind]), X, y))
        assert imp.weights.shape == (5,) and np.all(imp.weights >= 0)
        assert int(np.argmax(imp.weights)) == 0
    lin = learners.train(LearnerSpec("SVM", {"kernel": "linear"}), X, y)
    assert learners.feature_importance(lin).method == "abs-coefficient"
    assert learners.feature_importance(learners.train(LearnerSpec("SVM"), X, y)) is None
    assert learners.feature_importance(learners.train(LearnerSpec("KNN"), X, y)) is None


def test_logreg_l2_is_a_minimum():
    X, y = _blobs(2, d=3, seed=5)
    yb = np.where(y == "c1", 1.0, -1.0)
    model = learners.train(LearnerSpec("LogReg", {"C": 2.0}), X, y)
    h = model.params["heads"][0]
    best = penalized_loss(X, yb, h["coef"], h["intercept"], 2.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        dw = 1e-3 * rng.normal(size=3)
        assert penalized_loss(X, yb, h["coef"] + dw, h["intercept"] + 1e-3 * rng.normal(), 2.0) > best


def test_l1_logreg_is_sparse_at_strong_penalty():
    X, y = _blobs(2, d=6, seed=6)
    h = learners.train(LearnerSpec("LogReg", {"penalty": "l1", "C": 0.05}), X, y).params["heads"][0]
    assert np.count_nonzero(h["coef"]) < 6
    assert h["grad_norm"] <= 1e-6


def test_knn_distance_weights_prefer_exact_match():
    X = np.array([[0.0], [1.0], [1.1], [1.2]])
    y = np.array(["a", "b", "b", "b"])
    m = learners.train(LearnerSpec("KNN", {"n_neighbors": 4, "weights": "distance"}), X, y)
    assert learners.predict(m, X[:1])[0] == "a"


def test_input_errors():
    X, y = _blobs(2)
    with pytest.raises(DegenerateLabelsError):
        learners.train(LearnerSpec("KNN"), X, np.array(["a"] * len(y)))
    with pytest.raises(SchemaError):
        learners.train(LearnerSpec("KNN"), X, y[:-1])
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(DataError):
        learners.train(LearnerSpec("KNN"), bad, y)
    model = learners.train(LearnerSpec("KNN"), X, y)
    with pytest.raises(SchemaError):
        learners.predict(model, X[:, :2])
    with pytest.raises(SchemaError):
        learners.model_from_json('{"format": "other"}')
