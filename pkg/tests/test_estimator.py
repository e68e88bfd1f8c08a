import numpy as np
import pytest
from sklearn.base import clone
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from metatree import DataValidationError, PrunedSubtree
from metatree.estimator import MetaTreeClassifier


def test_params_round_trip():
    clf = MetaTreeClassifier(arity=3, max_depth=2, split_prob=[0.2, 0.4], engine="sparse")
    params = clf.get_params()
    assert params["arity"] == 3 and params["engine"] == "sparse"
    assert clone(clf).get_params() == params
    clf.set_params(alpha=2.0)
    assert clf.alpha == 2.0


def test_worked_instance():
    clf = MetaTreeClassifier(max_depth=1).fit([[1], [2]], [1, 0])
    np.testing.assert_allclose(clf.predict_proba([[1], [2]])[:, 1], [0.6, 0.4], atol=1e-12)
    np.testing.assert_array_equal(clf.predict([[1], [2]]), [1, 0])
    assert clf.log_marginal_likelihood_ == pytest.approx(np.log(5 / 24))
    assert clf.posterior_prob(PrunedSubtree.root_only()) == pytest.approx(0.4)
    assert clf.report_.nodes_visited == 3


@pytest.mark.parametrize("engine", ["batch", "sparse", "lazy", "sequential"])
def test_engines_give_same_predictions(engine):
    rng = np.random.default_rng(0)
    X = rng.integers(1, 4, size=(60, 3))
    y = (X[:, 0] == 2).astype(int)
    ref = MetaTreeClassifier(arity=3, max_depth=3).fit(X, y).predict_proba(X)
    got = MetaTreeClassifier(arity=3, max_depth=3, engine=engine).fit(X, y).predict_proba(X)
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_partial_fit_matches_fit():
    rng = np.random.default_rng(1)
    X = rng.integers(1, 3, size=(40, 4))
    y = rng.integers(0, 2, size=40)
    inc = MetaTreeClassifier(max_depth=3)
    for i in range(0, 40, 7):
        inc.partial_fit(X[i : i + 7], y[i : i + 7])
    full = MetaTreeClassifier(max_depth=3).fit(X, y)
    np.testing.assert_allclose(inc.predict_proba(X), full.predict_proba(X), atol=1e-10)
    assert inc.log_marginal_likelihood_ == pytest.approx(full.log_marginal_likelihood_, abs=1e-10)


def test_refit_starts_from_prior():
    clf = MetaTreeClassifier(max_depth=1)
    clf.fit([[1], [2]], [1, 0])
    p = clf.predict_proba([[1]])
    clf.fit([[1], [2]], [1, 0])
    np.testing.assert_array_equal(clf.predict_proba([[1]]), p)


def test_zero_based():
    a = MetaTreeClassifier(max_depth=2, zero_based=True).fit([[0, 1], [1, 0]], [1, 0])
    b = MetaTreeClassifier(max_depth=2).fit([[1, 2], [2, 1]], [1, 0])
    np.testing.assert_allclose(a.predict_proba([[0, 0]]), b.predict_proba([[1, 1]]))


def test_unbounded_lazy():
    rng = np.random.default_rng(2)
    X = rng.integers(1, 3, size=(30, 3))
    y = X[:, 1] - 1
    clf = MetaTreeClassifier(max_depth=None, engine="lazy").fit(X, y)
    assert clf.score(X, y) > 0.8


def test_validation_errors():
    clf = MetaTreeClassifier(max_depth=2)
    with pytest.raises(DataValidationError):
        clf.fit([[1, 3]], [1])
    with pytest.raises(DataValidationError):
        clf.fit([[1, 2]], [2])
    with pytest.raises(ValueError):
        MetaTreeClassifier(engine="nope").fit([[1]], [1])
    clf.fit([[1, 2]], [1])
    with pytest.raises(DataValidationError):
        clf.predict([[1, 2, 1]])


def test_not_fitted():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        MetaTreeClassifier().predict([[1]])


def test_composes_with_sklearn():
    rng = np.random.default_rng(3)
    X = rng.integers(0, 2, size=(80, 3))
    y = X[:, 0] ^ X[:, 2]
    pipe = make_pipeline(FunctionTransformer(lambda Z: Z + 1), MetaTreeClassifier(max_depth=2, feature_assignment=[1, 3]))
    scores = cross_val_score(pipe, X, y, cv=4)
    assert scores.mean() > 0.9
