import math

import numpy as np
import pytest
from _instances import WORKED_X, WORKED_Y, worked_model

from metatree import MetaTreeModel, PrunedSubtree, ResourceLimitError, TreeShape, UnsupportedOperationError
from metatree.oracle import count_subtrees, enumerate_subtrees, exact_posterior, exact_predictive


@pytest.mark.parametrize("M, D, count", [(2, 0, 1), (2, 1, 2), (2, 2, 5), (2, 3, 26), (3, 2, 9), (3, 3, 730)])
def test_enumeration_counts(M, D, count):
    ts = enumerate_subtrees(TreeShape(M, 1, D))
    assert len(ts) == count == count_subtrees(M, D)
    assert len(set(ts)) == count


def test_enumeration_is_deterministic_and_valid():
    shape = TreeShape(2, 1, 3)
    a = enumerate_subtrees(shape)
    assert a == enumerate_subtrees(shape)
    assert a[0] == PrunedSubtree.root_only()
    for t in a:
        t.validate(shape)


def test_enumeration_cap():
    with pytest.raises(ResourceLimitError):
        enumerate_subtrees(TreeShape(2, 1, 5), cap=1000)
    with pytest.raises(UnsupportedOperationError):
        enumerate_subtrees(TreeShape(2, 1, None))


def test_worked_instance():
    post = exact_posterior(worked_model(), WORKED_X, WORKED_Y)
    d = post.as_dict()
    assert d[PrunedSubtree.root_only()] == pytest.approx(0.4, abs=1e-15)
    assert d[PrunedSubtree.full(TreeShape(2, 1, 1))] == pytest.approx(0.6, abs=1e-15)
    # 0.5 * 1/6 + 0.5 * (1/2 * 1/2)
    assert post.log_evidence == pytest.approx(math.log(5 / 24), abs=1e-15)


def test_worked_predictive():
    # 0.4 * 1/2 + 0.6 * 2/3 and 0.4 * 1/2 + 0.6 * 1/3
    assert exact_predictive(worked_model(), WORKED_X, WORKED_Y, [1]) == pytest.approx(0.6, abs=1e-15)
    assert exact_predictive(worked_model(), WORKED_X, WORKED_Y, [2]) == pytest.approx(0.4, abs=1e-15)


def test_empty_data_gives_prior():
    m = MetaTreeModel(TreeShape(2, 2, 2), split_prob=[0.3, 0.8])
    post = exact_posterior(m, np.zeros((0, 2), int), [])
    assert post.log_evidence == pytest.approx(0.0, abs=1e-12)
    for t, p in zip(post.subtrees, post.probs):
        assert p == pytest.approx(m.prior_prob(t), abs=1e-15)
    assert exact_predictive(worked_model(), np.zeros((0, 1), int), [], [1]) == pytest.approx(0.5)


def test_posterior_sums_to_one():
    rng = np.random.default_rng(0)
    m = MetaTreeModel(TreeShape(3, 2, 2))
    X = rng.integers(1, 4, size=(15, 2))
    y = rng.integers(0, 2, size=15)
    assert sum(exact_posterior(m, X, y).probs) == pytest.approx(1.0, abs=1e-12)


def test_oracle_ignores_fitted_state():
    from metatree import batch_update

    m = worked_model()
    batch_update(m, WORKED_X, WORKED_Y)
    assert exact_posterior(m, WORKED_X, WORKED_Y).probs == exact_posterior(worked_model(), WORKED_X, WORKED_Y).probs
