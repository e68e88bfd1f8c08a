"""scikit-learn compatible wrapper around :class:`~metatree.tree.MetaTreeModel`."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .inference import ENGINES, DEFAULT_DEPTH_CAP, fit, predict_many, sequential_fit
from .leaf_models import BernoulliBeta
from .tree import FeatureAssignment, MetaTreeModel, TreeShape
from .validation import DataBatch, check_features, check_targets


class MetaTreeClassifier(ClassifierMixin, BaseEstimator):
    """Bayes-optimal binary classifier averaging over every pruned subtree.

    Features are categorical with values ``1..arity`` (or ``0..arity-1``
    with ``zero_based=True``); targets are 0/1.

    Parameters
    ----------
    arity : int, default=2
        Number of categories per feature, i.e. children per inner node.
    max_depth : int or None, default=5
        Depth of the representative tree. ``None`` means unbounded and
        requires ``engine="lazy"``.
    feature_assignment : sequence of int, dict or FeatureAssignment, optional
        1-based feature index tested at each depth (a list) or the
        ``{"by_depth": ..., "by_node": ...}`` form. Defaults to feature
        ``d mod K + 1`` at depth ``d``.
    split_prob : float or sequence of float, default=0.5
        Prior split probability, shared or per depth.
    alpha, beta : float, default=1.0
        Beta prior on each leaf's P(y=1).
    engine : {"batch", "sparse", "lazy", "sequential"}, default="batch"
    zero_based : bool, default=False
    depth_cap : int, default=64
        Recursion guard for the lazy engine.

    Attributes
    ----------
    model_ : MetaTreeModel
    report_ : FitReport
        Report of the last ``fit`` / ``partial_fit`` call.
    log_marginal_likelihood_ : float
    classes_ : ndarray of shape (2,)
    n_features_in_ : int
    """

    def __init__(
        self,
        arity=2,
        max_depth=5,
        feature_assignment=None,
        split_prob=0.5,
        alpha=1.0,
        beta=1.0,
        engine="batch",
        zero_based=False,
        depth_cap=DEFAULT_DEPTH_CAP,
    ):
        self.arity = arity
        self.max_depth = max_depth
        self.feature_assignment = feature_assignment
        self.split_prob = split_prob
        self.alpha = alpha
        self.beta = beta
        self.engine = engine
        self.zero_based = zero_based
        self.depth_cap = depth_cap

    def _new_model(self, n_features):
        shape = TreeShape(self.arity, n_features, self.max_depth)
        fa = self.feature_assignment
        if fa is None:
            assignment = None
        elif isinstance(fa, FeatureAssignment):
            assignment = fa
        else:
            assignment = FeatureAssignment.from_dict(fa)
        split_prob = self.split_prob
        if not np.isscalar(split_prob):
            split_prob = [float(g) for g in split_prob]
        return MetaTreeModel(shape, assignment, split_prob, BernoulliBeta(self.alpha, self.beta))

    def _batch(self, X, y):
        X = np.asarray(X)
        n_features = X.shape[1] if X.ndim == 2 else getattr(self, "n_features_in_", 1)
        model = getattr(self, "model_", None) or self._new_model(n_features)
        Xc = check_features(X, self.arity, model.shape.n_features, zero_based=self.zero_based)
        yc = check_targets(y, model.leaf_prior, n_rows=len(Xc))
        return model, DataBatch(Xc, yc)

    def fit(self, X, y):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if hasattr(self, "model_"):
            del self.model_
        model, batch = self._batch(X, y)
        kwargs = {"depth_cap": self.depth_cap} if self.engine == "lazy" else {}
        self.report_ = fit(model, batch, engine=self.engine, **kwargs)
        self._set_fitted(model)
        return self

    def partial_fit(self, X, y, classes=None):
        """Absorb more rows with the sequential engine, keeping earlier data."""
        model, batch = self._batch(X, y)
        self.report_ = sequential_fit(model, batch)
        self._set_fitted(model)
        return self

    def _set_fitted(self, model):
        self.model_ = model
        self.n_features_in_ = model.shape.n_features
        self.classes_ = np.array([0, 1])
        self.log_marginal_likelihood_ = model.log_evidence

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_features(X, self.arity, self.n_features_in_, zero_based=self.zero_based)
        p1 = predict_many(self.model_, X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.classes_[(self.predict_proba(X)[:, 1] > 0.5).astype(int)]

    def posterior_prob(self, subtree):
        """Posterior probability of one :class:`~metatree.tree.PrunedSubtree`."""
        check_is_fitted(self, "model_")
        return self.model_.posterior_prob(subtree)
