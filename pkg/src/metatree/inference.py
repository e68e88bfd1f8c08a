"""Posterior updates over a meta-tree and Bayes-optimal prediction.

Every engine leaves the model in the same factored form: each node carries a
posterior split probability, and the posterior probability of a pruned subtree
is the product of ``g`` over its inner nodes and ``1 - g`` over its leaves.

Engines
-------
sequential
    One observation at a time along its root-to-leaf path, using the running
    posteriors. Can be called repeatedly.
batch
    One post-order sweep over every node of the representative tree,
    integrating against the priors.
sparse
    The batch sweep restricted to nodes that received data. Nodes with no data
    keep their prior and contribute a factor of 1.
lazy
    Recursion that stops as soon as all rows at a node share one ``x``. Needs a
    single leaf prior shared by all nodes and works on unbounded shapes.

The three batch-style engines integrate against the prior and therefore only
accept a model that has not absorbed any data yet.
"""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ContractError,
    DegenerateLikelihoodError,
    PreconditionError,
    ResourceLimitError,
    UnsupportedOperationError,
)
from .validation import DataBatch, as_batch

__all__ = [
    "ENGINES",
    "FitReport",
    "MarginalCache",
    "sequential_update",
    "sequential_fit",
    "batch_update",
    "batch_update_sparse",
    "batch_update_lazy",
    "fit",
    "log_marginal_likelihood",
    "predict",
    "predict_many",
]

ENGINES = ("sequential", "batch", "sparse", "lazy")
DEFAULT_DEPTH_CAP = 64


@dataclass
class FitReport:
    engine: str
    n_samples: int
    nodes_visited: int
    log_marginal_likelihood: float
    wall_time_ms: float

    def to_dict(self):
        return asdict(self)


class MarginalCache:
    """Memo of leaf log-marginals keyed by (prior, sufficient statistics).

    Lets several fits that share priors reuse marginals of identical node
    data. Pass one instance to the batch engines via ``cache=``.
    """

    def __init__(self):
        self._memo = {}
        self.hits = 0
        self.misses = 0

    def log_marginal(self, spec, stats):
        key = (spec, stats)
        try:
            v = self._memo[key]
        except KeyError:
            self.misses += 1
            v = self._memo[key] = spec.log_marginal_stats(stats)
        else:
            self.hits += 1
        return v

    def __len__(self):
        return len(self._memo)


def _log_marginal(spec, stats, cache):
    if cache is None:
        return spec.log_marginal_stats(stats)
    return cache.log_marginal(spec, stats)


def _log_mix(g, log_stop, log_split):
    """log((1-g) exp(log_stop) + g exp(log_split))."""
    if g <= 0.0:
        return log_stop
    if g >= 1.0:
        return log_split
    a = math.log1p(-g) + log_stop
    b = math.log(g) + log_split
    hi, lo = (a, b) if a >= b else (b, a)
    if lo == -math.inf:
        return hi
    return hi + math.log1p(math.exp(lo - hi))


def _g_update(g, log_split, log_q):
    if g <= 0.0:
        return 0.0
    if g >= 1.0:
        return 1.0
    return min(1.0, math.exp(math.log(g) + log_split - log_q))


def _check_q(log_q, address):
    if not log_q > -math.inf:
        raise DegenerateLikelihoodError(address)


def _require_fresh(model, engine):
    if not model.is_fresh():
        raise ContractError(
            f"{engine} engine integrates against the prior but the model already absorbed "
            f"{model.n_samples} rows (fitted_by={model.fitted_by!r}); call reset() first"
        )


def _require_bounded(model, engine):
    if not model.bounded:
        raise UnsupportedOperationError(f"the {engine} engine needs a bounded max_depth")


# -- sequential -----------------------------------------------------------------


def _sequential_step(model, x, y):
    path = model.route(x)
    nodes = [model.materialize(a) for a in path]
    log_pred = [n.leaf.log_predictive(y) for n in nodes]

    # q for every node on the path is computed from the pre-update state
    # before any g is written.
    log_q = [0.0] * len(nodes)
    log_q[-1] = log_pred[-1]
    for i in range(len(nodes) - 2, -1, -1):
        log_q[i] = _log_mix(nodes[i].g_posterior, log_pred[i], log_q[i + 1])
    for i, lq in enumerate(log_q):
        _check_q(lq, path[i])

    for i in range(len(nodes) - 1):
        n = nodes[i]
        n.g_posterior = _g_update(n.g_posterior, log_q[i + 1], log_q[i])
    stats = model.leaf_prior.stats((y,))
    for n in nodes:
        n.leaf = n.leaf.absorb_stats(stats)
        n.data_count += 1
    return log_q[0], len(nodes)


def sequential_update(model, x, y):
    """Absorb one observation ``(x, y)`` using the running posterior.

    Only nodes on the path of ``x`` change.
    """
    _require_bounded(model, "sequential")
    if model.fitted_by == "lazy":
        raise ContractError("a lazily fitted model stores implied nodes implicitly; refit with another engine")
    t0 = time.perf_counter()
    x = model.check_x(x)
    y = model.leaf_prior.check_y(y)
    log_q, visited = _sequential_step(model, x, y)
    model.log_evidence += log_q
    model.n_samples += 1
    model.fitted_by = "sequential"
    return FitReport("sequential", 1, visited, log_q, (time.perf_counter() - t0) * 1e3)


def sequential_fit(model, X, y=None):
    """Feed every row of ``(X, y)`` to :func:`sequential_update` in order."""
    _require_bounded(model, "sequential")
    if model.fitted_by == "lazy":
        raise ContractError("a lazily fitted model stores implied nodes implicitly; refit with another engine")
    t0 = time.perf_counter()
    batch = as_batch(model, X, y)
    total = 0.0
    visited = 0
    for xi, yi in zip(batch.X.tolist(), batch.y.tolist()):
        lq, v = _sequential_step(model, xi, yi)
        total += lq
        visited += v
    model.log_evidence += total
    model.n_samples += len(batch)
    if len(batch):
        model.fitted_by = "sequential"
    return FitReport("sequential", len(batch), visited, total, (time.perf_counter() - t0) * 1e3)


# -- batch / sparse ---------------------------------------------------------------


def _partition(model, batch):
    """Per-depth sufficient statistics of the rows reaching each node.

    Nodes at depth ``d`` are numbered ``0..M**d - 1`` in level order (the
    children of node ``i`` are ``i*M + m - 1``). Returns one dict per depth
    mapping node number to stats, for nodes reached by at least one row.
    """
    M, D = model.shape.arity, model.shape.max_depth
    spec = model.leaf_prior
    X, y = batch.X, batch.y
    n = len(y)
    rows = np.arange(n)
    ids = np.zeros(n, dtype=np.int64)
    by_node = model.assignment.by_node
    levels = []
    for d in range(D + 1):
        uniq, inv = np.unique(ids, return_inverse=True)
        stats = spec.batch_stats(inv.reshape(-1), y, len(uniq))
        levels.append(dict(zip(uniq.tolist(), map(tuple, stats.tolist()))))
        if d == D:
            break
        if by_node:
            feats = np.array([model.feature_at(_address_of(i, d, M)) - 1 for i in uniq.tolist()], dtype=np.int64)
            cols = feats[inv.reshape(-1)]
        else:
            cols = model.assignment.by_depth[d] - 1
        ids = ids * M + (X[rows, cols] - 1)
    return levels


def _address_of(index, depth, M):
    out = []
    for _ in range(depth):
        index, r = divmod(index, M)
        out.append(r + 1)
    return tuple(reversed(out))


def _sweep(model, levels, skip_empty, cache):
    M, D = model.shape.arity, model.shape.max_depth
    empty = model.leaf_prior.empty_stats()
    visited = 0

    def visit(address, depth, idx):
        nonlocal visited
        visited += 1
        node = model.materialize(address)
        st = levels[depth].get(idx, empty)
        log_m = _log_marginal(node.leaf.spec, st, cache)
        node.leaf = node.leaf.absorb_stats(st)
        node.data_count += node.leaf.spec.stats_count(st)
        if depth == D:
            _check_q(log_m, address)
            return log_m
        log_split = 0.0
        child_level = levels[depth + 1]
        base = idx * M
        for m in range(1, M + 1):
            c = base + m - 1
            if skip_empty and c not in child_level:
                continue
            log_split += visit(address + (m,), depth + 1, c)
        log_q = _log_mix(node.g_prior, log_m, log_split)
        _check_q(log_q, address)
        node.g_posterior = _g_update(node.g_prior, log_split, log_q)
        return log_q

    if skip_empty and 0 not in levels[0]:
        return 0.0, 0
    return visit((), 0, 0), visited


def _batch_fit(model, X, y, engine, skip_empty, cache):
    _require_bounded(model, engine)
    _require_fresh(model, engine)
    t0 = time.perf_counter()
    batch = as_batch(model, X, y)
    levels = _partition(model, batch)
    log_q, visited = _sweep(model, levels, skip_empty, cache)
    model.log_evidence = log_q
    model.n_samples = len(batch)
    model.fitted_by = engine
    return FitReport(engine, len(batch), visited, log_q, (time.perf_counter() - t0) * 1e3)


def batch_update(model, X, y=None, cache=None):
    """Fit all rows at once with a sweep over every node of the tree.

    ``nodes_visited`` in the returned report always equals the node count of
    the representative tree.
    """
    return _batch_fit(model, X, y, "batch", False, cache)


def batch_update_sparse(model, X, y=None, cache=None):
    """Like :func:`batch_update` but only visits nodes that received data."""
    return _batch_fit(model, X, y, "sparse", True, cache)


# -- lazy -----------------------------------------------------------------------


def batch_update_lazy(model, X, y=None, depth_cap=DEFAULT_DEPTH_CAP, cache=None):
    """Fit by recursing only until the rows at a node share a single ``x``.

    Requires every node to use the same leaf prior. ``depth_cap`` bounds the
    recursion; reaching it raises :class:`ResourceLimitError`.
    """
    _require_fresh(model, "lazy")
    if not model.shared_leaf_prior:
        raise PreconditionError("the lazy engine needs one leaf prior shared by all nodes")
    t0 = time.perf_counter()
    batch = as_batch(model, X, y)
    Xa, ya = batch.X, batch.y
    spec = model.leaf_prior
    visited = 0

    def visit(address, rows):
        nonlocal visited
        visited += 1
        node = model.materialize(address)
        ys = ya[rows]
        st = tuple(spec.batch_stats(np.zeros(len(ys), dtype=np.int64), ys, 1)[0].tolist())
        log_m = _log_marginal(spec, st, cache)
        node.leaf = node.leaf.absorb_stats(st)
        node.data_count += len(rows)
        Xs = Xa[rows]
        concentrated = bool((Xs == Xs[0]).all())
        if concentrated or model.is_max_depth(address):
            _check_q(log_m, address)
            if concentrated and not model.is_max_depth(address):
                node.point = tuple(Xs[0].tolist())
            return log_m
        if len(address) >= depth_cap:
            raise ResourceLimitError(
                f"lazy recursion reached depth cap {depth_cap} at node {list(address)} without concentrating"
            )
        col = Xs[:, model.feature_at(address) - 1]
        log_split = 0.0
        for m in np.unique(col).tolist():
            log_split += visit(address + (m,), rows[col == m])
        log_q = _log_mix(node.g_prior, log_m, log_split)
        _check_q(log_q, address)
        node.g_posterior = _g_update(node.g_prior, log_split, log_q)
        return log_q

    log_q = visit((), np.arange(len(ya))) if len(ya) else 0.0
    model.log_evidence = log_q
    model.n_samples = len(ya)
    model.fitted_by = "lazy"
    return FitReport("lazy", len(ya), visited, log_q, (time.perf_counter() - t0) * 1e3)


def fit(model, X, y=None, engine="batch", **kwargs):
    """Dispatch to one of the engines by name."""
    if engine == "sequential":
        return sequential_fit(model, X, y)
    if engine == "batch":
        return batch_update(model, X, y, **kwargs)
    if engine == "sparse":
        return batch_update_sparse(model, X, y, **kwargs)
    if engine == "lazy":
        return batch_update_lazy(model, X, y, **kwargs)
    raise ValueError(f"unknown engine {engine!r}; expected one of {ENGINES}")


def log_marginal_likelihood(model):
    """log p(y^n | x^n) of everything the model has absorbed (0 when empty)."""
    return model.log_evidence


# -- prediction -------------------------------------------------------------------


def _prediction_path(model, x):
    if model.bounded:
        return [model.state_at(a) for a in model.route(x)]
    # All priors are shared here, so an empty node's whole subtree predicts
    # the prior predictive, and below a recorded point that x matches every
    # node holds the same data.
    path = []
    address = ()
    while True:
        st = model.state_at(address)
        path.append(st)
        if st.data_count == 0 or (st.point is not None and st.point == x):
            return path
        address = address + (x[model.feature_at(address) - 1],)


def predict(model, x):
    """Bayes-optimal predictive for one row, averaged over all subtrees.

    Returns P(y=1 | x, data) for the Bernoulli leaf model.
    """
    x = model.check_x(x)
    path = _prediction_path(model, x)
    v = path[-1].leaf.predictive()
    for st in reversed(path[:-1]):
        g = st.g_posterior
        v = (1.0 - g) * st.leaf.predictive() + g * v
    return v


def predict_many(model, X):
    X = np.asarray(X)
    return np.array([predict(model, row) for row in X.tolist()], dtype=np.float64)
