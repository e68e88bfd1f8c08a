"""Brute-force ground truth by explicit enumeration of pruned subtrees.

Nothing here reuses the update engines: routing is done per subtree, and
leaf marginals are built from chained one-step predictives rather than the
closed-form log-gamma expression. Only usable for small shapes.
"""

import math
from dataclasses import dataclass
from itertools import product

from .errors import ResourceLimitError, UnsupportedOperationError
from .leaf_models import LeafState
from .tree import PrunedSubtree
from .validation import as_batch

__all__ = ["count_subtrees", "enumerate_subtrees", "ExactPosterior", "exact_posterior", "exact_predictive"]

DEFAULT_CAP = 10**6


def count_subtrees(arity, depth):
    """Number of full pruned subtrees of a perfect tree: N(0)=1, N(d)=1+N(d-1)**M."""
    n = 1
    for _ in range(depth):
        n = 1 + n**arity
    return n


def enumerate_subtrees(shape, cap=DEFAULT_CAP):
    """Every pruned subtree of the representative tree, in a fixed order.

    The root-only tree comes first; split trees follow in lexicographic order
    of their children's subtrees.
    """
    if not shape.bounded:
        raise UnsupportedOperationError("cannot enumerate subtrees of an unbounded shape")
    total = count_subtrees(shape.arity, shape.max_depth)
    if total > cap:
        raise ResourceLimitError(f"{total} subtrees exceeds the enumeration cap {cap}")
    M = shape.arity

    def below(address, remaining):
        yield frozenset([address])
        if remaining == 0:
            return
        per_child = [list(below(address + (m,), remaining - 1)) for m in range(1, M + 1)]
        for combo in product(*per_child):
            yield frozenset([address]).union(*combo)

    return [PrunedSubtree(nodes) for nodes in below((), shape.max_depth)]


def _chain_log_marginal(spec, ys):
    state = LeafState(spec)
    total = 0.0
    for y in ys:
        total += state.log_predictive(y)
        state = state.absorb((y,))
    return total


def _leaf_of(model, t, x):
    address = ()
    while address + (1,) in t.nodes:
        address = address + (x[model.feature_at(address) - 1],)
    return address


def _logsumexp(values):
    hi = max(values)
    if hi == -math.inf:
        return hi
    return hi + math.log(sum(math.exp(v - hi) for v in values))


def _log_prior(model, t):
    total = 0.0
    for a in t.inner():
        g = model.g_prior_at(a)
        total += math.log(g) if g > 0 else -math.inf
    for a in t.leaves():
        g = model.g_prior_at(a)
        total += math.log1p(-g) if g < 1 else -math.inf
    return total


def _leaf_data(model, t, rows):
    data = {a: [] for a in t.leaves()}
    for x, y in rows:
        data[_leaf_of(model, t, x)].append(y)
    return data


@dataclass
class ExactPosterior:
    subtrees: list
    probs: list
    log_evidence: float

    def as_dict(self):
        return dict(zip(self.subtrees, self.probs))

    def prob(self, t):
        return self.as_dict()[t]


def exact_posterior(model, X, y=None, cap=DEFAULT_CAP):
    """Posterior over every pruned subtree by direct application of Bayes' rule.

    Uses only the model's priors (split probabilities, leaf priors and feature
    assignment); any fitted state is ignored. ``log_evidence`` is the exact
    log p(y^n | x^n).
    """
    batch = as_batch(model, X, y)
    rows = list(zip(map(tuple, batch.X.tolist()), batch.y.tolist()))
    subtrees = enumerate_subtrees(model.shape, cap=cap)
    log_joint = []
    for t in subtrees:
        lp = _log_prior(model, t)
        if lp > -math.inf:
            for a, ys in _leaf_data(model, t, rows).items():
                lp += _chain_log_marginal(model.leaf_prior_at(a), ys)
        log_joint.append(lp)
    log_z = _logsumexp(log_joint)
    probs = [math.exp(lj - log_z) for lj in log_joint]
    return ExactPosterior(subtrees, probs, log_z)


def exact_predictive(model, X, y, x, cap=DEFAULT_CAP):
    """P(y=1 | x, data) as the posterior-weighted average over all subtrees."""
    batch = as_batch(model, X, y)
    x = model.check_x(x)
    rows = list(zip(map(tuple, batch.X.tolist()), batch.y.tolist()))
    post = exact_posterior(model, batch, cap=cap)
    total = 0.0
    for t, p in zip(post.subtrees, post.probs):
        if p == 0.0:
            continue
        leaf = _leaf_of(model, t, x)
        ys = [yy for xx, yy in rows if _leaf_of(model, t, xx) == leaf]
        total += p * LeafState(model.leaf_prior_at(leaf)).absorb(ys).predictive()
    return total
