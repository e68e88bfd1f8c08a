"""Conjugate leaf models.

A leaf model is split in two pieces:

* a *spec* (e.g. :class:`BernoulliBeta`) holding the prior hyperparameters and
  the closed-form formulas, and
* a :class:`LeafState`, an immutable value pairing a spec with the sufficient
  statistics of the observations absorbed so far.

The tree code only ever talks to these through the methods below, so another
conjugate family can be added by writing a new spec class with the same
methods and registering it in ``FAMILIES``.
"""

from dataclasses import dataclass, field
from math import isfinite, lgamma, log
from typing import ClassVar

import numpy as np

from .errors import DataValidationError

__all__ = [
    "BernoulliBeta",
    "LeafState",
    "FAMILIES",
    "spec_from_dict",
    "log_marginal",
    "sequential_log_predictive",
    "absorb",
]


def _log_beta(a, b):
    return lgamma(a) + lgamma(b) - lgamma(a + b)


@dataclass(frozen=True)
class BernoulliBeta:
    """Bernoulli likelihood with a Beta(alpha, beta) prior on P(y=1).

    Sufficient statistics are the pair ``(n0, n1)`` of zero and one counts.
    """

    alpha: float = 1.0
    beta: float = 1.0

    family: ClassVar[str] = "bernoulli_beta"

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating, np.integer)) and isfinite(v) and v > 0):
                raise ValueError(f"Beta hyperparameter {name} must be a finite positive number, got {v!r}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))

    # -- observations -------------------------------------------------------

    def check_y(self, y, row=None):
        if isinstance(y, (bool, np.bool_)):
            return int(y)
        try:
            iy = int(y)
        except (TypeError, ValueError):
            raise DataValidationError(f"y must be 0 or 1 for a Bernoulli leaf model, got {y!r}", row=row) from None
        if iy != y or iy not in (0, 1):
            raise DataValidationError(f"y must be 0 or 1 for a Bernoulli leaf model, got {y!r}", row=row)
        return iy

    def empty_stats(self):
        return (0, 0)

    def stats(self, ys):
        n1 = n0 = 0
        for i, y in enumerate(ys):
            if self.check_y(y, row=i):
                n1 += 1
            else:
                n0 += 1
        return (n0, n1)

    @staticmethod
    def add_stats(a, b):
        return (a[0] + b[0], a[1] + b[1])

    @staticmethod
    def stats_count(stats):
        return stats[0] + stats[1]

    def batch_stats(self, node_ids, y, size):
        """Sufficient statistics for many nodes at once.

        ``node_ids[i]`` is the node (in ``range(size)``) that row ``i`` reaches
        and ``y`` the validated 0/1 targets. Returns an int array of shape
        ``(size, 2)`` holding ``(n0, n1)`` per node.
        """
        total = np.bincount(node_ids, minlength=size)
        ones = np.bincount(node_ids, weights=y, minlength=size).astype(np.int64)
        return np.stack([total - ones, ones], axis=1)

    # -- closed forms -------------------------------------------------------

    def log_marginal_stats(self, stats):
        """log of the integral of p(y_1..y_n | theta) against the prior."""
        n0, n1 = stats
        if n0 == 0 and n1 == 0:
            return 0.0
        return _log_beta(self.alpha + n1, self.beta + n0) - _log_beta(self.alpha, self.beta)

    def log_marginal(self, ys):
        return self.log_marginal_stats(self.stats(ys))

    def predictive_stats(self, stats):
        """Posterior-predictive P(y=1) after observing ``stats``."""
        n0, n1 = stats
        return (self.alpha + n1) / (self.alpha + self.beta + n0 + n1)

    def log_predictive_stats(self, stats, y):
        n0, n1 = stats
        num = self.alpha + n1 if y else self.beta + n0
        return log(num / (self.alpha + self.beta + n0 + n1))

    # -- (de)serialization ---------------------------------------------------

    def hyperparameters(self):
        return {"alpha": self.alpha, "beta": self.beta}

    def posterior_hyperparameters(self, stats):
        n0, n1 = stats
        return {"alpha": self.alpha + n1, "beta": self.beta + n0}

    def to_dict(self):
        return {"family": self.family, **self.hyperparameters()}

    @classmethod
    def from_dict(cls, d):
        return cls(alpha=d["alpha"], beta=d["beta"])


FAMILIES = {BernoulliBeta.family: BernoulliBeta}


def spec_from_dict(d):
    family = d.get("family", BernoulliBeta.family)
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown leaf model family {family!r}; known: {sorted(FAMILIES)}") from None
    return cls.from_dict(d)


@dataclass(frozen=True)
class LeafState:
    """Posterior state of one node's parameter: prior spec plus counts."""

    spec: BernoulliBeta
    stats: tuple = field(default=None)

    def __post_init__(self):
        if self.stats is None:
            object.__setattr__(self, "stats", self.spec.empty_stats())

    @property
    def n(self):
        return self.spec.stats_count(self.stats)

    def absorb(self, ys):
        return self.absorb_stats(self.spec.stats(ys))

    def absorb_stats(self, stats):
        if self.spec.stats_count(stats) == 0:
            return self
        return LeafState(self.spec, self.spec.add_stats(self.stats, stats))

    def log_predictive(self, y):
        return self.spec.log_predictive_stats(self.stats, self.spec.check_y(y))

    def predictive(self):
        return self.spec.predictive_stats(self.stats)

    def log_marginal(self, ys):
        """log p(ys | data already absorbed), integrating against the posterior."""
        new = self.spec.stats(ys)
        both = self.spec.add_stats(self.stats, new)
        return self.spec.log_marginal_stats(both) - self.spec.log_marginal_stats(self.stats)

    def posterior_hyperparameters(self):
        return self.spec.posterior_hyperparameters(self.stats)


def log_marginal(state_or_spec, ys):
    """Log marginal likelihood of the multiset ``ys``.

    With a spec the prior is the integration measure; with a
    :class:`LeafState` the current posterior is.
    """
    return state_or_spec.log_marginal(ys)


def sequential_log_predictive(state, y):
    return state.log_predictive(y)


def absorb(state, ys):
    return state.absorb(ys)
