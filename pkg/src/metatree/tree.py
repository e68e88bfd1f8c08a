"""Meta-tree structure: shape, feature assignment, node arena and subtrees.

Node addresses are tuples of 1-based child indices read from the root, so the
root is ``()`` and the children of ``s`` are ``s + (m,)`` for ``m`` in
``1..M``. Nodes live in a dict keyed by address and are created on first touch.
Absent nodes are in their prior state.
"""

import json
import math
from dataclasses import dataclass, field
from itertools import product

from .errors import DataValidationError, StructureError, UnsupportedOperationError
from .leaf_models import BernoulliBeta, LeafState, spec_from_dict

__all__ = [
    "TreeShape",
    "FeatureAssignment",
    "PrunedSubtree",
    "Node",
    "MetaTreeModel",
]

FORMAT_VERSION = 1


def _log(p):
    return math.log(p) if p > 0 else -math.inf


@dataclass(frozen=True)
class TreeShape:
    """``arity`` children per inner node, ``n_features`` features, and the
    representative tree depth ``max_depth`` (``None`` for unbounded)."""

    arity: int = 2
    n_features: int = 1
    max_depth: int | None = 1

    def __post_init__(self):
        if int(self.arity) != self.arity or self.arity < 2:
            raise StructureError(f"arity must be an integer >= 2, got {self.arity!r}")
        if int(self.n_features) != self.n_features or self.n_features < 1:
            raise StructureError(f"n_features must be an integer >= 1, got {self.n_features!r}")
        if self.max_depth is not None and (int(self.max_depth) != self.max_depth or self.max_depth < 0):
            raise StructureError(f"max_depth must be a non-negative integer or None, got {self.max_depth!r}")

    @property
    def bounded(self):
        return self.max_depth is not None

    def n_nodes(self):
        """Number of nodes of the perfect tree, ``1 + M + ... + M**D``."""
        if not self.bounded:
            raise UnsupportedOperationError("an unbounded shape has infinitely many nodes")
        return sum(self.arity**d for d in range(self.max_depth + 1))

    def check_address(self, address):
        address = tuple(address)
        for a in address:
            if int(a) != a or not 1 <= a <= self.arity:
                raise StructureError(f"address {list(address)} has child index outside 1..{self.arity}")
        if self.bounded and len(address) > self.max_depth:
            raise StructureError(f"address {list(address)} is deeper than max_depth={self.max_depth}")
        return tuple(int(a) for a in address)

    def addresses_at_depth(self, depth):
        return product(range(1, self.arity + 1), repeat=depth)

    def to_dict(self):
        return {"arity": self.arity, "n_features": self.n_features, "max_depth": self.max_depth}


@dataclass(frozen=True)
class FeatureAssignment:
    """Feature index ``k_s`` (1-based) queried at each inner node.

    ``by_depth[d]`` applies to every node at depth ``d``; entries of
    ``by_node`` override it for single addresses. On an unbounded shape
    ``by_depth`` is repeated cyclically.
    """

    by_depth: tuple = ()
    by_node: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "by_depth", tuple(int(k) for k in self.by_depth))
        object.__setattr__(self, "by_node", {tuple(a): int(k) for a, k in dict(self.by_node).items()})

    @classmethod
    def default(cls, shape):
        """Depth ``d`` splits on feature ``d mod K + 1``."""
        depth = shape.max_depth if shape.bounded else shape.n_features
        return cls(tuple(d % shape.n_features + 1 for d in range(max(depth, 1))))

    def feature_at(self, address, cyclic=False):
        k = self.by_node.get(address)
        if k is not None:
            return k
        d = len(address)
        if d < len(self.by_depth):
            return self.by_depth[d]
        if cyclic and self.by_depth:
            return self.by_depth[d % len(self.by_depth)]
        raise StructureError(f"no feature assigned to node {list(address)}")

    def validate(self, shape):
        for k in list(self.by_depth) + list(self.by_node.values()):
            if not 1 <= k <= shape.n_features:
                raise StructureError(f"feature index {k} outside 1..{shape.n_features}")
        for a in self.by_node:
            shape.check_address(a)
            if shape.bounded and len(a) >= shape.max_depth:
                raise StructureError(f"node {list(a)} is a leaf of the representative tree and takes no feature")
        if shape.bounded:
            for d in range(len(self.by_depth), shape.max_depth):
                for a in shape.addresses_at_depth(d):
                    if a not in self.by_node:
                        raise StructureError(f"no feature assigned to node {list(a)}")
        elif not self.by_depth:
            raise StructureError("an unbounded shape needs a depth-indexed feature assignment")

    def to_dict(self):
        return {
            "by_depth": list(self.by_depth),
            "by_node": [{"address": list(a), "k": k} for a, k in sorted(self.by_node.items())],
        }

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, (list, tuple)):
            return cls(tuple(d))
        by_node = {tuple(r["address"]): r["k"] for r in d.get("by_node", [])}
        return cls(tuple(d.get("by_depth", ())), by_node)


@dataclass(frozen=True)
class PrunedSubtree:
    """A full rooted subtree given by its set of node addresses."""

    nodes: frozenset

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(tuple(a) for a in self.nodes))

    @classmethod
    def root_only(cls):
        return cls(frozenset([()]))

    @classmethod
    def full(cls, shape):
        if not shape.bounded:
            raise UnsupportedOperationError("the full tree of an unbounded shape is infinite")
        return cls(frozenset(a for d in range(shape.max_depth + 1) for a in shape.addresses_at_depth(d)))

    def inner(self):
        return frozenset(a for a in self.nodes if a + (1,) in self.nodes)

    def leaves(self):
        return frozenset(a for a in self.nodes if a + (1,) not in self.nodes)

    def validate(self, shape):
        if () not in self.nodes:
            raise StructureError("a pruned subtree must contain the root")
        for a in self.nodes:
            shape.check_address(a)
            if a and a[:-1] not in self.nodes:
                raise StructureError(f"node {list(a)} is present without its parent")
            present = sum(a + (m,) in self.nodes for m in range(1, shape.arity + 1))
            if present not in (0, shape.arity):
                raise StructureError(f"node {list(a)} has {present} of {shape.arity} children")
        return self

    def __len__(self):
        return len(self.nodes)


@dataclass(slots=True)
class Node:
    address: tuple
    g_prior: float
    g_posterior: float
    leaf: LeafState
    data_count: int = 0
    # Shared x of every row that reached this node, recorded by the lazy
    # engine when it stops here; descendants are then implied, not stored.
    point: tuple | None = None


class MetaTreeModel:
    """Posterior over all pruned subtrees of one representative tree.

    Parameters
    ----------
    shape : TreeShape
    assignment : FeatureAssignment, optional
        Defaults to :meth:`FeatureAssignment.default`.
    split_prob : float or sequence of float
        Prior split probability ``g_s``, either shared or indexed by depth
        (the last entry repeats for deeper nodes). Nodes at ``max_depth``
        always get 0.
    leaf_prior : BernoulliBeta
        Leaf-parameter prior shared by all nodes.
    node_split_probs, node_leaf_priors : dict, optional
        Per-address overrides of the two priors above.
    """

    def __init__(
        self,
        shape,
        assignment=None,
        split_prob=0.5,
        leaf_prior=None,
        node_split_probs=None,
        node_leaf_priors=None,
    ):
        self.shape = shape
        self.assignment = FeatureAssignment.default(shape) if assignment is None else assignment
        self.assignment.validate(shape)
        if isinstance(split_prob, (list, tuple)):
            if not split_prob:
                raise StructureError("split_prob list is empty")
            self.split_prob = tuple(float(g) for g in split_prob)
            gs = self.split_prob
        else:
            self.split_prob = float(split_prob)
            gs = (self.split_prob,)
        self.leaf_prior = BernoulliBeta() if leaf_prior is None else leaf_prior
        self.node_split_probs = {}
        for a, g in (node_split_probs or {}).items():
            a = shape.check_address(a)
            if shape.bounded and len(a) == shape.max_depth and g != 0:
                raise StructureError(f"node {list(a)} is at max_depth; its split probability must be 0")
            self.node_split_probs[a] = float(g)
        for g in list(gs) + list(self.node_split_probs.values()):
            if not 0.0 <= g <= 1.0:
                raise StructureError(f"split probability {g} outside [0, 1]")
        self.node_leaf_priors = {shape.check_address(a): p for a, p in (node_leaf_priors or {}).items()}
        if not shape.bounded and not self.shared_leaf_prior:
            raise StructureError("an unbounded shape requires one leaf prior shared by all nodes")
        self._nodes = {}
        self.fitted_by = None
        self.n_samples = 0
        self.log_evidence = 0.0

    # -- priors -------------------------------------------------------------

    @property
    def bounded(self):
        return self.shape.bounded

    @property
    def shared_leaf_prior(self):
        return all(p == self.leaf_prior for p in self.node_leaf_priors.values())

    def is_max_depth(self, address):
        return self.shape.bounded and len(address) >= self.shape.max_depth

    def g_prior_at(self, address):
        if self.is_max_depth(address):
            return 0.0
        g = self.node_split_probs.get(address)
        if g is not None:
            return g
        if isinstance(self.split_prob, tuple):
            return self.split_prob[min(len(address), len(self.split_prob) - 1)]
        return self.split_prob

    def leaf_prior_at(self, address):
        return self.node_leaf_priors.get(address, self.leaf_prior)

    def feature_at(self, address):
        return self.assignment.feature_at(address, cyclic=not self.shape.bounded)

    # -- node arena ----------------------------------------------------------

    def node(self, address):
        """The materialized node at ``address``, or ``None``."""
        return self._nodes.get(tuple(address))

    def materialize(self, address):
        node = self._nodes.get(address)
        if node is None:
            g = self.g_prior_at(address)
            node = Node(address, g, g, LeafState(self.leaf_prior_at(address)))
            self._nodes[address] = node
        return node

    def nodes(self):
        return self._nodes.values()

    def n_materialized(self):
        return len(self._nodes)

    def state_at(self, address):
        """Node state at any address, synthesizing absent nodes.

        An absent node below a node with a recorded ``point`` holds the same
        data as that node when the point routes through it; every other
        absent node is in its prior state.
        """
        address = tuple(address)
        node = self._nodes.get(address)
        if node is not None:
            return node
        for depth in range(len(address) - 1, -1, -1):
            anc = self._nodes.get(address[:depth])
            if anc is None:
                continue
            if anc.point is not None and self._routes_through(anc.point, address, depth):
                g = self.g_prior_at(address)
                return Node(address, g, g, anc.leaf, anc.data_count, anc.point)
            break
        g = self.g_prior_at(address)
        return Node(address, g, g, LeafState(self.leaf_prior_at(address)))

    def _routes_through(self, x, address, start):
        for d in range(start, len(address)):
            if x[self.feature_at(address[:d]) - 1] != address[d]:
                return False
        return True

    def g_posterior_at(self, address):
        return self.state_at(self.shape.check_address(address)).g_posterior

    def is_fresh(self):
        return self.n_samples == 0 and self.fitted_by is None

    def reset(self):
        """Drop all absorbed data; posteriors return to the priors."""
        self._nodes.clear()
        self.fitted_by = None
        self.n_samples = 0
        self.log_evidence = 0.0

    def iter_addresses(self):
        """All addresses of the representative tree in post-order.

        Children come before their parent and siblings in ascending child
        index, so the root is last.
        """
        if not self.shape.bounded:
            raise UnsupportedOperationError("cannot enumerate the nodes of an unbounded shape")
        M, D = self.shape.arity, self.shape.max_depth

        def walk(address):
            if len(address) < D:
                for m in range(1, M + 1):
                    yield from walk(address + (m,))
            yield address

        return walk(())

    # -- routing -------------------------------------------------------------

    def check_x(self, x, row=None):
        x = tuple(x)
        K, M = self.shape.n_features, self.shape.arity
        if len(x) != K:
            raise DataValidationError(f"expected {K} features, got {len(x)}", row=row)
        out = []
        for j, v in enumerate(x):
            try:
                iv = int(v)
            except (TypeError, ValueError):
                raise DataValidationError(f"feature value {v!r} is not an integer", row=row, column=j) from None
            if iv != v or not 1 <= iv <= M:
                raise DataValidationError(f"feature value {v!r} outside 1..{M}", row=row, column=j)
            out.append(iv)
        return tuple(out)

    def route(self, x, row=None):
        """Root-to-leaf path of ``x`` through the representative tree.

        On an unbounded shape the path stops at the deepest materialized node.
        """
        x = self.check_x(x, row=row)
        address = ()
        path = [address]
        if self.shape.bounded:
            for _ in range(self.shape.max_depth):
                address = address + (x[self.feature_at(address) - 1],)
                path.append(address)
            return path
        while True:
            child = address + (x[self.feature_at(address) - 1],)
            if child not in self._nodes:
                return path
            address = child
            path.append(address)

    # -- subtree probabilities ------------------------------------------------

    def _log_factored(self, t, g_of):
        t.validate(self.shape)
        total = 0.0
        for a in t.inner():
            total += _log(g_of(a))
        for a in t.leaves():
            total += _log(1.0 - g_of(a))
        return total

    def log_prior_prob(self, t):
        return self._log_factored(t, self.g_prior_at)

    def log_posterior_prob(self, t):
        return self._log_factored(t, lambda a: self.state_at(a).g_posterior)

    def prior_prob(self, t):
        return math.exp(self.log_prior_prob(t))

    def posterior_prob(self, t):
        return math.exp(self.log_posterior_prob(t))

    # -- serialization --------------------------------------------------------

    def to_dict(self):
        def node_record(n):
            rec = {
                "address": list(n.address),
                "g_prior": n.g_prior,
                "g_posterior": n.g_posterior,
                "leaf": {
                    "family": n.leaf.spec.family,
                    "prior": n.leaf.spec.hyperparameters(),
                    "posterior": n.leaf.posterior_hyperparameters(),
                    "stats": list(n.leaf.stats),
                },
                "data_count": n.data_count,
            }
            if n.point is not None:
                rec["point"] = list(n.point)
            return rec

        return {
            "format_version": FORMAT_VERSION,
            "shape": self.shape.to_dict(),
            "assignment": self.assignment.to_dict(),
            "split_prob": list(self.split_prob) if isinstance(self.split_prob, tuple) else self.split_prob,
            "node_split_probs": [{"address": list(a), "g": g} for a, g in sorted(self.node_split_probs.items())],
            "leaf_prior": self.leaf_prior.to_dict(),
            "node_leaf_priors": [
                {"address": list(a), **p.to_dict()} for a, p in sorted(self.node_leaf_priors.items())
            ],
            "state": {
                "fitted_by": self.fitted_by,
                "n_samples": self.n_samples,
                "log_marginal_likelihood": self.log_evidence,
            },
            "nodes": [node_record(self._nodes[a]) for a in sorted(self._nodes, key=lambda a: (len(a), a))],
        }

    @classmethod
    def from_dict(cls, d):
        try:
            shape = TreeShape(**d["shape"])
            model = cls(
                shape,
                FeatureAssignment.from_dict(d["assignment"]),
                split_prob=d.get("split_prob", 0.5),
                leaf_prior=spec_from_dict(d.get("leaf_prior", {})),
                node_split_probs={tuple(r["address"]): r["g"] for r in d.get("node_split_probs", [])},
                node_leaf_priors={tuple(r["address"]): spec_from_dict(r) for r in d.get("node_leaf_priors", [])},
            )
            state = d.get("state", {})
            model.fitted_by = state.get("fitted_by")
            model.n_samples = int(state.get("n_samples", 0))
            model.log_evidence = float(state.get("log_marginal_likelihood", 0.0))
            for r in d.get("nodes", []):
                a = shape.check_address(r["address"])
                leaf = r["leaf"]
                spec = spec_from_dict({"family": leaf["family"], **leaf["prior"]})
                point = r.get("point")
                model._nodes[a] = Node(
                    a,
                    float(r["g_prior"]),
                    float(r["g_posterior"]),
                    LeafState(spec, tuple(int(c) for c in leaf["stats"])),
                    int(r["data_count"]),
                    None if point is None else tuple(point),
                )
        except (KeyError, TypeError) as exc:
            raise StructureError(f"malformed model document: {exc!r}") from exc
        return model

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def copy(self):
        return MetaTreeModel.from_dict(self.to_dict())

    def __repr__(self):
        s = self.shape
        return (
            f"MetaTreeModel(arity={s.arity}, n_features={s.n_features}, max_depth={s.max_depth}, "
            f"n_samples={self.n_samples}, fitted_by={self.fitted_by!r})"
        )
