"""Input validation helpers.

Feature values are categorical and 1-based (``1..arity``); pass
``zero_based=True`` to accept ``0..arity-1`` instead.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataValidationError

__all__ = ["DataBatch", "check_features", "check_targets", "as_batch"]


def check_features(X, arity, n_features, zero_based=False):
    """Return ``X`` as a 2-D int64 array of 1-based categories.

    Raises :class:`DataValidationError` naming the first offending cell.
    """
    X = np.asarray(X)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, n_features)
    if X.ndim != 2:
        raise DataValidationError(f"X must be 2-dimensional, got shape {X.shape}")
    if X.shape[1] != n_features:
        raise DataValidationError(f"expected {n_features} feature columns, got {X.shape[1]}")
    if X.dtype.kind not in "iub":
        try:
            Xf = X.astype(np.float64)
        except (TypeError, ValueError):
            raise DataValidationError("feature values must be integers") from None
        bad = ~np.isfinite(Xf) | (Xf != np.round(Xf))
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise DataValidationError(f"feature value {X[r, c]!r} is not an integer", row=int(r), column=int(c))
        X = Xf
    X = X.astype(np.int64)
    if zero_based:
        X = X + 1
    bad = (X < 1) | (X > arity)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        lo, hi = (0, arity - 1) if zero_based else (1, arity)
        v = X[r, c] - 1 if zero_based else X[r, c]
        raise DataValidationError(f"feature value {v} outside {lo}..{hi}", row=int(r), column=int(c))
    return X


def check_targets(y, spec, n_rows=None):
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.reshape(-1)
    if n_rows is not None and len(y) != n_rows:
        raise DataValidationError(f"X has {n_rows} rows but y has {len(y)} values")
    out = np.empty(len(y), dtype=np.int64)
    for i, v in enumerate(y.tolist()):
        out[i] = spec.check_y(v, row=i)
    return out


@dataclass(frozen=True)
class DataBatch:
    """Validated rows: ``X`` (n, K) 1-based int64 and ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    @classmethod
    def from_arrays(cls, model, X, y, zero_based=False):
        shape = model.shape
        X = check_features(X, shape.arity, shape.n_features, zero_based=zero_based)
        y = check_targets(y, model.leaf_prior, n_rows=len(X))
        return cls(X, y)


def as_batch(model, X, y=None):
    if isinstance(X, DataBatch):
        return X
    return DataBatch.from_arrays(model, X, y)
