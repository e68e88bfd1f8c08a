"""Exact Bayesian posteriors over meta-trees of decision trees."""

from .errors import (
    ContractError,
    DataValidationError,
    DegenerateLikelihoodError,
    MetaTreeError,
    PreconditionError,
    ResourceLimitError,
    StructureError,
    UnsupportedOperationError,
)
from .inference import (
    ENGINES,
    FitReport,
    MarginalCache,
    batch_update,
    batch_update_lazy,
    batch_update_sparse,
    fit,
    log_marginal_likelihood,
    predict,
    predict_many,
    sequential_fit,
    sequential_update,
)
from .leaf_models import BernoulliBeta, LeafState
from .tree import FeatureAssignment, MetaTreeModel, PrunedSubtree, TreeShape
from .validation import DataBatch

__version__ = "0.1.0"
