"""Multi-view latent block model.

Co-clustering of several mixed-type data views that share their rows,
with a joint row-cluster membership array linking the views.
"""

__version__ = "0.1.0"

from .core import (DataError, FeatureSet, FeatureType, Kind, MultiViewDataset, MVLBMError, NumericalFailure,
                   PartitionState, PenaltyTooLarge, View, ViewSchema, load_dataset, save_dataset,
                   validate_dataset)
from .engine import (FitConfig, FitResult, ModelState, complete_data_log_likelihood, point_impute,
                     run_sem_gibbs, soft_threshold)
from .indeptest import estimate_coupling, permutation_test
from .select import (SearchConfig, compute_icl, exhaustive_search, greedy_search_single_view,
                     search_multi_view)
from .serialize import load_model, save_model
from .synthgen import GeneratorSpec, generate, make_pi, mask_missing, table1_spec

__all__ = [
    "DataError", "FeatureSet", "FeatureType", "Kind", "MultiViewDataset", "MVLBMError", "NumericalFailure",
    "PartitionState", "PenaltyTooLarge", "View", "ViewSchema", "load_dataset", "save_dataset",
    "validate_dataset", "FitConfig", "FitResult", "ModelState", "complete_data_log_likelihood",
    "point_impute", "run_sem_gibbs", "soft_threshold", "estimate_coupling", "permutation_test",
    "SearchConfig", "compute_icl", "exhaustive_search", "greedy_search_single_view", "search_multi_view",
    "load_model", "save_model", "GeneratorSpec", "generate", "make_pi", "mask_missing", "table1_spec",
]
