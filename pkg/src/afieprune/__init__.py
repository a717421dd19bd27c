"""Training-free CNN filter-pruning planner.

Scores each convolutional layer by the information entropy of its weight
spectrum (AFIE: average filter information entropy), allocates per-layer
pruning ratios under a global filter budget, and emits deterministic
one-shot pruning plans plus pruned weight archives.
"""

from .allocator import AllocationInput, AllocationResult, solve, verify
from .archive import (
    TensorArchive,
    TopologyDescriptor,
    WeightTensor,
    load_archive,
    read_archive,
    save_archive,
    write_archive,
)
from .errors import (
    AfiePruneError,
    FormatError,
    InfeasibleBudgetError,
    TruncatedArchiveError,
    UnsupportedTopologyError,
    ValidationError,
)
from .metric import (
    AfieReport,
    AfieScore,
    NormalizedSpectrum,
    afie_for_layer,
    entropy,
    normalize_spectrum,
    report,
)
from .pruner import PruningPlan, apply_plan, make_plan, plan_stats
from .spectral import FoldedMatrix, LayerSpectrum, fold_hw, singular_values

__version__ = "0.1.0"

__all__ = [
    "AfiePruneError",
    "AfieReport",
    "AfieScore",
    "AllocationInput",
    "AllocationResult",
    "FoldedMatrix",
    "FormatError",
    "InfeasibleBudgetError",
    "LayerSpectrum",
    "NormalizedSpectrum",
    "PruningPlan",
    "TensorArchive",
    "TopologyDescriptor",
    "TruncatedArchiveError",
    "UnsupportedTopologyError",
    "ValidationError",
    "WeightTensor",
    "afie_for_layer",
    "apply_plan",
    "entropy",
    "fold_hw",
    "load_archive",
    "make_plan",
    "normalize_spectrum",
    "plan_stats",
    "read_archive",
    "report",
    "save_archive",
    "singular_values",
    "solve",
    "verify",
    "write_archive",
]
