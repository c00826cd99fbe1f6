"""One-shot pruning with outlier-weighed layerwise sparsity for two-component
(encoder + language model) networks."""

from .allocation import (
    PlanEntry,
    SparsityPlan,
    allocate,
    allocate_scoped,
    allocate_uniform,
    allocation_targets,
    match_budget,
    prune_count,
)
from .archive import dumps_model, load_model, loads_model, save_model
from .calibration import (
    CalibrationSet,
    Regime,
    collect_norms,
    generate,
    generate_generic,
    generate_scenarios,
    load_calibration,
    save_calibration,
)
from .config import Allocation, Comparison, Method, PruningConfig, Weighting
from .errors import (
    ConfigError,
    FormatError,
    NumericalError,
    PreconditionError,
    PruningError,
    StructuralError,
)
from .estimator import OutlierWeighedPruner
from .graph import (
    Activation,
    ActivationTrace,
    ComponentTag,
    LayerSpec,
    ModelGraph,
    forward,
    parameter_count,
    predict,
)
from .outliers import (
    LayerOutlierProfile,
    OutlierScoreMatrix,
    compute_lod,
    layer_outlier_ratio,
    outlier_scores,
)
from .pruning import PruneReport, build_mask, prune_model, reconstruction_error
from .tensor import ActivationNorms, PruneMask, WeightMatrix, apply_mask

__version__ = "0.1.0"
