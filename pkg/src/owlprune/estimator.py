"""scikit-learn style front end: fit on calibration inputs, transform through
the pruned model.

    >>> pruner = OutlierWeighedPruner(model=graph, sparsity=0.3)
    >>> outputs = pruner.fit(calibration_X).transform(X)
    >>> pruner.model_        # pruned ModelGraph
"""

from __future__ import annotations

import os

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .allocation import allocate_scoped
from .archive import load_model
from .config import PruningConfig
from .errors import StructuralError
from .graph import ModelGraph, forward, predict
from .outliers import compute_lod
from .pruning import prune_model


def check_model(model) -> ModelGraph:
    """Accept a ModelGraph or a path to a LODT archive."""
    if isinstance(model, ModelGraph):
        return model
    if isinstance(model, (str, os.PathLike)):
        return load_model(model)
    raise TypeError(f"expected a ModelGraph or archive path, got {type(model).__name__}")


def check_inputs(X, model: ModelGraph):
    """2-D finite float64 array whose width matches ``model.input_dim``."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != model.input_dim:
        raise StructuralError(f"X has {X.shape[1]} features, model expects {model.input_dim}")
    return X


class OutlierWeighedPruner(TransformerMixin, BaseEstimator):
    """One-shot pruner with outlier-weighed layerwise sparsity.

    Parameters
    ----------
    model : ModelGraph or path
        Dense model to prune. Never modified.
    sparsity : float
        Target sparsity S over the layers in scope.
    limit : float
        Clamp half-width; per-layer sparsities stay within ``S +/- limit``.
    threshold : float
        Outlier threshold multiplier M.
    method : {"wanda", "magnitude"}
    allocation : {"owled_lm_only", "owled_separate", "owled_global", "uniform"}
    comparison : {"per_row", "per_layer"}
    weighting : {"parameter", "layer"}
        How layers are weighed in the mean-sparsity constraint.

    Attributes
    ----------
    model_ : ModelGraph
        The pruned model.
    trace_ : ActivationTrace
        Input norms collected from the calibration data passed to ``fit``.
    profile_ : LayerOutlierProfile
        Outlier ratios of every layer (per-layer thresholds).
    plan_ : SparsityPlan
    report_ : PruneReport
    """

    def __init__(
        self,
        model=None,
        sparsity=0.5,
        limit=0.1,
        threshold=5.0,
        method="wanda",
        allocation="owled_lm_only",
        comparison="per_row",
        weighting="parameter",
    ):
        self.model = model
        self.sparsity = sparsity
        self.limit = limit
        self.threshold = threshold
        self.method = method
        self.allocation = allocation
        self.comparison = comparison
        self.weighting = weighting

    def _config(self):
        return PruningConfig(
            sparsity=self.sparsity,
            limit=self.limit,
            threshold=self.threshold,
            method=self.method,
            allocation=self.allocation,
            comparison=self.comparison,
            weighting=self.weighting,
        )

    def fit(self, X, y=None):
        cfg = self._config()
        model = check_model(self.model)
        X = check_inputs(X, model)
        _, self.trace_ = forward(model, X)
        self.profile_ = compute_lod(model, self.trace_, cfg.threshold)
        self.plan_ = allocate_scoped(model, self.trace_, cfg)
        self.model_, self.report_ = prune_model(
            model, self.plan_, cfg.method, self.trace_, cfg.comparison
        )
        self.n_features_in_ = model.input_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, check_inputs(X, self.model_))

    def predict(self, X):
        return self.transform(X)
