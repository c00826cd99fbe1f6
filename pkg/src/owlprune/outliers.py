"""Activation-aware outlier scores and the layerwise outlier distribution.

A weight's outlier score is ``|W_ij| * ||X_j||_2``; a layer's outlier ratio
is the fraction of its scores strictly above ``M`` times the mean score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, StructuralError
from .graph import ActivationTrace, ComponentTag, ModelGraph
from .tensor import ActivationNorms, WeightMatrix

DEFAULT_THRESHOLD = 5.0


@dataclass(frozen=True, eq=False)
class OutlierScoreMatrix:
    layer_id: str
    scores: np.ndarray
    mean_score: float


@dataclass(frozen=True)
class LayerOutlierProfile:
    """Ordered ``(layer_id, D)`` pairs plus the threshold multiplier used."""

    entries: tuple
    threshold: float
    pooled: bool = False

    @property
    def layer_ids(self):
        return [layer_id for layer_id, _ in self.entries]

    @property
    def ratios(self) -> np.ndarray:
        return np.array([d for _, d in self.entries], dtype=np.float64)

    def as_dict(self):
        return dict(self.entries)

    def __len__(self):
        return len(self.entries)


def outlier_scores(w: WeightMatrix, a: ActivationNorms) -> OutlierScoreMatrix:
    if a.norms.shape[0] != w.cols:
        raise StructuralError(
            f"layer {w.layer_id!r}: {a.norms.shape[0]} norms for {w.cols} input channels"
        )
    if a.sample_count <= 0:
        raise PreconditionError(f"layer {w.layer_id!r}: norms collected from zero samples")
    scores = np.abs(w.values) * a.norms[None, :]
    scores.flags.writeable = False
    return OutlierScoreMatrix(w.layer_id, scores, math.fsum(scores.ravel()) / scores.size)


def _check_threshold(M):
    if not M > 0:
        raise PreconditionError(f"threshold multiplier must be positive, got {M}")


def _ratio(scores, cutoff):
    return np.count_nonzero(scores > cutoff) / scores.size


def layer_outlier_ratio(s: OutlierScoreMatrix, M=DEFAULT_THRESHOLD) -> float:
    _check_threshold(M)
    if s.mean_score == 0.0:
        return 0.0
    return _ratio(s.scores, M * s.mean_score)


def _resolve_scope(g, scope):
    if scope is None or scope == "ALL":
        return list(g)
    if isinstance(scope, ComponentTag) or scope in ("ENCODER", "LM"):
        return g.select(scope)
    wanted = set(scope)
    missing = wanted - set(g.layer_ids)
    if missing:
        raise StructuralError(f"scope names unknown layers {sorted(missing)}")
    return [layer for layer in g if layer.layer_id in wanted]


def compute_lod(
    g: ModelGraph,
    trace: ActivationTrace,
    M=DEFAULT_THRESHOLD,
    scope=None,
    pooled=False,
) -> LayerOutlierProfile:
    """Outlier ratio of every in-scope layer, in graph order.

    ``scope`` is None/"ALL", a component tag, or an iterable of layer ids.
    With ``pooled=True`` the threshold uses one mean score taken over all
    in-scope weights instead of each layer's own mean.
    """
    _check_threshold(M)
    layers = _resolve_scope(g, scope)
    if not layers:
        raise StructuralError("empty layer scope")
    for layer in layers:
        if layer.layer_id not in trace:
            raise StructuralError(f"activation trace has no entry for layer {layer.layer_id!r}")
    scored = [outlier_scores(layer.weight, trace[layer.layer_id]) for layer in layers]
    if pooled:
        total = math.fsum(math.fsum(s.scores.ravel()) for s in scored)
        mean = total / sum(s.scores.size for s in scored)
        entries = tuple(
            (s.layer_id, 0.0 if mean == 0.0 else _ratio(s.scores, M * mean)) for s in scored
        )
    else:
        entries = tuple((s.layer_id, layer_outlier_ratio(s, M)) for s in scored)
    return LayerOutlierProfile(entries, float(M), pooled)


def lod_text(profile: LayerOutlierProfile, regime=None, seed=None, n_samples=None) -> str:
    header = [f"M={profile.threshold!r}"]
    if profile.pooled:
        header.append("pooled=1")
    if regime is not None:
        header.append(f"regime={getattr(regime, 'name', regime)}")
    if seed is not None:
        header.append(f"seed={seed}")
    if n_samples is not None:
        header.append(f"samples={n_samples}")
    lines = ["# " + " ".join(header)]
    lines.extend(f"{layer_id}\t{d!r}" for layer_id, d in profile.entries)
    return "\n".join(lines) + "\n"


def write_lod(profile, path, **meta):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(lod_text(profile, **meta))


def read_lod(path) -> LayerOutlierProfile:
    threshold, pooled, entries = None, False, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "M":
                        threshold = float(value)
                    elif key == "pooled":
                        pooled = value == "1"
            elif line:
                layer_id, d = line.split("\t")
                entries.append((layer_id, float(d)))
    if threshold is None:
        raise StructuralError(f"{path}: LOD header is missing M")
    return LayerOutlierProfile(tuple(entries), threshold, pooled)
