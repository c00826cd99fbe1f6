"""Per-layer sparsity targets from a layerwise outlier profile.

Layers with more outliers receive lower sparsity. The target for layer i is
an affine image of ``1 - D_i`` that puts the most extreme layer exactly on the
clamp boundary ``S +/- limit``; the weighted mean is then pulled back to S by
shifting the unclamped layers.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from .config import Allocation, PruningConfig, Weighting
from .errors import ConfigError, StructuralError
from .graph import ActivationTrace, ComponentTag, ModelGraph
from .outliers import LayerOutlierProfile, compute_lod

MEAN_TOLERANCE = 1e-12


def prune_count(sparsity, size) -> int:
    """``round(sparsity * size)`` with halves rounded away from zero."""
    return min(int(size), int(math.floor(sparsity * size + 0.5)))


@dataclass(frozen=True)
class PlanEntry:
    layer_id: str
    sparsity: float
    pruned_count: int
    size: int
    in_scope: bool = True


@dataclass(frozen=True)
class SparsityPlan:
    entries: tuple
    allocation: Allocation
    target: float
    limit: float
    threshold: float
    budget_coefficient: float = 0.0
    note: str = ""

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, layer_id) -> PlanEntry:
        for entry in self.entries:
            if entry.layer_id == layer_id:
                return entry
        raise StructuralError(f"plan has no entry for layer {layer_id!r}")

    @property
    def layer_ids(self):
        return [e.layer_id for e in self.entries]

    @property
    def sparsities(self) -> np.ndarray:
        return np.array([e.sparsity for e in self.entries])

    @property
    def total_pruned(self) -> int:
        return sum(e.pruned_count for e in self.entries)

    @property
    def in_scope(self):
        return [e for e in self.entries if e.in_scope]

    def mean_sparsity(self, layer_ids=None, weighting=Weighting.PARAMETER) -> float:
        """Mean target sparsity over ``layer_ids`` (default: in-scope layers)."""
        if layer_ids is None:
            chosen = self.in_scope
        else:
            wanted = set(layer_ids)
            chosen = [e for e in self.entries if e.layer_id in wanted]
        if not chosen:
            raise StructuralError("no layers to average over")
        if Weighting.parse(weighting) is Weighting.LAYER:
            return math.fsum(e.sparsity for e in chosen) / len(chosen)
        return math.fsum(e.sparsity * e.size for e in chosen) / sum(e.size for e in chosen)


def _restore_mean(s, weights, target, lo, hi):
    """Shift the unclamped entries until the weighted mean equals ``target``."""
    total_w = math.fsum(weights)
    for _ in range(len(s) + 1):
        gap = target * total_w - math.fsum(weights * s)
        if abs(gap) <= MEAN_TOLERANCE * total_w:
            return s
        free = s < hi if gap > 0 else s > lo
        if not free.any():
            raise ConfigError(f"cannot reach mean sparsity {target} within [{lo}, {hi}]")
        s = s.copy()
        s[free] += gap / math.fsum(weights[free])
        s = np.clip(s, lo, hi)
    raise ConfigError(f"mean sparsity {target} not reached within the clamp bounds")


def _weights(sizes, weighting):
    if weighting is Weighting.LAYER:
        return np.ones_like(sizes)
    return sizes


def _entries(ids, s, sizes):
    return tuple(
        PlanEntry(layer_id, float(si), prune_count(si, size), int(size))
        for layer_id, si, size in zip(ids, s, sizes)
    )


def _sizes(ids, layer_sizes):
    if isinstance(layer_sizes, Mapping):
        try:
            return np.array([layer_sizes[i] for i in ids], dtype=np.float64)
        except KeyError as exc:
            raise StructuralError(f"no size given for layer {exc.args[0]!r}") from None
    sizes = np.asarray(layer_sizes, dtype=np.float64)
    if sizes.shape != (len(ids),):
        raise StructuralError("layer_sizes must align with the profile entries")
    return sizes


def allocation_targets(ratios, target, limit, weights):
    """Non-uniform sparsities for outlier ratios ``ratios`` (pure array form)."""
    ratios = np.asarray(ratios, dtype=np.float64)
    n = ratios.size
    if limit == 0:
        return np.full(n, target)
    raw = 1.0 - ratios
    dev = raw - math.fsum(raw) / n
    max_dev = float(np.max(np.abs(dev)))
    if max_dev == 0.0:
        return np.full(n, target)
    lo, hi = target - limit, target + limit
    s = np.clip(target + limit * (dev / max_dev), lo, hi)
    return _restore_mean(s, np.asarray(weights, dtype=np.float64), target, lo, hi)


def allocate(profile: LayerOutlierProfile, cfg: PruningConfig, layer_sizes) -> SparsityPlan:
    if len(profile) == 0:
        raise ConfigError("cannot allocate over an empty profile")
    ids = profile.layer_ids
    sizes = _sizes(ids, layer_sizes)
    s = allocation_targets(profile.ratios, cfg.sparsity, cfg.limit, _weights(sizes, cfg.weighting))
    return SparsityPlan(
        _entries(ids, s, sizes), cfg.allocation, cfg.sparsity, cfg.limit, cfg.threshold
    )


def allocate_uniform(cfg: PruningConfig, layer_sizes) -> SparsityPlan:
    if isinstance(layer_sizes, Mapping):
        ids = list(layer_sizes)
    else:
        raise StructuralError("allocate_uniform needs a layer_id -> size mapping")
    if not ids:
        raise ConfigError("cannot allocate over zero layers")
    sizes = _sizes(ids, layer_sizes)
    return SparsityPlan(
        _entries(ids, np.full(len(ids), cfg.sparsity), sizes),
        Allocation.UNIFORM,
        cfg.sparsity,
        0.0,
        cfg.threshold,
        note="uniform",
    )


def _sizes_of(layers):
    return {layer.layer_id: layer.weight.size for layer in layers}


def _assemble(g, parts, cfg, note, coefficient=0.0):
    chosen = {}
    for part in parts:
        for entry in part.entries:
            chosen[entry.layer_id] = entry
    entries = tuple(
        chosen.get(
            layer.layer_id,
            PlanEntry(layer.layer_id, 0.0, 0, layer.weight.size, in_scope=False),
        )
        for layer in g
    )
    return SparsityPlan(entries, cfg.allocation, cfg.sparsity, cfg.limit, cfg.threshold, coefficient, note)


def allocate_scoped(g: ModelGraph, trace: ActivationTrace, cfg: PruningConfig) -> SparsityPlan:
    """Plan covering every layer of ``g`` for the configured allocation scope.

    Out-of-scope layers appear with sparsity 0 and ``in_scope=False``.
    UNIFORM applies the global sparsity to every LM layer, the same footprint
    as OWLED_LM_ONLY, so uniform and outlier-weighed plans prune equal budgets.
    """
    g.check_two_component()
    lm = g.select(ComponentTag.LM)
    alloc = cfg.allocation
    if alloc is Allocation.UNIFORM:
        parts = [allocate_uniform(cfg, _sizes_of(lm))]
        note = "uniform over LM layers"
    elif alloc is Allocation.OWLED_LM_ONLY:
        profile = compute_lod(g, trace, cfg.threshold, ComponentTag.LM)
        parts = [allocate(profile, cfg, _sizes_of(lm))]
        note = "LM layers only, encoder untouched"
    elif alloc is Allocation.OWLED_SEPARATE:
        parts = []
        for tag in (ComponentTag.ENCODER, ComponentTag.LM):
            profile = compute_lod(g, trace, cfg.threshold, tag)
            parts.append(allocate(profile, cfg, _sizes_of(g.select(tag))))
        note = "encoder and LM allocated independently"
    elif alloc is Allocation.OWLED_GLOBAL:
        profile = compute_lod(g, trace, cfg.threshold, None, pooled=True)
        parts = [allocate(profile, cfg, _sizes_of(g))]
        note = "all layers pooled"
    else:  # pragma: no cover
        raise ConfigError(f"unsupported allocation {alloc}")
    return _assemble(g, parts, cfg, note)


def match_budget(
    reference: SparsityPlan, target_cfg: PruningConfig, g: ModelGraph, trace: ActivationTrace
) -> SparsityPlan:
    """Rescale the plan for ``target_cfg`` to prune as many weights as ``reference``.

    Every target sparsity is multiplied by
    ``reference.total_pruned / unscaled_target.total_pruned``.
    """
    unscaled = allocate_scoped(g, trace, target_cfg)
    ref_total, tgt_total = reference.total_pruned, unscaled.total_pruned
    if tgt_total == 0:
        if ref_total != 0:
            raise ConfigError("target plan prunes nothing and cannot be scaled to the reference budget")
        coefficient = 0.0
    else:
        coefficient = ref_total / tgt_total
    entries = []
    for e in unscaled.entries:
        s = e.sparsity * coefficient
        if s > 1.0:
            raise ConfigError(
                f"budget coefficient {coefficient:.6g} pushes layer {e.layer_id!r} past full sparsity"
            )
        entries.append(replace(e, sparsity=s, pruned_count=prune_count(s, e.size)))
    note = f"{unscaled.note}; budget matched to {reference.allocation.name}"
    return replace(unscaled, entries=tuple(entries), budget_coefficient=coefficient, note=note)


def plan_text(plan: SparsityPlan) -> str:
    lines = [
        f"# S={plan.target!r} lambda={plan.limit!r} M={plan.threshold!r} "
        f"allocation={plan.allocation.name} coefficient={plan.budget_coefficient!r}"
    ]
    lines.extend(f"{e.layer_id}\t{e.sparsity!r}\t{e.pruned_count}" for e in plan.entries)
    return "\n".join(lines) + "\n"


def write_plan(plan: SparsityPlan, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(plan_text(plan))
