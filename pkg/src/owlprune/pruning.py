"""Mask construction under magnitude or activation-aware importance, model
pruning and the report that goes with it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import PlanEntry, SparsityPlan
from .config import Comparison, Method
from .errors import ConfigError, StructuralError
from .graph import ActivationTrace, ComponentTag, ModelGraph, layer_inputs, predict
from .tensor import ActivationNorms, PruneMask, WeightMatrix, apply_mask, select_smallest_k


def importance(w: WeightMatrix, method=Method.WANDA, norms: ActivationNorms | None = None):
    """Per-weight importance: ``|W|`` or ``|W| * ||X_j||``."""
    method = Method.parse(method)
    if method is Method.MAGNITUDE:
        return np.abs(w.values)
    if norms is None:
        raise ConfigError(f"layer {w.layer_id!r}: activation-aware importance needs input norms")
    if norms.norms.shape[0] != w.cols:
        raise StructuralError(
            f"layer {w.layer_id!r}: {norms.norms.shape[0]} norms for {w.cols} input channels"
        )
    return np.abs(w.values) * norms.norms[None, :]


def row_quotas(count, rows):
    """Split ``count`` over ``rows`` evenly, remainder to the lowest rows."""
    base, extra = divmod(int(count), int(rows))
    quotas = np.full(rows, base, dtype=np.int64)
    quotas[:extra] += 1
    return quotas


def build_mask(
    w: WeightMatrix,
    entry: PlanEntry,
    method=Method.WANDA,
    norms: ActivationNorms | None = None,
    comparison=Comparison.PER_ROW,
) -> PruneMask:
    """Keep-mask pruning exactly ``entry.pruned_count`` lowest-importance weights."""
    if entry.layer_id != w.layer_id:
        raise StructuralError(f"plan entry {entry.layer_id!r} used for layer {w.layer_id!r}")
    count = entry.pruned_count
    if not 0 <= count <= w.size:
        raise ConfigError(f"layer {w.layer_id!r}: cannot prune {count} of {w.size} weights")
    scores = importance(w, method, norms)
    bits = np.ones(w.values.shape, dtype=bool)
    if Comparison.parse(comparison) is Comparison.PER_LAYER:
        flat = bits.reshape(-1)
        flat[select_smallest_k(scores.ravel(), count)] = False
    else:
        for row, k in enumerate(row_quotas(count, w.rows)):
            if k:
                bits[row, select_smallest_k(scores[row], k)] = False
    return PruneMask(bits)


@dataclass
class LayerReport:
    layer_id: str
    component: ComponentTag
    size: int
    planned: int
    pruned: int
    target_sparsity: float

    @property
    def sparsity(self) -> float:
        return self.pruned / self.size


@dataclass
class PruneReport:
    layers: list
    allocation: str
    method: str
    target: float
    in_scope: list
    budget_coefficient: float = 0.0
    masks: dict = field(default_factory=dict, repr=False)
    reconstruction: dict | None = None

    @property
    def params_before(self) -> int:
        return sum(r.size for r in self.layers)

    @property
    def total_pruned(self) -> int:
        return sum(r.pruned for r in self.layers)

    @property
    def params_after(self) -> int:
        return self.params_before - self.total_pruned

    @property
    def model_sparsity(self) -> float:
        return self.total_pruned / self.params_before

    @property
    def scope_sparsity(self) -> float:
        """Achieved sparsity over the layers the plan targeted."""
        chosen = [r for r in self.layers if r.layer_id in self.in_scope]
        return sum(r.pruned for r in chosen) / sum(r.size for r in chosen)

    def component_sparsity(self, component) -> float:
        tag = ComponentTag[component.upper()] if isinstance(component, str) else ComponentTag(component)
        chosen = [r for r in self.layers if r.component is tag]
        return sum(r.pruned for r in chosen) / sum(r.size for r in chosen)

    def as_dict(self):
        out = {
            "method": self.method,
            "allocation": self.allocation,
            "target_sparsity": self.target,
            "budget_coefficient": self.budget_coefficient,
            "params_before": self.params_before,
            "params_after": self.params_after,
            "total_pruned": self.total_pruned,
            "scope_sparsity": self.scope_sparsity,
            "model_sparsity": self.model_sparsity,
        }
        for tag in ComponentTag:
            if any(r.component is tag for r in self.layers):
                out[f"component.{tag.name}.sparsity"] = self.component_sparsity(tag)
        for r in self.layers:
            out[f"layer.{r.layer_id}.target"] = r.target_sparsity
            out[f"layer.{r.layer_id}.pruned"] = r.pruned
            out[f"layer.{r.layer_id}.sparsity"] = r.sparsity
        if self.reconstruction:
            for key, value in self.reconstruction.items():
                out[f"reconstruction.{key}"] = value
        return out

    def to_kv(self) -> str:
        return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in self.as_dict().items())

    def to_text(self) -> str:
        lines = [
            f"method: {self.method}   allocation: {self.allocation}   target sparsity: {self.target:.4f}",
            f"parameters: {self.params_before} -> {self.params_after} ({self.total_pruned} pruned)",
            f"sparsity over targeted layers: {self.scope_sparsity:.6f}",
            f"sparsity over whole model: {self.model_sparsity:.6f}",
        ]
        for tag in ComponentTag:
            if any(r.component is tag for r in self.layers):
                lines.append(f"{tag.name} sparsity: {self.component_sparsity(tag):.6f}")
        lines.append("")
        lines.append(f"{'layer':<12}{'component':<10}{'size':>8}{'target':>10}{'pruned':>9}{'achieved':>10}")
        for r in self.layers:
            lines.append(
                f"{r.layer_id:<12}{r.component.name:<10}{r.size:>8}{r.target_sparsity:>10.4f}"
                f"{r.pruned:>9}{r.sparsity:>10.4f}"
            )
        return "\n".join(lines) + "\n"


def prune_model(
    g: ModelGraph,
    plan: SparsityPlan,
    method=Method.WANDA,
    trace: ActivationTrace | None = None,
    comparison=Comparison.PER_ROW,
):
    """Mask every layer named in ``plan``; returns ``(pruned_graph, report)``."""
    method = Method.parse(method)
    if method is Method.WANDA and trace is None:
        raise ConfigError("activation-aware pruning needs an activation trace")
    planned = {e.layer_id: e for e in plan.entries}
    unknown = set(planned) - set(g.layer_ids)
    if unknown:
        raise StructuralError(f"plan names layers not in the graph: {sorted(unknown)}")
    new_weights, masks, rows = {}, {}, []
    for layer in g:
        entry = planned.get(layer.layer_id)
        if entry is None or entry.pruned_count == 0:
            mask = PruneMask.keep_all(*layer.shape)
        else:
            norms = trace[layer.layer_id] if method is Method.WANDA else None
            mask = build_mask(layer.weight, entry, method, norms, comparison)
            new_weights[layer.layer_id] = apply_mask(layer.weight, mask)
        masks[layer.layer_id] = mask
        rows.append(
            LayerReport(
                layer.layer_id,
                layer.component,
                layer.weight.size,
                0 if entry is None else entry.pruned_count,
                mask.pruned_count,
                0.0 if entry is None else entry.sparsity,
            )
        )
    report = PruneReport(
        rows,
        plan.allocation.name,
        method.name,
        plan.target,
        [e.layer_id for e in plan.entries if e.in_scope],
        plan.budget_coefficient,
        masks,
    )
    return g.replace_weights(new_weights), report


def reconstruction_error(original: ModelGraph, pruned: ModelGraph, eval_batch):
    """Per-layer ``||(W - W_pruned) X||_F^2`` on the original model's layer inputs,
    plus the end-to-end output mean squared difference.

    Returns ``(per_layer: dict, total: float, output_mse: float)``.
    """
    if len(original) != len(pruned) or any(
        a.layer_id != b.layer_id or a.shape != b.shape for a, b in zip(original, pruned)
    ):
        raise StructuralError("graphs differ beyond their weight values")
    inputs = layer_inputs(original, eval_batch)
    per_layer = {}
    for a, b in zip(original, pruned):
        diff = inputs[a.layer_id] @ (a.weight.values - b.weight.values).T
        per_layer[a.layer_id] = float(np.einsum("ij,ij->", diff, diff))
    out_a = predict(original, eval_batch)
    out_b = predict(pruned, eval_batch)
    output_mse = float(np.mean((out_a - out_b) ** 2))
    return per_layer, math.fsum(per_layer.values()), output_mse
