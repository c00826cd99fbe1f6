"""Two-component layered model (encoder followed by a language-model analog)
and its forward pass with per-layer input-norm tracing."""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, PreconditionError, StructuralError
from .tensor import ActivationNorms, NormAccumulator, WeightMatrix, _frozen


class ComponentTag(enum.IntEnum):
    ENCODER = 0
    LM = 1


class Activation(enum.IntEnum):
    IDENTITY = 0
    RELU = 1


@dataclass(frozen=True, eq=False)
class LayerSpec:
    """One dense layer ``x -> act(W x + b)``.

    ``bias`` may be None (no bias stored) or a vector of length ``C_out``.
    """

    weight: WeightMatrix
    component: ComponentTag
    activation: Activation = Activation.RELU
    bias: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "component", ComponentTag(self.component))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.bias is not None:
            bias = _frozen(self.bias, np.float64)
            if bias.shape != (self.weight.rows,):
                raise StructuralError(
                    f"layer {self.layer_id!r}: bias shape {bias.shape} does not match "
                    f"{self.weight.rows} output channels"
                )
            if not np.all(np.isfinite(bias)):
                raise NumericalError(f"layer {self.layer_id!r}: non-finite bias")
            object.__setattr__(self, "bias", bias)

    @classmethod
    def from_array(cls, layer_id, weight, component, activation=Activation.RELU, bias=None):
        return cls(WeightMatrix(layer_id, weight), component, activation, bias)

    @property
    def layer_id(self) -> str:
        return self.weight.layer_id

    @property
    def shape(self):
        return self.weight.values.shape

    def with_weight(self, weight: WeightMatrix) -> "LayerSpec":
        if weight.values.shape != self.shape:
            raise StructuralError(f"layer {self.layer_id!r}: replacement weight has wrong shape")
        return replace(self, weight=weight)

    def apply(self, x):
        z = x @ self.weight.values.T
        if self.bias is not None:
            z = z + self.bias
        if self.activation is Activation.RELU:
            z = np.maximum(z, 0.0)
        return z

    def __eq__(self, other):
        if not isinstance(other, LayerSpec):
            return NotImplemented
        if (self.bias is None) != (other.bias is None):
            return False
        return (
            self.weight == other.weight
            and self.component is other.component
            and self.activation is other.activation
            and (self.bias is None or np.array_equal(self.bias, other.bias))
        )


class ActivationTrace(Mapping):
    """Read-only mapping ``layer_id -> ActivationNorms`` covering a graph."""

    def __init__(self, norms):
        self._norms = {}
        for item in norms:
            if item.layer_id in self._norms:
                raise StructuralError(f"duplicate trace entry for layer {item.layer_id!r}")
            self._norms[item.layer_id] = item

    def __getitem__(self, layer_id):
        try:
            return self._norms[layer_id]
        except KeyError:
            raise StructuralError(f"activation trace has no entry for layer {layer_id!r}") from None

    def __iter__(self):
        return iter(self._norms)

    def __len__(self):
        return len(self._norms)

    def __eq__(self, other):
        if not isinstance(other, ActivationTrace):
            return NotImplemented
        return self._norms == other._norms

    def __repr__(self):
        return f"ActivationTrace({list(self._norms)})"


class ModelGraph:
    """Ordered stack of dense layers, encoder layers first then LM layers.

    Consecutive layers must be dimension compatible. Graphs are immutable;
    pruning returns a new graph.
    """

    def __init__(self, layers):
        layers = tuple(layers)
        if not layers:
            raise StructuralError("a model graph needs at least one layer")
        seen = set()
        for prev, layer in zip(layers, layers[1:]):
            if layer.weight.cols != prev.weight.rows:
                raise StructuralError(
                    f"layer {layer.layer_id!r} expects {layer.weight.cols} inputs but "
                    f"layer {prev.layer_id!r} produces {prev.weight.rows}"
                )
            if prev.component is ComponentTag.LM and layer.component is ComponentTag.ENCODER:
                raise StructuralError(
                    f"encoder layer {layer.layer_id!r} follows LM layer {prev.layer_id!r}"
                )
        for layer in layers:
            if layer.layer_id in seen:
                raise StructuralError(f"duplicate layer id {layer.layer_id!r}")
            seen.add(layer.layer_id)
        self._layers = layers

    @property
    def layers(self):
        return self._layers

    @property
    def input_dim(self) -> int:
        return self._layers[0].weight.cols

    @property
    def output_dim(self) -> int:
        return self._layers[-1].weight.rows

    @property
    def layer_ids(self):
        return [layer.layer_id for layer in self._layers]

    def __len__(self):
        return len(self._layers)

    def __iter__(self):
        return iter(self._layers)

    def __getitem__(self, layer_id) -> LayerSpec:
        for layer in self._layers:
            if layer.layer_id == layer_id:
                return layer
        raise StructuralError(f"no layer {layer_id!r} in graph")

    def __eq__(self, other):
        if not isinstance(other, ModelGraph):
            return NotImplemented
        return len(self) == len(other) and all(a == b for a, b in zip(self, other))

    def __repr__(self):
        parts = ", ".join(f"{l.layer_id}:{l.component.name}{l.shape}" for l in self._layers)
        return f"ModelGraph([{parts}])"

    def select(self, component=None):
        """Layers matching ``component`` (None or "ALL" selects everything)."""
        if component is None or component == "ALL":
            return list(self._layers)
        component = ComponentTag[component] if isinstance(component, str) else ComponentTag(component)
        return [layer for layer in self._layers if layer.component is component]

    def check_two_component(self):
        """Raise unless the graph has at least one ENCODER and one LM layer."""
        tags = {layer.component for layer in self._layers}
        if tags != {ComponentTag.ENCODER, ComponentTag.LM}:
            raise StructuralError("graph must contain both ENCODER and LM layers")
        return self

    def replace_weights(self, weights):
        """New graph with the given ``layer_id -> WeightMatrix`` substitutions."""
        unknown = set(weights) - set(self.layer_ids)
        if unknown:
            raise StructuralError(f"unknown layers {sorted(unknown)}")
        return ModelGraph(
            layer.with_weight(weights[layer.layer_id]) if layer.layer_id in weights else layer
            for layer in self._layers
        )


def parameter_count(g: ModelGraph, component=None) -> int:
    """Number of weight entries (biases excluded) in layers of ``component``."""
    return sum(layer.weight.size for layer in g.select(component))


def _check_batch(g, batch):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != g.input_dim:
        raise StructuralError(
            f"batch shape {batch.shape} incompatible with input_dim {g.input_dim}"
        )
    if batch.shape[0] == 0:
        raise PreconditionError("batch must contain at least one sample")
    if not np.all(np.isfinite(batch)):
        raise PreconditionError("batch contains non-finite values")
    return batch


def _run(g, batch, accumulators=None):
    x = batch
    for layer in g:
        if accumulators is not None:
            accumulators[layer.layer_id].update(x)
        with np.errstate(over="ignore", invalid="ignore"):
            x = layer.apply(x)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite activations after layer {layer.layer_id!r}")
    return x


def forward(g: ModelGraph, batch, batch_size=None):
    """Run ``batch`` through ``g``.

    Returns ``(outputs, trace)`` where ``trace`` holds the l2 norm of every
    input column of every layer over the whole batch. ``batch_size`` splits
    the work without changing the result.
    """
    batch = _check_batch(g, batch)
    accumulators = {layer.layer_id: NormAccumulator(layer.layer_id, layer.weight.cols) for layer in g}
    step = batch.shape[0] if not batch_size else int(batch_size)
    outputs = [_run(g, batch[i : i + step], accumulators) for i in range(0, batch.shape[0], step)]
    trace = ActivationTrace(acc.result() for acc in accumulators.values())
    return np.vstack(outputs), trace


def predict(g: ModelGraph, batch):
    """Forward pass without tracing."""
    return _run(g, _check_batch(g, batch))


def layer_inputs(g: ModelGraph, batch):
    """Input matrix seen by every layer, keyed by layer id."""
    x = _check_batch(g, batch)
    inputs = {}
    for layer in g:
        inputs[layer.layer_id] = x
        x = layer.apply(x)
    return inputs
