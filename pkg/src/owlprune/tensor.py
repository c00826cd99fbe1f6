"""Dense weight storage, binary masks and the small numerical kernels
(column norms, smallest-k selection) the pruning pipeline is built on.

All arrays are float64 and read-only once wrapped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, PreconditionError, StructuralError


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """A ``C_out x C_in`` weight array for one prunable layer."""

    layer_id: str
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise StructuralError(
                f"layer {self.layer_id!r}: weight must be a non-empty 2-D array, "
                f"got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NumericalError(f"layer {self.layer_id!r}: non-finite weight values")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, WeightMatrix):
            return NotImplemented
        return self.layer_id == other.layer_id and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class PruneMask:
    """Boolean keep-mask; ``True`` keeps the weight, ``False`` prunes it."""

    bits: np.ndarray

    def __post_init__(self):
        bits = _frozen(self.bits, bool)
        if bits.ndim != 2:
            raise StructuralError(f"mask must be 2-D, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def keep_all(cls, rows, cols):
        return cls(np.ones((rows, cols), dtype=bool))

    @property
    def shape(self):
        return self.bits.shape

    @property
    def pruned_count(self) -> int:
        return int(self.bits.size - np.count_nonzero(self.bits))

    @property
    def sparsity(self) -> float:
        return self.pruned_count / self.bits.size

    def __eq__(self, other):
        if not isinstance(other, PruneMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class ActivationNorms:
    """Per-input-channel l2 norms of a layer's input over calibration data."""

    layer_id: str
    norms: np.ndarray
    sample_count: int = field(default=0)

    def __post_init__(self):
        norms = _frozen(self.norms, np.float64)
        if norms.ndim != 1:
            raise StructuralError(f"layer {self.layer_id!r}: norms must be 1-D")
        if not np.all(np.isfinite(norms)) or np.any(norms < 0):
            raise NumericalError(
                f"layer {self.layer_id!r}: norms must be finite and non-negative"
            )
        if self.sample_count < 0:
            raise PreconditionError("sample_count must be non-negative")
        object.__setattr__(self, "norms", norms)

    def __eq__(self, other):
        if not isinstance(other, ActivationNorms):
            return NotImplemented
        return (
            self.layer_id == other.layer_id
            and self.sample_count == other.sample_count
            and np.array_equal(self.norms, other.norms)
        )


class NormAccumulator:
    """Accumulates per-column sums of squares across batches.

    The square root is taken once in :meth:`result`, so the outcome does not
    depend on how the samples were split into batches.
    """

    def __init__(self, layer_id, width):
        self.layer_id = layer_id
        self.sum_sq = np.zeros(width, dtype=np.float64)
        self.sample_count = 0

    def update(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.sum_sq.shape[0]:
            raise StructuralError(
                f"layer {self.layer_id!r}: expected batch width {self.sum_sq.shape[0]}, "
                f"got shape {batch.shape}"
            )
        self.sum_sq += np.einsum("ij,ij->j", batch, batch)
        self.sample_count += batch.shape[0]
        return self

    def result(self) -> ActivationNorms:
        return ActivationNorms(self.layer_id, np.sqrt(self.sum_sq), self.sample_count)


def apply_mask(w: WeightMatrix, m: PruneMask) -> WeightMatrix:
    """Zero every weight whose mask bit is False; ``w`` itself is untouched."""
    if m.shape != w.values.shape:
        raise StructuralError(
            f"layer {w.layer_id!r}: mask shape {m.shape} does not match weight "
            f"shape {w.values.shape}"
        )
    return WeightMatrix(w.layer_id, np.where(m.bits, w.values, 0.0))


def column_l2_norms(batch, layer_id="input") -> ActivationNorms:
    """l2 norm of every column of ``batch`` (rows are samples)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise PreconditionError("batch must be a non-empty 2-D array")
    if not np.all(np.isfinite(batch)):
        raise PreconditionError("batch contains non-finite values")
    return NormAccumulator(layer_id, batch.shape[1]).update(batch).result()


def select_smallest_k(scores, k) -> np.ndarray:
    """Indices of the ``k`` smallest scores, ascending-index tie-break.

    Returned indices are sorted ascending.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 0 <= k <= scores.size:
        raise PreconditionError(f"k={k} out of range for {scores.size} scores")
    # stable sort keeps equal scores in index order
    order = np.argsort(scores, kind="stable")
    return np.sort(order[:k])
