"""Pruning configuration and the enumerations shared across stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from .errors import ConfigError
from .outliers import DEFAULT_THRESHOLD

DEFAULT_LIMIT = 0.1
SPARSITY_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
LIMIT_GRID = (0.02, 0.05, 0.08, 0.1, 0.2)
THRESHOLD_GRID = (3, 5, 7, 10)
DEFAULT_SAMPLES = 128


class _Named(enum.Enum):
    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper().replace("-", "_")]
        except KeyError:
            choices = ", ".join(m.name.lower() for m in cls)
            raise ConfigError(f"unknown {cls.__name__.lower()} {value!r}; choose from {choices}") from None


class Method(_Named):
    MAGNITUDE = "magnitude"
    WANDA = "wanda"


class Allocation(_Named):
    UNIFORM = "uniform"
    OWLED_LM_ONLY = "owled_lm_only"
    OWLED_SEPARATE = "owled_separate"
    OWLED_GLOBAL = "owled_global"


class Comparison(_Named):
    PER_ROW = "per_row"
    PER_LAYER = "per_layer"


class Weighting(_Named):
    PARAMETER = "parameter"
    LAYER = "layer"


@dataclass(frozen=True)
class PruningConfig:
    """Everything that determines a pruning run besides model and data.

    ``limit`` is the clamp half-width: every in-scope layer ends up with a
    sparsity inside ``[sparsity - limit, sparsity + limit]``. ``weighting``
    selects whether the mean sparsity constraint weighs layers by parameter
    count or counts each layer once.
    """

    sparsity: float
    limit: float = DEFAULT_LIMIT
    threshold: float = DEFAULT_THRESHOLD
    method: Method = Method.WANDA
    allocation: Allocation = Allocation.OWLED_LM_ONLY
    comparison: Comparison = Comparison.PER_ROW
    weighting: Weighting = Weighting.PARAMETER
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        object.__setattr__(self, "allocation", Allocation.parse(self.allocation))
        object.__setattr__(self, "comparison", Comparison.parse(self.comparison))
        object.__setattr__(self, "weighting", Weighting.parse(self.weighting))
        object.__setattr__(self, "sparsity", float(self.sparsity))
        object.__setattr__(self, "limit", float(self.limit))
        object.__setattr__(self, "threshold", float(self.threshold))
        if not 0.0 <= self.sparsity < 1.0:
            raise ConfigError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        if self.limit < 0:
            raise ConfigError(f"limit must be non-negative, got {self.limit}")
        if self.sparsity - self.limit < 0 or self.sparsity + self.limit > 1:
            raise ConfigError(
                f"sparsity {self.sparsity} +/- limit {self.limit} leaves the range [0, 1]"
            )
        if not self.threshold > 0:
            raise ConfigError(f"threshold multiplier must be positive, got {self.threshold}")

    @property
    def bounds(self):
        return self.sparsity - self.limit, self.sparsity + self.limit

    def replace(self, **changes) -> "PruningConfig":
        return replace(self, **changes)


def feasible_limit(sparsity, limit):
    """Largest clamp half-width not exceeding ``limit`` that keeps bounds in [0, 1]."""
    return max(0.0, min(float(limit), float(sparsity), 1.0 - float(sparsity)))
