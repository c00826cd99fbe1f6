import numpy as np
import pytest

from owlprune.evaluation import load_fixture, load_task
from owlprune.graph import Activation, ActivationTrace, ComponentTag, LayerSpec, ModelGraph
from owlprune.tensor import ActivationNorms


def random_graph(rng, n_encoder=None, n_lm=None, max_width=12, bias_rate=0.5):
    """Dimension-consistent random graph, encoder layers first."""
    n_encoder = int(rng.integers(1, 3)) if n_encoder is None else n_encoder
    n_lm = int(rng.integers(1, 4)) if n_lm is None else n_lm
    widths = rng.integers(1, max_width + 1, size=n_encoder + n_lm + 1)
    layers = []
    for k in range(n_encoder + n_lm):
        encoder = k < n_encoder
        rows, cols = int(widths[k + 1]), int(widths[k])
        bias = rng.normal(size=rows) if rng.random() < bias_rate else None
        layers.append(
            LayerSpec.from_array(
                f"enc.{k}" if encoder else f"lm.{k - n_encoder}",
                rng.normal(size=(rows, cols)),
                ComponentTag.ENCODER if encoder else ComponentTag.LM,
                Activation(int(rng.integers(0, 2))),
                bias,
            )
        )
    return ModelGraph(layers)


def random_trace(g, rng, samples=8):
    return ActivationTrace(
        ActivationNorms(layer.layer_id, rng.uniform(0.0, 3.0, size=layer.shape[1]), samples)
        for layer in g
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_graph():
    return load_fixture()


@pytest.fixture(scope="session")
def task(fixture_graph):
    return load_task(fixture_graph)
