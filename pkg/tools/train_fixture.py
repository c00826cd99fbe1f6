"""Train the toy driving-task fixture once and write it as a LODT archive.

After fitting, a few hidden units in every LM hidden layer are rescaled by a
large factor c (incoming weights and bias times c, outgoing weights divided by
c). ReLU is positively homogeneous, so the network computes the same function,
but those units now carry large-magnitude activations, the outlier features
activation-aware pruning is designed around.

    python tools/train_fixture.py [--out src/owlprune/data/fixture.lodt]

Not part of the installed package: the library only ever loads the result.
"""

import argparse
import warnings

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPRegressor

from owlprune.archive import save_model
from owlprune.calibration import SCENE_WIDTH, simulate_scenes
from owlprune.graph import Activation, ComponentTag, LayerSpec, ModelGraph
from owlprune.graph import predict as graph_outputs

ENCODER_WIDTHS = (16, 16)
LM_WIDTHS = (96, 96, 96, 96, 96)
TRAIN_SEED = 20240917
OUTLIER_SEED = 7
OUTLIER_FRACTION = 0.05
OUTLIER_SCALE = (10.0, 100.0)


def plant_outlier_features(weights, biases, first, last, rng):
    """Rescale units of hidden layers ``first..last-1`` without changing the function."""
    for k in range(first, last):
        rows = weights[k].shape[0]
        units = rng.choice(rows, max(1, round(OUTLIER_FRACTION * rows)), replace=False)
        c = np.exp(rng.uniform(*np.log(OUTLIER_SCALE), size=units.size))
        weights[k][units] *= c[:, None]
        biases[k][units] *= c
        weights[k + 1][:, units] /= c[None, :]


def build_graph(reg):
    n_enc = len(ENCODER_WIDTHS)
    weights = [coef.T.copy() for coef in reg.coefs_]
    biases = [b.copy() for b in reg.intercepts_]
    plant_outlier_features(weights, biases, n_enc, len(weights) - 1, np.random.default_rng(OUTLIER_SEED))
    layers = []
    for k, (coef, bias) in enumerate(zip(weights, biases)):
        encoder = k < n_enc
        layer_id = f"enc.{k}" if encoder else f"lm.{k - n_enc}"
        last = k == len(reg.coefs_) - 1
        layers.append(
            LayerSpec.from_array(
                layer_id,
                coef,
                ComponentTag.ENCODER if encoder else ComponentTag.LM,
                Activation.IDENTITY if last else Activation.RELU,
                bias,
            )
        )
    return ModelGraph(layers)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="src/owlprune/data/fixture.lodt")
    parser.add_argument("--samples", type=int, default=40000)
    args = parser.parse_args()

    rng = np.random.default_rng(TRAIN_SEED)
    X, targets = simulate_scenes(args.samples, rng)
    Y = targets.as_matrix()
    assert X.shape[1] == SCENE_WIDTH

    reg = MLPRegressor(
        hidden_layer_sizes=ENCODER_WIDTHS + LM_WIDTHS,
        activation="relu",
        solver="adam",
        learning_rate_init=1e-3,
        batch_size=256,
        alpha=1e-4,
        max_iter=300,
        random_state=0,
        tol=1e-6,
        n_iter_no_change=20,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        reg.fit(X, Y)
    graph = build_graph(reg)
    drift = np.max(np.abs(graph_outputs(graph, X[:1000]) - reg.predict(X[:1000])))
    assert drift < 1e-9, drift
    save_model(graph, args.out)
    print(f"final loss {reg.loss_:.5f} after {reg.n_iter_} epochs -> {args.out}")


if __name__ == "__main__":
    main()
