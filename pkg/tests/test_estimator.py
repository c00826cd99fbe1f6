import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from owlprune.calibration import evaluation_scenes, generate_scenarios
from owlprune.errors import ConfigError, StructuralError
from owlprune.estimator import OutlierWeighedPruner, check_inputs, check_model
from owlprune.evaluation import fixture_path
from owlprune.graph import predict


@pytest.fixture
def calib():
    return generate_scenarios(128, 0).samples


def test_get_params_and_clone(fixture_graph):
    est = OutlierWeighedPruner(fixture_graph, sparsity=0.3, method="magnitude")
    params = est.get_params()
    assert params["sparsity"] == 0.3 and params["method"] == "magnitude"
    twin = clone(est)
    assert twin.get_params()["sparsity"] == 0.3
    assert not hasattr(twin, "model_")
    est.set_params(limit=0.05)
    assert est.limit == 0.05


def test_fit_transform(fixture_graph, calib):
    est = OutlierWeighedPruner(fixture_graph, sparsity=0.3).fit(calib)
    x, _ = evaluation_scenes(20, 0)
    np.testing.assert_array_equal(est.transform(x), predict(est.model_, x))
    assert est.n_features_in_ == 22
    assert est.report_.total_pruned == est.plan_.total_pruned
    assert len(est.profile_) == len(fixture_graph)
    assert est.model_ is not fixture_graph
    np.testing.assert_array_equal(est.predict(x), est.transform(x))


def test_path_model_and_pipeline(calib):
    with __import__("importlib").resources.as_file(fixture_path()) as path:
        est = OutlierWeighedPruner(str(path), sparsity=0.2)
        out = make_pipeline(est).fit(calib).transform(calib[:5])
    assert out.shape == (5, 6)


def test_unfitted_and_bad_inputs(fixture_graph, calib):
    est = OutlierWeighedPruner(fixture_graph)
    with pytest.raises(NotFittedError):
        est.transform(calib)
    with pytest.raises(StructuralError):
        est.fit(calib[:, :5])
    with pytest.raises(ValueError):
        est.fit(np.full((3, 22), np.nan))
    with pytest.raises(ConfigError):
        OutlierWeighedPruner(fixture_graph, sparsity=1.2).fit(calib)
    with pytest.raises(TypeError):
        check_model(42)


def test_check_inputs_coerces(fixture_graph):
    x = check_inputs([[0] * 22], fixture_graph)
    assert x.dtype == np.float64 and x.shape == (1, 22)
