import numpy as np
import pytest

from owlprune.calibration import (
    CAR_OFFSET,
    LIGHT_OFFSET,
    N_CAR,
    PED_OFFSET,
    SCENE_WIDTH,
    CalibrationSet,
    Regime,
    collect_norms,
    dumps_calibration,
    evaluation_scenes,
    generate,
    generate_generic,
    generate_scenarios,
    load_calibration,
    loads_calibration,
    save_calibration,
)
from owlprune.errors import FormatError, PreconditionError


def test_layout_constants():
    assert SCENE_WIDTH == 22
    assert (CAR_OFFSET, PED_OFFSET, LIGHT_OFFSET) == (2, 14, 18)


def test_generators_are_deterministic():
    assert generate_scenarios(16, 3) == generate_scenarios(16, 3)
    assert generate_generic(16, 3) == generate_generic(16, 3)
    assert generate_scenarios(16, 3) != generate_scenarios(16, 4)


def test_regimes_use_separate_streams():
    a = generate(Regime.SCENARIO, 32, 0).samples
    b = generate(Regime.GENERIC, 32, 0).samples
    assert not np.array_equal(a, b)
    x, _ = evaluation_scenes(32, 0)
    assert not np.array_equal(a, x)


def test_scene_structure():
    x, targets = evaluation_scenes(500, 1)
    assert x.shape == (500, SCENE_WIDTH)
    light = x[:, LIGHT_OFFSET : LIGHT_OFFSET + 3]
    assert np.all(light.sum(axis=1) == 1.0)
    assert np.array_equal(np.argmax(light, axis=1), targets.light_state)
    present = x[:, CAR_OFFSET : CAR_OFFSET + 3 * N_CAR : 3] > 0
    assert np.array_equal(present.sum(axis=1), targets.car_count)
    assert targets.as_matrix().shape == (500, 6)


def test_light_majority_is_red():
    _, targets = evaluation_scenes(5000, 0)
    freq = np.bincount(targets.light_state, minlength=3) / 5000
    assert np.argmax(freq) == 0
    np.testing.assert_allclose(freq, [0.4, 0.3, 0.3], atol=0.03)


def test_negative_seed_rejected():
    with pytest.raises(PreconditionError):
        generate_scenarios(4, -1)


def test_calibration_blob_round_trip(tmp_path):
    c = generate_generic(7, 11)
    data = dumps_calibration(c)
    assert len(data) == 21 + 8 * 7 * SCENE_WIDTH
    assert loads_calibration(data) == c
    save_calibration(c, tmp_path / "c.lodc")
    assert load_calibration(tmp_path / "c.lodc") == c


@pytest.mark.parametrize("mutate", [lambda d: d[:10], lambda d: d[:-1], lambda d: b"NOPE" + d[4:], lambda d: d + b"x"])
def test_calibration_blob_rejects_corruption(mutate):
    with pytest.raises(FormatError):
        loads_calibration(mutate(dumps_calibration(generate_scenarios(3, 0))))


def test_collect_norms_matches_direct(fixture_graph):
    c = generate_scenarios(64, 2)
    trace = collect_norms(fixture_graph, c, batch_size=10)
    np.testing.assert_allclose(trace["enc.0"].norms, np.linalg.norm(c.samples, axis=0), rtol=1e-13)
    assert set(trace) == set(fixture_graph.layer_ids)
    assert all(trace[k].sample_count == 64 for k in trace)


def test_calibration_set_validation():
    with pytest.raises(PreconditionError):
        CalibrationSet(np.zeros((0, 3)), Regime.GENERIC, 0)
