import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph, random_trace
from owlprune.allocation import (
    allocate,
    allocate_scoped,
    allocate_uniform,
    allocation_targets,
    match_budget,
    plan_text,
    prune_count,
)
from owlprune.calibration import Regime, collect_norms, generate
from owlprune.config import Allocation, PruningConfig, Weighting, feasible_limit
from owlprune.errors import ConfigError, StructuralError
from owlprune.outliers import LayerOutlierProfile


def profile(ratios):
    return LayerOutlierProfile(tuple((f"l{i}", float(d)) for i, d in enumerate(ratios)), 5.0)


def test_worked_two_layer_example():
    s = allocation_targets([0.2, 0.0], 0.5, 0.1, [1.0, 1.0])
    assert s.tolist() == [0.4, 0.6]


def test_mean_restoration_hand_example():
    # raw 1-D = [0.5, 1, 1] -> [0.3, 0.6, 0.6]; weights [1, 1, 2] give mean 0.525.
    # Layer 0 sits on the lower clamp, so the other two absorb the -0.1 gap: 0.6 - 0.1/3.
    s = allocation_targets([0.5, 0.0, 0.0], 0.5, 0.2, [1.0, 1.0, 2.0])
    np.testing.assert_allclose(s, [0.3, 0.6 - 0.1 / 3, 0.6 - 0.1 / 3], rtol=0, atol=1e-15)


def test_equal_ratios_give_uniform():
    assert allocation_targets([0.1, 0.1, 0.1], 0.3, 0.1, [1, 2, 3]).tolist() == [0.3] * 3


def test_layer_weighting_switch():
    cfg = PruningConfig(0.5, 0.2, weighting=Weighting.LAYER)
    plan = allocate(profile([0.5, 0.0, 0.0]), cfg, [1.0, 1.0, 2.0])
    assert plan.mean_sparsity(weighting="layer") == pytest.approx(0.5, abs=1e-12)
    assert plan.sparsities.tolist() == pytest.approx([0.3, 0.6, 0.6])


ratios_st = st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(ratios_st, st.floats(0.05, 0.9), st.floats(0, 0.3), st.data())
def test_allocation_invariants(ratios, target, limit, data):
    limit = feasible_limit(target, limit)
    sizes = data.draw(st.lists(st.integers(1, 10000), min_size=len(ratios), max_size=len(ratios)))
    s = allocation_targets(ratios, target, limit, np.array(sizes, float))
    lo, hi = target - limit, target + limit
    assert np.all(s >= lo) and np.all(s <= hi)
    mean = math.fsum(si * n for si, n in zip(s, sizes)) / sum(sizes)
    assert abs(mean - target) <= 1e-9
    for a in range(len(ratios)):
        for b in range(len(ratios)):
            if ratios[a] > ratios[b]:
                assert s[a] <= s[b]


@given(ratios_st, st.floats(0.0, 0.99))
def test_zero_limit_is_uniform(ratios, target):
    assert np.all(allocation_targets(ratios, target, 0.0, np.ones(len(ratios))) == target)


def test_prune_count_rounding():
    assert prune_count(0.5, 5) == 3
    assert prune_count(0.3, 10) == 3
    assert prune_count(0.25, 2) == 1
    assert prune_count(0.2499, 2) == 0
    assert prune_count(1.0, 7) == 7


def test_allocate_empty_and_misaligned():
    with pytest.raises(ConfigError):
        allocate(profile([]), PruningConfig(0.5), [])
    with pytest.raises(StructuralError):
        allocate(profile([0.1, 0.2]), PruningConfig(0.5), [1.0])
    with pytest.raises(ConfigError):
        allocate_uniform(PruningConfig(0.5), {})


def test_scoped_plans_cover_graph(rng):
    g = random_graph(rng, n_encoder=2, n_lm=3)
    trace = random_trace(g, rng)
    for alloc in Allocation:
        cfg = PruningConfig(0.4, 0.1, 2.0, allocation=alloc)
        plan = allocate_scoped(g, trace, cfg)
        assert plan.layer_ids == g.layer_ids
        if alloc in (Allocation.UNIFORM, Allocation.OWLED_LM_ONLY):
            assert [e.layer_id for e in plan.in_scope] == ["lm.0", "lm.1", "lm.2"]
            assert all(plan[k].sparsity == 0.0 for k in ("enc.0", "enc.1"))
        else:
            assert len(plan.in_scope) == len(g)
        assert plan.mean_sparsity() == pytest.approx(0.4, abs=1e-9)


def test_separate_scope_meets_target_per_component(rng):
    g = random_graph(rng, n_encoder=2, n_lm=3)
    plan = allocate_scoped(g, random_trace(g, rng), PruningConfig(0.4, 0.1, 2.0, allocation="owled_separate"))
    assert plan.mean_sparsity(["enc.0", "enc.1"]) == pytest.approx(0.4, abs=1e-9)
    assert plan.mean_sparsity(["lm.0", "lm.1", "lm.2"]) == pytest.approx(0.4, abs=1e-9)


def test_scoped_needs_two_components(rng):
    g = random_graph(rng, n_encoder=0, n_lm=2)
    with pytest.raises(StructuralError):
        allocate_scoped(g, random_trace(g, rng), PruningConfig(0.3))


def test_match_budget_self_and_others(fixture_graph):
    trace = collect_norms(fixture_graph, generate(Regime.SCENARIO, 128, 0))
    ref_cfg = PruningConfig(0.3)
    ref = allocate_scoped(fixture_graph, trace, ref_cfg)
    same = match_budget(ref, ref_cfg, fixture_graph, trace)
    assert same.budget_coefficient == 1.0
    assert same.total_pruned == ref.total_pruned
    for alloc in ("owled_separate", "owled_global"):
        plan = match_budget(ref, ref_cfg.replace(allocation=alloc), fixture_graph, trace)
        assert abs(plan.total_pruned - ref.total_pruned) <= len(fixture_graph)
        assert 0 < plan.budget_coefficient < 1


def test_match_budget_zero_reference(fixture_graph):
    trace = collect_norms(fixture_graph, generate(Regime.SCENARIO, 32, 0))
    ref = allocate_scoped(fixture_graph, trace, PruningConfig(0.0, 0.0))
    plan = match_budget(ref, PruningConfig(0.3, allocation="owled_global"), fixture_graph, trace)
    assert plan.budget_coefficient == 0.0 and plan.total_pruned == 0


def test_match_budget_overflow_is_config_error(rng):
    from owlprune.graph import ComponentTag, LayerSpec, ModelGraph

    # big encoder, tiny LM: the LM-only plan must be scaled far past 1 to match
    g = ModelGraph(
        [
            LayerSpec.from_array("enc.0", rng.normal(size=(10, 10)), ComponentTag.ENCODER),
            LayerSpec.from_array("lm.0", rng.normal(size=(2, 10)), ComponentTag.LM),
        ]
    )
    trace = random_trace(g, rng)
    ref = allocate_scoped(g, trace, PruningConfig(0.9, 0.0, allocation="owled_separate"))
    with pytest.raises(ConfigError, match="past full sparsity"):
        match_budget(ref, PruningConfig(0.1, 0.0), g, trace)


def test_plan_text_lines(rng):
    g = random_graph(rng)
    plan = allocate_scoped(g, random_trace(g, rng), PruningConfig(0.3))
    lines = plan_text(plan).splitlines()
    assert lines[0].startswith("# S=0.3")
    assert len(lines) == len(g) + 1
    assert all(len(line.split("\t")) == 3 for line in lines[1:])
