import math

import pytest

from owlprune.config import Comparison
from owlprune.evaluation import (
    PRESETS,
    Cell,
    ExperimentResult,
    load_task,
    run_calibration_ablation,
    run_cell,
    run_scope_ablation,
    run_sweep,
    score,
)
from owlprune.errors import PruningError, StructuralError
from owlprune.graph import ComponentTag, LayerSpec, ModelGraph


def test_dense_scores(task):
    m = score(task.graph, task)
    assert m["mse"] == 0.0
    assert m["acc_light"] > 0.95
    assert m["mae_car"] < 0.2


def test_all_zero_graph_hits_majority_rate(task):
    from owlprune.tensor import WeightMatrix

    zero = task.graph.replace_weights(
        {l.layer_id: WeightMatrix(l.layer_id, l.weight.values * 0) for l in task.graph}
    )
    zero = ModelGraph(LayerSpec(l.weight, l.component, l.activation, None) for l in zero)
    assert score(zero, task)["acc_light"] == task.majority_light_rate


def test_cells_are_deterministic(task):
    cell = Cell("owled", 0.3, seed=4)
    assert run_cell(task, cell) == run_cell(task, cell)
    assert run_cell(task, Cell("magnitude", 0.3, seed=1))["mse"] == run_cell(task, Cell("magnitude", 0.3, seed=2))["mse"]


def test_presets_cover_methods():
    assert set(PRESETS) == {"dense", "magnitude", "wanda", "owl", "owled"}
    with pytest.raises(PruningError):
        Cell("bogus").preset


def test_small_sweep_and_outputs(task, tmp_path):
    res = run_sweep(task, sparsities=(0.1, 0.3), seeds=(0, 1))
    assert len(res.rows) == 2 * (1 + 4 * 2)
    agg = res.aggregate()
    wanda = [a for a in agg if a["method"] == "wanda" and a["sparsity"] == 0.3][0]
    vals = res.values("mse", method="wanda", sparsity=0.3)
    assert wanda["mse_mean"] == pytest.approx(sum(vals) / 2)
    assert wanda["mse_ci95"] == pytest.approx(1.96 * abs(vals[0] - vals[1]) / math.sqrt(2) / math.sqrt(2))
    paths = res.write(tmp_path)
    assert paths["cells"].read_text().startswith("experiment,method")
    assert "ranked by mean end-to-end MSE" in paths["report"].read_text()


def test_failed_cells_are_recorded(task):
    cell = Cell("owled", 0.3, n_samples=0)
    row = run_cell(task, cell)
    assert row["status"].startswith("failed")
    res = ExperimentResult("x", [row])
    assert "FAILED" in res.summary_text()


def test_scope_ablation_budget(task):
    res = run_scope_ablation(task, sparsities=(0.3,), seeds=(0,))
    assert res.budget_gap <= len(task.graph)
    lm_only = [r for r in res.rows if r["allocation"] == "OWLED_LM_ONLY"][0]
    assert lm_only["encoder_sparsity"] == 0.0 and lm_only["coefficient"] == 1.0


def test_calibration_ablation_rows(task):
    res = run_calibration_ablation(task, sample_counts=(32, 64), seeds=(0,), comparison=Comparison.PER_ROW)
    assert [r["n_samples"] for r in res.rows] == [32, 64]


def test_task_shape_check():
    g = ModelGraph([LayerSpec.from_array("l", [[1.0] * 22], ComponentTag.LM)])
    with pytest.raises(StructuralError):
        load_task(g)


def test_lod_depends_on_sample_count(task):
    from owlprune.calibration import Regime
    from owlprune.evaluation import lod_for

    gaps = [
        max(abs(a - b) for a, b in zip(lod_for(task, Regime.SCENARIO, 32, s).ratios, lod_for(task, Regime.SCENARIO, 512, s).ratios))
        for s in range(5)
    ]
    assert max(gaps) > 0


def test_identity_masks_keep_dense_metrics(task):
    from owlprune.allocation import allocate_uniform
    from owlprune.config import PruningConfig
    from owlprune.pruning import prune_model

    plan = allocate_uniform(PruningConfig(0.0, 0.0), {l.layer_id: l.weight.size for l in task.graph})
    pruned, report = prune_model(task.graph, plan, "magnitude")
    assert all(m.pruned_count == 0 for m in report.masks.values())
    assert score(pruned, task) == score(task.graph, task)


def test_dense_dominates_pruned_rows(task):
    res = run_sweep(task, sparsities=(0.3, 0.5), seeds=(0, 1))
    dense = {r["seed"]: r["mse"] for r in res.rows if r["method"] == "dense"}
    pruned = [r for r in res.rows if r["method"] != "dense"]
    assert sum(r["mse"] >= dense[r["seed"]] for r in pruned) >= 0.95 * len(pruned)
