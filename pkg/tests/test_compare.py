import dataclasses
import os

import numpy as np
import pandas as pd
import pytest
from pytest import approx, mark

from src.simulate.compare import STRATEGIES, compare_modes, compare_strategies, mean_curves, plot_curves, summarize
from src.utils.config import load_config
from src.utils.errors import ParameterError

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "configs")


def test_paired_runs_share_the_prior(fast_config):
    cfg = dataclasses.replace(fast_config, max_iterations=3)
    result = compare_strategies(cfg, [0, 1])

    assert len(result.runs) == 4
    assert len(result.summary) == 6
    assert set(result.summary["metric"]) == {"chamfer_mm", "failures", "attempts"}
    assert (result.summary["n_seeds"] == 2).all()

    for seed in (0, 1):
        sub = result.runs[result.runs["seed"] == seed]
        assert sub["initial_chamfer_mm"].nunique() == 1

    assert list(result.curves.columns) == [s.value for s in STRATEGIES]
    assert list(result.curves.index) == [0, 1, 2, 3]
    assert not result.curves.isna().any().any()
    prior = result.runs.groupby("strategy")["initial_chamfer_mm"].mean()
    assert result.curves.loc[0, "ours"] == approx(prior["ours"])


def test_compare_needs_seeds(fast_config):
    with pytest.raises(ParameterError):
        compare_strategies(fast_config, [])


def test_modes_are_compared_on_the_same_seeds(fast_config):
    cfg = dataclasses.replace(fast_config, max_iterations=3)
    result = compare_modes(cfg, [0])

    assert len(result.runs) == 4
    assert set(result.runs["mode"]) == {"literal", "complement"}
    assert list(result.summary.columns[:3]) == ["mode", "strategy", "metric"]
    assert len(result.summary) == 12
    assert list(result.curves.columns) == ["literal:ours", "literal:min_u", "complement:ours", "complement:min_u"]
    assert result.runs["initial_chamfer_mm"].nunique() == 1
    assert (result.runs["attempts"] <= cfg.max_iterations).all()
    early = result.runs[result.runs["terminated_early"]]
    assert (early["attempts"] < cfg.max_iterations).all()


def test_compare_modes_rejects_unknown_mode(fast_config):
    with pytest.raises(ParameterError, match="propagation mode"):
        compare_modes(fast_config, [0], modes=["sideways"])


def test_summary_uses_population_std():
    runs = pd.DataFrame([
        {"strategy": "ours", "seed": 0, "final_chamfer_mm": 1.0, "cumulative_failures": 2},
        {"strategy": "ours", "seed": 1, "final_chamfer_mm": 3.0, "cumulative_failures": 4},
        {"strategy": "min_u", "seed": 0, "final_chamfer_mm": 5.0, "cumulative_failures": 10},
        {"strategy": "min_u", "seed": 1, "final_chamfer_mm": 5.0, "cumulative_failures": 10},
    ])
    summary = summarize(runs).set_index(["strategy", "metric"])
    assert summary.loc[("ours", "chamfer_mm"), "mean"] == 2.0
    assert summary.loc[("ours", "chamfer_mm"), "std"] == 1.0
    assert summary.loc[("ours", "failures"), "formatted"] == "3.0 ± 1.0"
    assert summary.loc[("min_u", "failures"), "std"] == 0.0


def test_curves_hold_the_last_value_after_an_early_stop():
    history = pd.DataFrame([
        {"strategy": "ours", "seed": 0, "iteration": 0, "chamfer_mm": 4.0},
        {"strategy": "ours", "seed": 0, "iteration": 1, "chamfer_mm": 2.0},
        {"strategy": "ours", "seed": 1, "iteration": 0, "chamfer_mm": 6.0},
        {"strategy": "ours", "seed": 1, "iteration": 1, "chamfer_mm": 5.0},
        {"strategy": "ours", "seed": 1, "iteration": 2, "chamfer_mm": 4.0},
        {"strategy": "ours", "seed": 1, "iteration": 3, "chamfer_mm": 3.0},
        {"strategy": "min_u", "seed": 0, "iteration": 0, "chamfer_mm": 4.0},
        {"strategy": "min_u", "seed": 1, "iteration": 0, "chamfer_mm": 6.0},
    ])
    curves = mean_curves(history, 3)
    assert curves["ours"].tolist() == [5.0, 3.5, 3.0, 2.5]
    assert curves["min_u"].tolist() == [5.0, 5.0, 5.0, 5.0]


def test_plot_curves_writes_png(tmp_path):
    curves = pd.DataFrame({"ours": [5.0, 3.0, 2.0], "min_u": [5.0, 4.5, 4.0]})
    path = tmp_path / "curves.png"
    plot_curves(curves, str(path), title="sphere")
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


@mark.slow
def test_box_exploration_fails_less_than_min_u():
    cfg = load_config(os.path.join(CONFIG_DIR, "sugar_box.cfg"))
    result = compare_strategies(cfg, range(5))
    means = result.runs.groupby("strategy")[["cumulative_failures", "final_chamfer_mm"]].mean()
    assert means.loc["ours", "cumulative_failures"] < means.loc["min_u", "cumulative_failures"]
    assert means.loc["ours", "final_chamfer_mm"] <= means.loc["min_u", "final_chamfer_mm"]
    assert np.isfinite(result.runs["final_chamfer_mm"]).all()
