"""
Paired strategy comparison.

For every seed, the same session is run twice, once per strategy. The visual
prior, the chamfer samples and the per-attempt probe noise are all keyed on
the seed (and attempt number), so the two runs differ only in which vertices
they choose to touch.

`compare_modes` repeats the paired runs once per uncertainty propagation
mode. Under `literal` every vertex within the traverse threshold of a
contact becomes confident, so `ours` leaps several hops per contact and may
run out of frontier before the attempt budget; `attempts` and
`terminated_early` in the runs table show when that happens.
"""

from __future__ import annotations

import dataclasses
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from src.estimate.uncertainty_field import PropagationMode
from src.explore.strategy import Strategy
from src.geometry.mesh import TriangleMesh
from src.simulate.session import load_truth, run_session
from src.utils.config import SessionConfig
from src.utils.errors import ParameterError

STRATEGIES = (Strategy.OURS, Strategy.MIN_U)
MODES = (PropagationMode.LITERAL, PropagationMode.COMPLEMENT)
METRICS = (("final_chamfer_mm", "chamfer_mm"), ("cumulative_failures", "failures"), ("attempts", "attempts"))


class ComparisonResult(NamedTuple):
    summary: pd.DataFrame  # [mode,] strategy, metric, mean, std, n_seeds, formatted
    runs: pd.DataFrame     # one row per ([mode,] strategy, seed)
    curves: pd.DataFrame   # iteration x strategy (or mode:strategy), mean chamfer_mm over seeds


def _paired_runs(cfg: SessionConfig, seeds: Sequence[int], truth: TriangleMesh,
                 verbose: bool, extra: Optional[Dict] = None):
    runs: List[Dict] = []
    history: List[Dict] = []
    extra = extra or {}
    for seed in seeds:
        for strategy in STRATEGIES:
            session_cfg = cfg.with_seed(int(seed)).with_strategy(strategy)
            if verbose:
                label = " / ".join([str(v) for v in extra.values()] + [strategy.value])
                print(f"\n  seed {seed} / {label}")
            result = run_session(session_cfg, truth=truth)
            final = result.records[-1]
            runs.append({
                **extra,
                "strategy": strategy.value,
                "seed": int(seed),
                "final_chamfer_mm": final.chamfer_mm,
                "cumulative_failures": final.cumulative_failures,
                "initial_chamfer_mm": result.records[0].chamfer_mm,
                "attempts": final.iteration,
                "terminated_early": result.terminated_early,
            })
            for r in result.records:
                history.append({**extra, "strategy": strategy.value, "seed": int(seed),
                                "iteration": r.iteration, "chamfer_mm": r.chamfer_mm})
            if verbose:
                print(f"    final chamfer {final.chamfer_mm:.3f} mm, "
                      f"{final.cumulative_failures} failures")
    return runs, history


def compare_strategies(cfg: SessionConfig, seeds: Sequence[int],
                       truth: Optional[TriangleMesh] = None, verbose: bool = False) -> ComparisonResult:
    if not seeds:
        raise ParameterError("compare needs at least one seed")
    if truth is None:
        truth = load_truth(cfg)

    runs, history = _paired_runs(cfg, seeds, truth, verbose)
    runs_df = pd.DataFrame(runs)
    return ComparisonResult(
        summary=summarize(runs_df),
        runs=runs_df,
        curves=mean_curves(pd.DataFrame(history), cfg.max_iterations),
    )


def compare_modes(cfg: SessionConfig, seeds: Sequence[int], modes: Sequence = MODES,
                  truth: Optional[TriangleMesh] = None, verbose: bool = False) -> ComparisonResult:
    """Paired strategy runs under each propagation mode; curve columns are `mode:strategy`."""
    if not seeds:
        raise ParameterError("compare needs at least one seed")
    try:
        modes = [PropagationMode(m) for m in modes]
    except ValueError as e:
        raise ParameterError(f"unknown propagation mode: {e}") from e
    if not modes:
        raise ParameterError("compare_modes needs at least one propagation mode")
    if truth is None:
        truth = load_truth(cfg)

    runs: List[Dict] = []
    summaries = []
    curves = {}
    for mode in modes:
        mode_cfg = dataclasses.replace(cfg, propagation=dataclasses.replace(cfg.propagation, mode=mode))
        mode_runs, history = _paired_runs(mode_cfg, seeds, truth, verbose, extra={"mode": mode.value})
        runs.extend(mode_runs)
        mode_df = pd.DataFrame(mode_runs)
        summaries.append(summarize(mode_df).assign(mode=mode.value))
        for strategy, column in mean_curves(pd.DataFrame(history), cfg.max_iterations).items():
            curves[f"{mode.value}:{strategy}"] = column

    summary = pd.concat(summaries, ignore_index=True)
    summary = summary[["mode"] + [c for c in summary.columns if c != "mode"]]
    curves_df = pd.DataFrame(curves)
    curves_df.index.name = "iteration"
    return ComparisonResult(summary=summary, runs=pd.DataFrame(runs), curves=curves_df)


def summarize(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and population std per strategy and metric, plus a `mean ± std` string."""
    rows = []
    metrics = [(m, label) for m, label in METRICS if m in runs.columns]
    for strategy in STRATEGIES:
        sub = runs[runs["strategy"] == strategy.value]
        for metric, label in metrics:
            values = sub[metric].to_numpy(dtype=np.float64)
            mean = float(values.mean())
            std = float(values.std(ddof=0))
            rows.append({
                "strategy": strategy.value,
                "metric": label,
                "mean": mean,
                "std": std,
                "n_seeds": len(values),
                "formatted": f"{mean:.1f} ± {std:.1f}",
            })
    return pd.DataFrame(rows, columns=["strategy", "metric", "mean", "std", "n_seeds", "formatted"])


def mean_curves(history: pd.DataFrame, max_iterations: int) -> pd.DataFrame:
    """Mean chamfer per iteration; sessions that stopped early hold their last value."""
    wide = history.pivot_table(index="iteration", columns=["strategy", "seed"], values="chamfer_mm")
    wide = wide.reindex(range(max_iterations + 1)).ffill()
    curves = wide.T.groupby(level="strategy").mean().T
    curves = curves.reindex(columns=[s.value for s in STRATEGIES])
    curves.index.name = "iteration"
    return curves


def plot_curves(curves: pd.DataFrame, path: str, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for strategy in curves.columns:
        ax.plot(curves.index, curves[strategy], label=strategy)
    ax.set_xlabel("iteration (probe attempts)")
    ax.set_ylabel("chamfer distance (mm)")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
