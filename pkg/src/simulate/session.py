"""
One reconstruction session against a ground-truth mesh.

Iteration 0 is the visual-only estimate: fit the ellipsoid to the visual
attractors, deform it, propagate uncertainty. Every later iteration is one
probe attempt:

  1. pick a candidate vertex on the current estimate (configured strategy),
  2. probe the truth along the candidate's estimated normal,
  3. on contact add a tactile attractor, then refit (warm start), re-deform
     and re-propagate; on failure change nothing,
  4. measure chamfer between estimate and truth and append a record.

A failed attempt leaves the estimate as it was. Selection is deterministic,
so without `exploration.skip_failed` the same vertex is picked again until a
noisy attempt succeeds; with it the failed vertices are kept out of `ours`
selection until the next contact moves the estimate.
"""

from __future__ import annotations

import csv
import os
import sqlite3
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Set

import numpy as np

from src.estimate.local_deform import RbfInterpolant, deform_estimate
from src.estimate.template_fit import EllipsoidParams, fit_ellipsoid, init_params, instantiate_template
from src.estimate.uncertainty_field import UncertaintyField, init_field, propagate
from src.explore.strategy import CandidateScore, candidate_pose, select_next, write_scores_csv
from src.geometry.mesh import TriangleMesh, make_icosphere
from src.geometry.mesh_io import load_mesh, save_ply
from src.geometry.sampling import chamfer_distance, sample_surface
from src.geometry.shapes import make_shape
from src.sensing.attractors import Attractor, count_by_source, read_attractors
from src.sensing.tactile import tactile_attractor
from src.sensing.visual import sample_visual_prior, visible_area_fraction
from src.simulate.probe import ProbeResult, probe_rng, simulate_probe
from src.utils.common import (
    finish_session, insert_attractors, insert_iteration, insert_session, log_pipeline_run, now_iso,
)
from src.utils.config import SessionConfig
from src.utils.errors import ConfigurationError, EmptyPriorError, ExplorationComplete, SessionIOError

PRIOR = "prior"
METRIC_FIELDS = ["iteration", "chamfer_mm", "cumulative_failures", "n_attractors", "selected_vertex", "outcome"]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    chamfer: float  # meters
    cumulative_failures: int
    n_attractors: int
    selected_vertex: int
    outcome: str
    failure_reason: Optional[str] = None

    @property
    def chamfer_mm(self) -> float:
        return self.chamfer * 1000.0

    def as_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "chamfer_mm": f"{self.chamfer_mm:.6f}",
            "cumulative_failures": self.cumulative_failures,
            "n_attractors": self.n_attractors,
            "selected_vertex": self.selected_vertex,
            "outcome": self.outcome,
        }


@dataclass
class SessionState:
    cfg: SessionConfig
    truth: TriangleMesh
    template: TriangleMesh
    truth_cloud: np.ndarray
    attractors: List[Attractor]
    params: EllipsoidParams
    global_mesh: TriangleMesh
    estimate: TriangleMesh
    interpolant: RbfInterpolant
    field: UncertaintyField
    records: List[IterationRecord] = field(default_factory=list)
    failures: int = 0
    contacts: int = 0
    excluded: Set[int] = field(default_factory=set)
    finished: bool = False
    last_scores: List[CandidateScore] = field(default_factory=list)
    last_probe: Optional[ProbeResult] = None

    @property
    def iteration(self) -> int:
        return len(self.records) - 1


@dataclass
class SessionResult:
    records: List[IterationRecord]
    truth: TriangleMesh
    estimate: TriangleMesh
    field: UncertaintyField
    params: EllipsoidParams
    attractors: List[Attractor]
    session_id: Optional[int] = None
    terminated_early: bool = False


def load_truth(cfg: SessionConfig) -> TriangleMesh:
    if cfg.truth_mesh_path:
        return load_mesh(cfg.truth_mesh_path)
    return make_shape(cfg.truth_shape, cfg.truth_subdivisions)


def estimate_chamfer(state: SessionState) -> float:
    cloud = sample_surface(state.estimate, state.cfg.chamfer_samples, state.cfg.seed + 1)
    return chamfer_distance(cloud, state.truth_cloud)


def _rebuild_estimate(state: SessionState, init: EllipsoidParams) -> None:
    cfg = state.cfg
    state.params = fit_ellipsoid(state.attractors, init, cfg.fit)
    state.global_mesh = instantiate_template(state.template, state.params)
    state.estimate, state.interpolant = deform_estimate(state.global_mesh, state.attractors, state.params, cfg.deform)
    state.field = propagate(init_field(state.estimate, cfg.propagation), state.estimate, state.attractors)


def run_init(cfg: SessionConfig, truth: Optional[TriangleMesh] = None,
             prior: Optional[Sequence[Attractor]] = None) -> SessionState:
    """Iteration-0 estimate and record, from the visual prior or from `prior` when given."""
    if truth is None:
        truth = load_truth(cfg)
    if prior is not None:
        if not prior:
            raise ConfigurationError("replayed attractor set is empty")
        visual = list(prior)
    else:
        try:
            visual = sample_visual_prior(truth, cfg.visual)
        except EmptyPriorError as e:
            raise ConfigurationError(f"visual prior is empty: {e}") from e

    template = make_icosphere(1.0, cfg.template_subdivisions)
    params = init_params(visual, cfg.fit.init_scale_factor)
    state = SessionState(
        cfg=cfg,
        truth=truth,
        template=template,
        truth_cloud=sample_surface(truth, cfg.chamfer_samples, cfg.seed),
        attractors=list(visual),
        params=params,
        global_mesh=template,
        estimate=template,
        interpolant=RbfInterpolant.constant(0.0),
        field=init_field(template, cfg.propagation),
    )
    _rebuild_estimate(state, params)
    state.records.append(IterationRecord(
        iteration=0,
        chamfer=estimate_chamfer(state),
        cumulative_failures=0,
        n_attractors=len(state.attractors),
        selected_vertex=-1,
        outcome=PRIOR,
    ))
    return state


def run_iteration(state: SessionState):
    """One probe attempt; returns (state, record). Raises ExplorationComplete."""
    cfg = state.cfg
    iteration = state.iteration + 1
    vertex, scores = select_next(state.estimate, state.field, cfg.exploration, state.excluded)
    state.last_scores = scores
    pose = candidate_pose(state.estimate, vertex)
    result = simulate_probe(state.truth, pose, cfg, probe_rng(cfg, iteration))
    state.last_probe = result

    if result.is_contact:
        state.contacts += 1
        state.attractors.append(tactile_attractor(result.attractor_position, result.reading, cfg.sensor))
        state.excluded.clear()
        _rebuild_estimate(state, state.params)
        chamfer = estimate_chamfer(state)
        reason = None
    else:
        state.failures += 1
        if cfg.exploration.skip_failed:
            state.excluded.add(vertex)
        chamfer = state.records[-1].chamfer
        reason = result.failure_reason.value

    record = IterationRecord(
        iteration=iteration,
        chamfer=chamfer,
        cumulative_failures=state.failures,
        n_attractors=len(state.attractors),
        selected_vertex=vertex,
        outcome=result.outcome.value,
        failure_reason=reason,
    )
    state.records.append(record)
    return state, record


def run_session(cfg: SessionConfig, truth: Optional[TriangleMesh] = None,
                conn: Optional[sqlite3.Connection] = None,
                snapshot_dir: Optional[str] = None, scores_dir: Optional[str] = None,
                verbose: bool = False, prior: Optional[Sequence[Attractor]] = None) -> SessionResult:
    """Iteration 0 plus up to cfg.max_iterations probe attempts.

    With `conn`, every record, the estimate it ended on and each new
    attractor are written to the session log. `prior` replaces the sampled
    visual prior as the iteration-0 attractor set.
    """
    started = now_iso()
    if verbose:
        print(f"  Truth: {cfg.truth_source}")
        print(f"  Strategy: {cfg.exploration.strategy.value}, seed {cfg.seed}, "
              f"{cfg.max_iterations} probe attempts")

    state = run_init(cfg, truth, prior)
    if verbose:
        if prior is not None:
            counts = count_by_source(state.attractors)
            print(f"  Replayed prior: {counts['visual']} visual + {counts['tactile']} tactile attractors")
        else:
            coverage = visible_area_fraction(state.truth, cfg.visual)
            print(f"  Visual prior: {len(state.attractors)} attractors, "
                  f"~{coverage * 100:.1f}% of the surface in view")
        print(f"  Iteration 0: chamfer {state.records[0].chamfer_mm:.3f} mm")

    session_id = None
    if conn is not None:
        session_id = insert_session(
            conn, cfg.exploration.strategy.value, cfg.seed, cfg.truth_source, cfg.to_text(),
            state.estimate.vertex_count, state.estimate.faces,
        )
        insert_attractors(conn, session_id, 0, state.attractors)
        _log_record(conn, session_id, state)

    _write_snapshot(snapshot_dir, state)

    terminated_early = False
    for _ in range(cfg.max_iterations):
        try:
            _, record = run_iteration(state)
        except ExplorationComplete as e:
            terminated_early = True
            if verbose:
                print(f"  Exploration complete after {state.iteration} attempts: {e}")
            break
        if conn is not None:
            if record.outcome == "contact":
                insert_attractors(conn, session_id, record.iteration, state.attractors[-1:])
            _log_record(conn, session_id, state)
        _write_snapshot(snapshot_dir, state)
        if scores_dir and state.last_scores:
            write_scores_csv(os.path.join(scores_dir, f"scores_iter_{record.iteration:03d}.csv"),
                             state.last_scores)
        if verbose:
            detail = record.failure_reason or f"u={state.attractors[-1].uncertainty:.3f}"
            print(f"  [{record.iteration}/{cfg.max_iterations}] vertex {record.selected_vertex}: "
                  f"{record.outcome} ({detail}), chamfer {record.chamfer_mm:.3f} mm, "
                  f"failures {record.cumulative_failures}")

    state.finished = True
    if conn is not None:
        counts = count_by_source(state.attractors)
        notes = (f"{state.contacts} contacts, {state.failures} failures, "
                 f"{counts['visual']} visual + {counts['tactile']} tactile attractors")
        finish_session(conn, session_id, "early_stop" if terminated_early else "completed", notes)
        log_pipeline_run(conn, "run_session", "completed", records_processed=len(state.records),
                         notes=f"session {session_id}: {notes}", started_at=started)

    return SessionResult(
        records=list(state.records),
        truth=state.truth,
        estimate=state.estimate,
        field=state.field,
        params=state.params,
        attractors=list(state.attractors),
        session_id=session_id,
        terminated_early=terminated_early,
    )


def replay_session(cfg: SessionConfig, attractors_path: str, **kwargs) -> SessionResult:
    """Resume exploration from an attractor file written by a previous run."""
    return run_session(cfg, prior=read_attractors(attractors_path), **kwargs)


def _log_record(conn: sqlite3.Connection, session_id: int, state: SessionState) -> None:
    insert_iteration(conn, session_id, state.records[-1], state.params.to_record(),
                     state.estimate.vertices, state.field.values)
    conn.commit()


def _write_snapshot(snapshot_dir: Optional[str], state: SessionState) -> None:
    if snapshot_dir:
        path = os.path.join(snapshot_dir, f"iter_{state.iteration:03d}.ply")
        save_ply(path, state.estimate, state.field.values)


def write_metrics_csv(path: str, records: List[IterationRecord]) -> None:
    """Metrics table, one row per record; byte-identical for identical records."""
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(r.as_row() for r in records)
    except OSError as e:
        raise SessionIOError(f"cannot write metrics {path}: {e}") from e
