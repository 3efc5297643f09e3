"""
VITRE Validation Report
Checks the bookkeeping of every session in a session log.

Usage:
    python src/utils/validate.py [--db-path data/output/vitre_session.db] [--session-id N]
"""

import os
import sys
import argparse

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from src.utils.common import DEFAULT_LOG_PATH, load_iteration_rows, open_existing_log


def check_session(conn, session: dict) -> list:
    """Problems found in one session; an empty list means it is consistent."""
    sid = session["session_id"]
    problems = []
    rows = load_iteration_rows(conn, sid)
    if not rows:
        return [f"session {sid}: no iteration records"]

    expected = list(range(len(rows)))
    if [r["iteration"] for r in rows] != expected:
        problems.append(f"session {sid}: iterations are not numbered 0..{len(rows) - 1}")

    if rows[0]["outcome"] != "prior":
        problems.append(f"session {sid}: iteration 0 is not the visual prior")

    contacts = 0
    previous = rows[0]
    for r in rows[1:]:
        if r["cumulative_failures"] < previous["cumulative_failures"]:
            problems.append(f"session {sid}: cumulative failures decrease at iteration {r['iteration']}")
        if r["outcome"] == "contact":
            contacts += 1
            if r["n_attractors"] != previous["n_attractors"] + 1:
                problems.append(f"session {sid}: contact at iteration {r['iteration']} "
                                f"did not add exactly one attractor")
        elif r["outcome"] == "failure":
            if r["n_attractors"] != previous["n_attractors"]:
                problems.append(f"session {sid}: failure at iteration {r['iteration']} changed attractors")
            if r["chamfer_mm"] != previous["chamfer_mm"]:
                problems.append(f"session {sid}: failure at iteration {r['iteration']} changed chamfer")
            if not r["failure_reason"]:
                problems.append(f"session {sid}: failure at iteration {r['iteration']} has no reason")
        else:
            problems.append(f"session {sid}: unknown outcome {r['outcome']!r} at iteration {r['iteration']}")
        if r["cumulative_failures"] + contacts != r["iteration"]:
            problems.append(f"session {sid}: failures + contacts != iterations at iteration {r['iteration']}")
        previous = r

    stored = conn.execute(
        "SELECT COUNT(*) FROM attractors WHERE session_id = ?", (sid,)
    ).fetchone()[0]
    if stored != rows[-1]["n_attractors"]:
        problems.append(f"session {sid}: {stored} attractors stored, last record says {rows[-1]['n_attractors']}")

    n = session["vertex_count"]
    for r in rows:
        if r["vertex_bytes"] != n * 3 * 8 or r["field_bytes"] != n * 8:
            problems.append(f"session {sid}: snapshot size mismatch at iteration {r['iteration']}")
            break
    return problems


def run_validation(db_path: str, session_id=None) -> list:
    conn = open_existing_log(db_path)

    print("=" * 60)
    print("VITRE Validation Report")
    print("=" * 60)

    query = "SELECT session_id, strategy, seed, truth_source, vertex_count, status FROM sessions"
    params = ()
    if session_id is not None:
        query += " WHERE session_id = ?"
        params = (session_id,)
    sessions = [dict(r) for r in conn.execute(query + " ORDER BY session_id", params).fetchall()]

    print(f"\n1. SESSIONS: {len(sessions)}")
    all_problems = []
    for s in sessions:
        rows = load_iteration_rows(conn, s["session_id"])
        final = rows[-1] if rows else None
        print(f"   #{s['session_id']} {s['truth_source']} / {s['strategy']} / seed {s['seed']} "
              f"[{s['status']}]: {len(rows)} records", end="")
        if final is not None:
            print(f", final chamfer {final['chamfer_mm']:.3f} mm, {final['cumulative_failures']} failures")
        else:
            print()
        all_problems.extend(check_session(conn, s))

    print("\n2. BOOKKEEPING")
    if all_problems:
        for p in all_problems:
            print(f"   ✗ {p}")
    else:
        print("   All sessions consistent ✓")

    print("\n3. PIPELINE RUNS")
    for row in conn.execute(
        "SELECT step_name, status, COUNT(*) FROM pipeline_runs GROUP BY step_name, status ORDER BY step_name"
    ).fetchall():
        print(f"   {row[0]} ({row[1]}): {row[2]}")

    conn.close()
    return all_problems


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--db-path", default=DEFAULT_LOG_PATH)
    parser.add_argument("--session-id", type=int, default=None)
    args = parser.parse_args()
    problems = run_validation(args.db_path, args.session_id)
    sys.exit(1 if problems else 0)
