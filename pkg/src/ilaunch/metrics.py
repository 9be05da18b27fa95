"""Report emission: CSV and JSON tables from run and sweep outcomes.

Seconds are printed with exactly 6 fractional digits. Internally times are
integer microseconds, so the printed value is the exact quantity and reruns
are byte-identical. The rate column is recomputed from the printed
launch-time string so the table is self-consistent for anyone re-deriving
rate = total_procs / launch_time_s from the file.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Optional

from .runner import RunOutcome, SweepOutcome, utilization_over
from .simcore import US_PER_S, SimTime

__all__ = [
    "SCHEMA_VERSION", "SWEEP_CSV_HEADER", "JOBS_CSV_HEADER", "seconds_str",
    "jobs_csv", "sweep_csv", "run_json", "sweep_json", "utilization_over",
]

SCHEMA_VERSION = 1

SWEEP_CSV_HEADER = "nnode,nproc,total_procs,launch_time_s,rate_procs_per_s"

JOBS_CSV_HEADER = (
    "job_id,user,app,state,submit_s,pending_s,launch_s,run_s,reject_reason"
)


def seconds_str(t_us: Optional[SimTime]) -> str:
    """Exact decimal seconds, 6 fractional digits; empty when unset."""
    if t_us is None:
        return ""
    sign = "-" if t_us < 0 else ""
    t_us = abs(t_us)
    return f"{sign}{t_us // US_PER_S}.{t_us % US_PER_S:06d}"


def _job_row(job) -> dict:
    run_us = None
    if job.complete_us is not None and job.launch_end_us is not None:
        run_us = job.complete_us - job.launch_end_us
    return {
        "job_id": job.job_id,
        "user": job.user,
        "app": job.app,
        "state": job.state.value,
        "submit_s": seconds_str(job.submit_us),
        "pending_s": seconds_str(job.pending_us),
        "launch_s": seconds_str(job.launch_us),
        "run_s": seconds_str(run_us),
        "reject_reason": job.reject_reason.value if job.reject_reason else "",
    }


def jobs_csv(outcome: RunOutcome) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(JOBS_CSV_HEADER.split(","))
    for job in outcome.jobs:
        row = _job_row(job)
        writer.writerow([row[k] for k in JOBS_CSV_HEADER.split(",")])
    return buf.getvalue()


def sweep_csv(outcome: SweepOutcome) -> str:
    lines = [SWEEP_CSV_HEADER]
    for c in outcome.cells:
        t_str = seconds_str(c.launch_time_us)
        rate = c.total_procs / float(t_str)
        lines.append(f"{c.nnode},{c.nproc},{c.total_procs},{t_str},{rate:.6f}")
    return "\n".join(lines) + "\n"


def run_json(outcome: RunOutcome) -> str:
    jobs = []
    for job in outcome.jobs:
        row = _job_row(job)
        jobs.append(
            {
                "job_id": row["job_id"],
                "user": row["user"],
                "app": row["app"],
                "state": row["state"],
                "submit_s": _num(row["submit_s"]),
                "pending_s": _num(row["pending_s"]),
                "attempt_delay_s": _num(seconds_str(job.attempt_delay_us)),
                "launch_s": _num(row["launch_s"]),
                "run_s": _num(row["run_s"]),
                "reject_reason": row["reject_reason"] or None,
                "tasks": job.shape.n_tasks,
                "slots": job.shape.slot_demand,
            }
        )
    states = {}
    for job in outcome.jobs:
        states[job.state.value] = states.get(job.state.value, 0) + 1
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "run",
        "scenario": outcome.scenario_name,
        "seed": outcome.seed,
        "policy": outcome.policy.value,
        "summary": {
            "jobs": len(outcome.jobs),
            "states": dict(sorted(states.items())),
            "rejections": dict(sorted(outcome.rejections.items())),
            "utilization": float(outcome.utilization),
            "max_scheduler_backlog": outcome.max_backlog,
            "makespan_s": _num(seconds_str(outcome.makespan_us)),
            "total_slots": outcome.total_slots,
        },
        "jobs": jobs,
    }
    return json.dumps(doc, indent=2) + "\n"


def sweep_json(outcome: SweepOutcome) -> str:
    cells = []
    for c in outcome.cells:
        t_str = seconds_str(c.launch_time_us)
        rate = c.total_procs / float(t_str)
        cells.append(
            {
                "nnode": c.nnode,
                "nproc": c.nproc,
                "total_procs": c.total_procs,
                "launch_time_s": float(t_str),
                "rate_procs_per_s": rate,
                "fs_wait_fraction": c.fs_wait_us / c.launch_time_us,
            }
        )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sweep",
        "scenario": outcome.scenario_name,
        "cells": cells,
        "skipped": [
            {"nnode": n, "nproc": p, "reason": reason}
            for n, p, reason in outcome.skipped
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def _num(s: str) -> Optional[float]:
    return float(s) if s else None
