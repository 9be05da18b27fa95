"""Builds simulations from scenarios and drives single runs and sweep grids."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .cluster import AppImage, CentralFS, Cluster, NodeSpec
from .launchmodel import LaunchRecord
from .sched import Job, Policy, Reservation, Scheduler, SchedulerConfig, SyncParallel
from .simcore import Engine, Event, SimTime, us_from_s
from .workload import JobEntry, Scenario, generate_jobs


@dataclass
class RunOutcome:
    scenario_name: str
    seed: int
    policy: Policy
    jobs: list[Job]
    end_us: SimTime
    makespan_us: SimTime
    utilization: Fraction
    max_backlog: int
    rejections: dict[str, int]
    total_slots: int


@dataclass(frozen=True)
class CellOutcome:
    nnode: int
    nproc: int
    total_procs: int
    launch_time_us: SimTime
    dispatch_us: SimTime
    launcher_us: SimTime
    fork_wait_us: SimTime
    load_us: SimTime
    fs_wait_us: SimTime

    @property
    def fs_wait_fraction(self) -> float:
        return self.fs_wait_us / self.launch_time_us


@dataclass
class SweepOutcome:
    scenario_name: str
    cells: list[CellOutcome] = field(default_factory=list)
    skipped: list[tuple[int, int, str]] = field(default_factory=list)


def build_sim(
    scenario: Scenario, trace_fn: Optional[Callable[[Event], None]] = None
) -> tuple[Engine, Cluster, Scheduler]:
    engine = Engine()
    engine.trace_fn = trace_fn
    fs = CentralFS(scenario.fs.mu_requests_per_s)
    spec = NodeSpec(
        cores=scenario.cluster.cores,
        threads_per_core=scenario.cluster.threads_per_core,
        oversub_max=scenario.cluster.oversub_max,
    )
    cluster = Cluster(spec, scenario.cluster.nodes, fs)
    apps = {}
    for a in scenario.apps:
        cached_nodes = None if a.cached else set(a.cached_nodes or ())
        apps[a.name] = AppImage(
            a.name, a.f_central, a.f_central_nocache, a.t_local_load_s, cached_nodes
        )
    scheduler = Scheduler(
        engine,
        cluster,
        apps,
        scenario.policy,
        SchedulerConfig(
            period_s=scenario.scheduler.period_s,
            depth=scenario.scheduler.depth,
            t_sched_op_s=scenario.scheduler.t_sched_op_s,
        ),
        scenario.launch_mode,
        scenario.timing,
        per_user_core_limit=scenario.per_user_cores,
    )
    engine.handler = scheduler.handle
    return engine, cluster, scheduler


def job_from_entry(e: JobEntry) -> Job:
    return Job(
        job_id=e.id,
        user=e.user,
        app=e.app,
        shape=e.shape,
        submit_us=us_from_s(e.submit_s),
        interactive=e.interactive,
        priority=e.priority,
        reservation_id=e.reservation,
        duration_us=None if e.duration_s is None else us_from_s(e.duration_s),
        durations_us=(
            None
            if e.durations_s is None
            else [us_from_s(d) for d in e.durations_s]
        ),
    )


def scenario_jobs(scenario: Scenario) -> list[Job]:
    entries = scenario.jobs
    if scenario.generate is not None:
        entries = generate_jobs(scenario.generate, scenario.seed)
    return [job_from_entry(e) for e in entries]


def utilization_over(
    alloc_trace: list[tuple[SimTime, int]],
    total_slots: int,
    start_us: SimTime,
    end_us: SimTime,
) -> Fraction:
    """Allocated core-time in [start, end) divided by total capacity there."""
    if end_us <= start_us:
        raise ValueError("utilization window is empty")
    core_us = 0
    level = 0
    prev = start_us
    for t, total in alloc_trace:
        if t <= start_us:
            level = total
            continue
        if t >= end_us:
            break
        core_us += level * (t - prev)
        prev = t
        level = total
    core_us += level * (end_us - prev)
    return Fraction(core_us, total_slots * (end_us - start_us))


def run_scenario(
    scenario: Scenario,
    horizon_s: Optional[float] = None,
    trace_fn: Optional[Callable[[Event], None]] = None,
) -> RunOutcome:
    """Run a job-list (or generated) scenario to completion or horizon."""
    engine, cluster, scheduler = build_sim(scenario, trace_fn)
    for r in scenario.reservations:
        scheduler.add_reservation(
            Reservation(
                res_id=r.id,
                node_count=r.node_count,
                start_us=us_from_s(r.start_s),
                duration_us=us_from_s(r.duration_s),
            )
        )
    jobs = scenario_jobs(scenario)
    for job in jobs:
        scheduler.add_job(job)
    if horizon_s is None:
        horizon_s = scenario.horizon_s
    horizon_us = None if horizon_s is None else us_from_s(horizon_s)
    end_us = engine.run(horizon_us)
    makespan_us = max(
        (j.complete_us for j in jobs if j.complete_us is not None), default=end_us
    )
    if makespan_us > 0:
        utilization = utilization_over(
            cluster.alloc_trace, cluster.total_slots, 0, makespan_us
        )
    else:
        utilization = Fraction(0)
    rejections: dict[str, int] = {}
    for j in jobs:
        if j.reject_reason is not None:
            key = j.reject_reason.value
            rejections[key] = rejections.get(key, 0) + 1
    return RunOutcome(
        scenario_name=scenario.name,
        seed=scenario.seed,
        policy=scenario.policy,
        jobs=jobs,
        end_us=end_us,
        makespan_us=makespan_us,
        utilization=utilization,
        max_backlog=scheduler.max_backlog,
        rejections=rejections,
        total_slots=cluster.total_slots,
    )


def partition_cells(scenario: Scenario):
    """Split the sweep grid into runnable cells and (cell, reason) skips."""
    sweep = scenario.sweep
    if sweep is None:
        raise ValueError("scenario has no sweep section")
    cap = scenario.cluster.slots_per_node
    runnable: list[tuple[int, int]] = []
    skipped: list[tuple[int, int, str]] = []
    for nnode in sweep.nnode_list:
        for nproc in sweep.nproc_list:
            if nnode > scenario.cluster.nodes:
                skipped.append(
                    (nnode, nproc, f"needs {nnode} nodes, cluster has {scenario.cluster.nodes}")
                )
            elif nproc > cap:
                skipped.append(
                    (nnode, nproc, f"{nproc} procs per node exceeds the {cap}-slot capacity")
                )
            else:
                runnable.append((nnode, nproc))
    return runnable, skipped


def run_cell(args: tuple[Scenario, int, int]) -> CellOutcome:
    """One sweep cell: a fresh engine launching a single gang job at t=0."""
    scenario, nnode, nproc = args
    engine, _cluster, scheduler = build_sim(scenario)
    job = Job(
        job_id=1,
        user="sweep",
        app=scenario.sweep.app,
        shape=SyncParallel(n_nodes=nnode, procs_per_node=nproc),
        submit_us=0,
        interactive=True,
        duration_us=0,
    )
    scheduler.add_job(job)
    engine.run()
    if len(job.launch_records) != 1 or not job.launch_records[0].done:
        raise RuntimeError(f"sweep cell ({nnode}, {nproc}) did not produce a launch")
    rec: LaunchRecord = job.launch_records[0]
    crit = rec.critical
    return CellOutcome(
        nnode=nnode,
        nproc=nproc,
        total_procs=rec.total_procs,
        launch_time_us=rec.launch_time_us,
        dispatch_us=crit.dispatch_us,
        launcher_us=crit.launcher_us,
        fork_wait_us=crit.fork_wait_us,
        load_us=crit.load_us,
        fs_wait_us=crit.fs_wait_us,
    )


def run_sweep(scenario: Scenario, workers: int = 1) -> SweepOutcome:
    """Run every feasible sweep cell; results are in grid order regardless
    of worker count because cells are independent engines."""
    runnable, skipped = partition_cells(scenario)
    tasks = [(scenario, nnode, nproc) for nnode, nproc in runnable]
    if workers <= 1 or len(tasks) <= 1:
        cells = [run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run_cell, tasks))
    return SweepOutcome(scenario_name=scenario.name, cells=cells, skipped=skipped)
