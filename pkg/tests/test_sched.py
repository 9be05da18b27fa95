"""Scheduler policies, cycles, reservations, limits, and release semantics."""

import pytest

from ilaunch.cluster import AppImage, CentralFS, Cluster, NodeSpec
from ilaunch.launchmodel import LaunchMode, TimingModel
from ilaunch.sched import (
    Job,
    JobArray,
    JobState,
    Policy,
    RejectReason,
    Reservation,
    ReservationError,
    Scheduler,
    SchedulerConfig,
    SyncParallel,
)
from ilaunch.simcore import Engine, SimulationError, us_from_s

S = us_from_s
# fixed per-launch pipeline cost for f=0, load=0, 1 proc on 1 node:
# one hop + launcher start + one fork
PIPE_1x1 = 10_000 + 50_000 + 1_500


def make_sim(
    policy,
    n_nodes=4,
    cores=1,
    tpc=1,
    oversub=4,
    limit=None,
    f=0,
    load_s=0.0,
    period_s=0.1,
    depth=1000,
):
    """Small cluster with a free app image (no FS traffic by default), so
    completion times are dominated by scheduling behavior, not launch cost."""
    engine = Engine()
    cluster = Cluster(NodeSpec(cores, tpc, oversub), n_nodes, CentralFS(20000.0))
    apps = {"app": AppImage("app", f, max(f, 1000), load_s)}
    sched = Scheduler(
        engine,
        cluster,
        apps,
        policy,
        SchedulerConfig(period_s=period_s, depth=depth, t_sched_op_s=0.001),
        LaunchMode.TWO_TIER,
        TimingModel(),
        per_user_core_limit=limit,
    )
    engine.handler = sched.handle
    return engine, cluster, sched


def sync_job(job_id, n_nodes=1, procs=1, submit_s=0.0, duration_s=0.0, **kw):
    return Job(
        job_id=job_id,
        user=kw.pop("user", f"u{job_id}"),
        app="app",
        shape=SyncParallel(n_nodes, procs),
        submit_us=S(submit_s),
        duration_us=S(duration_s),
        **kw,
    )


def array_job(job_id, n_tasks, submit_s=0.0, duration_s=0.0, durations_s=None, **kw):
    durations_us = None if durations_s is None else [S(d) for d in durations_s]
    return Job(
        job_id=job_id,
        user=kw.pop("user", f"u{job_id}"),
        app="app",
        shape=JobArray(n_tasks=n_tasks, slots_per_task=kw.pop("slots_per_task", 1)),
        submit_us=S(submit_s),
        duration_us=None if durations_us else S(duration_s),
        durations_us=durations_us,
        **kw,
    )


# ---- submit paths ------------------------------------------------------------


def test_interactive_job_has_zero_pending_on_idle_cluster():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS)
    job = sync_job(1, interactive=True)
    sched.add_job(job)
    engine.run()
    assert job.state is JobState.COMPLETED
    assert job.pending_us == 0
    assert job.first_alloc_us == 0


def test_batch_submit_waits_for_the_next_cycle():
    engine, _, sched = make_sim(Policy.ALL_BATCH)
    job = sync_job(1, submit_s=0.07)
    sched.add_job(job)
    engine.run()
    assert job.first_alloc_us == S(0.1)
    assert job.pending_us == S(0.03)


def test_infeasible_shape_is_rejected():
    engine, _, sched = make_sim(Policy.ALL_BATCH, cores=64, tpc=4, oversub=2)
    job = sync_job(1, procs=600)
    sched.add_job(job)
    engine.run()
    assert job.state is JobState.REJECTED
    assert job.reject_reason is RejectReason.INFEASIBLE_SHAPE


def test_duplicate_job_id_rejected_at_add():
    engine, _, sched = make_sim(Policy.ALL_BATCH)
    sched.add_job(sync_job(1))
    with pytest.raises(ValueError):
        sched.add_job(sync_job(1))


def test_job_needs_exactly_one_duration_form():
    with pytest.raises(ValueError):
        Job(job_id=1, user="u", app="app", shape=SyncParallel(1, 1), submit_us=0)


# ---- per-user limits ---------------------------------------------------------


def test_over_limit_interactive_request_rejected_at_boundary():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS, limit=4)
    holder = array_job(1, 4, duration_s=100.0, interactive=True, user="alice")
    one_more = sync_job(2, submit_s=1.0, interactive=True, user="alice")
    sched.add_job(holder)
    sched.add_job(one_more)
    engine.run()
    assert holder.state is JobState.COMPLETED
    assert one_more.state is JobState.REJECTED
    assert one_more.reject_reason is RejectReason.LIMIT_EXCEEDED


def test_request_exactly_at_limit_is_allowed():
    # 512 nodes x 64 procs = 32,768 requested slots against a 32,768 limit
    engine, _, sched = make_sim(
        Policy.INTERACTIVE_WITH_LIMITS, n_nodes=648, cores=64, tpc=4, oversub=2,
        limit=32_768,
    )
    job = sync_job(1, n_nodes=512, procs=64, interactive=True)
    sched.add_job(job)
    engine.run()
    assert job.state is JobState.COMPLETED
    assert job.first_alloc_us == 0
    assert job.pending_us == 0


def test_batch_jobs_under_limit_policy_queue_instead_of_rejecting():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS, n_nodes=1)
    blocker = sync_job(1, duration_s=5.0, interactive=True, procs=4)
    batch = sync_job(2, submit_s=1.0, procs=4)  # no resources until blocker ends
    sched.add_job(blocker)
    sched.add_job(batch)
    engine.run()
    assert batch.state is JobState.COMPLETED
    assert batch.pending_us > 0


def test_interactive_no_resources_is_rejected():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS, n_nodes=1)
    blocker = sync_job(1, duration_s=5.0, interactive=True, procs=4)
    walkin = sync_job(2, submit_s=1.0, interactive=True, procs=4)
    sched.add_job(blocker)
    sched.add_job(walkin)
    engine.run()
    assert walkin.state is JobState.REJECTED
    assert walkin.reject_reason is RejectReason.NO_RESOURCES


def test_user_slots_never_exceed_limit_during_run():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS, limit=4)
    inner = sched.handle

    peaks = []

    def guarded(ev):
        inner(ev)
        peaks.append(max(sched.user_slots.values(), default=0))

    engine.handler = guarded
    sched.add_job(array_job(1, 10, duration_s=0.05, user="alice"))
    sched.add_job(array_job(2, 6, submit_s=0.01, duration_s=0.05, user="alice", interactive=True))
    engine.run()
    assert max(peaks) <= 4


# ---- scheduling cycles -------------------------------------------------------


def test_cycle_depth_cut():
    # submits at t=0 land on the cycle-grid point at t=0, so the first
    # depth=2 jobs allocate immediately and the third waits one period
    engine, _, sched = make_sim(Policy.ALL_BATCH, n_nodes=3, depth=2)
    jobs = [sync_job(i, duration_s=10.0) for i in (1, 2, 3)]
    for j in jobs:
        sched.add_job(j)
    engine.run(horizon=S(0.05))
    assert [j.first_alloc_us for j in jobs[:2]] == [0, 0]
    assert jobs[2].first_alloc_us is None
    engine.run()
    assert jobs[2].first_alloc_us == S(0.1)


def test_gang_is_all_or_nothing():
    engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=4)
    holder = sync_job(1, n_nodes=1, duration_s=10.0)
    wide = sync_job(2, n_nodes=4, submit_s=0.05)
    sched.add_job(holder)
    sched.add_job(wide)
    engine.run(horizon=S(5.0))
    assert wide.first_alloc_us is None
    assert cluster.total_allocated == 4  # only the holder's whole node
    engine.run()
    assert wide.state is JobState.COMPLETED


def test_array_takes_any_subset_that_fits():
    engine, _, sched = make_sim(Policy.ALL_BATCH, n_nodes=1)  # one 4-slot node
    job = array_job(1, 10, duration_s=50.0)
    sched.add_job(job)
    engine.run(horizon=S(0.15))
    assert job.tasks_allocated == 4
    assert job.state is JobState.LAUNCHING or job.state is JobState.RUNNING


def test_priority_orders_the_queue():
    engine, _, sched = make_sim(Policy.ALL_BATCH, n_nodes=1)
    low = sync_job(1, procs=4, duration_s=1.0, priority=5)
    high = sync_job(2, procs=4, duration_s=1.0, priority=1)
    sched.add_job(low)
    sched.add_job(high)
    engine.run()
    assert high.first_alloc_us < low.first_alloc_us


def test_fifo_among_equal_priorities():
    engine, _, sched = make_sim(Policy.ALL_BATCH, n_nodes=1)
    first = sync_job(1, procs=4, duration_s=1.0)
    second = sync_job(2, procs=4, duration_s=1.0)
    sched.add_job(first)
    sched.add_job(second)
    engine.run()
    assert first.first_alloc_us < second.first_alloc_us


def test_first_fit_prefers_lowest_node_ids():
    engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=3)
    job = sync_job(1, n_nodes=2, duration_s=10.0)
    sched.add_job(job)
    engine.run(horizon=S(1.0))
    assert cluster.free_slots(1) == 0
    assert cluster.free_slots(2) == 0
    assert cluster.free_slots(3) == 4


# ---- scheduler flooding ------------------------------------------------------


def test_immediate_burst_serializes_attempts():
    engine, _, sched = make_sim(Policy.ALL_IMMEDIATE, n_nodes=648, cores=64, tpc=4, oversub=2)
    jobs = [sync_job(i, interactive=False) for i in range(1, 11)]
    for j in jobs:
        sched.add_job(j)
    engine.run()
    assert [j.attempt_delay_us for j in jobs] == [i * 1000 for i in range(10)]
    assert sched.max_backlog == 9
    assert all(j.state is JobState.COMPLETED for j in jobs)


def test_backlog_grows_monotonically_during_burst():
    engine, _, sched = make_sim(Policy.ALL_IMMEDIATE)
    for i in range(1, 6):
        sched.add_job(sync_job(i))
    engine.run()
    burst = [b for t, b in sched.backlog_trace if t == 0]
    assert burst == sorted(burst)


def test_all_immediate_queues_when_full_instead_of_rejecting():
    engine, _, sched = make_sim(Policy.ALL_IMMEDIATE, n_nodes=1)
    a = sync_job(1, procs=4, duration_s=2.0)
    b = sync_job(2, procs=4, submit_s=0.5)
    sched.add_job(a)
    sched.add_job(b)
    engine.run()
    assert a.state is JobState.COMPLETED
    assert b.state is JobState.COMPLETED
    assert b.pending_us > 0


# ---- release semantics -------------------------------------------------------


def test_gang_holds_all_slots_until_last_task():
    engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=2)
    job = Job(
        job_id=1, user="u", app="app", shape=SyncParallel(2, 1),
        submit_us=0, durations_us=[S(1.0), S(10.0)],
    )
    sched.add_job(job)
    engine.run(horizon=S(5.0))
    # the 1 s task is long done, yet nothing has been released
    assert cluster.total_allocated == cluster.total_slots
    engine.run()
    assert job.state is JobState.COMPLETED
    assert cluster.total_allocated == 0
    assert job.complete_us == job.launch_end_us + S(10.0)


def test_array_releases_each_task_as_it_finishes():
    engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=2, oversub=1)
    job = array_job(1, 2, durations_s=[1.0, 10.0])
    sched.add_job(job)
    engine.run(horizon=S(5.0))
    assert cluster.total_allocated == 1  # the 10 s task only
    engine.run()
    assert cluster.total_allocated == 0
    assert job.state is JobState.COMPLETED


def test_gang_allocations_start_and_end_together():
    engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=3)
    job = sync_job(1, n_nodes=3, duration_s=1.0)
    sched.add_job(job)
    engine.run()
    times = {}
    prev_total = 0
    for t, total in cluster.alloc_trace:
        times.setdefault(t, []).append(total - prev_total)
        prev_total = total
    grow = [t for t, deltas in times.items() if all(d > 0 for d in deltas)]
    shrink = [t for t, deltas in times.items() if all(d < 0 for d in deltas)]
    assert len(grow) == 1 and len(shrink) == 1


# ---- reservations ------------------------------------------------------------


def make_reserved_sim():
    engine, cluster, sched = make_sim(Policy.BATCH_WITH_RESERVATIONS, n_nodes=4)
    res = Reservation(res_id="win", node_count=2, start_us=S(10.0), duration_us=S(10.0))
    sched.add_reservation(res)
    return engine, cluster, sched, res


def test_reservation_binds_lowest_free_nodes_at_creation():
    _, _, _, res = make_reserved_sim()
    assert res.node_ids == [1, 2]


def test_batch_job_waits_out_the_reservation_window():
    engine, _, sched, _ = make_reserved_sim()
    job = sync_job(1, n_nodes=3, submit_s=12.0, duration_s=1.0)
    sched.add_job(job)
    engine.run()
    assert job.first_alloc_us == S(20.0)
    assert job.state is JobState.COMPLETED


def test_reserved_job_submitted_early_starts_exactly_at_window_open():
    engine, _, sched, _ = make_reserved_sim()
    job = sync_job(1, n_nodes=2, submit_s=5.0, duration_s=1.0, reservation_id="win")
    sched.add_job(job)
    engine.run()
    assert job.first_alloc_us == S(10.0)
    assert job.pending_us == S(5.0)
    assert job.state is JobState.COMPLETED


def test_reserved_job_during_window_lands_on_reserved_nodes():
    engine, cluster, sched, _ = make_reserved_sim()
    job = sync_job(1, n_nodes=2, submit_s=11.0, duration_s=1.0, reservation_id="win")
    sched.add_job(job)
    engine.run(horizon=S(11.5))
    assert job.first_alloc_us == S(11.0)
    assert cluster.free_slots(1) == 0 and cluster.free_slots(2) == 0
    assert cluster.free_slots(3) == 4 and cluster.free_slots(4) == 4
    engine.run()


def test_general_jobs_avoid_reserved_nodes_during_window():
    engine, cluster, sched, _ = make_reserved_sim()
    job = sync_job(1, n_nodes=1, submit_s=11.0, duration_s=0.5)
    sched.add_job(job)
    engine.run(horizon=S(11.2))
    assert cluster.free_slots(1) == 4 and cluster.free_slots(2) == 4
    assert cluster.free_slots(3) == 0
    engine.run()


def test_oversized_reservation_rejected():
    engine, _, sched = make_sim(Policy.BATCH_WITH_RESERVATIONS, n_nodes=4)
    with pytest.raises(ReservationError):
        sched.add_reservation(
            Reservation(res_id="big", node_count=5, start_us=S(1.0), duration_us=S(1.0))
        )


def test_overlapping_reservations_beyond_capacity_rejected():
    engine, _, sched = make_sim(Policy.BATCH_WITH_RESERVATIONS, n_nodes=4)
    sched.add_reservation(
        Reservation(res_id="a", node_count=3, start_us=S(10.0), duration_us=S(10.0))
    )
    with pytest.raises(ReservationError):
        sched.add_reservation(
            Reservation(res_id="b", node_count=2, start_us=S(15.0), duration_us=S(10.0))
        )
    # disjoint window is fine
    sched.add_reservation(
        Reservation(res_id="c", node_count=2, start_us=S(20.0), duration_us=S(5.0))
    )


def test_unreserved_window_end_returns_nodes():
    engine, cluster, sched, _ = make_reserved_sim()
    late = sync_job(1, n_nodes=4, submit_s=1.0, duration_s=0.5)
    sched.add_job(late)
    engine.run()
    assert late.first_alloc_us == S(20.0)
    assert late.state is JobState.COMPLETED


# ---- utilization of the two shapes -------------------------------------------


def test_gang_integrates_more_allocated_time_than_array_on_skewed_tasks():
    """With allocated-slot utilization, a gang holding both slots to the last
    task integrates strictly more core-time than an array that releases early."""
    from ilaunch.runner import utilization_over

    results = {}
    for shape in ("sync", "array"):
        engine, cluster, sched = make_sim(Policy.ALL_BATCH, n_nodes=2, oversub=1)
        if shape == "sync":
            job = Job(
                job_id=1, user="u", app="app", shape=SyncParallel(2, 1),
                submit_us=0, durations_us=[S(1.0), S(10.0)],
            )
        else:
            job = array_job(1, 2, durations_s=[1.0, 10.0])
        sched.add_job(job)
        engine.run()
        results[shape] = utilization_over(
            cluster.alloc_trace, cluster.total_slots, 0, job.complete_us
        )
    assert results["sync"] > results["array"]


def test_array_release_lets_queued_work_start_earlier():
    def run(shape):
        engine, _, sched = make_sim(Policy.ALL_BATCH, n_nodes=2, oversub=1)
        if shape == "sync":
            first = Job(
                job_id=1, user="u", app="app", shape=SyncParallel(2, 1),
                submit_us=0, durations_us=[S(1.0), S(10.0)],
            )
        else:
            first = array_job(1, 2, durations_s=[1.0, 10.0])
        follow = sync_job(2, submit_s=0.5, duration_s=1.0)
        sched.add_job(first)
        sched.add_job(follow)
        engine.run()
        return follow.first_alloc_us

    assert run("array") < run("sync")


# ---- state machine -----------------------------------------------------------


def test_invalid_transition_is_hard_error():
    engine, _, sched = make_sim(Policy.ALL_BATCH)
    job = sync_job(1)
    sched.add_job(job)
    with pytest.raises(SimulationError):
        sched._set_state(job, JobState.RUNNING)


def test_every_job_ends_completed_or_rejected():
    engine, _, sched = make_sim(Policy.INTERACTIVE_WITH_LIMITS, n_nodes=2, limit=6)
    jobs = [
        sync_job(1, duration_s=0.3, interactive=True),
        array_job(2, 5, submit_s=0.1, duration_s=0.2),
        sync_job(3, procs=600, submit_s=0.2),           # infeasible
        array_job(4, 8, submit_s=0.3, duration_s=0.1, interactive=True, user="u2"),
        sync_job(5, n_nodes=2, submit_s=0.4, duration_s=0.1),
    ]
    for j in jobs:
        sched.add_job(j)
    engine.run()
    assert all(j.state in (JobState.COMPLETED, JobState.REJECTED) for j in jobs)
