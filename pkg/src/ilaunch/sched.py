"""Scheduling policies, reservations, and the job lifecycle.

Jobs move strictly forward through Submitted -> Pending -> Allocated ->
Launching -> Running -> Completed, or Submitted -> Rejected; no state is
visited twice. Two shapes exist: SyncParallel gangs take whole nodes
all-or-nothing and hold every allocation until the last process finishes,
while JobArray tasks allocate independently (any subset that fits) and each
task releases its slots the moment it completes.

Policies:

  all_batch                 every job waits in the queue for a periodic
                            scheduling cycle.
  batch_with_reservations   all_batch plus advance reservations that pin
                            concrete nodes at creation time.
  interactive_with_limits   interactive jobs get an immediate scheduling
                            attempt at submit and are rejected rather than
                            queued (over the per-user slot limit, or no
                            resources free); batch jobs queue as in all_batch.
  all_immediate             every job attempts immediately and queues on
                            failure; no limits.

The scheduler itself is a serial resource: every immediate attempt and every
job examined in a cycle costs t_sched_op of scheduler busy time. Decisions
take effect at the start of their attempt; the busy window delays later
attempts (that queueing delay is reported per job as attempt_delay, distinct
from time spent Pending, which interactive jobs never accumulate). Periodic
cycles stay on the period grid and are only scheduled while there is queued
work, so runs quiesce.

Reservations bind their node ids at creation (lowest node id first,
currently-free nodes preferred) and those nodes are excluded from general
allocation from creation until the window ends, which is what guarantees no
stray allocation can overlap the window (end times of general jobs are not
knowable in advance, so exclusion must start early). Jobs carrying the
reservation id wait in Pending and start exactly at the window start if they
fit; leftover waiters retry each cycle during the window and fall back to
the general queue when the window closes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union

from .cluster import AllocationFailure, AppImage, Cluster
from .launchmodel import (
    LaunchCoordinator,
    LaunchMode,
    LaunchRecord,
    TimingModel,
    combined_launch_time,
)
from .simcore import (
    US_PER_S,
    Engine,
    Event,
    EventKind,
    SimTime,
    SimulationError,
)


class Policy(str, Enum):
    ALL_BATCH = "all_batch"
    BATCH_WITH_RESERVATIONS = "batch_with_reservations"
    INTERACTIVE_WITH_LIMITS = "interactive_with_limits"
    ALL_IMMEDIATE = "all_immediate"


class JobState(str, Enum):
    SUBMITTED = "Submitted"
    PENDING = "Pending"
    ALLOCATED = "Allocated"
    LAUNCHING = "Launching"
    RUNNING = "Running"
    COMPLETED = "Completed"
    REJECTED = "Rejected"


_NEXT_STATES = {
    JobState.SUBMITTED: {JobState.PENDING, JobState.REJECTED},
    JobState.PENDING: {JobState.ALLOCATED},
    JobState.ALLOCATED: {JobState.LAUNCHING},
    JobState.LAUNCHING: {JobState.RUNNING},
    JobState.RUNNING: {JobState.COMPLETED},
}


class RejectReason(str, Enum):
    LIMIT_EXCEEDED = "limit-exceeded"
    NO_RESOURCES = "no-resources"
    INFEASIBLE_SHAPE = "infeasible-shape"


class ReservationError(Exception):
    """Reservation cannot be honored (capacity or overlap)."""


@dataclass(frozen=True)
class SyncParallel:
    """Gang of identical processes, procs_per_node on each of n_nodes nodes."""

    n_nodes: int
    procs_per_node: int

    def __post_init__(self):
        if self.n_nodes < 1 or self.procs_per_node < 1:
            raise ValueError("sync_parallel shape fields must be >= 1")

    @property
    def n_tasks(self) -> int:
        return self.n_nodes * self.procs_per_node

    @property
    def slot_demand(self) -> int:
        return self.n_tasks


@dataclass(frozen=True)
class JobArray:
    """Independent tasks, one process each, slots_per_task slots per task."""

    n_tasks: int
    slots_per_task: int = 1

    def __post_init__(self):
        if self.n_tasks < 1 or self.slots_per_task < 1:
            raise ValueError("job_array shape fields must be >= 1")

    @property
    def slot_demand(self) -> int:
        return self.n_tasks * self.slots_per_task


JobShape = Union[SyncParallel, JobArray]


@dataclass
class Job:
    job_id: int
    user: str
    app: str
    shape: JobShape
    submit_us: SimTime
    interactive: bool = False
    priority: Optional[int] = None
    reservation_id: Optional[str] = None
    duration_us: Optional[SimTime] = None
    durations_us: Optional[list[SimTime]] = None

    state: JobState = JobState.SUBMITTED
    reject_reason: Optional[RejectReason] = None
    submit_seq: int = 0
    pending_since_us: Optional[SimTime] = None
    pending_us: SimTime = 0
    attempt_delay_us: SimTime = 0
    first_alloc_us: Optional[SimTime] = None
    launch_end_us: Optional[SimTime] = None
    complete_us: Optional[SimTime] = None
    launch_records: list[LaunchRecord] = field(default_factory=list)
    tasks_done: int = 0
    tasks_allocated: int = 0
    gang_alloc_ids: list[int] = field(default_factory=list)
    task_alloc_ids: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if (self.duration_us is None) == (self.durations_us is None):
            raise ValueError("set exactly one of duration_us / durations_us")
        if self.durations_us is not None and len(self.durations_us) != self.shape.n_tasks:
            raise ValueError("durations_us length must equal the task count")
        durs = self.durations_us if self.durations_us is not None else [self.duration_us]
        if any(d < 0 for d in durs):
            raise ValueError("task durations must be >= 0")

    def duration_of(self, task_idx: int) -> SimTime:
        if self.durations_us is not None:
            return self.durations_us[task_idx]
        return self.duration_us

    @property
    def launch_us(self) -> Optional[SimTime]:
        if not self.launch_records:
            return None
        return combined_launch_time(self.launch_records)


@dataclass
class Reservation:
    res_id: str
    node_count: int
    start_us: SimTime
    duration_us: SimTime
    created_us: SimTime = 0
    node_ids: list[int] = field(default_factory=list)
    waiting: list[Job] = field(default_factory=list)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("reservation node_count must be >= 1")
        if self.duration_us <= 0:
            raise ValueError("reservation duration must be positive")

    @property
    def end_us(self) -> SimTime:
        return self.start_us + self.duration_us


@dataclass(frozen=True)
class SchedulerConfig:
    period_s: float = 0.1
    depth: int = 1000
    t_sched_op_s: float = 0.001

    def __post_init__(self):
        if self.period_s <= 0 or self.t_sched_op_s <= 0 or self.depth < 1:
            raise ValueError("scheduler config fields must be positive")

    @property
    def period_us(self) -> SimTime:
        return round(self.period_s * US_PER_S)

    @property
    def t_sched_op_us(self) -> SimTime:
        return round(self.t_sched_op_s * US_PER_S)


@dataclass
class _DispatchCtx:
    job: Job
    task_base: int


class Scheduler:
    """Policy engine: owns the pending queue, reservations, user limits,
    the launch coordinator, and every event handler of a run."""

    def __init__(
        self,
        engine: Engine,
        cluster: Cluster,
        apps: dict[str, AppImage],
        policy: Policy,
        config: SchedulerConfig,
        launch_mode: LaunchMode,
        timing: TimingModel,
        per_user_core_limit: Optional[int] = None,
    ):
        self.engine = engine
        self.cluster = cluster
        self.apps = apps
        self.policy = policy
        self.config = config
        self.launch_mode = launch_mode
        self.timing = timing
        if policy is Policy.INTERACTIVE_WITH_LIMITS:
            if per_user_core_limit is None:
                per_user_core_limit = cluster.total_slots
            if per_user_core_limit < 1:
                raise ValueError("per_user_core_limit must be >= 1")
        self.per_user_core_limit = per_user_core_limit
        self.coordinator = LaunchCoordinator(
            engine, cluster.fs, self._on_proc_ready, self._on_launch_complete
        )
        self.jobs: dict[int, Job] = {}
        self.user_slots: dict[str, int] = {}
        self.reservations: dict[str, Reservation] = {}
        self._pending: list[Job] = []
        self._submit_seq = 0
        self._busy_until: SimTime = 0
        self._backlog = 0
        self.max_backlog = 0
        self.backlog_trace: list[tuple[SimTime, int]] = []
        self._cycle_scheduled = False
        self._last_cycle_us: SimTime = -1
        self._dispatch_ctx: dict[int, _DispatchCtx] = {}

    # ---- run setup -------------------------------------------------------

    def add_job(self, job: Job) -> None:
        if job.job_id in self.jobs:
            raise ValueError(f"duplicate job id {job.job_id}")
        if job.app not in self.apps:
            raise ValueError(f"job {job.job_id}: unknown app {job.app!r}")
        if job.reservation_id is not None and job.reservation_id not in self.reservations:
            raise ValueError(f"job {job.job_id}: unknown reservation {job.reservation_id!r}")
        self.jobs[job.job_id] = job
        self.engine.schedule(job.submit_us, EventKind.JOB_SUBMIT, (job.job_id,))

    def add_reservation(self, res: Reservation) -> Reservation:
        """Bind nodes now; raises ReservationError if capacity is exceeded."""
        if res.res_id in self.reservations:
            raise ReservationError(f"duplicate reservation id {res.res_id!r}")
        now = self.engine.now
        res.created_us = now
        if res.start_us < now:
            raise ReservationError(f"reservation {res.res_id!r} starts in the past")
        overlapping_nodes: set[int] = set()
        for other in self.reservations.values():
            if other.start_us < res.end_us and res.start_us < other.end_us:
                overlapping_nodes.update(other.node_ids)
        if res.node_count + len(overlapping_nodes) > self.cluster.n_nodes:
            raise ReservationError(
                f"reservation {res.res_id!r} for {res.node_count} nodes exceeds "
                f"cluster capacity ({self.cluster.n_nodes} nodes, "
                f"{len(overlapping_nodes)} already reserved in the window)"
            )
        free_now = [
            n.node_id
            for n in self.cluster.nodes
            if n.node_id not in overlapping_nodes and self.cluster.whole_node_free(n.node_id)
        ]
        busy_now = [
            n.node_id
            for n in self.cluster.nodes
            if n.node_id not in overlapping_nodes and not self.cluster.whole_node_free(n.node_id)
        ]
        chosen = (free_now + busy_now)[: res.node_count]
        res.node_ids = sorted(chosen)
        self.reservations[res.res_id] = res
        self.engine.schedule(res.start_us, EventKind.RESERVATION_START, (res.res_id,))
        self.engine.schedule(res.end_us, EventKind.RESERVATION_END, (res.res_id,))
        return res

    # ---- event dispatch --------------------------------------------------

    def handle(self, ev: Event) -> None:
        kind = ev.kind
        if kind in _LAUNCH_KINDS:
            self.coordinator.handle(ev)
        elif kind is EventKind.TASK_COMPLETE:
            self._on_task_complete(ev)
        elif kind is EventKind.JOB_SUBMIT:
            self._on_submit(self.jobs[ev.payload[0]])
        elif kind is EventKind.SCHED_ATTEMPT:
            self._backlog -= 1
            self.backlog_trace.append((ev.time, self._backlog))
            self._decide_immediate(self.jobs[ev.payload[0]])
        elif kind is EventKind.SCHEDULER_CYCLE:
            self._on_cycle(ev.time)
        elif kind is EventKind.RESERVATION_START:
            self._on_reservation_start(self.reservations[ev.payload[0]])
        elif kind is EventKind.RESERVATION_END:
            self._on_reservation_end(self.reservations[ev.payload[0]])
        else:
            raise SimulationError(f"unhandled event kind {kind.value}")

    # ---- submit path -----------------------------------------------------

    def _on_submit(self, job: Job) -> None:
        self._submit_seq += 1
        job.submit_seq = self._submit_seq
        if not self._shape_feasible(job.shape):
            self._reject(job, RejectReason.INFEASIBLE_SHAPE)
            return
        if (
            self.policy is Policy.BATCH_WITH_RESERVATIONS
            and job.reservation_id is not None
        ):
            self._submit_reserved(job)
            return
        if self.policy is Policy.ALL_IMMEDIATE or (
            self.policy is Policy.INTERACTIVE_WITH_LIMITS and job.interactive
        ):
            self._request_attempt(job)
        else:
            self._enqueue_pending(job)

    def _shape_feasible(self, shape: JobShape) -> bool:
        cap = self.cluster.spec.capacity
        if isinstance(shape, SyncParallel):
            return shape.procs_per_node <= cap and shape.n_nodes <= self.cluster.n_nodes
        return shape.slots_per_task <= cap

    def _submit_reserved(self, job: Job) -> None:
        res = self.reservations[job.reservation_id]
        now = self.engine.now
        if now < res.start_us:
            self._set_state(job, JobState.PENDING)
            job.pending_since_us = now
            res.waiting.append(job)
        elif now < res.end_us:
            self._set_state(job, JobState.PENDING)
            job.pending_since_us = now
            placements = self._place(job, restrict_to=set(res.node_ids), full_only=True)
            if placements:
                self._allocate_and_dispatch(job, placements)
            else:
                res.waiting.append(job)
                self._ensure_cycle()
        else:
            self._enqueue_pending(job)

    # ---- immediate attempts ----------------------------------------------

    def _request_attempt(self, job: Job) -> None:
        now = self.engine.now
        op = self.config.t_sched_op_us
        start = max(now, self._busy_until)
        self._busy_until = start + op
        job.attempt_delay_us = start - now
        if start == now:
            self._decide_immediate(job)
        else:
            self._backlog += 1
            if self._backlog > self.max_backlog:
                self.max_backlog = self._backlog
            self.backlog_trace.append((now, self._backlog))
            self.engine.schedule(start, EventKind.SCHED_ATTEMPT, (job.job_id,))

    def _decide_immediate(self, job: Job) -> None:
        limit = self.per_user_core_limit
        if self.policy is Policy.INTERACTIVE_WITH_LIMITS and limit is not None:
            held = self.user_slots.get(job.user, 0)
            if held + job.shape.slot_demand > limit:
                self._reject(job, RejectReason.LIMIT_EXCEEDED)
                return
        placements = self._place(job, full_only=True)
        if placements:
            self._set_state(job, JobState.PENDING)
            job.pending_since_us = self.engine.now
            self._allocate_and_dispatch(job, placements)
        elif self.policy is Policy.ALL_IMMEDIATE:
            self._enqueue_pending(job)
        else:
            self._reject(job, RejectReason.NO_RESOURCES)

    # ---- pending queue and cycles ------------------------------------------

    def _enqueue_pending(self, job: Job) -> None:
        self._set_state(job, JobState.PENDING)
        job.pending_since_us = self.engine.now
        self._pending.append(job)
        self._ensure_cycle()

    def _queue_key(self, job: Job):
        prio = job.priority if job.priority is not None else job.submit_seq
        return (prio, job.submit_seq)

    def _ensure_cycle(self) -> None:
        if self._cycle_scheduled:
            return
        period = self.config.period_us
        now = self.engine.now
        t = ((now + period - 1) // period) * period
        if t <= self._last_cycle_us:
            t = self._last_cycle_us + period
        self.engine.schedule(t, EventKind.SCHEDULER_CYCLE, ())
        self._cycle_scheduled = True

    def _on_cycle(self, now: SimTime) -> None:
        self._cycle_scheduled = False
        self._last_cycle_us = now
        examined = 0
        # reserved jobs retry inside their window first, not charged to depth
        for res in self.reservations.values():
            if res.start_us <= now < res.end_us and res.waiting:
                self._drain_reservation(res)
        depth = self.config.depth
        limit = self.per_user_core_limit
        for job in sorted(self._pending, key=self._queue_key):
            if examined >= depth:
                break
            examined += 1
            if (
                self.policy is Policy.INTERACTIVE_WITH_LIMITS
                and limit is not None
                and isinstance(job.shape, SyncParallel)
            ):
                held = self.user_slots.get(job.user, 0)
                if held + job.shape.slot_demand > limit:
                    continue  # batch jobs over the limit stay queued
            placements = self._place(job)
            if placements:
                self._allocate_and_dispatch(job, placements)
        self._busy_until = max(self._busy_until, now) + examined * self.config.t_sched_op_us
        if self._pending or any(
            r.waiting and now < r.end_us for r in self.reservations.values()
        ):
            self._ensure_cycle()

    # ---- placement ---------------------------------------------------------

    def _blocked_node_ids(self, now: SimTime) -> set[int]:
        """Nodes pinned by a reservation, from its creation to window end."""
        blocked: set[int] = set()
        for res in self.reservations.values():
            if now < res.end_us:
                blocked.update(res.node_ids)
        return blocked

    def _place(
        self,
        job: Job,
        restrict_to: Optional[set[int]] = None,
        full_only: bool = False,
    ) -> Optional[list[tuple[int, int]]]:
        """First-fit placement, lowest node id first.

        Returns (node_id, n_tasks_or_procs) pairs, or None when nothing can
        be placed. Gangs are always all-or-nothing. Arrays place any subset
        of their remaining tasks on the cycle path; immediate and reservation
        paths pass full_only=True and take the whole remainder or nothing.
        """
        now = self.engine.now
        if restrict_to is not None:
            pool = [self.cluster.node(i) for i in sorted(restrict_to)]
        else:
            blocked = self._blocked_node_ids(now)
            pool = [n for n in self.cluster.nodes if n.node_id not in blocked]
        shape = job.shape
        if isinstance(shape, SyncParallel):
            cap = self.cluster.spec.capacity
            chosen = [n.node_id for n in pool if n.free_slots == cap][: shape.n_nodes]
            if len(chosen) < shape.n_nodes:
                return None
            return [(node_id, shape.procs_per_node) for node_id in chosen]
        # array: subset of remaining tasks, capped by the per-user limit
        want = shape.n_tasks - job.tasks_allocated
        remaining = want
        if (
            self.policy is Policy.INTERACTIVE_WITH_LIMITS
            and self.per_user_core_limit is not None
        ):
            held = self.user_slots.get(job.user, 0)
            cap_tasks = (self.per_user_core_limit - held) // shape.slots_per_task
            remaining = min(remaining, max(cap_tasks, 0))
        if remaining <= 0 or (full_only and remaining < want):
            return None
        placements = []
        spt = shape.slots_per_task
        for node in pool:
            k = min(remaining, node.free_slots // spt)
            if k > 0:
                placements.append((node.node_id, k))
                remaining -= k
                if remaining == 0:
                    break
        if not placements or (full_only and remaining > 0):
            return None
        return placements

    # ---- allocation, dispatch, completion ----------------------------------

    def _allocate_and_dispatch(self, job: Job, placements: list[tuple[int, int]]) -> None:
        now = self.engine.now
        shape = job.shape
        app = self.apps[job.app]
        if isinstance(shape, SyncParallel):
            cap = self.cluster.spec.capacity
            alloc_ids = [self.cluster.allocate(now, nid, cap) for nid, _ in placements]
            job.gang_alloc_ids = alloc_ids
            task_base = 0
            charge = shape.slot_demand
            job.tasks_allocated = shape.n_tasks
            self._remove_pending(job)
        else:
            task_base = job.tasks_allocated
            charge = 0
            for nid, k in placements:
                for i in range(k):
                    aid = self.cluster.allocate(now, nid, shape.slots_per_task)
                    job.task_alloc_ids[job.tasks_allocated + i] = aid
                # reuse of the same node across chunks is fine, ids differ
                job.tasks_allocated += k
                charge += k * shape.slots_per_task
            if job.tasks_allocated == shape.n_tasks:
                self._remove_pending(job)
        self.user_slots[job.user] = self.user_slots.get(job.user, 0) + charge
        limit = self.per_user_core_limit
        if (
            self.policy is Policy.INTERACTIVE_WITH_LIMITS
            and limit is not None
            and self.user_slots[job.user] > limit
        ):
            raise SimulationError(f"per-user limit breached for {job.user!r}")
        if job.first_alloc_us is None:
            job.first_alloc_us = now
            if job.pending_since_us is not None:
                job.pending_us = now - job.pending_since_us
            self._set_state(job, JobState.ALLOCATED)
            self._set_state(job, JobState.LAUNCHING)
        record = self.coordinator.start(
            job.job_id,
            self.launch_mode,
            self.timing,
            placements,
            [app.requests_on(nid) for nid, _ in placements],
            app.t_local_load_us,
        )
        self._dispatch_ctx[id(record)] = _DispatchCtx(job=job, task_base=task_base)

    def _remove_pending(self, job: Job) -> None:
        try:
            self._pending.remove(job)
        except ValueError:
            pass  # immediate/reserved path jobs are never queued
        for res in self.reservations.values():
            if job in res.waiting:
                res.waiting.remove(job)

    def _on_proc_ready(self, record: LaunchRecord, k: int, t: SimTime) -> None:
        ctx = self._dispatch_ctx[id(record)]
        job = ctx.job
        if isinstance(job.shape, JobArray):
            task_idx = ctx.task_base + k
            self.engine.schedule(
                t + job.duration_of(task_idx), EventKind.TASK_COMPLETE, (job.job_id, task_idx)
            )

    def _on_launch_complete(self, record: LaunchRecord) -> None:
        ctx = self._dispatch_ctx.pop(id(record))
        job = ctx.job
        job.launch_records.append(record)
        now = self.engine.now
        end = record.dispatch_begin_us + record.launch_time_us
        job.launch_end_us = end if job.launch_end_us is None else max(job.launch_end_us, end)
        if job.state is JobState.LAUNCHING:
            self._set_state(job, JobState.RUNNING)
        if isinstance(job.shape, SyncParallel):
            # barrier semantics: the gang computes once every process is up
            if job.duration_us is not None:
                self.engine.schedule(
                    now + job.duration_us, EventKind.TASK_COMPLETE, (job.job_id, -1)
                )
            else:
                for idx in range(job.shape.n_tasks):
                    self.engine.schedule(
                        now + job.durations_us[idx], EventKind.TASK_COMPLETE, (job.job_id, idx)
                    )

    def _on_task_complete(self, ev: Event) -> None:
        job_id, task_idx = ev.payload
        job = self.jobs[job_id]
        now = ev.time
        shape = job.shape
        if isinstance(shape, SyncParallel):
            if task_idx == -1:
                job.tasks_done = shape.n_tasks
            else:
                job.tasks_done += 1
            if job.tasks_done == shape.n_tasks:
                for aid in job.gang_alloc_ids:
                    self.cluster.release(now, aid)
                job.gang_alloc_ids = []
                self._uncharge(job.user, shape.slot_demand)
                self._complete(job)
        else:
            aid = job.task_alloc_ids.pop(task_idx)
            self.cluster.release(now, aid)
            self._uncharge(job.user, shape.slots_per_task)
            job.tasks_done += 1
            if job.tasks_done == shape.n_tasks:
                self._complete(job)

    def _uncharge(self, user: str, slots: int) -> None:
        held = self.user_slots.get(user, 0) - slots
        if held < 0:
            raise SimulationError(f"user slot accounting went negative for {user!r}")
        self.user_slots[user] = held

    def _complete(self, job: Job) -> None:
        job.complete_us = self.engine.now
        self._set_state(job, JobState.COMPLETED)

    # ---- reservations ------------------------------------------------------

    def _drain_reservation(self, res: Reservation) -> None:
        for job in sorted(res.waiting, key=self._queue_key):
            placements = self._place(job, restrict_to=set(res.node_ids), full_only=True)
            if placements:
                self._allocate_and_dispatch(job, placements)

    def _on_reservation_start(self, res: Reservation) -> None:
        self._drain_reservation(res)
        if res.waiting:
            self._ensure_cycle()

    def _on_reservation_end(self, res: Reservation) -> None:
        for job in list(res.waiting):
            res.waiting.remove(job)
            self._pending.append(job)
        if self._pending:
            self._ensure_cycle()

    # ---- bookkeeping -------------------------------------------------------

    def _reject(self, job: Job, reason: RejectReason) -> None:
        job.reject_reason = reason
        self._set_state(job, JobState.REJECTED)

    def _set_state(self, job: Job, new: JobState) -> None:
        allowed = _NEXT_STATES.get(job.state, set())
        if new not in allowed:
            raise SimulationError(
                f"job {job.job_id}: illegal transition {job.state.value} -> {new.value}"
            )
        job.state = new


_LAUNCH_KINDS = frozenset(
    {
        EventKind.DISPATCH_ARRIVAL,
        EventKind.LAUNCHER_READY,
        EventKind.PROC_FORKED,
        EventKind.FS_ENQUEUE,
        EventKind.FS_REQUEST_DONE,
    }
)
