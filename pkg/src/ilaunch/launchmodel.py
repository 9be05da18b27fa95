"""Process-launch pipelines: dispatch trees, per-node spawning, FS backpressure.

Three launch mechanisms share one per-process spine (fork, local image load,
then a batch of central-FS requests); they differ in how work reaches nodes:

  two_tier:    scheduler-driven dispatch tree with fanout `fanout`, one hop
               costs t_hop; one launcher per node starts (t_launcher_start)
               and forks its processes serially (j-th fork done at j*t_fork).
  ssh_tree:    same shape, but the tree uses ssh_fanout and t_ssh_hop.
  per_process: no per-node launcher; the k-th process of the job is
               dispatched centrally at k/dispatch_rate, then forks and loads.

A node at 1-based position n in the dispatch order sits at tree depth
dispatch_depth(n, fanout): the smallest level l >= 1 with
fanout + fanout^2 + ... + fanout^l >= n. Its launcher becomes ready at
dispatch_begin + depth*t_hop + t_launcher_start.

Each process's ready time decomposes exactly into dispatch + launcher +
fork wait + local load + FS wait; the record keeps that breakdown for the
process that finishes last (with FIFO service, the last process to enqueue).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

from .cluster import CentralFS
from .simcore import (
    US_PER_S,
    Engine,
    Event,
    EventKind,
    SimTime,
    SimulationError,
    s_from_us,
)


class LaunchMode(str, Enum):
    TWO_TIER = "two_tier"
    SSH_TREE = "ssh_tree"
    PER_PROCESS = "per_process"


@dataclass(frozen=True)
class TimingModel:
    """Launch-path constants. All live in scenario files, never in code."""

    fanout: int = 32
    t_hop_s: float = 0.010
    t_launcher_start_s: float = 0.050
    t_fork_s: float = 0.0015
    ssh_fanout: int = 16
    t_ssh_hop_s: float = 0.200
    dispatch_rate_per_s: float = 200.0

    def __post_init__(self):
        if self.fanout < 2 or self.ssh_fanout < 2:
            raise ValueError("tree fanouts must be >= 2")
        for name in ("t_hop_s", "t_launcher_start_s", "t_fork_s", "t_ssh_hop_s", "dispatch_rate_per_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def t_hop_us(self) -> SimTime:
        return round(self.t_hop_s * US_PER_S)

    @property
    def t_launcher_start_us(self) -> SimTime:
        return round(self.t_launcher_start_s * US_PER_S)

    @property
    def t_fork_us(self) -> SimTime:
        return round(self.t_fork_s * US_PER_S)

    @property
    def t_ssh_hop_us(self) -> SimTime:
        return round(self.t_ssh_hop_s * US_PER_S)


def dispatch_depth(node_index: int, fanout: int) -> int:
    """Tree level holding the node at 1-based dispatch position node_index."""
    if node_index < 1:
        raise ValueError("node_index is 1-based")
    if fanout < 2:
        raise ValueError("fanout must be >= 2")
    level, reach, width = 1, fanout, fanout
    while reach < node_index:
        level += 1
        width *= fanout
        reach += width
    return level


@dataclass
class CriticalPath:
    """Exact decomposition of the last-finishing process's ready time."""

    dispatch_us: SimTime
    launcher_us: SimTime
    fork_wait_us: SimTime
    load_us: SimTime
    fs_wait_us: SimTime

    @property
    def total_us(self) -> SimTime:
        return (
            self.dispatch_us
            + self.launcher_us
            + self.fork_wait_us
            + self.load_us
            + self.fs_wait_us
        )


@dataclass
class LaunchRecord:
    """Outcome of dispatching one batch of processes for one job."""

    job_id: int
    mode: LaunchMode
    dispatch_begin_us: SimTime
    placements: list[tuple[int, int]]  # (node_id, n_procs) in dispatch order
    total_procs: int
    ready_us: list[SimTime]
    launch_time_us: SimTime = 0
    critical: Optional[CriticalPath] = None
    done: bool = False

    @property
    def launch_time_s(self) -> float:
        return s_from_us(self.launch_time_us)

    @property
    def rate_per_s(self) -> float:
        return self.total_procs / self.launch_time_s

    @property
    def fs_wait_fraction(self) -> float:
        return self.critical.fs_wait_us / self.launch_time_us


def combined_launch_time(records: list[LaunchRecord]) -> SimTime:
    """Launch span of a job dispatched in one or more batches."""
    if not records:
        return 0
    begin = min(r.dispatch_begin_us for r in records)
    end = max(r.dispatch_begin_us + r.launch_time_us for r in records)
    return end - begin


class _Execution:
    __slots__ = (
        "exec_id", "record", "timing", "load_us", "node_f",
        "remaining", "offsets", "enq_us", "critical", "critical_ready",
    )

    def __init__(self, exec_id, record, timing, load_us, node_f):
        self.exec_id = exec_id
        self.record = record
        self.timing = timing
        self.load_us = load_us
        self.node_f = node_f  # per placement position: requests per process
        self.remaining = record.total_procs
        offsets, acc = [], 0
        for _, nprocs in record.placements:
            offsets.append(acc)
            acc += nprocs
        self.offsets = offsets
        self.enq_us = [0] * record.total_procs
        self.critical: Optional[CriticalPath] = None
        self.critical_ready: SimTime = 0


class LaunchCoordinator:
    """Schedules and reacts to all launch-pipeline events.

    Per process the chain is proc-forked -> fs-enqueue -> fs-request-done.
    FS batches are enqueued by an event at the enqueue instant, so FIFO order
    across concurrently launching jobs is the engine's global (time, seq)
    order, never a per-job computation.
    """

    def __init__(
        self,
        engine: Engine,
        fs: CentralFS,
        on_proc_ready: Callable[[LaunchRecord, int, SimTime], None],
        on_launch_complete: Callable[[LaunchRecord], None],
    ):
        self.engine = engine
        self.fs = fs
        self.on_proc_ready = on_proc_ready
        self.on_launch_complete = on_launch_complete
        self._execs: dict[int, _Execution] = {}
        self._next_exec_id = 0

    def start(
        self,
        job_id: int,
        mode: LaunchMode,
        timing: TimingModel,
        placements: list[tuple[int, int]],
        node_f: list[int],
        load_us: SimTime,
    ) -> LaunchRecord:
        """Begin dispatch at the current clock; returns the live record."""
        if not placements or any(n < 1 for _, n in placements):
            raise SimulationError("dispatch needs at least one process per node")
        total = sum(n for _, n in placements)
        begin = self.engine.now
        record = LaunchRecord(
            job_id=job_id,
            mode=mode,
            dispatch_begin_us=begin,
            placements=list(placements),
            total_procs=total,
            ready_us=[0] * total,
        )
        self._next_exec_id += 1
        ex = _Execution(self._next_exec_id, record, timing, load_us, list(node_f))
        self._execs[ex.exec_id] = ex

        if mode is LaunchMode.PER_PROCESS:
            rate = timing.dispatch_rate_per_s
            fork_us = timing.t_fork_us
            k = 0
            for pos, (_, nprocs) in enumerate(placements):
                for j in range(1, nprocs + 1):
                    k += 1
                    t = begin + round(k * US_PER_S / rate) + fork_us
                    self.engine.schedule(
                        t, EventKind.PROC_FORKED, (ex.exec_id, k - 1, pos, j)
                    )
            return record

        hop_us = timing.t_hop_us if mode is LaunchMode.TWO_TIER else timing.t_ssh_hop_us
        fanout = timing.fanout if mode is LaunchMode.TWO_TIER else timing.ssh_fanout
        for pos in range(len(placements)):
            depth = dispatch_depth(pos + 1, fanout)
            self.engine.schedule(
                begin + depth * hop_us, EventKind.DISPATCH_ARRIVAL, (ex.exec_id, pos)
            )
        return record

    def handle(self, ev: Event) -> None:
        kind = ev.kind
        if kind is EventKind.PROC_FORKED:
            exec_id, k, pos, j = ev.payload
            ex = self._execs[exec_id]
            self.engine.schedule(
                ev.time + ex.load_us, EventKind.FS_ENQUEUE, (exec_id, k, pos, j)
            )
        elif kind is EventKind.FS_ENQUEUE:
            self._on_fs_enqueue(ev)
        elif kind is EventKind.FS_REQUEST_DONE:
            exec_id, k = ev.payload
            ex = self._execs[exec_id]
            self.on_proc_ready(ex.record, k, ev.time)
            ex.remaining -= 1
            if ex.remaining == 0:
                self._finalize(ex)
        elif kind is EventKind.DISPATCH_ARRIVAL:
            exec_id, pos = ev.payload
            ex = self._execs[exec_id]
            self.engine.schedule(
                ev.time + ex.timing.t_launcher_start_us,
                EventKind.LAUNCHER_READY,
                (exec_id, pos),
            )
        elif kind is EventKind.LAUNCHER_READY:
            exec_id, pos = ev.payload
            ex = self._execs[exec_id]
            base_k = ex.offsets[pos]
            nprocs = ex.record.placements[pos][1]
            fork_us = ex.timing.t_fork_us
            schedule = self.engine.schedule
            for j in range(1, nprocs + 1):
                schedule(
                    ev.time + j * fork_us,
                    EventKind.PROC_FORKED,
                    (exec_id, base_k + j - 1, pos, j),
                )
        else:
            raise SimulationError(f"launch coordinator got {kind.value}")

    def _components_for(self, ex: _Execution, k: int, pos: int, j: int, enq: SimTime, done: SimTime) -> CriticalPath:
        timing = ex.timing
        mode = ex.record.mode
        if mode is LaunchMode.PER_PROCESS:
            dispatch = round((k + 1) * US_PER_S / timing.dispatch_rate_per_s)
            launcher = 0
            fork_wait = timing.t_fork_us
        else:
            fanout = timing.fanout if mode is LaunchMode.TWO_TIER else timing.ssh_fanout
            hop = timing.t_hop_us if mode is LaunchMode.TWO_TIER else timing.t_ssh_hop_us
            dispatch = dispatch_depth(pos + 1, fanout) * hop
            launcher = timing.t_launcher_start_us
            fork_wait = j * timing.t_fork_us
        return CriticalPath(
            dispatch_us=dispatch,
            launcher_us=launcher,
            fork_wait_us=fork_wait,
            load_us=ex.load_us,
            fs_wait_us=done - enq,
        )

    def _on_fs_enqueue(self, ev: Event) -> None:
        exec_id, k, pos, j = ev.payload
        ex = self._execs[exec_id]
        done = self.fs.enqueue(ex.node_f[pos], ev.time)
        ex.record.ready_us[k] = done
        ex.enq_us[k] = ev.time
        # last enqueue overwrites: with FIFO service it normally finishes last
        ex.critical = self._components_for(ex, k, pos, j, ev.time, done)
        ex.critical_ready = done
        self.engine.schedule(done, EventKind.FS_REQUEST_DONE, (exec_id, k))

    def _finalize(self, ex: _Execution) -> None:
        record = ex.record
        end = max(record.ready_us)
        if ex.critical_ready != end:
            # possible only with zero-request batches in the mix: recompute
            # the breakdown for the first process that attains the maximum
            k = record.ready_us.index(end)
            pos = bisect_right(ex.offsets, k) - 1
            j = k - ex.offsets[pos] + 1
            ex.critical = self._components_for(ex, k, pos, j, ex.enq_us[k], end)
        record.launch_time_us = end - record.dispatch_begin_us
        if record.launch_time_us <= 0:
            raise SimulationError("launch time must be positive")
        record.critical = ex.critical
        if ex.critical.total_us != record.launch_time_us:
            raise SimulationError("critical-path decomposition does not sum to T")
        record.done = True
        del self._execs[ex.exec_id]
        self.on_launch_complete(record)
