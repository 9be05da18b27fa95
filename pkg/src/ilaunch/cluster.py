"""Cluster state: nodes with slot accounting, application images, central filesystem.

A node exposes `capacity = cores * threads_per_core * oversub_max` process
slots. The central filesystem is a single FIFO server with aggregate service
rate `mu` requests/second; a batch of n requests enqueued at t completes at
max(t, server_free) + n/mu, and the server free point advances to that value.
Server bookkeeping is exact rational arithmetic; event timestamps round to
integer microseconds (half up) only at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .simcore import US_PER_S, SimTime, SimulationError


class AllocationFailure(Exception):
    """Requested slots are not available. A scheduling signal, not a crash."""


def _frac_to_us(x: Fraction) -> SimTime:
    # round half up, exact in integer arithmetic
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


@dataclass(frozen=True)
class NodeSpec:
    cores: int
    threads_per_core: int
    oversub_max: int

    @property
    def capacity(self) -> int:
        return self.cores * self.threads_per_core * self.oversub_max

    def __post_init__(self):
        if self.cores < 1 or self.threads_per_core < 1 or self.oversub_max < 1:
            raise ValueError("node spec fields must be >= 1")


class AppImage:
    """Per-process central-FS request count, depending on local cache state.

    cached_nodes is None when the image is staged on every node's local disk,
    otherwise the set of node ids holding a copy. Uncached launches fall back
    to pulling the installation from the central FS (f_central_nocache
    requests per process instead of f_central).
    """

    def __init__(
        self,
        name: str,
        f_central: int,
        f_central_nocache: int,
        t_local_load_s: float,
        cached_nodes: Optional[set[int]] = None,
    ):
        if f_central < 0 or f_central_nocache < f_central:
            raise ValueError("need 0 <= f_central <= f_central_nocache")
        if t_local_load_s < 0:
            raise ValueError("t_local_load_s must be >= 0")
        self.name = name
        self.f_central = f_central
        self.f_central_nocache = f_central_nocache
        self.t_local_load_us = round(t_local_load_s * US_PER_S)
        self.cached_nodes = cached_nodes

    def requests_on(self, node_id: int) -> int:
        if self.cached_nodes is None or node_id in self.cached_nodes:
            return self.f_central
        return self.f_central_nocache

    def install_cache(self, node_ids) -> None:
        """Stage the image onto the given nodes' local disks."""
        if self.cached_nodes is None:
            return
        self.cached_nodes.update(node_ids)


class CentralFS:
    """Single FIFO server shared by every launching process."""

    def __init__(self, mu_requests_per_s: float, record_batches: bool = False):
        if mu_requests_per_s <= 0:
            raise ValueError("mu must be positive")
        self.mu = Fraction(mu_requests_per_s)
        self._free = Fraction(0)
        self._last_enqueue = Fraction(-1)
        self._first_enqueue: Optional[Fraction] = None
        self._idle = Fraction(0)
        self.total_requests = 0
        self.total_batches = 0
        self.batch_log: Optional[list[tuple[SimTime, int, SimTime]]] = (
            [] if record_batches else None
        )

    def enqueue(self, n_requests: int, t_enqueue: SimTime) -> SimTime:
        """Append a batch; returns the completion time of its last request.

        n_requests = 0 is a no-op returning t_enqueue. Batches must arrive in
        non-decreasing time order (the event engine guarantees this).
        """
        if n_requests < 0:
            raise ValueError("n_requests must be >= 0")
        if n_requests == 0:
            return t_enqueue
        t = Fraction(t_enqueue)
        if t < self._last_enqueue:
            raise SimulationError("FS batches must be enqueued in time order")
        self._last_enqueue = t
        if self._first_enqueue is None:
            self._first_enqueue = t
            self._free = t
        elif t > self._free:
            self._idle += t - self._free
            self._free = t
        # _free tracks microseconds; service time is n/mu seconds
        self._free += Fraction(n_requests * US_PER_S) / self.mu
        self.total_requests += n_requests
        self.total_batches += 1
        done = _frac_to_us(self._free)
        if self.batch_log is not None:
            self.batch_log.append((t_enqueue, n_requests, done))
        return done

    def busy_time(self) -> Fraction:
        """Exact busy time in microseconds: span minus idle. Always equals
        total_requests/mu seconds, which is the work-conservation check."""
        if self._first_enqueue is None:
            return Fraction(0)
        return (self._free - self._first_enqueue) - self._idle

    @property
    def server_free_us(self) -> SimTime:
        return _frac_to_us(self._free)


@dataclass
class _NodeState:
    node_id: int
    free_slots: int
    allocations: dict[int, int] = field(default_factory=dict)


class Cluster:
    """Homogeneous nodes with exact slot conservation and an allocation trace.

    Every allocate/release appends (t_us, total_allocated) to alloc_trace so
    utilization can be integrated afterwards without replaying the run.
    """

    def __init__(self, spec: NodeSpec, n_nodes: int, fs: CentralFS):
        if n_nodes < 1:
            raise ValueError("cluster needs at least one node")
        self.spec = spec
        self.fs = fs
        self.nodes = [_NodeState(i, spec.capacity) for i in range(1, n_nodes + 1)]
        self._by_id = {n.node_id: n for n in self.nodes}
        self._alloc_seq = 0
        self._alloc_node: dict[int, int] = {}
        self.total_allocated = 0
        self.alloc_trace: list[tuple[SimTime, int]] = []

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def total_slots(self) -> int:
        return self.spec.capacity * len(self.nodes)

    def node(self, node_id: int) -> _NodeState:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise SimulationError(f"unknown node id {node_id}") from None

    def free_slots(self, node_id: int) -> int:
        return self.node(node_id).free_slots

    def whole_node_free(self, node_id: int) -> bool:
        return self.node(node_id).free_slots == self.spec.capacity

    def allocate(self, t_us: SimTime, node_id: int, slots: int) -> int:
        """Take slots on one node; returns an allocation id for release()."""
        if slots < 1:
            raise ValueError("cannot allocate fewer than 1 slot")
        node = self.node(node_id)
        if slots > node.free_slots:
            raise AllocationFailure(
                f"node {node_id}: requested {slots} slots, {node.free_slots} free"
            )
        node.free_slots -= slots
        self._alloc_seq += 1
        node.allocations[self._alloc_seq] = slots
        self._alloc_node[self._alloc_seq] = node_id
        self.total_allocated += slots
        self.alloc_trace.append((t_us, self.total_allocated))
        self._check_node(node)
        return self._alloc_seq

    def release(self, t_us: SimTime, alloc_id: int) -> None:
        """Return an allocation's slots. Releasing twice is a hard error."""
        node_id = self._alloc_node.pop(alloc_id, None)
        if node_id is None:
            raise SimulationError(f"release of unknown allocation id {alloc_id}")
        node = self._by_id[node_id]
        slots = node.allocations.pop(alloc_id)
        node.free_slots += slots
        self.total_allocated -= slots
        self.alloc_trace.append((t_us, self.total_allocated))
        self._check_node(node)

    def _check_node(self, node: _NodeState) -> None:
        cap = self.spec.capacity
        if not (0 <= node.free_slots <= cap) or sum(node.allocations.values()) + node.free_slots != cap:
            raise SimulationError(f"slot conservation violated on node {node.node_id}")
