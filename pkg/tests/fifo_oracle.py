"""Independent brute-force launch timelines, used as oracles in tests.

Nothing here touches the event engine. Per-process enqueue times come from
closed-form arithmetic; filesystem completions come from an explicit
one-request-at-a-time FIFO loop over exact rationals. Agreement with the
simulator is therefore a real check, not a tautology.
"""

from __future__ import annotations

from fractions import Fraction

US = 1_000_000


def round_half_up(x: Fraction) -> int:
    return (2 * x.numerator + x.denominator) // (2 * x.denominator)


def tree_level(index: int, fanout: int) -> int:
    """Smallest level l with fanout + fanout^2 + ... + fanout^l >= index."""
    assert index >= 1 and fanout >= 2
    level = 1
    cum = fanout
    width = fanout
    while cum < index:
        level += 1
        width *= fanout
        cum += width
    return level


class FifoServer:
    """One request at a time, strictly in arrival order."""

    def __init__(self, mu_per_s: float):
        self.service_us = Fraction(US) / Fraction(mu_per_s)
        self.free: Fraction | None = None

    def serve_batch(self, n: int, arrival_us: int) -> int:
        """Feed n requests arriving together; returns last completion in us."""
        assert n > 0
        t = Fraction(arrival_us)
        for _ in range(n):
            start = t if self.free is None or self.free < t else self.free
            self.free = start + self.service_us
        return round_half_up(self.free)


def proc_enqueue_times(mode: str, placements, timing, load_us: int, begin_us: int = 0):
    """[(enqueue_us, pos, j)] in the order the simulator enqueues batches:
    by enqueue time, then dispatch position, then fork index."""
    hop_us = round(timing.t_hop_s * US)
    ssh_hop_us = round(timing.t_ssh_hop_s * US)
    start_us = round(timing.t_launcher_start_s * US)
    fork_us = round(timing.t_fork_s * US)
    out = []
    k = 0
    for pos, (_node_id, nprocs) in enumerate(placements):
        for j in range(1, nprocs + 1):
            k += 1
            if mode == "per_process":
                forked = begin_us + round(k * US / timing.dispatch_rate_per_s) + fork_us
            elif mode == "two_tier":
                forked = begin_us + tree_level(pos + 1, timing.fanout) * hop_us + start_us + j * fork_us
            elif mode == "ssh_tree":
                forked = begin_us + tree_level(pos + 1, timing.ssh_fanout) * ssh_hop_us + start_us + j * fork_us
            else:
                raise ValueError(mode)
            out.append((forked + load_us, pos, j))
    out.sort()
    return out


def oracle_ready_times(
    mode: str,
    placements,
    f_per_node,
    timing,
    load_us: int,
    server: FifoServer,
    begin_us: int = 0,
):
    """Per-process ready times, indexed like the simulator's ready_us list
    (placement order, fork order within a node). The caller owns the server
    so several jobs can share one FIFO timeline."""
    offsets = []
    acc = 0
    for _, nprocs in placements:
        offsets.append(acc)
        acc += nprocs
    ready = [0] * acc
    for enq_us, pos, j in proc_enqueue_times(mode, placements, timing, load_us, begin_us):
        idx = offsets[pos] + j - 1
        f = f_per_node[pos]
        ready[idx] = enq_us if f == 0 else server.serve_batch(f, enq_us)
    return ready
