"""Deterministic discrete-event simulation kernel.

Time is kept internally as an integer count of microseconds so that event
ordering never depends on float rounding; every public interface speaks
seconds. Randomness comes from counter-based Philox streams forked off a
single root seed by label, so draw order in one module cannot perturb
another module's stream.
"""

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

US_PER_S = 1_000_000


def _to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


class SchedulingError(Exception):
    pass


class RngStream:
    """Deterministic substream keyed by (root seed, label).

    Wraps a Philox generator; the key is derived by hashing the label with
    the root seed, so the same (seed, label) pair yields the same sequence
    regardless of fork order.
    """

    def __init__(self, root_seed: int, label: str):
        if not label:
            raise ValueError("rng stream label must be non-empty")
        self.label = label
        digest = hashlib.sha256(f"{root_seed}:{label}".encode()).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def random(self) -> float:
        return float(self._gen.random())

    def uniform(self, low: float, high: float) -> float:
        return float(self._gen.uniform(low, high))

    def normal(self, loc: float = 0.0, scale: float = 1.0):
        return self._gen.normal(loc, scale)

    def normal_array(self, scale: float, size: int) -> np.ndarray:
        return self._gen.normal(0.0, scale, size)

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high)."""
        return int(self._gen.integers(low, high))

    def choice(self, seq):
        return seq[self.randint(0, len(seq))]


@dataclass(order=True)
class _QueueEntry:
    fire_at_us: int
    seq: int
    target: str = field(compare=False)
    fn: Callable[[Any], None] = field(compare=False)
    payload: Any = field(compare=False)
    cancelled: bool = field(default=False, compare=False)


@dataclass(frozen=True)
class Ticket:
    seq: int


class SimKernel:
    """Single-threaded event loop with seeded RNG forks and an event log.

    Events are totally ordered by (fire time, insertion sequence). The log
    records every executed (fire_at_us, seq, target) triple; its digest is
    the determinism fingerprint used by replay checks.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._now_us = 0
        self._seq = 0
        self._queue: list[_QueueEntry] = []
        self._entries: dict[int, _QueueEntry] = {}
        self._rng_labels: set[str] = set()
        self.event_log: list[tuple[int, int, str]] = []

    @property
    def now(self) -> float:
        return self._now_us / US_PER_S

    @property
    def now_us(self) -> int:
        return self._now_us

    def schedule(self, fire_at: float, target: str,
                 fn: Callable[[Any], None], payload: Any = None) -> Ticket:
        """Enqueue fn(payload) to run at simulated time fire_at seconds."""
        fire_at_us = _to_us(fire_at)
        if fire_at_us < self._now_us:
            raise SchedulingError(
                f"cannot schedule {target!r} at {fire_at:.6f}s; now is {self.now:.6f}s")
        entry = _QueueEntry(fire_at_us, self._seq, target, fn, payload)
        self._seq += 1
        heapq.heappush(self._queue, entry)
        self._entries[entry.seq] = entry
        return Ticket(entry.seq)

    def schedule_in(self, delay: float, target: str,
                    fn: Callable[[Any], None], payload: Any = None) -> Ticket:
        return self.schedule(self.now + delay, target, fn, payload)

    def cancel(self, ticket: Ticket) -> bool:
        """Cancel a pending event. Returns True if it was still pending."""
        entry = self._entries.get(ticket.seq)
        if entry is None or entry.cancelled:
            return False
        entry.cancelled = True
        return True

    def run_until(self, t_end: float) -> int:
        """Execute all events with fire time <= t_end; clock ends at t_end."""
        t_end_us = _to_us(t_end)
        if t_end_us < self._now_us:
            raise SchedulingError(f"run_until({t_end}) is in the past")
        executed = 0
        while self._queue and self._queue[0].fire_at_us <= t_end_us:
            entry = heapq.heappop(self._queue)
            self._entries.pop(entry.seq, None)
            if entry.cancelled:
                continue
            self._now_us = entry.fire_at_us
            self.event_log.append((entry.fire_at_us, entry.seq, entry.target))
            entry.fn(entry.payload)
            executed += 1
        self._now_us = t_end_us
        return executed

    def run_all(self, hard_stop: Optional[float] = None) -> int:
        """Drain the queue (up to hard_stop seconds if given)."""
        stop_us = _to_us(hard_stop) if hard_stop is not None else None
        executed = 0
        while self._queue:
            if stop_us is not None and self._queue[0].fire_at_us > stop_us:
                break
            entry = heapq.heappop(self._queue)
            self._entries.pop(entry.seq, None)
            if entry.cancelled:
                continue
            self._now_us = entry.fire_at_us
            self.event_log.append((entry.fire_at_us, entry.seq, entry.target))
            entry.fn(entry.payload)
            executed += 1
        if stop_us is not None and stop_us > self._now_us:
            self._now_us = stop_us
        return executed

    def fork_rng(self, label: str) -> RngStream:
        """Independent deterministic substream; labels must be unique."""
        if not label:
            raise ValueError("rng stream label must be non-empty")
        if label in self._rng_labels:
            raise ValueError(f"rng stream label {label!r} already forked")
        self._rng_labels.add(label)
        return RngStream(self.seed, label)

    def log_digest(self) -> str:
        h = hashlib.sha256()
        for fire_at_us, seq, target in self.event_log:
            h.update(f"{fire_at_us}:{seq}:{target}\n".encode())
        return h.hexdigest()

    def every(self, period: float, target: str, fn: Callable[[], None],
              start: Optional[float] = None, until: Optional[float] = None) -> None:
        """Schedule fn() at a fixed period, starting at `start` (default now)."""
        first = self.now if start is None else start

        def tick(_payload):
            fn()
            nxt = self.now + period
            if until is None or nxt <= until:
                self.schedule(nxt, target, tick)

        self.schedule(first, target, tick)
