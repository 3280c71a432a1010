"""Discrete-event engine, seeded per-link random streams, and the link primitive."""

import bisect
import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

from .contactplan import Contact


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current simulation time."""


@dataclass
class Event:
    time: float
    sequence: int
    callback: Callable
    args: Tuple = ()
    target: Optional[str] = None
    kind: str = ""
    cancelled: bool = field(default=False, compare=False)

    def cancel(self):
        self.cancelled = True


class Simulator:
    """Single-threaded event loop ordered by (time, insertion sequence)."""

    def __init__(self, seed: int = 0):
        self.now = 0.0
        self.seed = seed
        self._queue: List[Tuple[float, int, Event]] = []
        self._sequence = 0
        self._streams: Dict[str, random.Random] = {}
        self.executed = 0
        self.trace: Optional[Callable[[Event], None]] = None

    def schedule(self, time: float, callback: Callable, *args, target=None, kind="") -> Event:
        if time < self.now:
            raise SchedulingError(f"event at t={time!r} scheduled in the past (now={self.now!r})")
        event = Event(time, self._sequence, callback, args, target, kind)
        self._sequence += 1
        heapq.heappush(self._queue, (time, event.sequence, event))
        return event

    def pending(self) -> int:
        return sum(1 for _, _, e in self._queue if not e.cancelled)

    def run_until(self, t_end: float) -> int:
        """Execute every event with time <= t_end; returns how many ran."""
        count = 0
        while self._queue and self._queue[0][0] <= t_end:
            time, _, event = heapq.heappop(self._queue)
            if event.cancelled:
                continue
            self.now = time
            if self.trace is not None:
                self.trace(event)
            event.callback(*event.args)
            count += 1
        self.now = max(self.now, t_end)
        self.executed += count
        return count

    def rng(self, stream: str) -> random.Random:
        """Independent random stream derived from (seed, stream name)."""
        rng = self._streams.get(stream)
        if rng is None:
            digest = hashlib.sha256(f"{self.seed}:{stream}".encode()).digest()
            rng = random.Random(int.from_bytes(digest[:8], "big"))
            self._streams[stream] = rng
        return rng


class Transmission(NamedTuple):
    start: float
    end: float
    arrival: float
    lost: bool


class Link:
    """Directed link following the contacts of one (src, dst) pair.

    Frames are serialised FIFO: each transmission starts when the previous
    one has left the antenna.  A frame that cannot finish before its contact
    closes is discarded (the airtime up to the close is still consumed).
    """

    def __init__(self, sim: Simulator, src: str, dst: str, contacts: Sequence[Contact],
                 loss: float = 0.0, acquisition_delay: float = 0.0,
                 drop: Optional[Callable[[Any], bool]] = None):
        self.sim = sim
        self.src, self.dst = src, dst
        self.name = f"{src}->{dst}"
        self.contacts = sorted(contacts, key=lambda c: c.start)
        self._starts = [c.start for c in self.contacts]
        self.loss = loss
        self.acquisition_delay = acquisition_delay
        self.drop = drop
        self.busy_until = 0.0
        self.busy_time = 0.0
        self.frames_sent = 0
        self.frames_lost = 0
        self.frames_aborted = 0

    @property
    def rng(self) -> random.Random:
        return self.sim.rng(self.name)

    def contact_at(self, t: float) -> Optional[Contact]:
        i = bisect.bisect_right(self._starts, t) - 1
        if i >= 0 and self.contacts[i].start <= t < self.contacts[i].end:
            return self.contacts[i]
        return None

    def is_open(self, t: float) -> bool:
        return self.contact_at(t) is not None

    def next_open(self, t: float) -> Optional[float]:
        """Earliest time >= t at which a contact is open."""
        if self.contact_at(t) is not None:
            return t
        i = bisect.bisect_right(self._starts, t)
        return self.contacts[i].start if i < len(self.contacts) else None

    def open_time(self, t0: float, t1: float) -> float:
        """Total contact time inside [t0, t1]."""
        total = 0.0
        for c in self.contacts:
            if c.end <= t0:
                continue
            if c.start >= t1:
                break
            total += min(c.end, t1) - max(c.start, t0)
        return total

    def advance_open_time(self, t0: float, duration: float) -> Optional[float]:
        """Time at which ``duration`` seconds of contact have elapsed after t0.

        Timers use this so they stay frozen while the link is down.  None
        when the plan runs out first.
        """
        remaining = duration
        i = max(bisect.bisect_right(self._starts, t0) - 1, 0)
        for c in self.contacts[i:]:
            if c.end <= t0:
                continue
            s = max(c.start, t0)
            if c.end - s >= remaining:
                return s + remaining
            remaining -= c.end - s
        return None

    def owlt_at(self, t: float) -> Optional[float]:
        c = self.contact_at(t)
        return None if c is None else c.owlt_at(t)

    def transmit(self, size: float, on_arrival: Callable, *args, lossy: bool = False,
                 frame: Any = None) -> Optional[Transmission]:
        """Serialise ``size`` bits and schedule ``on_arrival(*args)`` at the far end.

        Returns None (nothing scheduled) when no contact is open at the
        transmission start or the frame would not finish before it closes.
        """
        start = max(self.sim.now, self.busy_until)
        contact = self.contact_at(start)
        if contact is None:
            return None
        end = start + size / contact.rate
        if end > contact.end:
            self.busy_time += contact.end - start
            self.busy_until = contact.end
            self.frames_aborted += 1
            return None
        self.busy_until = end
        self.busy_time += end - start
        self.frames_sent += 1
        arrival = end + contact.owlt_at(start)
        lost = False
        if lossy:
            if self.drop is not None:
                lost = bool(self.drop(frame))
            elif self.loss > 0.0:
                lost = self.rng.random() < self.loss
        if lost:
            self.frames_lost += 1
        else:
            self.sim.schedule(arrival, on_arrival, *args, target=self.dst, kind="arrival")
        return Transmission(start, end, arrival, lost)
