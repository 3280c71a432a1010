"""Red-part LTP over long-delay links, and the reliable terrestrial convergence layer.

One :class:`LtpEngine` serves one direction of block transfer between two
nodes: data segments ride ``data_link`` and reports come back on
``report_link``.  Each block is a session with a single checkpoint at the
end of every transmission round.
"""

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, List, Optional, Tuple

from .simcore import Link, Simulator

DATA = "data"
CHECKPOINT = "data-checkpoint"
REPORT = "report"
REPORT_ACK = "report-ack"
CANCEL = "cancel"


class RangeSet:
    """Sorted, disjoint half-open integer ranges."""

    def __init__(self, ranges=()):
        self._ranges: List[Tuple[int, int]] = []
        for start, end in ranges:
            self.add(start, end)

    def add(self, start: int, end: int) -> None:
        if start >= end:
            return
        merged = []
        placed = False
        for s, e in self._ranges:
            if e < start:
                merged.append((s, e))
            elif s > end:
                if not placed:
                    merged.append((start, end))
                    placed = True
                merged.append((s, e))
            else:
                start, end = min(s, start), max(e, end)
        if not placed:
            merged.append((start, end))
        self._ranges = sorted(merged)

    def gaps(self, start: int, end: int) -> List[Tuple[int, int]]:
        out = []
        cursor = start
        for s, e in self._ranges:
            if e <= cursor:
                continue
            if s >= end:
                break
            if s > cursor:
                out.append((cursor, s))
            cursor = max(cursor, e)
        if cursor < end:
            out.append((cursor, end))
        return out

    def covers(self, start: int, end: int) -> bool:
        return not self.gaps(start, end)

    @property
    def total(self) -> int:
        return sum(e - s for s, e in self._ranges)

    def __iter__(self):
        return iter(self._ranges)

    def __eq__(self, other):
        return isinstance(other, RangeSet) and self._ranges == other._ranges

    def __repr__(self):
        return f"RangeSet({self._ranges})"


@dataclass(frozen=True)
class Segment:
    kind: str
    session: int
    offset: int = 0
    length: int = 0
    block_size: int = 0
    serial: int = 0  # checkpoint serial (data) or report serial (report / report-ack)
    checkpoint: int = 0  # checkpoint a report answers
    claims: Tuple[Tuple[int, int], ...] = ()
    payload: Any = None
    data: Optional[bytes] = None


@dataclass
class SenderSession:
    id: int
    block_size: int
    payload: Any
    data: Optional[bytes]
    created: float
    state: str = "queued"  # queued | sending | awaiting-report | closed | cancelled
    checkpoint_serial: int = 0
    checkpoint_segment: Optional[Segment] = None
    timer: Any = None
    deferred: List[Segment] = field(default_factory=list)
    resume_scheduled: bool = False
    retransmissions: int = 0
    segments_sent: int = 0
    segments_retransmitted: int = 0
    checkpoints_sent: int = 0
    reports_received: int = 0
    closed_at: Optional[float] = None


@dataclass
class ReceiverSession:
    id: int
    block_size: int
    received: RangeSet = field(default_factory=RangeSet)
    buffer: Optional[bytearray] = None
    state: str = "receiving"  # receiving | complete | cancelled
    delivered: bool = False
    report_serial: int = 0
    report_timers: Dict[int, Any] = field(default_factory=dict)
    report_attempts: Dict[int, int] = field(default_factory=dict)
    reports_sent: int = 0


class LtpEngine:
    """Sender and receiver state for blocks flowing data_link.src -> data_link.dst."""

    def __init__(self, sim: Simulator, data_link: Link, report_link: Link, *,
                 segment_size: int = 11200,
                 margin: Optional[float] = None,
                 session_cap: int = 64,
                 report_size: int = 512,
                 control_size: int = 64,
                 max_retransmissions: int = 100,
                 lossy: bool = True,
                 on_deliver: Optional[Callable[[Any, Optional[bytes]], None]] = None,
                 on_closed: Optional[Callable[[Any, int], None]] = None,
                 on_cancel: Optional[Callable[[Any, int], None]] = None):
        if segment_size <= 0:
            raise ValueError("segment size must be positive")
        self.sim = sim
        self.data_link = data_link
        self.report_link = report_link
        self.segment_size = int(segment_size)
        # margin absorbs serialisation and re-acquisition at both ends
        self.margin = margin if margin is not None else 10.0 + 2.0 * data_link.acquisition_delay
        self.session_cap = session_cap
        self.report_size = report_size
        self.control_size = control_size
        self.max_retransmissions = max_retransmissions
        self.lossy = lossy
        self.on_deliver = on_deliver
        self.on_closed = on_closed
        self.on_cancel = on_cancel
        self._ids = itertools.count(1)
        self.senders: Dict[int, SenderSession] = {}
        self.receivers: Dict[int, ReceiverSession] = {}
        self.waiting: Deque[SenderSession] = deque()
        self.active = 0
        self.peak_active = 0
        self.deliveries = 0
        self.reports_sent = 0
        self.report_acks_sent = 0
        self.checkpoints_sent = 0
        self.timer_log: List[Tuple[str, float, float]] = []  # (kind, guarded tx end, fire time)

    # ---- sender side -------------------------------------------------

    def send_block(self, size: int, payload: Any = None, data: Optional[bytes] = None) -> int:
        size = int(size)
        if size <= 0:
            raise ValueError("block size must be positive")
        if data is not None and len(data) * 8 != size:
            raise ValueError("block size must equal len(data) * 8")
        session = SenderSession(next(self._ids), size, payload, data, self.sim.now)
        self.senders[session.id] = session
        if self.active < self.session_cap:
            self._start(session)
        else:
            self.waiting.append(session)
        return session.id

    def _start(self, session: SenderSession) -> None:
        self.active += 1
        self.peak_active = max(self.peak_active, self.active)
        session.state = "sending"
        self._send_ranges(session, [(0, session.block_size)])

    def _send_ranges(self, session, ranges, retransmission=False):
        segments = []
        for start, end in ranges:
            for off in range(start, end, self.segment_size):
                segments.append((off, min(self.segment_size, end - off)))
        session.checkpoint_serial += 1
        out = []
        for i, (off, length) in enumerate(segments):
            kind = CHECKPOINT if i == len(segments) - 1 else DATA
            out.append(self._data_segment(session, kind, off, length))
        if retransmission:
            session.segments_retransmitted += len(out)
        self._transmit(session, out)

    def _data_segment(self, session, kind, off, length):
        chunk = None
        if session.data is not None:
            chunk = session.data[off // 8:(off + length) // 8]
        return Segment(kind, session.id, off, length, session.block_size,
                       serial=session.checkpoint_serial if kind == CHECKPOINT else 0,
                       payload=session.payload, data=chunk)

    def _transmit(self, session, segments):
        for seg in segments:
            tx = self.data_link.transmit(seg.length, self._at_receiver, seg, lossy=self.lossy, frame=seg)
            if tx is None:
                session.deferred.append(seg)
                continue
            session.segments_sent += 1
            if seg.kind == CHECKPOINT:
                session.checkpoints_sent += 1
                self.checkpoints_sent += 1
                session.checkpoint_segment = seg
                session.state = "awaiting-report"
                self._arm_checkpoint_timer(session, seg, tx)
        if session.deferred and not session.resume_scheduled:
            when = self.data_link.next_open(max(self.sim.now, self.data_link.busy_until))
            if when is not None:
                session.resume_scheduled = True
                self.sim.schedule(when, self._resume, session, kind="ltp-resume")

    def _resume(self, session):
        session.resume_scheduled = False
        if session.state in ("closed", "cancelled"):
            session.deferred.clear()
            return
        pending, session.deferred = session.deferred, []
        self._transmit(session, pending)

    def _timeout(self, link: Link, tx):
        return 2.0 * link.contact_at(tx.start).owlt_at(tx.start) + self.margin

    def _arm_checkpoint_timer(self, session, seg, tx):
        if session.timer is not None:
            session.timer.cancel()
        deadline = self.data_link.advance_open_time(tx.end, self._timeout(self.data_link, tx))
        session.timer = None
        if deadline is not None:
            session.timer = self.sim.schedule(deadline, self._checkpoint_expired, session, seg.serial, tx.end,
                                              kind="ltp-checkpoint-timer")

    def _checkpoint_expired(self, session, serial, guarded_end):
        session.timer = None
        if session.state != "awaiting-report" or serial != session.checkpoint_serial:
            return
        self.timer_log.append(("checkpoint", guarded_end, self.sim.now))
        session.retransmissions += 1
        if session.retransmissions > self.max_retransmissions:
            self._cancel(session)
            return
        seg = session.checkpoint_segment
        session.segments_retransmitted += 1
        self._transmit(session, [seg])

    def _cancel(self, session):
        session.state = "cancelled"
        self._finish(session)
        cs = Segment(CANCEL, session.id)
        self.data_link.transmit(self.control_size, self._at_receiver, cs, lossy=self.lossy, frame=cs)
        if self.on_cancel:
            self.on_cancel(session.payload, session.id)

    def _finish(self, session):
        if session.timer is not None:
            session.timer.cancel()
            session.timer = None
        session.closed_at = self.sim.now
        self.active -= 1
        while self.waiting and self.active < self.session_cap:
            self._start(self.waiting.popleft())

    def _at_sender(self, seg: Segment):
        if seg.kind != REPORT:
            return
        session = self.senders.get(seg.session)
        if session is None:
            return
        session.reports_received += 1
        ra = Segment(REPORT_ACK, seg.session, serial=seg.serial)
        self.report_acks_sent += 1
        self.data_link.transmit(self.control_size, self._at_receiver, ra, lossy=self.lossy, frame=ra)
        if session.state not in ("sending", "awaiting-report"):
            return
        claimed = RangeSet(seg.claims)
        missing = claimed.gaps(0, session.block_size)
        if not missing:
            session.state = "closed"
            self._finish(session)
            if self.on_closed:
                self.on_closed(session.payload, session.id)
            return
        if seg.checkpoint != session.checkpoint_serial:
            return  # answers a superseded checkpoint
        if session.timer is not None:
            session.timer.cancel()
            session.timer = None
        session.retransmissions += 1
        if session.retransmissions > self.max_retransmissions:
            self._cancel(session)
            return
        self._send_ranges(session, missing, retransmission=True)

    # ---- receiver side -----------------------------------------------

    def _at_receiver(self, seg: Segment):
        if seg.kind == CANCEL:
            rs = self.receivers.get(seg.session)
            if rs is None:
                rs = self.receivers[seg.session] = ReceiverSession(seg.session, 0)
            rs.state = "cancelled"
            for timer in rs.report_timers.values():
                timer.cancel()
            rs.report_timers.clear()
            return
        if seg.kind == REPORT_ACK:
            rs = self.receivers.get(seg.session)
            if rs is not None:
                timer = rs.report_timers.pop(seg.serial, None)
                if timer is not None:
                    timer.cancel()
            return
        rs = self.receivers.get(seg.session)
        if rs is None:
            rs = self.receivers[seg.session] = ReceiverSession(seg.session, seg.block_size)
        if rs.state == "cancelled":
            return
        if seg.data is not None:
            if rs.buffer is None:
                rs.buffer = bytearray(seg.block_size // 8)
            rs.buffer[seg.offset // 8:(seg.offset + seg.length) // 8] = seg.data
        rs.received.add(seg.offset, seg.offset + seg.length)
        if not rs.delivered and rs.received.covers(0, rs.block_size):
            rs.delivered = True
            rs.state = "complete"
            self.deliveries += 1
            if self.on_deliver:
                self.on_deliver(seg.payload, bytes(rs.buffer) if rs.buffer is not None else None)
        if seg.kind == CHECKPOINT:
            rs.report_serial += 1
            report = Segment(REPORT, seg.session, serial=rs.report_serial, checkpoint=seg.serial,
                             claims=tuple(rs.received))
            self._send_report(rs, report)

    def _send_report(self, rs: ReceiverSession, report: Segment):
        tx = self.report_link.transmit(self.report_size, self._at_sender, report, lossy=self.lossy, frame=report)
        if tx is None:
            when = self.report_link.next_open(max(self.sim.now, self.report_link.busy_until))
            if when is not None:
                self.sim.schedule(when, self._send_report, rs, report, kind="ltp-report-resume")
            return
        rs.reports_sent += 1
        self.reports_sent += 1
        deadline = self.report_link.advance_open_time(tx.end, self._timeout(self.report_link, tx))
        if deadline is not None:
            old = rs.report_timers.get(report.serial)
            if old is not None:
                old.cancel()
            rs.report_timers[report.serial] = self.sim.schedule(
                deadline, self._report_expired, rs, report, tx.end, kind="ltp-report-timer")

    def _report_expired(self, rs: ReceiverSession, report: Segment, guarded_end: float):
        if rs.report_timers.pop(report.serial, None) is None or rs.state == "cancelled":
            return
        self.timer_log.append(("report", guarded_end, self.sim.now))
        attempts = rs.report_attempts.get(report.serial, 0) + 1
        rs.report_attempts[report.serial] = attempts
        if attempts > self.max_retransmissions:
            return
        self._send_report(rs, report)

    # ---- metrics -----------------------------------------------------

    def session_stats(self) -> List[Dict[str, Any]]:
        rows = []
        for s in self.senders.values():
            rows.append({
                "session": s.id,
                "state": s.state,
                "block_bits": s.block_size,
                "segments_sent": s.segments_sent,
                "segments_retransmitted": s.segments_retransmitted,
                "checkpoints": s.checkpoints_sent,
                "reports": s.reports_received,
                "latency": None if s.closed_at is None else s.closed_at - s.created,
            })
        return rows


class ReliableCL:
    """In-order, loss-free transport over a terrestrial link (TCP stand-in)."""

    def __init__(self, sim: Simulator, link: Link):
        self.sim = sim
        self.link = link
        self.queue: Deque[Tuple[float, Any, Callable]] = deque()
        self._pump_scheduled = False
        self.sent = 0

    def send(self, payload: Any, size: float, on_delivery: Callable[[Any], None]) -> Optional[float]:
        """Queue ``payload``; returns its arrival time if it left immediately."""
        self.queue.append((size, payload, on_delivery))
        return self._pump()

    def _pump(self):
        self._pump_scheduled = False
        arrival = None
        while self.queue:
            size, payload, on_delivery = self.queue[0]
            tx = self.link.transmit(size, on_delivery, payload)
            if tx is None:
                when = self.link.next_open(max(self.sim.now, self.link.busy_until))
                if when is not None and not self._pump_scheduled:
                    self._pump_scheduled = True
                    self.sim.schedule(when, self._pump, kind="cl-resume")
                return None
            self.queue.popleft()
            self.sent += 1
            arrival = tx.arrival
        return arrival


def reliable_cl_send(cl: ReliableCL, payload: Any, size: float,
                     on_delivery: Callable[[Any], None]) -> Optional[float]:
    return cl.send(payload, size, on_delivery)
