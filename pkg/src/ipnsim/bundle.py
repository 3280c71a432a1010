"""Bundle Protocol agent: file encapsulation, store-and-forward, hop acks and expiry.

Each node runs one :class:`BundleAgent`.  A bundle stays resident at the
sender until the next hop's :class:`HopAck` arrives (the ack doubles as
custody release).  The receiving copy carries the sender's hop log with the
receiver appended, so a resident copy always ends in the node holding it.
"""

import enum
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple

from .contactplan import Node
from .routing import EndpointId, UnknownEntity, best_route, region_nodes, resolve_entity

if TYPE_CHECKING:  # pragma: no cover
    from .network import Network

DAY = 86400.0
DEFAULT_LIFETIME = 30 * DAY
DEFAULT_MAX_PAYLOAD = 1_000_000  # bits
DEFAULT_ACK_SIZE = 512  # bits; hop acks and end-to-end acks

DATA = "data"
E2E_ACK = "e2e-ack"


class Action(enum.Enum):
    FORWARDED = "forwarded"
    DEFERRED = "deferred"  # route exists, first contact not open yet
    STORED = "stored"  # no route: store and carry
    DELIVERED = "delivered"
    DUPLICATE = "duplicate"
    REFUSED = "custody-refused"
    EXPIRED = "expired"
    FAILED = "failed"


@dataclass(frozen=True, order=True)
class BundleId:
    source: str
    created: float
    sequence: int

    def __str__(self):
        return f"{self.source}/{self.created!r}/{self.sequence}"


@dataclass(frozen=True)
class Bundle:
    id: BundleId
    source: EndpointId
    dest: EndpointId
    size: int  # payload bits
    lifetime: float
    file_id: str
    fragment_index: int = 0
    fragment_count: int = 1
    kind: str = DATA
    hop_log: Tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= self.fragment_index < self.fragment_count:
            raise ValueError("fragment index must lie in [0, fragment_count)")
        if self.size <= 0:
            raise ValueError("bundle payload must be positive")

    @property
    def created(self) -> float:
        return self.id.created

    @property
    def expiry(self) -> float:
        return self.id.created + self.lifetime

    def expired(self, now: float) -> bool:
        return now > self.expiry

    def arrived_at(self, node: str) -> "Bundle":
        return replace(self, hop_log=self.hop_log + (node,))


@dataclass(frozen=True)
class HopAck:
    bundle_id: BundleId
    sender: str  # the node releasing custody on receipt
    receiver: str  # the node that accepted the bundle


@dataclass(frozen=True)
class EndToEndAck:
    file_id: str
    origin: str  # destination node that reassembled the file


def encapsulate_file(file_size: int, dest: EndpointId, max_payload: int = DEFAULT_MAX_PAYLOAD, *,
                     source: EndpointId = EndpointId("local", "local"), created: float = 0.0,
                     lifetime: float = DEFAULT_LIFETIME, file_id: str = "file",
                     first_sequence: int = 0, hop_log: Tuple[str, ...] = ()) -> List[Bundle]:
    """Split a file into ceil(file_size / max_payload) bundles, all but the last full."""
    if not file_size > 0 or not max_payload > 0:
        raise ValueError("file size and max payload must be positive")
    file_size, max_payload = int(file_size), int(max_payload)
    count = -(-file_size // max_payload)
    bundles = []
    for i in range(count):
        size = min(max_payload, file_size - i * max_payload)
        bid = BundleId(str(source), created, first_sequence + i)
        bundles.append(Bundle(bid, source, dest, size, lifetime, file_id, i, count, DATA, hop_log))
    return bundles


@dataclass
class BundleStore:
    """Persistent bundle storage with a hard capacity in bits."""

    capacity: float = math.inf
    resident: Dict[BundleId, Tuple[Bundle, float]] = field(default_factory=dict)
    used: int = 0
    peak: int = 0

    def fits(self, bundle: Bundle) -> bool:
        return self.used + bundle.size <= self.capacity

    def add(self, bundle: Bundle, now: float) -> bool:
        if bundle.id in self.resident or not self.fits(bundle):
            return False
        self.resident[bundle.id] = (bundle, now)
        self.used += bundle.size
        self.peak = max(self.peak, self.used)
        return True

    def remove(self, bid: BundleId) -> Optional[Bundle]:
        entry = self.resident.pop(bid, None)
        if entry is None:
            return None
        self.used -= entry[0].size
        return entry[0]

    def get(self, bid: BundleId) -> Optional[Bundle]:
        entry = self.resident.get(bid)
        return None if entry is None else entry[0]

    def __contains__(self, bid) -> bool:
        return bid in self.resident

    def __len__(self) -> int:
        return len(self.resident)

    def bundles(self) -> List[Bundle]:
        """Resident bundles in arrival order."""
        return [b for b, _ in self.resident.values()]


class BundleAgent:
    """Per-node BP state machine, driven only by event-loop callbacks."""

    def __init__(self, node: Node, network: "Network", capacity: float = math.inf, *,
                 lifetime: float = DEFAULT_LIFETIME, max_payload: int = DEFAULT_MAX_PAYLOAD,
                 ack_size: int = DEFAULT_ACK_SIZE,
                 record: Optional[Callable[..., None]] = None):
        self.node = node
        self.name = node.name
        self.network = network
        self.sim = network.sim
        self.store = BundleStore(capacity)
        self.lifetime = lifetime
        self.max_payload = max_payload
        self.ack_size = ack_size
        self.record = record or (lambda *a, **k: None)
        self.eid = EndpointId(node.region, node.entities[0] if node.entities else node.name)
        self._sequence = itertools.count()
        self._files = itertools.count(1)
        self.in_transit: Dict[BundleId, str] = {}  # bundle -> next hop awaiting its ack
        self._timers: Dict[BundleId, object] = {}
        self._retries: Dict[BundleId, object] = {}
        self._sweeps: Dict[float, object] = {}
        self.delivered: Dict[BundleId, float] = {}
        self.reassembly: Dict[str, set] = {}
        self.files_complete: Dict[str, float] = {}
        self.acknowledged_files: Dict[str, float] = {}
        self.refused = 0
        self.expired = 0

    # ---- origination ---------------------------------------------------

    def originate_file(self, file_size: int, dest: EndpointId, *, kind: str = DATA,
                       file_id: Optional[str] = None) -> List[Bundle]:
        now = self.sim.now
        if file_id is None:
            file_id = f"{self.eid}#f{next(self._files)}"
        max_payload = self.max_payload if kind == DATA else max(self.max_payload, file_size)
        bundles = encapsulate_file(file_size, dest, max_payload, source=self.eid, created=now,
                                   lifetime=self.lifetime, file_id=file_id,
                                   first_sequence=next(self._sequence), hop_log=(self.name,))
        # keep sequence numbers unique across files created at the same instant
        for _ in range(len(bundles) - 1):
            next(self._sequence)
        bundles = [replace(b, kind=kind) for b in bundles]
        for b in bundles:
            self.record("created", b, self.name)
            self._take(b)
        return bundles

    # ---- receive side ----------------------------------------------------

    def on_receive(self, bundle: Bundle, sender: str) -> Action:
        """Bundle arrived from ``sender`` over a convergence layer."""
        now = self.sim.now
        copy = bundle.arrived_at(self.name)
        if bundle.id in self.store or bundle.id in self.delivered:
            self.record("duplicate", copy, self.name, peer=sender)
            self._ack(bundle.id, sender)
            return Action.DUPLICATE
        if bundle.expired(now):
            self.expired += 1
            self.record("expired", copy, self.name)
            return Action.EXPIRED
        if self._is_final(bundle):
            self._ack(bundle.id, sender)
            self._deliver(copy)
            return Action.DELIVERED
        if not self.store.fits(copy):
            self.refused += 1
            self.record("custody-refused", copy, self.name, peer=sender)
            return Action.REFUSED
        self._ack(bundle.id, sender)
        self.record("received", copy, self.name, peer=sender)
        return self._take(copy)

    def on_hop_ack(self, ack: HopAck) -> None:
        if self.in_transit.get(ack.bundle_id) != ack.receiver:
            return  # stale or duplicate ack
        del self.in_transit[ack.bundle_id]
        self._cancel_timer(ack.bundle_id)
        bundle = self.store.remove(ack.bundle_id)
        if bundle is not None:
            self.record("acked", bundle, self.name, peer=ack.receiver)

    def _ack(self, bid: BundleId, sender: str) -> None:
        self.network.send_ack(self.name, sender, HopAck(bid, sender, self.name), self.ack_size)

    def _is_final(self, bundle: Bundle) -> bool:
        if self.node.region.lower() != bundle.dest.region:
            return False
        try:
            return resolve_entity(self.node, bundle.dest.entity, self.network.directory) == self.name
        except UnknownEntity:
            return False

    def _deliver(self, bundle: Bundle) -> None:
        now = self.sim.now
        self.delivered[bundle.id] = now
        self.record("delivered", bundle, self.name, latency=now - bundle.created)
        if bundle.kind == E2E_ACK:
            self.acknowledged_files.setdefault(bundle.file_id, now)
            self.record("file-acknowledged", bundle, self.name)
            return
        got = self.reassembly.setdefault(bundle.file_id, set())
        got.add(bundle.fragment_index)
        if len(got) == bundle.fragment_count and bundle.file_id not in self.files_complete:
            self.files_complete[bundle.file_id] = now
            self.record("file-complete", bundle, self.name)
            self.originate_file(self.ack_size, bundle.source, kind=E2E_ACK, file_id=bundle.file_id)

    # ---- storage and forwarding -------------------------------------------

    def _take(self, bundle: Bundle) -> Action:
        """Place a bundle in custody (or deliver it locally) and try to forward."""
        if self._is_final(bundle):
            self._deliver(bundle)
            return Action.DELIVERED
        if not self.store.add(bundle, self.sim.now):
            self.refused += 1
            self.record("custody-refused", bundle, self.name)
            return Action.REFUSED
        self._schedule_sweep(bundle.expiry)
        return self.forward(bundle.id)

    def forward(self, bid: BundleId) -> Action:
        """Route a resident bundle and hand it to the next hop's convergence layer."""
        retry = self._retries.pop(bid, None)
        if retry is not None:
            retry.cancel()
        bundle = self.store.get(bid)
        if bundle is None or bid in self.in_transit:
            return Action.STORED
        now = self.sim.now
        if bundle.expired(now):
            self.expire_sweep()
            return Action.EXPIRED
        targets = self._targets(bundle)
        if targets is None:
            self.store.remove(bid)
            self.record("failed", bundle, self.name, reason="unknown-entity")
            return Action.FAILED
        plan = self.network.plan
        route = best_route(plan, self.name, targets, now, bundle.size, exclude=bundle.hop_log)
        if route is None:
            # a loop-free path may have vanished after delays; allow revisits rather than stall
            route = best_route(plan, self.name, targets, now, bundle.size)
        if route is None or not route.hops:
            self.record("stored", bundle, self.name)
            return Action.STORED
        depart = route.departures[0]
        if depart > now:
            self._retries[bid] = self.sim.schedule(depart, self.forward, bid, target=self.name, kind="bp-retry")
            return Action.DEFERRED
        hop = route.next_hop
        self.in_transit[bid] = hop
        self.record("forwarded", bundle, self.name, peer=hop, eta=route.arrival)
        self.network.send_bundle(self.name, hop, bundle)
        return Action.FORWARDED

    def _targets(self, bundle: Bundle) -> Optional[List[str]]:
        region = bundle.dest.region
        if self.node.region.lower() == region:
            try:
                return [resolve_entity(self.node, bundle.dest.entity, self.network.directory)]
            except UnknownEntity:
                return None
        return region_nodes(self.network.nodes, region)

    # ---- convergence-layer feedback ------------------------------------------

    def cl_done(self, bundle: Bundle, hop: str, owlt: float) -> None:
        """The convergence layer finished the hop; wait for the ack, then retry."""
        if self.in_transit.get(bundle.id) != hop:
            return
        timeout = 2.0 * (2.0 * owlt + self.network.margin(hop, self.name))
        deadline = self.network.advance_open_time(hop, self.name, self.sim.now, timeout)
        self._cancel_timer(bundle.id)
        if deadline is not None:
            self._timers[bundle.id] = self.sim.schedule(deadline, self._custody_expired, bundle.id, hop,
                                                        target=self.name, kind="bp-custody-timer")

    def cl_failed(self, bundle: Bundle, hop: str) -> None:
        if self.in_transit.get(bundle.id) != hop:
            return
        del self.in_transit[bundle.id]
        self._cancel_timer(bundle.id)
        self.record("cl-failed", bundle, self.name, peer=hop)
        self.forward(bundle.id)

    def _custody_expired(self, bid: BundleId, hop: str) -> None:
        self._timers.pop(bid, None)
        if self.in_transit.get(bid) != hop:
            return
        del self.in_transit[bid]
        bundle = self.store.get(bid)
        if bundle is not None:
            self.record("custody-timeout", bundle, self.name, peer=hop)
        self.forward(bid)

    def _cancel_timer(self, bid: BundleId) -> None:
        timer = self._timers.pop(bid, None)
        if timer is not None:
            timer.cancel()

    # ---- expiry ----------------------------------------------------------

    def _schedule_sweep(self, expiry: float) -> None:
        if math.isinf(expiry):
            return
        when = math.nextafter(expiry, math.inf)
        if when not in self._sweeps:
            self._sweeps[when] = self.sim.schedule(max(when, self.sim.now), self._sweep_event, when,
                                                   target=self.name, kind="bp-expire")

    def _sweep_event(self, when: float) -> None:
        self._sweeps.pop(when, None)
        self.expire_sweep()

    def expire_sweep(self) -> int:
        """Drop every resident bundle with now > creation + lifetime."""
        now = self.sim.now
        dropped = [b for b in self.store.bundles() if b.expired(now)]
        for b in dropped:
            self.store.remove(b.id)
            self.in_transit.pop(b.id, None)
            self._cancel_timer(b.id)
            retry = self._retries.pop(b.id, None)
            if retry is not None:
                retry.cancel()
            self.expired += 1
            self.record("expired", b, self.name)
        return len(dropped)
