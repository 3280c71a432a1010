"""Wires links, convergence layers and bundle agents into one simulated network."""

import math
from typing import Dict, Mapping, Optional, Sequence

from .bundle import DEFAULT_ACK_SIZE, DEFAULT_LIFETIME, DEFAULT_MAX_PAYLOAD, Bundle, BundleAgent, HopAck
from .contactplan import AllowedPair, ContactPlan, Node, convergence_layer
from .linkmodel import BandSpec
from .ltp import LtpEngine, ReliableCL
from .routing import build_directory
from .simcore import Link, Simulator


class Network:
    """All per-node agents and per-pair convergence layers of one scenario run.

    Space pairs get one LTP engine per direction (data on the forward link,
    reports on the reverse one); terrestrial pairs get a reliable CL per
    direction.  Hop acks travel over the same convergence layers.
    """

    def __init__(self, sim: Simulator, nodes: Mapping[str, Node], plan: ContactPlan,
                 pairs: Sequence[AllowedPair] = (), bands: Mapping[str, BandSpec] = None, *,
                 capacities: Optional[Mapping[str, float]] = None,
                 lifetime: float = DEFAULT_LIFETIME,
                 max_payload: int = DEFAULT_MAX_PAYLOAD,
                 segment_size: int = 11200,
                 session_cap: int = 64,
                 ack_size: int = DEFAULT_ACK_SIZE,
                 record=None):
        self.sim = sim
        self.nodes = dict(nodes)
        self.plan = plan
        self.bands = dict(bands or {})
        self.directory = build_directory(self.nodes[n] for n in sorted(self.nodes))
        self.record = record
        self.links: Dict[tuple, Link] = {}
        self.engines: Dict[tuple, LtpEngine] = {}
        self.reliable: Dict[tuple, ReliableCL] = {}
        self._layer: Dict[tuple, str] = {}

        pair_info = {}
        for p in pairs:
            pair_info[(p.a, p.b)] = pair_info[(p.b, p.a)] = p
        keys = sorted({(c.src, c.dst) for c in plan.contacts})
        for src, dst in keys:
            pair = pair_info.get((src, dst))
            loss = pair.loss if pair is not None else 0.0
            acq = self._acquisition(pair)
            self.links[(src, dst)] = Link(sim, src, dst, plan.between(src, dst), loss=loss, acquisition_delay=acq)
        for src, dst in keys:
            rev = self.links.get((dst, src))
            layer = convergence_layer(self.nodes[src], self.nodes[dst])
            self._layer[(src, dst)] = layer
            if layer == "reliable":
                self.reliable[(src, dst)] = ReliableCL(sim, self.links[(src, dst)])
            elif rev is not None:
                self.engines[(src, dst)] = LtpEngine(
                    sim, self.links[(src, dst)], rev, segment_size=segment_size, session_cap=session_cap,
                    on_deliver=self._ltp_deliver(src, dst), on_closed=self._ltp_closed(src, dst),
                    on_cancel=self._ltp_cancel(src, dst))

        capacities = capacities or {}
        self.agents: Dict[str, BundleAgent] = {}
        for name in sorted(self.nodes):
            self.agents[name] = BundleAgent(self.nodes[name], self, capacities.get(name, math.inf),
                                            lifetime=lifetime, max_payload=max_payload, ack_size=ack_size,
                                            record=record)

    def _acquisition(self, pair: Optional[AllowedPair]) -> float:
        if pair is None or pair.is_fixed:
            return 0.0
        names = [pair.band] + [o.band for o in pair.overrides]
        return max((self.bands[n].acquisition_delay for n in names if n in self.bands), default=0.0)

    # ---- convergence-layer plumbing ---------------------------------------

    def send_bundle(self, src: str, dst: str, bundle: Bundle) -> None:
        key = (src, dst)
        if key in self.reliable:
            link = self.links[key]

            def arrived(b, src=src, dst=dst):
                self.agents[dst].on_receive(b, src)
                owlt = link.contacts[0].owlt_at(self.sim.now) if link.contacts else 0.0
                self.agents[src].cl_done(b, dst, owlt)

            self.reliable[key].send(bundle, bundle.size, arrived)
        elif key in self.engines:
            self.engines[key].send_block(bundle.size, payload=("bundle", bundle))
        else:
            self.agents[src].cl_failed(bundle, dst)

    def send_ack(self, src: str, dst: str, ack: HopAck, size: int) -> None:
        key = (src, dst)
        if key in self.reliable:
            self.reliable[key].send(ack, size, lambda a, dst=dst: self.agents[dst].on_hop_ack(a))
        elif key in self.engines:
            self.engines[key].send_block(size, payload=("hop-ack", ack))
        # no reverse link at all: the sender's custody timer will retry

    def _ltp_deliver(self, src, dst):
        def deliver(payload, _data):
            kind, obj = payload
            if kind == "bundle":
                self.agents[dst].on_receive(obj, src)
            else:
                self.agents[dst].on_hop_ack(obj)
        return deliver

    def _ltp_closed(self, src, dst):
        def closed(payload, _sid):
            kind, obj = payload
            if kind == "bundle":
                link = self.links[(src, dst)]
                c = link.contact_at(self.sim.now) or (link.contacts[-1] if link.contacts else None)
                owlt = c.owlt_at(min(max(self.sim.now, c.start), c.end)) if c is not None else 0.0
                self.agents[src].cl_done(obj, dst, owlt)
        return closed

    def _ltp_cancel(self, src, dst):
        def cancelled(payload, _sid):
            kind, obj = payload
            if kind == "bundle":
                self.agents[src].cl_failed(obj, dst)
        return cancelled

    def margin(self, a: str, b: str) -> float:
        engine = self.engines.get((a, b))
        return engine.margin if engine is not None else 10.0

    def advance_open_time(self, src: str, dst: str, t0: float, duration: float) -> Optional[float]:
        link = self.links.get((src, dst))
        if link is None:
            return None
        return link.advance_open_time(t0, duration)

    # ---- queries ---------------------------------------------------------

    def layer(self, src: str, dst: str) -> Optional[str]:
        return self._layer.get((src, dst))
