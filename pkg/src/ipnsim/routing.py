"""Contact-graph routing and region:entity endpoint naming.

Routes minimise the arrival time of a whole bundle under a queue-free
model: a hop may start once the bundle is at the sender and the contact is
open, takes size/rate to serialise (and must finish inside the contact),
then propagates for the owlt at transmission start.  Ties are broken by
the lexicographically smallest node sequence.
"""

import heapq
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

from .contactplan import Contact, ContactPlan, Node

SCHEME = "Bundle://"


class UnknownEntity(LookupError):
    pass


@dataclass(frozen=True)
class EndpointId:
    region: str
    entity: str

    def __post_init__(self):
        if not self.region:
            raise ValueError("endpoint region must be non-empty")
        object.__setattr__(self, "region", self.region.lower())

    def __str__(self):
        return f"{SCHEME}{self.region}:{self.entity}"

    @classmethod
    def parse(cls, text: str) -> "EndpointId":
        """Accepts ``Bundle://region:entity`` and the ``Bundle://region://entity`` spelling."""
        rest = text.strip()
        if rest.lower().startswith(SCHEME.lower()):
            rest = rest[len(SCHEME):]
        region, sep, entity = rest.partition(":")
        entity = entity.lstrip("/")
        if not sep or not region or not entity:
            raise ValueError(f"malformed endpoint id {text!r}")
        return cls(region, entity)


@dataclass(frozen=True)
class Route:
    hops: Tuple[Contact, ...]
    arrival: float
    departures: Tuple[float, ...] = ()

    @property
    def next_hop(self) -> Optional[str]:
        return self.hops[0].dst if self.hops else None

    @property
    def nodes(self) -> Tuple[str, ...]:
        if not self.hops:
            return ()
        return (self.hops[0].src,) + tuple(c.dst for c in self.hops)


def hop_times(contact: Contact, ready: float, size: float) -> Optional[Tuple[float, float]]:
    """(transmission start, arrival) through ``contact`` for a bundle ready at ``ready``."""
    start = max(ready, contact.start)
    if start >= contact.end:
        return None
    end = start + size / contact.rate
    if end > contact.end:
        return None
    return start, end + contact.owlt_at(start)


def _latest_start(contact: Contact, deadline: float, size: float) -> Optional[float]:
    """Latest ready time at the sender that still arrives by ``deadline``."""
    tx = size / contact.rate
    t_hi = contact.end - tx
    slope = (contact.owlt_end - contact.owlt_start) / (contact.end - contact.start)
    t_arr = contact.start + (deadline - contact.start - tx - contact.owlt_start) / (1.0 + slope)
    latest = min(t_hi, t_arr)
    if latest < contact.start:
        return None
    return latest


def _slack(t: float) -> float:
    return 1e-12 * max(1.0, abs(t))


def best_route(plan: ContactPlan, source: str, targets: Iterable[str], t_now: float,
               size: float, exclude: Iterable[str] = ()) -> Optional[Route]:
    """Earliest-arrival route from ``source`` to any node in ``targets``.

    ``exclude`` lists nodes the route may not visit (typically the bundle's
    hop log).  Returns None when nothing is reachable within the plan.
    """
    if not size > 0:
        raise ValueError("bundle size must be positive")
    banned = set(exclude) - {source}
    goals = set(targets) - banned
    if not goals:
        return None
    if source in goals:
        return Route((), t_now)

    # forward pass: earliest arrival per node
    earliest: Dict[str, float] = {source: t_now}
    heap = [(t_now, source)]
    settled = set()
    best = None
    while heap:
        t, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u in goals:
            best = t
            break
        for c in plan.contacts_from(u):
            if c.dst in banned or c.dst in settled or c.end <= t:
                continue
            times = hop_times(c, t, size)
            if times is not None and times[1] < earliest.get(c.dst, math.inf):
                earliest[c.dst] = times[1]
                heapq.heappush(heap, (times[1], c.dst))
    if best is None:
        return None

    # backward pass: latest time at each node that still meets `best`
    latest: Dict[str, float] = {g: best for g in goals}
    heap = [(-best, g) for g in sorted(goals)]
    heapq.heapify(heap)
    settled = set()
    while heap:
        neg, w = heapq.heappop(heap)
        if w in settled:
            continue
        settled.add(w)
        for c in plan.contacts_to(w):
            v = c.src
            if v in banned or v in settled:
                continue
            t = _latest_start(c, -neg, size)
            if t is not None and t > latest.get(v, -math.inf):
                latest[v] = t
                heapq.heappush(heap, (-t, v))

    # lexicographic depth-first search among routes arriving by `best`
    visited = {source}
    hops: List[Contact] = []
    departures: List[float] = []

    def search(u: str, t_u: float) -> bool:
        if u in goals:
            return t_u <= best
        options: Dict[str, Tuple[float, float, Contact]] = {}
        for c in plan.contacts_from(u):
            if c.dst in visited or c.dst in banned or c.end <= t_u:
                continue
            times = hop_times(c, t_u, size)
            if times is None:
                continue
            prev = options.get(c.dst)
            if prev is None or times[1] < prev[1]:
                options[c.dst] = (times[0], times[1], c)
        for w in sorted(options):
            start, arrival, c = options[w]
            if arrival > latest.get(w, -math.inf) + _slack(arrival):
                continue
            visited.add(w)
            hops.append(c)
            departures.append(start)
            if search(w, arrival):
                return True
            visited.discard(w)
            hops.pop()
            departures.pop()
        return False

    if not search(source, t_now):
        return None  # unreachable in practice: the forward pass found `best`
    return Route(tuple(hops), best, tuple(departures))


def region_nodes(nodes: Mapping[str, Node], region: str) -> List[str]:
    region = region.lower()
    return sorted(n.name for n in nodes.values() if n.region.lower() == region)


def build_directory(nodes: Iterable[Node]) -> Dict[str, Dict[str, str]]:
    """region -> {entity -> node name}; every node answers to its own name."""
    directory: Dict[str, Dict[str, str]] = {}
    for node in nodes:
        table = directory.setdefault(node.region.lower(), {})
        for entity in (node.name,) + tuple(node.entities):
            owner = table.get(entity)
            if owner is not None and owner != node.name:
                raise ValueError(f"entity {entity!r} claimed by {owner} and {node.name} in {node.region}")
            table[entity] = node.name
    return directory


def resolve_entity(region_node: Node, entity: str, directory: Mapping[str, Mapping[str, str]]) -> str:
    """Late binding: map ``entity`` to a node inside ``region_node``'s region."""
    if entity == region_node.name or entity in region_node.entities:
        return region_node.name
    table = directory.get(region_node.region.lower(), {})
    try:
        return table[entity]
    except KeyError:
        raise UnknownEntity(f"no entity {entity!r} in region {region_node.region!r}") from None
