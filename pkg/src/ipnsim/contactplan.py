"""Contact-plan computation by sweeping the ephemeris, plus the plan text format."""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .ephemeris import Ephemeris, segment_blocked, segment_blocked_mask
from .linkmodel import BandSpec
from .units import C

ROLES = ("mission-center", "ground-station", "relay-satellite", "lagrangian-relay", "orbiter", "surface-asset")
TERRESTRIAL_ROLES = ("mission-center", "ground-station")

EDGE_TOLERANCE = 0.5  # s; bisection bracket width, inside the 1 s requirement


class ContactPlanError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    name: str
    body: str
    role: str
    region: str = ""
    entities: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ContactPlanError(f"node {self.name}: unknown role {self.role!r}")
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ContactPlanError(f"node name {self.name!r} must be non-empty without whitespace")


def convergence_layer(a: Node, b: Node) -> str:
    """'reliable' between terrestrial roles, 'ltp' on every space link."""
    if a.role in TERRESTRIAL_ROLES and b.role in TERRESTRIAL_ROLES:
        return "reliable"
    return "ltp"


@dataclass(frozen=True)
class BandOverride:
    start: float
    end: float
    band: str


@dataclass(frozen=True)
class AllowedPair:
    """A topology edge. ``a -> b`` is the forward (high-rate) direction.

    Geometric pairs name a ``band``; fixed pairs (terrestrial cables) give
    ``fixed_rate``/``fixed_owlt`` and are open for the whole horizon.
    """

    a: str
    b: str
    band: Optional[str] = None
    fixed_rate: Optional[float] = None
    fixed_return_rate: Optional[float] = None
    fixed_owlt: float = 0.0
    loss: float = 0.0
    overrides: Tuple[BandOverride, ...] = ()

    @property
    def is_fixed(self) -> bool:
        return self.fixed_rate is not None


@dataclass(frozen=True)
class Contact:
    """Directed contact window; owlt interpolates linearly between the edges."""

    src: str
    dst: str
    start: float
    end: float
    rate: float
    owlt_start: float
    owlt_end: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ContactPlanError(f"contact {self.src}->{self.dst}: start must precede end")
        if not self.rate > 0:
            raise ContactPlanError(f"contact {self.src}->{self.dst}: rate must be positive")
        if self.owlt_start < 0 or self.owlt_end < 0:
            raise ContactPlanError(f"contact {self.src}->{self.dst}: owlt must be non-negative")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def owlt_at(self, t: float) -> float:
        if self.owlt_start == self.owlt_end:
            return self.owlt_start
        frac = (t - self.start) / (self.end - self.start)
        return self.owlt_start + (self.owlt_end - self.owlt_start) * frac


@dataclass
class ContactPlan:
    contacts: List[Contact]
    horizon: float
    _by_src: Dict[str, List[Contact]] = field(default=None, init=False, repr=False, compare=False)
    _by_dst: Dict[str, List[Contact]] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.contacts = sorted(self.contacts, key=lambda c: (c.start, c.src, c.dst, c.end))
        last_end: Dict[Tuple[str, str], float] = {}
        for c in sorted(self.contacts, key=lambda c: (c.src, c.dst, c.start)):
            key = (c.src, c.dst)
            if key in last_end and c.start < last_end[key]:
                raise ContactPlanError(f"overlapping contacts {c.src}->{c.dst} at t={c.start}")
            if c.start < 0 or c.end > self.horizon:
                raise ContactPlanError(f"contact {c.src}->{c.dst} outside [0, horizon]")
            last_end[key] = c.end

    @property
    def nodes(self) -> List[str]:
        return sorted({c.src for c in self.contacts} | {c.dst for c in self.contacts})

    def contacts_from(self, node: str) -> List[Contact]:
        if self._by_src is None:
            by_src: Dict[str, List[Contact]] = {}
            for c in self.contacts:
                by_src.setdefault(c.src, []).append(c)
            self._by_src = by_src
        return self._by_src.get(node, [])

    def contacts_to(self, node: str) -> List[Contact]:
        if self._by_dst is None:
            by_dst: Dict[str, List[Contact]] = {}
            for c in self.contacts:
                by_dst.setdefault(c.dst, []).append(c)
            self._by_dst = by_dst
        return self._by_dst.get(node, [])

    def between(self, src: str, dst: str) -> List[Contact]:
        return [c for c in self.contacts_from(src) if c.dst == dst]


def visibility_windows(visible_at: Callable[[np.ndarray], np.ndarray],
                       visible: Callable[[float], bool],
                       t0: float, t1: float, step: float,
                       tolerance: float = EDGE_TOLERANCE) -> List[Tuple[float, float]]:
    """Windows in [t0, t1] where the predicate holds.

    ``visible_at`` is the vectorised predicate used for the coarse sweep;
    ``visible`` is the scalar form used to bisect each edge.  Edges clipped
    by ``t0``/``t1`` are returned as-is.
    """
    ts = np.arange(t0, t1, step, dtype=float)
    ts = np.append(ts, t1) if ts.size == 0 or ts[-1] < t1 else ts
    mask = np.asarray(visible_at(ts), dtype=bool)
    windows = []
    n = len(ts)
    i = 0
    while i < n:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and mask[j + 1]:
            j += 1
        if i == 0:
            start = float(ts[0])
        else:
            lo, hi = float(ts[i - 1]), float(ts[i])
            while hi - lo > tolerance:
                mid = 0.5 * (lo + hi)
                if visible(mid):
                    hi = mid
                else:
                    lo = mid
            start = hi
        if j == n - 1:
            end = float(ts[-1])
        else:
            lo, hi = float(ts[j]), float(ts[j + 1])
            while hi - lo > tolerance:
                mid = 0.5 * (lo + hi)
                if visible(mid):
                    lo = mid
                else:
                    hi = mid
            end = lo
        if start < end:
            windows.append((start, end))
        i = j + 1
    return windows


def _band_schedule(pair: AllowedPair, horizon: float) -> List[Tuple[float, float, str]]:
    """Split [0, horizon] into (start, end, band) pieces honouring overrides."""
    pieces = [(0.0, horizon, pair.band)]
    for ov in sorted(pair.overrides, key=lambda o: (o.start, o.end)):
        s, e = max(0.0, ov.start), min(horizon, ov.end)
        if not s < e:
            continue
        out = []
        for ps, pe, band in pieces:
            if pe <= s or ps >= e:
                out.append((ps, pe, band))
                continue
            if ps < s:
                out.append((ps, s, band))
            out.append((max(ps, s), min(pe, e), ov.band))
            if pe > e:
                out.append((e, pe, band))
        pieces = out
    return pieces


class _PairGeometry:
    """Vector and scalar visibility/rate for one pair of bodies."""

    def __init__(self, eph: Ephemeris, body_a: str, body_b: str, occluders):
        # canonical order keeps the blocking test symmetric
        self.eph = eph
        self.a, self.b = sorted((body_a, body_b))
        self.occluders = list(occluders)

    def _range_blocked(self, ts):
        ax, ay = self.eph.positions(self.a, ts)
        bx, by = self.eph.positions(self.b, ts)
        blocked = np.zeros(np.shape(ts), dtype=bool)
        for body, radius in self.occluders:
            cx, cy = self.eph.positions(body, ts)
            blocked |= segment_blocked_mask(ax, ay, bx, by, cx, cy, radius)
        return np.hypot(bx - ax, by - ay), blocked

    def range_at(self, ts):
        return self._range_blocked(ts)[0]

    def visible_at(self, ts, band: BandSpec):
        rng, blocked = self._range_blocked(ts)
        fwd = forward_rate(band, rng)
        return ~blocked & (fwd > 0)

    def visible(self, t: float, band: BandSpec) -> bool:
        pa, pb = self.eph.position_at(self.a, t), self.eph.position_at(self.b, t)
        for body, radius in self.occluders:
            if segment_blocked(pa, pb, self.eph.position_at(body, t), radius):
                return False
        rng = math.hypot(pb.x - pa.x, pb.y - pa.y)
        return bool(forward_rate(band, np.asarray(rng)) > 0)


def forward_rate(band: BandSpec, rng):
    """Vectorised forward rate with the sensitivity floor applied."""
    rng = np.asarray(rng, dtype=float)
    with np.errstate(divide="ignore"):
        fwd = band.reference_rate * (band.reference_range / rng) ** 2
    fwd = np.where(rng > 0, fwd, 0.0)
    return np.where(fwd >= band.min_rate, fwd, 0.0)


def compute_contacts(ephemeris: Ephemeris,
                     nodes: Mapping[str, Node],
                     pairs: Sequence[AllowedPair],
                     bands: Mapping[str, BandSpec],
                     horizon: float,
                     step: float = 3600.0,
                     occluders: Sequence[Tuple[str, float]] = (),
                     max_contact_duration: Optional[float] = None) -> ContactPlan:
    """Sweep every allowed pair over [0, horizon] and build the contact plan.

    Each visibility window yields two directed contacts (forward and return
    rate).  The band's acquisition delay is deducted from the usable start.
    Rates are the minimum seen over the window's edges and interior samples.
    """
    if not step > 0:
        raise ContactPlanError("step must be positive")
    if not horizon > 0:
        raise ContactPlanError("horizon must be positive")
    step = min(step, horizon / 2.0)  # short runs still get interior samples
    contacts: List[Contact] = []
    seen = set()
    for pair in pairs:
        key = tuple(sorted((pair.a, pair.b)))
        if key in seen:
            raise ContactPlanError(f"duplicate allowed pair {pair.a}-{pair.b}")
        seen.add(key)
        for name in (pair.a, pair.b):
            if name not in nodes:
                raise ContactPlanError(f"allowed pair references unknown node {name!r}")
        if pair.is_fixed:
            ret = pair.fixed_return_rate if pair.fixed_return_rate is not None else pair.fixed_rate
            contacts.append(Contact(pair.a, pair.b, 0.0, horizon, pair.fixed_rate, pair.fixed_owlt, pair.fixed_owlt))
            contacts.append(Contact(pair.b, pair.a, 0.0, horizon, ret, pair.fixed_owlt, pair.fixed_owlt))
            continue
        na, nb = nodes[pair.a], nodes[pair.b]
        if na.body == nb.body:
            raise ContactPlanError(f"pair {pair.a}-{pair.b}: geometric link between nodes on the same body")
        geo = _PairGeometry(ephemeris, na.body, nb.body, occluders)
        for seg_start, seg_end, band_name in _band_schedule(pair, horizon):
            if band_name not in bands:
                raise ContactPlanError(f"pair {pair.a}-{pair.b}: unknown band {band_name!r}")
            band = bands[band_name]
            windows = visibility_windows(lambda ts: geo.visible_at(ts, band),
                                         lambda t: geo.visible(t, band),
                                         seg_start, seg_end, step)
            for ws, we in windows:
                start = ws + band.acquisition_delay
                if not start < we:
                    continue
                for cs, ce in _chunks(start, we, max_contact_duration):
                    inner = np.arange(cs, ce, step, dtype=float)
                    samples = np.concatenate([inner, [cs, ce]])
                    fwd = float(np.min(forward_rate(band, geo.range_at(samples))))
                    if not fwd > 0:
                        continue
                    ret = fwd / band.asymmetry_ratio
                    o0 = float(geo.range_at(np.asarray(cs))) / C
                    o1 = float(geo.range_at(np.asarray(ce))) / C
                    contacts.append(Contact(pair.a, pair.b, cs, ce, fwd, o0, o1))
                    contacts.append(Contact(pair.b, pair.a, cs, ce, ret, o0, o1))
    return ContactPlan(contacts, horizon)


def _chunks(start, end, max_len):
    if not max_len:
        return [(start, end)]
    out = []
    s = start
    while end - s > max_len:
        out.append((s, s + max_len))
        s += max_len
    out.append((s, end))
    return out


HEADER = "# ipnsim contact plan\n"
COLUMNS = "# from to start_s end_s rate_bps owlt_start_s owlt_end_s\n"


def export_plan(plan: ContactPlan) -> str:
    lines = [HEADER, f"# horizon {plan.horizon!r}\n", COLUMNS]
    for c in plan.contacts:
        lines.append(f"{c.src} {c.dst} {c.start!r} {c.end!r} {c.rate!r} {c.owlt_start!r} {c.owlt_end!r}\n")
    return "".join(lines)


def import_plan(text: str) -> ContactPlan:
    contacts = []
    horizon = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            words = stripped[1:].split()
            if len(words) == 2 and words[0] == "horizon":
                horizon = _float(words[1], lineno)
            continue
        fields = stripped.split()
        if len(fields) != 7:
            raise ContactPlanError(f"line {lineno}: expected 7 fields, got {len(fields)}")
        src, dst = fields[:2]
        start, end, rate, o0, o1 = (_float(f, lineno) for f in fields[2:])
        try:
            contacts.append(Contact(src, dst, start, end, rate, o0, o1))
        except ContactPlanError as exc:
            raise ContactPlanError(f"line {lineno}: {exc}") from None
    if horizon is None:
        horizon = max((c.end for c in contacts), default=0.0)
    return ContactPlan(contacts, horizon)


def _float(text, lineno):
    try:
        return float(text)
    except ValueError:
        raise ContactPlanError(f"line {lineno}: not a number: {text!r}") from None


def write_plan(plan: ContactPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(export_plan(plan))


def read_plan(path) -> ContactPlan:
    with open(path, encoding="utf-8") as fh:
        return import_plan(fh.read())


def blackouts(contacts: Iterable[Contact], horizon: float) -> List[Tuple[float, float]]:
    """Gaps in [0, horizon] not covered by any of ``contacts``."""
    spans = sorted((c.start, c.end) for c in contacts)
    gaps = []
    cursor = 0.0
    for s, e in spans:
        if s > cursor:
            gaps.append((cursor, s))
        cursor = max(cursor, e)
    if cursor < horizon:
        gaps.append((cursor, horizon))
    return gaps
