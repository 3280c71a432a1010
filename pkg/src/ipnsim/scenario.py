"""Scenario files: loading with line-level diagnostics, built-ins, and running a scenario."""

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import yaml

from .bundle import DEFAULT_ACK_SIZE, DEFAULT_LIFETIME, DEFAULT_MAX_PAYLOAD
from .contactplan import ROLES, AllowedPair, BandOverride, ContactPlan, Node, compute_contacts
from .ephemeris import KINDS, LAGRANGE_POINTS, Ephemeris, OrbitSpec
from .linkmodel import BandSpec
from .metrics import MetricsRecord, Recorder, collect
from .network import Network
from .routing import EndpointId
from .simcore import Simulator
from .units import (parse_angle, parse_bits, parse_duration, parse_frequency, parse_length,
                    parse_rate)

BUILTINS = ("near_term", "mid_term", "long_term", "jupiter_relay")

DEFAULTS = {
    "lifetime": DEFAULT_LIFETIME,
    "max_payload": float(DEFAULT_MAX_PAYLOAD),
    "segment_size": 11200.0,
    "session_cap": 64,
    "ack_size": float(DEFAULT_ACK_SIZE),
    "step": 3600.0,
    "max_contact_duration": None,
}


class ScenarioError(ValueError):
    """Invalid scenario; the message starts with the offending line when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UnknownScenario(ScenarioError):
    pass


# ---- YAML with line numbers ------------------------------------------------

class LineDict(dict):
    line: int = 0
    key_lines: Dict[str, int]


class LineList(list):
    line: int = 0


class _Loader(yaml.SafeLoader):
    pass


def _mapping(loader, node):
    out = LineDict()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ScenarioError(f"duplicate key {key!r}", key_node.start_mark.line + 1)
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


def _sequence(loader, node):
    out = LineList(loader.construct_object(child, deep=True) for child in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _mapping)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _sequence)


def parse_yaml(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except ScenarioError:
        raise
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ScenarioError(f"parse error: {exc.problem}", line) from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"parse error: {exc}") from None


def _line(obj, key=None):
    if key is not None and isinstance(obj, LineDict):
        return obj.key_lines.get(key, obj.line)
    return getattr(obj, "line", None)


# ---- config -----------------------------------------------------------------

@dataclass(frozen=True)
class Traffic:
    source: str
    dest: EndpointId
    size: float
    start: float


@dataclass
class ScenarioConfig:
    name: str
    description: str
    epoch: str
    horizon: float
    seed: int
    step: float
    orbits: Dict[str, OrbitSpec]
    bands: Dict[str, BandSpec]
    nodes: Dict[str, Node]
    capacities: Dict[str, float]
    pairs: List[AllowedPair]
    traffic: List[Traffic]
    occluders: List[Tuple[str, float]]
    lifetime: float = DEFAULT_LIFETIME
    max_payload: float = float(DEFAULT_MAX_PAYLOAD)
    segment_size: float = 11200.0
    session_cap: int = 64
    ack_size: float = float(DEFAULT_ACK_SIZE)
    max_contact_duration: Optional[float] = None
    text: str = field(default="", repr=False)

    def ephemeris(self) -> Ephemeris:
        return Ephemeris(self.orbits)

    def contact_plan(self, horizon: Optional[float] = None) -> ContactPlan:
        return compute_contacts(self.ephemeris(), self.nodes, self.pairs, self.bands,
                                horizon if horizon is not None else self.horizon, step=self.step,
                                occluders=self.occluders, max_contact_duration=self.max_contact_duration)


def _get(mapping, key, parse, default=None, required=False, where=""):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where}: expected a mapping", _line(mapping))
    if key not in mapping or mapping[key] is None:
        if required:
            raise ScenarioError(f"{where}: missing required field {key!r}", _line(mapping))
        return default
    try:
        return parse(mapping[key])
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{where}.{key}: {exc}", _line(mapping, key)) from None


def _check_keys(mapping, allowed, where):
    for key in mapping:
        if key not in allowed:
            raise ScenarioError(f"{where}: unknown field {key!r}", _line(mapping, key))


def _section(doc, key, kind):
    value = doc.get(key)
    if value is None:
        return kind()
    if not isinstance(value, kind):
        raise ScenarioError(f"{key}: expected a {'mapping' if kind is dict else 'list'}", _line(doc, key))
    return value


def _int(value):
    if isinstance(value, bool) or int(value) != value:
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _text(value):
    return str(value)


def _capacity(value):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "unlimited"):
        return math.inf
    return parse_bits(value)


def build_config(doc, text: str = "") -> ScenarioConfig:
    """Validate a parsed document and materialise every default."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping at the top level", 1)
    _check_keys(doc, ("name", "description", "epoch", "horizon", "seed", "step", "occluders", "bodies",
                      "bands", "nodes", "links", "traffic", "defaults"), "scenario")
    name = _get(doc, "name", _text, "custom", where="scenario")
    horizon = _get(doc, "horizon", parse_duration, required=True, where="scenario")
    if not horizon > 0:
        raise ScenarioError("horizon must be positive", _line(doc, "horizon"))
    defaults = dict(DEFAULTS)
    dsec = _section(doc, "defaults", dict)
    _check_keys(dsec, tuple(DEFAULTS), "defaults")
    parsers = {"lifetime": parse_duration, "max_payload": parse_bits, "segment_size": parse_bits,
               "session_cap": _int, "ack_size": parse_bits, "step": parse_duration,
               "max_contact_duration": parse_duration}
    for key in dsec:
        defaults[key] = _get(dsec, key, parsers[key], defaults[key], where="defaults")
    step = _get(doc, "step", parse_duration, defaults["step"], where="scenario")

    orbits: Dict[str, OrbitSpec] = {}
    bodies = _section(doc, "bodies", dict)
    if not bodies:
        raise ScenarioError("at least one body is required", _line(doc))
    for body, spec in bodies.items():
        where = f"bodies.{body}"
        if not isinstance(spec, dict):
            raise ScenarioError(f"{where}: expected a mapping", _line(bodies, body))
        _check_keys(spec, ("kind", "radius", "period", "phase", "parent", "point", "mass_ratio"), where)
        kind = _get(spec, "kind", _text, required=True, where=where)
        if kind not in KINDS:
            raise ScenarioError(f"{where}: unknown kind {kind!r} (expected one of {', '.join(KINDS)})",
                                _line(spec, "kind"))
        parent = _get(spec, "parent", _text, where=where)
        if parent is not None and parent not in bodies:
            raise ScenarioError(f"{where}: parent references undefined body {parent!r}", _line(spec, "parent"))
        point = _get(spec, "point", _text, where=where)
        if kind == "lagrangian" and point not in LAGRANGE_POINTS:
            raise ScenarioError(f"{where}: point must be one of {', '.join(LAGRANGE_POINTS)}", _line(spec))
        try:
            orbits[str(body)] = OrbitSpec(
                kind, radius=_get(spec, "radius", parse_length, 0.0, where=where),
                period=_get(spec, "period", parse_duration, 0.0, where=where),
                phase=_get(spec, "phase", parse_angle, 0.0, where=where), parent=parent,
                lagrange_point=point, mass_ratio=_get(spec, "mass_ratio", float, 0.0, where=where))
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}", _line(spec)) from None
    try:
        eph = Ephemeris(orbits)
        for body in orbits:
            eph.position_at(body, 0.0)
    except ValueError as exc:
        raise ScenarioError(f"bodies: {exc}", _line(bodies)) from None

    occluders = []
    for item in _section(doc, "occluders", list):
        where = "occluders"
        body = _get(item, "body", _text, required=True, where=where)
        if body not in orbits:
            raise ScenarioError(f"occluder references undefined body {body!r}", _line(item, "body"))
        occluders.append((body, _get(item, "radius", parse_length, required=True, where=where)))

    bands: Dict[str, BandSpec] = {}
    bsec = _section(doc, "bands", dict)
    for band, spec in bsec.items():
        where = f"bands.{band}"
        if not isinstance(spec, dict):
            raise ScenarioError(f"{where}: expected a mapping", _line(bsec, band))
        _check_keys(spec, ("frequency", "reference_rate", "reference_range", "asymmetry",
                           "atmospheric_margin", "acquisition_delay", "min_rate"), where)
        try:
            bands[str(band)] = BandSpec(
                str(band), _get(spec, "frequency", parse_frequency, required=True, where=where),
                _get(spec, "reference_rate", parse_rate, required=True, where=where),
                _get(spec, "reference_range", parse_length, required=True, where=where),
                asymmetry_ratio=_get(spec, "asymmetry", float, 1.0, where=where),
                atmospheric_margin=_get(spec, "atmospheric_margin", float, 0.0, where=where),
                acquisition_delay=_get(spec, "acquisition_delay", parse_duration,
                                         60.0 if str(band).lower().startswith("optical") else 0.0, where=where),
                min_rate=_get(spec, "min_rate", parse_rate, 0.0, where=where))
        except ScenarioError:
            raise
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}", _line(spec)) from None

    nodes: Dict[str, Node] = {}
    capacities: Dict[str, float] = {}
    nsec = _section(doc, "nodes", dict)
    for node, spec in nsec.items():
        where = f"nodes.{node}"
        if not isinstance(spec, dict):
            raise ScenarioError(f"{where}: expected a mapping", _line(nsec, node))
        _check_keys(spec, ("body", "role", "region", "entities", "capacity"), where)
        body = _get(spec, "body", _text, required=True, where=where)
        if body not in orbits:
            raise ScenarioError(f"{where}: references undefined body {body!r}", _line(spec, "body"))
        role = _get(spec, "role", _text, required=True, where=where)
        if role not in ROLES:
            raise ScenarioError(f"{where}: unknown role {role!r} (expected one of {', '.join(ROLES)})",
                                _line(spec, "role"))
        region = _get(spec, "region", _text, required=True, where=where)
        entities = spec.get("entities") or []
        if not isinstance(entities, list):
            raise ScenarioError(f"{where}.entities: expected a list", _line(spec, "entities"))
        try:
            nodes[str(node)] = Node(str(node), body, role, region, tuple(str(e) for e in entities))
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}", _line(nsec, node)) from None
        capacities[str(node)] = _get(spec, "capacity", _capacity, math.inf, where=where)
    if not nodes:
        raise ScenarioError("at least one node is required", _line(doc))

    pairs: List[AllowedPair] = []
    seen = {}
    for item in _section(doc, "links", list):
        where = "links"
        if not isinstance(item, dict):
            raise ScenarioError("links: each entry must be a mapping", _line(doc, "links"))
        _check_keys(item, ("a", "b", "band", "rate", "return_rate", "owlt", "loss", "overrides"), where)
        a = _get(item, "a", _text, required=True, where=where)
        b = _get(item, "b", _text, required=True, where=where)
        for end in (a, b):
            if end not in nodes:
                raise ScenarioError(f"link references undefined node {end!r}", _line(item))
        if a == b:
            raise ScenarioError(f"link {a}-{b} connects a node to itself", _line(item))
        key = tuple(sorted((a, b)))
        if key in seen:
            raise ScenarioError(f"duplicate link {a}-{b} (first at line {seen[key]})", _line(item))
        seen[key] = _line(item)
        band = _get(item, "band", _text, where=where)
        rate = _get(item, "rate", parse_rate, where=where)
        if (band is None) == (rate is None):
            raise ScenarioError(f"link {a}-{b}: give exactly one of 'band' or 'rate'", _line(item))
        if band is not None:
            if band not in bands:
                raise ScenarioError(f"link {a}-{b}: references undefined band {band!r}", _line(item, "band"))
            if nodes[a].body == nodes[b].body:
                raise ScenarioError(f"link {a}-{b}: band links need nodes on different bodies "
                                    f"(use 'rate' for a fixed link)", _line(item))
        loss = _get(item, "loss", float, 0.0, where=where)
        if not 0.0 <= loss < 1.0:
            raise ScenarioError(f"link {a}-{b}: loss must lie in [0, 1)", _line(item, "loss"))
        overrides = []
        for ov in item.get("overrides") or []:
            ob = _get(ov, "band", _text, required=True, where="overrides")
            if ob not in bands:
                raise ScenarioError(f"link {a}-{b}: override references undefined band {ob!r}", _line(ov))
            overrides.append(BandOverride(_get(ov, "start", parse_duration, required=True, where="overrides"),
                                          _get(ov, "end", parse_duration, required=True, where="overrides"), ob))
        if overrides and band is None:
            raise ScenarioError(f"link {a}-{b}: overrides need a band link", _line(item, "overrides"))
        pairs.append(AllowedPair(a, b, band=band, fixed_rate=rate,
                                 fixed_return_rate=_get(item, "return_rate", parse_rate, where=where),
                                 fixed_owlt=_get(item, "owlt", parse_duration, 0.0, where=where),
                                 loss=loss, overrides=tuple(overrides)))

    traffic = []
    regions = {n.region.lower() for n in nodes.values()}
    for item in _section(doc, "traffic", list):
        where = "traffic"
        _check_keys(item, ("source", "dest", "size", "start"), where)
        source = _get(item, "source", _text, required=True, where=where)
        if source not in nodes:
            raise ScenarioError(f"traffic references undefined node {source!r}", _line(item, "source"))
        dest = _get(item, "dest", EndpointId.parse, required=True, where=where)
        if dest.region not in regions:
            raise ScenarioError(f"traffic destination region {dest.region!r} has no nodes", _line(item, "dest"))
        size = _get(item, "size", parse_bits, required=True, where=where)
        start = _get(item, "start", parse_duration, 0.0, where=where)
        if not size > 0:
            raise ScenarioError("traffic size must be positive", _line(item, "size"))
        if not 0 <= start < horizon:
            raise ScenarioError("traffic start must lie in [0, horizon)", _line(item, "start"))
        traffic.append(Traffic(source, dest, size, start))

    return ScenarioConfig(
        name=name, description=_get(doc, "description", _text, "", where="scenario"),
        epoch=_get(doc, "epoch", _text, "J2000", where="scenario"), horizon=horizon,
        seed=_get(doc, "seed", _int, 0, where="scenario"), step=step, orbits=orbits, bands=bands,
        nodes=nodes, capacities=capacities, pairs=pairs, traffic=traffic, occluders=occluders,
        lifetime=defaults["lifetime"], max_payload=defaults["max_payload"],
        segment_size=defaults["segment_size"], session_cap=defaults["session_cap"],
        ack_size=defaults["ack_size"], max_contact_duration=defaults["max_contact_duration"], text=text)


def loads(text: str) -> ScenarioConfig:
    return build_config(parse_yaml(text), text)


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario file, or a built-in when ``path`` names one."""
    if str(path) in BUILTINS:
        return builtin(str(path))
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def builtin_text(name: str) -> str:
    if name not in BUILTINS:
        raise UnknownScenario(f"unknown built-in scenario {name!r} (choose from {', '.join(BUILTINS)})")
    return resources.files("ipnsim").joinpath("scenarios").joinpath(f"{name}.yaml").read_text(encoding="utf-8")


def builtin(name: str) -> ScenarioConfig:
    return loads(builtin_text(name))


# ---- running ----------------------------------------------------------------

@dataclass
class RunResult:
    config: ScenarioConfig
    plan: ContactPlan
    metrics: MetricsRecord
    network: Network
    simulator: Simulator


def run_scenario(config: ScenarioConfig, until: Optional[float] = None, seed: Optional[int] = None,
                 trace: Optional[Callable[[Any], None]] = None) -> RunResult:
    """Compute the contact plan, inject traffic and run to the horizon."""
    horizon = config.horizon if until is None else until
    seed = config.seed if seed is None else seed
    plan = config.contact_plan(horizon)
    sim = Simulator(seed)
    sim.trace = trace
    recorder = Recorder(sim)
    net = Network(sim, config.nodes, plan, config.pairs, config.bands, capacities=config.capacities,
                  lifetime=config.lifetime, max_payload=int(config.max_payload),
                  segment_size=int(config.segment_size), session_cap=config.session_cap,
                  ack_size=int(config.ack_size), record=recorder)
    for item in config.traffic:
        if item.start <= horizon:
            sim.schedule(item.start, net.agents[item.source].originate_file, int(item.size), item.dest,
                         target=item.source, kind="traffic")
    sim.run_until(horizon)
    metrics = collect(recorder, net, horizon, {"scenario": config.name, "seed": seed,
                                               "events_executed": sim.executed})
    return RunResult(config, plan, metrics, net, sim)
