"""Append-only metrics: bundle lifecycle rows, link/node/LTP statistics and a run summary."""

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

STATUSES = ("delivered", "resident", "expired", "failed", "in-flight")


def _clean(value):
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return None
        return value
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    return value


@dataclass
class MetricsRecord:
    events: List[Dict[str, Any]] = field(default_factory=list)
    bundles: List[Dict[str, Any]] = field(default_factory=list)
    links: List[Dict[str, Any]] = field(default_factory=list)
    nodes: List[Dict[str, Any]] = field(default_factory=list)
    ltp: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def lines(self) -> List[str]:
        out = []
        for kind, rows in (("event", self.events), ("bundle", self.bundles), ("link", self.links),
                           ("node", self.nodes), ("ltp", self.ltp)):
            for row in rows:
                out.append(json.dumps(_clean({"type": kind, **row}), sort_keys=True))
        out.append(json.dumps(_clean({"type": "summary", **self.summary}), sort_keys=True))
        return out

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value"])
        for key in sorted(self.summary):
            value = _clean(self.summary[key])
            writer.writerow([key, "" if value is None else value])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())


class Recorder:
    """Collects lifecycle events as the simulation runs."""

    def __init__(self, sim, trace=None):
        self.sim = sim
        self.events: List[Dict[str, Any]] = []
        self.created: Dict[str, Dict[str, Any]] = {}
        self.outcomes: Dict[str, str] = {}
        self.trace = trace

    def __call__(self, event: str, bundle, node: str, **extra) -> None:
        bid = str(bundle.id)
        row = {"t": self.sim.now, "event": event, "node": node, "bundle": bid,
               "file": bundle.file_id, "kind": bundle.kind}
        if event in ("delivered", "created", "expired", "failed"):
            row["hop_log"] = list(bundle.hop_log)
        for key in sorted(extra):
            row[key] = extra[key]
        self.events.append(row)
        if event == "created":
            self.created[bid] = {"bundle": bid, "file": bundle.file_id, "kind": bundle.kind,
                                 "size": bundle.size, "created": bundle.created, "source": str(bundle.source),
                                 "dest": str(bundle.dest), "fragment": bundle.fragment_index,
                                 "fragments": bundle.fragment_count}
        elif event in ("expired", "failed"):
            self.outcomes.setdefault(bid, event)
        if self.trace is not None:
            self.trace(row)


def _latency_stats(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"latency_min": None, "latency_mean": None, "latency_median": None,
                "latency_p95": None, "latency_max": None}
    ordered = sorted(values)
    p95 = ordered[min(len(ordered) - 1, max(0, int(round(0.95 * len(ordered))) - 1))]
    return {"latency_min": ordered[0], "latency_mean": statistics.fmean(ordered),
            "latency_median": statistics.median(ordered), "latency_p95": p95, "latency_max": ordered[-1]}


def collect(recorder: Recorder, network, horizon: float, extra: Optional[Dict[str, Any]] = None) -> MetricsRecord:
    """Classify every created bundle and gather per-link, per-node and LTP statistics."""
    delivered: Dict[str, tuple] = {}
    for name in sorted(network.agents):
        for bid, t in network.agents[name].delivered.items():
            delivered.setdefault(str(bid), (t, name))
    resident: Dict[str, List[str]] = {}
    for name in sorted(network.agents):
        for bid in network.agents[name].store.resident:
            resident.setdefault(str(bid), []).append(name)

    record = MetricsRecord(events=list(recorder.events))
    counts = dict.fromkeys(STATUSES, 0)
    data_latencies = []
    for bid in sorted(recorder.created):
        info = dict(recorder.created[bid])
        if bid in delivered:
            status = "delivered"
            info["delivered"], info["delivered_at"] = delivered[bid]
            info["latency"] = info["delivered"] - info["created"]
            if info["kind"] == "data":
                data_latencies.append(info["latency"])
        elif bid in resident:
            status = "resident"
            info["resident_at"] = resident[bid]
        elif bid in recorder.outcomes:
            status = recorder.outcomes[bid]
        else:
            status = "in-flight"
        info["status"] = status
        counts[status] += 1
        record.bundles.append(info)

    for (src, dst) in sorted(network.links):
        link = network.links[(src, dst)]
        open_s = link.open_time(0.0, horizon)
        record.links.append({
            "link": link.name, "layer": network.layer(src, dst), "contacts": len(link.contacts),
            "open_s": open_s, "busy_s": link.busy_time,
            "utilization": link.busy_time / open_s if open_s > 0 else 0.0,
            "frames_sent": link.frames_sent, "frames_lost": link.frames_lost,
            "frames_aborted": link.frames_aborted,
        })

    for name in sorted(network.agents):
        agent = network.agents[name]
        record.nodes.append({
            "node": name, "peak_store_bits": agent.store.peak, "resident_bundles": len(agent.store),
            "resident_bits": agent.store.used, "custody_refused": agent.refused, "expired": agent.expired,
        })

    retransmitted = 0
    for (src, dst) in sorted(network.engines):
        engine = network.engines[(src, dst)]
        stats = engine.session_stats()
        seg_retx = sum(s["segments_retransmitted"] for s in stats)
        retransmitted += seg_retx
        lat = [s["latency"] for s in stats if s["latency"] is not None]
        record.ltp.append({
            "engine": f"{src}->{dst}", "sessions": len(stats),
            "closed": sum(1 for s in stats if s["state"] == "closed"),
            "cancelled": sum(1 for s in stats if s["state"] == "cancelled"),
            "segments_sent": sum(s["segments_sent"] for s in stats),
            "segments_retransmitted": seg_retx, "reports": engine.reports_sent,
            "report_acks": engine.report_acks_sent, "peak_sessions": engine.peak_active,
            "mean_session_latency": statistics.fmean(lat) if lat else None,
        })

    summary: Dict[str, Any] = {"created": len(recorder.created), "horizon": horizon}
    summary.update(counts)
    summary["data_delivered"] = len(data_latencies)
    summary.update(_latency_stats(data_latencies))
    summary["segments_retransmitted"] = retransmitted
    summary["custody_refused"] = sum(a.refused for a in network.agents.values())
    summary["expiries"] = sum(a.expired for a in network.agents.values())
    summary["files_complete"] = sum(len(a.files_complete) for a in network.agents.values())
    summary["files_acknowledged"] = sum(len(a.acknowledged_files) for a in network.agents.values())
    summary["contacts"] = len(network.plan.contacts)
    if extra:
        summary.update(extra)
    record.summary = summary
    return record
