"""Detection metrics against planted ground truth.

A detected event (lineage-root cluster) matches a planted event when its
centroid lies within the planted radius, its timestamp overlaps the
planted time span, and it shares at least one topic term. The scale is
correct when the cluster's zoom range belongs to the planted scale.
Per-scale precision/recall/accuracy/F1 are tallied the same way at every
scale of the ladder.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable

from . import geohash
from .events import UNSPECIFIED_PREFIX, EventCluster
from .scope import SCALE_NAMES, ScaleMap
from .synth import haversine_m


@dataclass
class ScaleTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def precision_defined(self) -> bool:
        return (self.tp + self.fp) > 0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def recall_defined(self) -> bool:
        return (self.tp + self.fn) > 0

    @property
    def accuracy(self) -> float:
        total = self.tp + self.fp + self.fn + self.tn
        return (self.tp + self.tn) / total if total else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass
class MetricsReport:
    per_scale: dict[str, ScaleTally] = field(default_factory=dict)

    @property
    def overall(self) -> ScaleTally:
        agg = ScaleTally()
        for t in self.per_scale.values():
            agg.tp += t.tp
            agg.fp += t.fp
            agg.fn += t.fn
            agg.tn += t.tn
        return agg

    def to_json(self) -> dict[str, Any]:
        def row(t: ScaleTally) -> dict[str, Any]:
            return {
                "tp": t.tp,
                "fp": t.fp,
                "fn": t.fn,
                "tn": t.tn,
                "precision": round(t.precision, 4),
                "precisionDefined": t.precision_defined,
                "recall": round(t.recall, 4),
                "accuracy": round(t.accuracy, 4),
                "f1": round(t.f1, 4),
            }

        out = {scale: row(t) for scale, t in self.per_scale.items()}
        out["overall"] = row(self.overall)
        return out

    def format_table(self) -> str:
        lines = [
            f"{'Scale':<14} {'Precision':>9} {'Recall':>9} {'Accuracy':>9} {'F1':>9}",
        ]
        for scale in SCALE_NAMES:
            t = self.per_scale.get(scale, ScaleTally())
            mark = "" if t.precision_defined else " (no detections)"
            lines.append(
                f"{scale:<14} {t.precision:>9.2f} {t.recall:>9.2f} "
                f"{t.accuracy:>9.2f} {t.f1:>9.2f}{mark}"
            )
        o = self.overall
        lines.append(
            f"{'Overall':<14} {o.precision:>9.2f} {o.recall:>9.2f} {o.accuracy:>9.2f} {o.f1:>9.2f}"
        )
        return "\n".join(lines)


def cluster_scale(eoi: EventCluster, scale_map: ScaleMap) -> str:
    return scale_map.scale_name(scale_map.precision_for_zoom(eoi.zoom_start))


def eoi_terms(eoi: EventCluster) -> set[str]:
    terms = set(eoi.label_names()) | set(eoi.centroid_vector.weights)
    if eoi.event_type.startswith(UNSPECIFIED_PREFIX):
        terms.add(eoi.event_type[len(UNSPECIFIED_PREFIX) :])
    return terms


def matches_event(eoi: EventCluster, truth: dict[str, Any]) -> bool:
    dist = haversine_m(
        eoi.centroid_lat, eoi.centroid_lon, truth["centerLat"], truth["centerLon"]
    )
    if dist > truth["radiusM"]:
        return False
    if not (truth["start"] <= eoi.timestamp <= truth["end"]):
        return False
    return bool(eoi_terms(eoi) & set(truth["topicTerms"]))


def evaluate(
    eois: Iterable[EventCluster],
    truth_entries: Iterable[dict[str, Any]],
    scale_map: ScaleMap | None = None,
) -> MetricsReport:
    """Tally per-scale TP/FP/FN/TN over lineage-root detections.

    A planted event's detected scale is taken from its best matching root
    (largest packet count). A wrong-scale detection counts as an FN at the
    true scale and an FP at the detected scale; unmatched roots count as
    FPs at their own scale. TN comes from planted noise-control cells with
    no detection at their scale.
    """
    scale_map = scale_map or ScaleMap()
    events = [t for t in truth_entries if t.get("kind", "event") == "event"]
    controls = [t for t in truth_entries if t.get("kind") == "control"]

    roots = [e for e in eois if e.parent_id is None]
    report = MetricsReport(per_scale={s: ScaleTally() for s in SCALE_NAMES})

    claimed: dict[str, str] = {}  # root id -> event id it answers for
    detected_scale: dict[str, str | None] = {}
    for ev in sorted(events, key=lambda t: t["id"]):
        candidates = [r for r in roots if matches_event(r, ev)]
        if not candidates:
            detected_scale[ev["id"]] = None
            continue
        best = max(candidates, key=lambda r: (r.packet_count, r.id))
        claimed[best.id] = ev["id"]
        detected_scale[ev["id"]] = cluster_scale(best, scale_map)

    for ev in events:
        true_scale = ev["scale"]
        found = detected_scale[ev["id"]]
        if found == true_scale:
            report.per_scale[true_scale].tp += 1
        else:
            report.per_scale[true_scale].fn += 1
            if found is not None:
                report.per_scale[found].fp += 1

    for root in roots:
        # Claimed roots at the wrong scale were already counted above.
        if root.id not in claimed:
            report.per_scale[cluster_scale(root, scale_map)].fp += 1

    for ctl in controls:
        scale = ctl["scale"]
        box = geohash.decode(ctl["cellKey"])
        hit = any(
            cluster_scale(r, scale_map) == scale
            and box.contains(r.centroid_lat, r.centroid_lon)
            for r in roots
        )
        if not hit:
            report.per_scale[scale].tn += 1
    return report


def load_truth(path: str) -> list[dict[str, Any]]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries


def load_eois(path: str) -> list[EventCluster]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EventCluster.from_json(json.loads(line)))
    return out
