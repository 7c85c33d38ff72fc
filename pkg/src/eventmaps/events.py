"""The detected-event record shared by detection, aggregation, and serving."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Any

from .text import TermVector

UNCLASSIFIED = "unclassified"
UNSPECIFIED_PREFIX = "unspecified:"


@dataclass
class EventCluster:
    """A detected event: its members, centroid, home cell, and the zoom
    range at which the map should display it."""

    id: str
    event_type: str
    packets: list[str]
    packet_count: int
    centroid_lat: float
    centroid_lon: float
    centroid_vector: TermVector
    cell_key: str
    timestamp: int  # latest member time, UTC ms
    zoom_start: int
    zoom_end: int
    visited: bool = False
    label_terms: list[tuple[str, float]] = field(default_factory=list)
    created_at: int = 0
    origin: str = "leaf"  # "leaf" | "merged"
    parent_id: str | None = None
    constituent_ids: list[str] = field(default_factory=list)

    def clone(self) -> "EventCluster":
        return replace(
            self,
            packets=list(self.packets),
            label_terms=list(self.label_terms),
            constituent_ids=list(self.constituent_ids),
            centroid_vector=self.centroid_vector,
        )

    def label_names(self) -> list[str]:
        return [t for t, _ in self.label_terms]

    def to_record(self) -> dict[str, Any]:
        """Wire-format record served by the events endpoint."""
        return {
            "id": self.id,
            "eventType": self.event_type,
            "packetcount": self.packet_count,
            "packets": list(self.packets),
            "@timestamp": self.timestamp,
            "zoomStart": self.zoom_start,
            "zoomEnd": self.zoom_end,
            "cellkey": self.cell_key,
            "location": {"lat": self.centroid_lat, "lon": self.centroid_lon},
            "visited": self.visited,
            "labelTerms": self.label_names(),
        }

    def to_json(self) -> dict[str, Any]:
        """Full internal record, sufficient to reconstruct the cluster."""
        rec = self.to_record()
        rec["labelTerms"] = [[t, w] for t, w in self.label_terms]
        rec["centroidVector"] = dict(self.centroid_vector.weights)
        rec["createdAt"] = self.created_at
        rec["origin"] = self.origin
        rec["parentId"] = self.parent_id
        rec["constituentIds"] = list(self.constituent_ids)
        return rec

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "EventCluster":
        return cls(
            id=rec["id"],
            event_type=rec["eventType"],
            packets=list(rec["packets"]),
            packet_count=rec["packetcount"],
            centroid_lat=rec["location"]["lat"],
            centroid_lon=rec["location"]["lon"],
            centroid_vector=TermVector.from_weights(rec.get("centroidVector", {})),
            cell_key=rec["cellkey"],
            timestamp=rec["@timestamp"],
            zoom_start=rec["zoomStart"],
            zoom_end=rec["zoomEnd"],
            visited=rec.get("visited", True),
            label_terms=[(t, float(w)) for t, w in rec.get("labelTerms", [])],
            created_at=rec.get("createdAt", rec["@timestamp"]),
            origin=rec.get("origin", "leaf"),
            parent_id=rec.get("parentId"),
            constituent_ids=list(rec.get("constituentIds", [])),
        )


def leaf_cluster_id(cell_key: str, member_ids: list[str]) -> str:
    """Deterministic id for a cluster born in a leaf cell."""
    seed = cell_key + "\x00" + ",".join(sorted(member_ids))
    return "c" + hashlib.sha1(seed.encode("utf-8")).hexdigest()[:19]
