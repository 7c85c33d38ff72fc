"""Spatial-scope aggregation.

A bottom-up pass over the pyramid merges matching sibling clusters into
parent-level clusters with a wider spatial scope, assigning each event the
map zoom range at which it should be displayed. Constituents stay
queryable at their finer zoom ranges.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .events import UNCLASSIFIED, EventCluster
from .text import cosine, mean_vector


@dataclass(frozen=True)
class ScaleBand:
    precision: int
    zoom_start: int
    zoom_end: int
    name: str


#: Precision -> zoom band. Bands are contiguous and non-overlapping across
#: precisions; scale names group them into the five display scales.
DEFAULT_BANDS = (
    ScaleBand(1, 0, 2, "City"),
    ScaleBand(2, 3, 5, "City"),
    ScaleBand(3, 6, 8, "City"),
    ScaleBand(4, 9, 11, "Locality"),
    ScaleBand(5, 12, 13, "Sub-Locality"),
    ScaleBand(6, 14, 15, "Neighborhood"),
    ScaleBand(7, 16, 16, "Local"),
    ScaleBand(8, 17, 18, "Local"),
)

SCALE_NAMES = ("Local", "Neighborhood", "Sub-Locality", "Locality", "City")


class ScaleMap:
    """Table mapping pyramid precision to (zoom_start, zoom_end) and scale name."""

    def __init__(self, bands: tuple[ScaleBand, ...] = DEFAULT_BANDS) -> None:
        ordered = sorted(bands, key=lambda b: b.precision)
        for band in ordered:
            if band.zoom_start > band.zoom_end:
                raise ValueError(f"inverted zoom range in {band}")
        for a, b in zip(ordered, ordered[1:]):
            if b.precision != a.precision + 1 or b.zoom_start != a.zoom_end + 1:
                raise ValueError(f"bands not contiguous: {a} -> {b}")
        self.bands = tuple(ordered)
        self._by_precision = {b.precision: b for b in ordered}

    @property
    def max_precision(self) -> int:
        return self.bands[-1].precision

    def zoom_range(self, precision: int) -> tuple[int, int]:
        band = self._by_precision[precision]
        return band.zoom_start, band.zoom_end

    def scale_name(self, precision: int) -> str:
        return self._by_precision[precision].name

    def precision_for_zoom(self, zoom: int) -> int:
        for band in self.bands:
            if band.zoom_start <= zoom <= band.zoom_end:
                return band.precision
        raise ValueError(f"zoom {zoom} outside every band")

    def scale_zoom_range(self, name: str) -> tuple[int, int]:
        """Combined zoom span of every precision sharing the scale name."""
        bands = [b for b in self.bands if b.name == name]
        if not bands:
            raise ValueError(f"unknown scale {name!r}")
        return min(b.zoom_start for b in bands), max(b.zoom_end for b in bands)

    def precisions_for_scale(self, name: str) -> list[int]:
        return [b.precision for b in self.bands if b.name == name]


@dataclass
class ScopeParams:
    merge_cosine_threshold: float = 0.5
    time_overlap_ms: int = 6 * 3600 * 1000
    scale_map: ScaleMap = field(default_factory=ScaleMap)

    def __post_init__(self) -> None:
        if not (0.0 < self.merge_cosine_threshold <= 1.0):
            raise ValueError("merge_cosine_threshold must be in (0, 1]")


def should_merge(a: EventCluster, b: EventCluster, params: ScopeParams) -> bool:
    """Whether two same-level sibling clusters describe one wider event:
    similar centroids, overlapping in time, and compatible event types
    (equal, or either still unclassified)."""
    if cosine(a.centroid_vector, b.centroid_vector) < params.merge_cosine_threshold:
        return False
    if abs(a.timestamp - b.timestamp) > params.time_overlap_ms:
        return False
    return (
        a.event_type == b.event_type
        or a.event_type == UNCLASSIFIED
        or b.event_type == UNCLASSIFIED
    )


def merged_cluster_id(parent_key: str, constituent_ids: list[str]) -> str:
    seed = parent_key + "\x00" + ",".join(sorted(constituent_ids))
    return "m" + hashlib.sha1(seed.encode("utf-8")).hexdigest()[:19]


def _resolve_type(members: list[EventCluster]) -> str:
    weights: dict[str, int] = {}
    for c in members:
        if c.event_type != UNCLASSIFIED:
            weights[c.event_type] = weights.get(c.event_type, 0) + c.packet_count
    if not weights:
        return UNCLASSIFIED
    return sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[0][0]


def _merge_group(parent_key: str, members: list[EventCluster], params: ScopeParams,
                 label_k: int) -> EventCluster:
    members = sorted(members, key=lambda c: c.id)
    counts = [float(c.packet_count) for c in members]
    total = sum(counts)
    lat = sum(c.centroid_lat * w for c, w in zip(members, counts)) / total
    lon = sum(c.centroid_lon * w for c, w in zip(members, counts)) / total
    vector = mean_vector([c.centroid_vector for c in members], counts)
    packets: list[str] = []
    for c in members:
        packets.extend(c.packets)
    zoom_start, zoom_end = params.scale_map.zoom_range(len(parent_key))
    return EventCluster(
        id=merged_cluster_id(parent_key, [c.id for c in members]),
        event_type=_resolve_type(members),
        packets=packets,
        packet_count=int(total),
        centroid_lat=lat,
        centroid_lon=lon,
        centroid_vector=vector,
        cell_key=parent_key,
        timestamp=max(c.timestamp for c in members),
        zoom_start=zoom_start,
        zoom_end=zoom_end,
        visited=False,
        label_terms=vector.top_terms(label_k),
        created_at=min(c.created_at for c in members),
        origin="merged",
        constituent_ids=[c.id for c in members],
    )


class _UnionFind:
    def __init__(self, items: list[str]) -> None:
        self.parent = {i: i for i in items}

    def find(self, x: str) -> str:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if rb < ra:  # smallest id becomes the root, deterministic
                ra, rb = rb, ra
            self.parent[rb] = ra


def aggregate_level(
    clusters: dict[str, EventCluster],
    precision: int,
    params: ScopeParams,
    label_k: int = 5,
) -> list[EventCluster]:
    """Merge matching unvisited sibling clusters at the given precision into
    parent-level clusters (transitive closure of should_merge, grouped by
    shared parent prefix). Constituents and unmerged clusters are marked
    visited; merged parents are returned unvisited so the next level up can
    consider them."""
    by_parent: dict[str, list[EventCluster]] = {}
    for c in clusters.values():
        if len(c.cell_key) == precision and not c.visited:
            by_parent.setdefault(c.cell_key[: precision - 1], []).append(c)

    created: list[EventCluster] = []
    for parent_key in sorted(by_parent):
        group = sorted(by_parent[parent_key], key=lambda c: c.id)
        uf = _UnionFind([c.id for c in group])
        for i, a in enumerate(group):
            for b in group[i + 1 :]:
                if should_merge(a, b, params):
                    uf.union(a.id, b.id)
        buckets: dict[str, list[EventCluster]] = {}
        for c in group:
            buckets.setdefault(uf.find(c.id), []).append(c)
        for root in sorted(buckets):
            members = buckets[root]
            for c in members:
                c.visited = True
            if len(members) < 2:
                continue
            merged = _merge_group(parent_key, members, params, label_k)
            for c in members:
                c.parent_id = merged.id
            created.append(merged)
    return created


def run_full_aggregation(
    clusters: dict[str, EventCluster],
    params: ScopeParams,
    label_k: int = 5,
) -> int:
    """Apply aggregate_level from the deepest precision up to the roots.

    Previously derived (merged) clusters are dropped and rebuilt from the
    current leaf-born population, so the pass is idempotent for a given
    window. Returns the number of merged clusters created.
    """
    for cid in [cid for cid, c in clusters.items() if c.origin == "merged"]:
        del clusters[cid]
    for c in clusters.values():
        c.visited = False
        c.parent_id = None

    created_total = 0
    for precision in range(params.scale_map.max_precision, 1, -1):
        for merged in aggregate_level(clusters, precision, params, label_k):
            clusters[merged.id] = merged
            created_total += 1
    for c in clusters.values():
        c.visited = True
    return created_total
