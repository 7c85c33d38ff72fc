"""Event retrieval by zoom level, bounding box, time range, and keyword.

The planner resolves the zoom to a pyramid precision and the bbox to a
minimal geohash-prefix cover, and enumerates the daily snapshot partitions
a historical range must touch. Execution filters exactly and orders by
packet count.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from . import geohash
from .events import UNSPECIFIED_PREFIX, EventCluster
from .geohash import BBox
from .pyramid import TimeRange
from .scope import ScaleMap
from .snapshot import days_in_range
from .text import tokenize


class InvalidQueryError(ValueError):
    pass


@dataclass(frozen=True)
class EoIQuery:
    zoom: int
    bbox: BBox
    time_range: TimeRange
    keyword: str | None = None
    limit: int = 100
    include_history: bool = False

    def __post_init__(self) -> None:
        if not (0 <= self.zoom <= 18):
            raise InvalidQueryError(f"zoom out of range: {self.zoom}")
        if self.limit <= 0:
            raise InvalidQueryError(f"limit must be positive: {self.limit}")


@dataclass(frozen=True)
class QueryPlan:
    precision: int
    prefixes: tuple[str, ...]
    days: tuple[str, ...] = ()  # snapshot partitions to touch
    use_memory: bool = True


def plan(query: EoIQuery, scale_map: ScaleMap, live_range: TimeRange | None = None) -> QueryPlan:
    """Resolve the zoom to a target precision, cover the bbox with geohash
    prefixes, and list the daily partitions for historical ranges."""
    precision = scale_map.precision_for_zoom(query.zoom)
    prefixes = tuple(geohash.cover(query.bbox, precision))
    days: tuple[str, ...] = ()
    if query.include_history:
        days = tuple(days_in_range(query.time_range.from_ms, query.time_range.to_ms))
    use_memory = True
    if live_range is not None:
        use_memory = not (
            query.time_range.to_ms < live_range.from_ms
            or query.time_range.from_ms > live_range.to_ms
        )
    return QueryPlan(precision=precision, prefixes=prefixes, days=days, use_memory=use_memory)


def _normalize_keyword(keyword: str) -> str:
    tokens = tokenize(keyword)
    return tokens[0] if tokens else keyword.strip().lower().lstrip("#")


def matches(eoi: EventCluster, query: EoIQuery, keyword_norm: str | None) -> bool:
    if not (eoi.zoom_start <= query.zoom <= eoi.zoom_end):
        return False
    if not query.bbox.contains(eoi.centroid_lat, eoi.centroid_lon):
        return False
    if not query.time_range.contains(eoi.timestamp):
        return False
    if keyword_norm:
        if keyword_norm in eoi.label_names():
            return True
        if eoi.event_type == keyword_norm:
            return True
        if eoi.event_type == UNSPECIFIED_PREFIX + keyword_norm:
            return True
        return False
    return True


def execute(
    plan_: QueryPlan,
    query: EoIQuery,
    memory_eois: Iterable[EventCluster],
    history_loader: Callable[[str], Iterable[EventCluster]] | None = None,
) -> list[EventCluster]:
    """Exactly the events whose zoom range covers the query zoom, centroid
    falls in the bbox, timestamp in range, and keyword (when given) matches
    a label term or the event type; ordered by packet count descending,
    ties by id, truncated to the limit."""
    keyword_norm = _normalize_keyword(query.keyword) if query.keyword else None
    seen: set[str] = set()
    hits: list[EventCluster] = []

    def consider(eoi: EventCluster) -> None:
        if eoi.id in seen:
            return
        if plan_.prefixes and not any(eoi.cell_key.startswith(p) for p in plan_.prefixes):
            return
        if matches(eoi, query, keyword_norm):
            seen.add(eoi.id)
            hits.append(eoi)

    if plan_.use_memory:
        for eoi in memory_eois:
            consider(eoi)
    if query.include_history and history_loader is not None:
        for day in plan_.days:
            for eoi in history_loader(day):
                consider(eoi)

    hits.sort(key=lambda c: (-c.packet_count, c.id))
    return hits[: query.limit]


def tag_cloud(matching: Iterable[EventCluster], k: int) -> list[tuple[str, float]]:
    """Top-k terms by packet-count-weighted sum of label-term weights over
    the matching events."""
    if k < 1:
        raise InvalidQueryError(f"k must be >= 1: {k}")
    weights: dict[str, float] = {}
    for eoi in matching:
        for term, w in eoi.label_terms:
            weights[term] = weights.get(term, 0.0) + eoi.packet_count * w
    ranked = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]
