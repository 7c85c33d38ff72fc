"""Windowed pipeline orchestration.

One writer drives ingest -> wrap -> index -> per-leaf detection -> scope
aggregation, then atomically publishes a new read view per batch window.
Queries and tag clouds run against the published view; finished days are
persisted to snapshot partitions and reloadable for historical queries.
"""
from __future__ import annotations

import json
import os
import threading
import time as _time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable

from .detection import DetectionParams, DetectionResult, detect_local_events, expire_clusters
from .events import EventCluster
from .packets import (
    AdapterRegistry,
    DataPacket,
    MalformedTimeError,
    MissingGeoError,
    PacketError,
    RawRecord,
    UnknownSourceError,
    wrap,
)
from .pyramid import PyramidIndex, TimeRange, day_of
from .query import EoIQuery, QueryPlan, execute, matches, plan, tag_cloud
from .scope import ScaleMap, ScopeParams, run_full_aggregation
from .snapshot import available_days, load_day, persist_day
from .text import ClassCorpus, KeywordBaseline, PeakParams


@dataclass
class PipelineConfig:
    """Every pipeline threshold, loadable from a JSON file with environment
    overrides (EVENTMAPS_<UPPERCASE_FIELD>)."""

    window_ms: int = 30 * 60 * 1000
    split_threshold: int = 500
    max_precision: int = 8
    root_precision: int = 1
    packet_ttl_ms: int = 24 * 3600 * 1000
    cluster_ttl_ms: int = 7 * 24 * 3600 * 1000
    edge_threshold: float = 0.30
    classify_threshold: float = 0.30
    min_cluster_size: int = 3
    label_k: int = 5
    merge_cosine_threshold: float = 0.5
    time_overlap_ms: int = 6 * 3600 * 1000
    peak_min_count: int = 10
    peak_ratio_threshold: float = 3.0
    peak_half_life: float = 8.0
    ingest_buffer_cap: int = 500_000
    data_dir: str = "data"
    corpus_path: str | None = None
    stopwords_path: str | None = None
    host: str = "127.0.0.1"
    port: int = 8800

    def __post_init__(self) -> None:
        if self.window_ms <= 0:
            raise ValueError("window_ms must be positive")

    @classmethod
    def load(cls, path: str | None = None, env: dict[str, str] | None = None) -> "PipelineConfig":
        raw: dict[str, Any] = {}
        if path:
            raw.update(json.loads(Path(path).read_text("utf-8")))
        env = os.environ if env is None else env
        for f in fields(cls):
            key = "EVENTMAPS_" + f.name.upper()
            if key in env:
                value = env[key]
                if f.type in ("int", int):
                    raw[f.name] = int(value)
                elif f.type in ("float", float):
                    raw[f.name] = float(value)
                else:
                    raw[f.name] = value
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def detection_params(self) -> DetectionParams:
        return DetectionParams(
            edge_threshold=self.edge_threshold,
            min_cluster_size=self.min_cluster_size,
            label_k=self.label_k,
            peak_params=PeakParams(
                min_count=self.peak_min_count, ratio_threshold=self.peak_ratio_threshold
            ),
        )

    def scope_params(self) -> ScopeParams:
        return ScopeParams(
            merge_cosine_threshold=self.merge_cosine_threshold,
            time_overlap_ms=self.time_overlap_ms,
        )


@dataclass
class PipelineStats:
    """Per-window counters; ingested always equals indexed plus drops."""

    window_id: str = ""
    ingested: int = 0
    dropped: dict[str, int] = field(default_factory=dict)
    indexed: int = 0
    clusters_created: int = 0
    clusters_merged: int = 0
    clusters_expired: int = 0
    packets_evicted: int = 0
    duration_ms: float = 0.0

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())

    def drop(self, reason: str, count: int = 1) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + count

    def to_json(self) -> dict[str, Any]:
        return {
            "windowId": self.window_id,
            "ingested": self.ingested,
            "dropped": dict(sorted(self.dropped.items())),
            "indexed": self.indexed,
            "clustersCreated": self.clusters_created,
            "clustersMerged": self.clusters_merged,
            "clustersExpired": self.clusters_expired,
            "packetsEvicted": self.packets_evicted,
            "durationMs": round(self.duration_ms, 3),
        }


@dataclass(frozen=True)
class PublishedView:
    """Immutable read view swapped in atomically at window end."""

    version: int
    eois: dict[str, EventCluster]
    index: PyramidIndex
    published_at: int

    def live_range(self) -> TimeRange | None:
        if not self.eois:
            return None
        times = [c.timestamp for c in self.eois.values()]
        return TimeRange(min(times), max(times))


class Engine:
    """Single pipeline writer plus concurrent read surface."""

    def __init__(
        self,
        config: PipelineConfig | None = None,
        registry: AdapterRegistry | None = None,
        corpus: ClassCorpus | None = None,
    ) -> None:
        self.config = config or PipelineConfig()
        self.registry = registry or AdapterRegistry.with_defaults()
        self.corpus = corpus or ClassCorpus.load(
            self.config.corpus_path, self.config.classify_threshold
        )
        self.scale_map = ScaleMap()
        self.index = PyramidIndex(
            split_threshold=self.config.split_threshold,
            max_precision=self.config.max_precision,
            ttl_ms=self.config.packet_ttl_ms,
            root_precision=self.config.root_precision,
        )
        self.clusters: dict[str, EventCluster] = {}
        self.baselines: dict[str, KeywordBaseline] = {}
        self._published = PublishedView(version=0, eois={}, index=self.index, published_at=0)
        self._pending: list[DataPacket] = []
        self._pending_drops: dict[str, int] = {}
        self._pending_lines = 0
        self._write_lock = threading.Lock()
        self._ingest_lock = threading.Lock()
        self._history_cache: dict[str, list[EventCluster]] = {}
        self.window_history: list[PipelineStats] = []
        self.persisted_days: set[str] = set()

    # -- ingest -------------------------------------------------------------

    def ingest_lines(self, lines: Iterable[str], received_at: int | None = None) -> tuple[int, int]:
        """Wrap record lines and queue the packets for the next window.
        Returns (accepted, dropped); malformed records never abort the batch.
        Raises BufferError when the ingest buffer cap is hit."""
        received = received_at if received_at is not None else now_ms()
        accepted = 0
        dropped = 0
        with self._ingest_lock:
            for line in lines:
                line = line.strip()
                if not line:
                    continue
                if len(self._pending) >= self.config.ingest_buffer_cap:
                    raise BufferError("ingest buffer full")
                self._pending_lines += 1
                packet, reason = self._wrap_line(line, received)
                if packet is None:
                    self._pending_drops[reason] = self._pending_drops.get(reason, 0) + 1
                    dropped += 1
                else:
                    self._pending.append(packet)
                    accepted += 1
        return accepted, dropped

    def _wrap_line(self, line: str, received_at: int) -> tuple[DataPacket | None, str]:
        try:
            body = json.loads(line)
        except json.JSONDecodeError:
            return None, "unparseable"
        if not isinstance(body, dict) or not body.get("source"):
            return None, "no_source"
        try:
            record = RawRecord(source_id=str(body["source"]), body=body, received_at=received_at)
            adapter = self.registry.get(record.source_id)
            return wrap(record, adapter), ""
        except UnknownSourceError:
            return None, "unknown_source"
        except MissingGeoError:
            return None, "missing_geo"
        except MalformedTimeError:
            return None, "malformed_time"
        except PacketError:
            return None, "invalid"

    # -- the window ---------------------------------------------------------

    def run_window(
        self,
        lines: Iterable[str] | None = None,
        now: int | None = None,
    ) -> PipelineStats:
        """Process one batch window: drain the ingest buffer (plus any lines
        given), index, detect per touched leaf, aggregate scopes bottom-up,
        and publish the new view atomically."""
        with self._write_lock:
            started = _time.perf_counter()
            stats = PipelineStats()

            with self._ingest_lock:
                packets = self._pending
                drops = self._pending_drops
                stats.ingested = self._pending_lines
                self._pending = []
                self._pending_drops = {}
                self._pending_lines = 0
            for reason, count in drops.items():
                stats.drop(reason, count)

            received = now if now is not None else now_ms()
            if lines is not None:
                for line in lines:
                    line = line.strip()
                    if not line:
                        continue
                    stats.ingested += 1
                    packet, reason = self._wrap_line(line, received)
                    if packet is None:
                        stats.drop(reason)
                    else:
                        packets.append(packet)

            window_now = now if now is not None else max(
                [p.header.time_ms for p in packets], default=now_ms()
            )
            stats.window_id = f"w{window_now}"

            touched: set[str] = set()
            batch_seen: set[str] = set()
            new_ids: set[str] = set()
            for packet in packets:
                if packet.id in self.index or packet.id in batch_seen:
                    stats.drop("duplicate")
                    continue
                batch_seen.add(packet.id)
                self.index.insert(packet)
                new_ids.add(packet.id)
                stats.indexed += 1

            stats.packets_evicted = self.index.evict_expired(window_now)

            # Clusters are cloned per window so the previously published view
            # stays frozen while this window mutates state.
            working = {cid: c.clone() for cid, c in self.clusters.items()}
            stats.clusters_expired += len(
                expire_clusters(working, self.index.packets, window_now, self.config.cluster_ttl_ms)
            )
            self._relocate_clusters(working)

            for pid in new_ids:
                touched.add(self.index.leaf_keys[pid])

            by_cell: dict[str, list[EventCluster]] = {}
            for c in working.values():
                if c.origin == "leaf":
                    by_cell.setdefault(c.cell_key, []).append(c)

            params = self.config.detection_params()
            for cell_key in sorted(touched):
                cell = self.index.cell(cell_key)
                if cell is None or not cell.is_leaf:
                    continue
                baseline = self.baselines.setdefault(
                    cell_key, KeywordBaseline(half_life=self.config.peak_half_life)
                )
                result = detect_local_events(
                    cell_key=cell_key,
                    cell_packet_ids=list(cell.packet_ids),
                    prior_clusters=by_cell.get(cell_key, []),
                    new_packet_ids=new_ids,
                    packets=self.index.packets,
                    corpus=self.corpus,
                    baseline=baseline,
                    params=params,
                    scale_map=self.scale_map,
                    window_id=stats.window_id,
                )
                self._apply_detection(working, cell_key, result, by_cell)
                stats.clusters_created += result.created
                stats.clusters_merged += result.merged_clusters

            stats.clusters_merged += run_full_aggregation(
                working, self.config.scope_params(), self.config.label_k
            )

            self._sync_cell_clusters(working)
            self.clusters = working
            self._published = PublishedView(
                version=self._published.version + 1,
                eois=dict(working),
                index=self.index,
                published_at=window_now,
            )
            stats.duration_ms = (_time.perf_counter() - started) * 1000.0
            self.window_history.append(stats)
            return stats

    def _apply_detection(
        self,
        working: dict[str, EventCluster],
        cell_key: str,
        result: DetectionResult,
        by_cell: dict[str, list[EventCluster]],
    ) -> None:
        for cid in result.removed_ids:
            working.pop(cid, None)
        for c in result.clusters:
            working[c.id] = c
        by_cell[cell_key] = list(result.clusters)

    def _relocate_clusters(self, working: dict[str, EventCluster]) -> None:
        """A leaf that subdivided leaves its clusters on an interior cell;
        move each to the leaf now holding the plurality of its live members
        so future windows keep updating it."""
        for c in working.values():
            if c.origin != "leaf":
                continue
            cell = self.index.cell(c.cell_key)
            if cell is not None and cell.is_leaf:
                continue
            votes: dict[str, int] = {}
            for pid in c.packets:
                key = self.index.leaf_keys.get(pid)
                if key is not None:
                    votes[key] = votes.get(key, 0) + 1
            if votes:
                top = max(votes.values())
                new_key = min(k for k, v in votes.items() if v == top)
            else:
                leaf = self.index.leaf_for(c.centroid_lat, c.centroid_lon)
                if leaf is None:
                    continue
                new_key = leaf.key
            if new_key != c.cell_key:
                c.cell_key = new_key
                c.zoom_start, c.zoom_end = self.scale_map.zoom_range(len(new_key))

    def _sync_cell_clusters(self, working: dict[str, EventCluster]) -> None:
        for cell in self.index.leaf_cells():
            cell.clusters = []
        for cid in sorted(working):
            c = working[cid]
            cell = self.index.cell(c.cell_key)
            if cell is not None:
                cell.clusters.append(cid)

    # -- reads --------------------------------------------------------------

    @property
    def published(self) -> PublishedView:
        return self._published

    def query(self, query: EoIQuery) -> list[EventCluster]:
        view = self._published
        plan_ = plan(query, self.scale_map, view.live_range())
        return execute(plan_, query, view.eois.values(), self._history_day)

    def query_plan(self, query: EoIQuery) -> QueryPlan:
        return plan(query, self.scale_map, self._published.live_range())

    def tag_cloud(self, query: EoIQuery, k: int) -> list[tuple[str, float]]:
        unlimited = replace(query, limit=2**31)
        return tag_cloud(self.query(unlimited), k)

    def _history_day(self, day: str) -> list[EventCluster]:
        cached = self._history_cache.get(day)
        if cached is None:
            _, eois = load_day(self.config.data_dir, day)
            cached = self._history_cache[day] = eois
        return cached

    # -- persistence ----------------------------------------------------------

    def persist(self, days: list[str] | None = None) -> list[str]:
        """Write snapshot partitions for the given days (default: every day
        present in the index). Returns the days written."""
        view = self._published
        if days is None:
            days = sorted(view.index.day_buckets)
        written = []
        for day in days:
            ids = view.index.day_buckets.get(day, set())
            packets = [view.index.packets[pid] for pid in sorted(ids)]
            eois = [c for c in view.eois.values() if day_of(c.timestamp) == day]
            persist_day(self.config.data_dir, day, packets, eois)
            self.persisted_days.add(day)
            self._history_cache.pop(day, None)
            written.append(day)
        return written

    def restore(self) -> list[str]:
        """List persisted days available for historical queries."""
        return available_days(self.config.data_dir)

    def stats_summary(self) -> dict[str, Any]:
        view = self._published
        return {
            "version": view.version,
            "livePackets": len(view.index),
            "liveEois": len(view.eois),
            "pendingRecords": len(self._pending),
            "windows": [s.to_json() for s in self.window_history[-20:]],
            "persistedDays": sorted(self.persisted_days),
        }


def now_ms() -> int:
    return int(_time.time() * 1000)
