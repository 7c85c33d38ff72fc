"""Local event detection within leaf cells.

Each batch window, a leaf cell's prior clusters, unclustered old packets,
and newly indexed packets become nodes of a cosine-similarity graph.
Louvain communities then update the cluster set: communities containing a
prior cluster fold their packets into it; communities of sufficient size
without one become new clusters. Cluster typing falls back from the
classifier corpus to keyword peaks to "unclassified".
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .community import build_graph, louvain
from .events import UNCLASSIFIED, UNSPECIFIED_PREFIX, EventCluster, leaf_cluster_id
from .packets import DataPacket, content_terms
from .scope import ScaleMap
from .text import (
    ClassCorpus,
    KeywordBaseline,
    PeakParams,
    TermVector,
    VocabularyStats,
    classify,
    detect_peaks,
    mean_vector,
    tf_idf,
)


@dataclass
class DetectionParams:
    edge_threshold: float = 0.30
    min_cluster_size: int = 3
    label_k: int = 5
    peak_params: PeakParams = field(default_factory=PeakParams)

    def __post_init__(self) -> None:
        if not (0.0 < self.edge_threshold <= 1.0):
            raise ValueError("edge_threshold must be in (0, 1]")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass
class DetectionResult:
    clusters: list[EventCluster]
    removed_ids: list[str]
    created: int = 0
    absorbed_packets: int = 0
    merged_clusters: int = 0


def expire_clusters(
    clusters: dict[str, EventCluster],
    live_packets: Mapping[str, DataPacket],
    now: int,
    cluster_ttl_ms: int,
) -> list[str]:
    """TTL pass over leaf-born clusters: prune members that fell out of the
    index; drop clusters with no live members once they also age past the
    cluster TTL. Returns the expired cluster ids."""
    expired: list[str] = []
    for cid in sorted(clusters):
        c = clusters[cid]
        if c.origin != "leaf":
            continue
        live = [pid for pid in c.packets if pid in live_packets]
        if live:
            if len(live) != len(c.packets):
                c.packets = live
                c.packet_count = len(live)
                c.timestamp = max(live_packets[pid].header.time_ms for pid in live)
        elif now - c.timestamp > cluster_ttl_ms:
            expired.append(cid)
            del clusters[cid]
        # else: no live members but still within the cluster TTL; the
        # cluster is kept frozen with its last computed centroid and count.
    return expired


def detect_local_events(
    cell_key: str,
    cell_packet_ids: list[str],
    prior_clusters: list[EventCluster],
    new_packet_ids: set[str],
    packets: Mapping[str, DataPacket],
    corpus: ClassCorpus,
    baseline: KeywordBaseline,
    params: DetectionParams,
    scale_map: ScaleMap,
    window_id: str = "",
) -> DetectionResult:
    """Run one detection window over a leaf cell and return its updated
    cluster set. Deterministic: identical cell state and batch produce
    identical clusters and ids."""
    prior = sorted(prior_clusters, key=lambda c: c.id)
    clustered: set[str] = set()
    for c in prior:
        clustered.update(c.packets)
    member_ids = sorted(set(cell_packet_ids) | clustered)
    live_ids = [pid for pid in member_ids if pid in packets]

    stats = VocabularyStats(window_id=window_id)
    docs: dict[str, list[str]] = {}
    for pid in live_ids:
        terms = content_terms(packets[pid])
        docs[pid] = terms
        stats.add_document(terms)

    vectors: dict[str, TermVector] = {}
    for pid in live_ids:
        vec = tf_idf(docs[pid], stats)
        vectors[pid] = vec
        pkt = packets[pid]
        pkt.term_vector = vec
        hit = classify(vec, corpus)
        pkt.event_class = hit[0] if hit else None

    # Nodes: prior clusters (centroid vectors recomputed from live members)
    # plus every live unclustered packet in the cell.
    node_vectors: dict[str, TermVector] = {}
    for c in prior:
        live_members = [pid for pid in c.packets if pid in vectors]
        if live_members:
            c.centroid_vector = mean_vector([vectors[pid] for pid in live_members])
        node_vectors[c.id] = c.centroid_vector
    unclustered = [pid for pid in live_ids if pid not in clustered]
    for pid in unclustered:
        node_vectors[pid] = vectors[pid]

    graph = build_graph(node_vectors, params.edge_threshold)
    partition = louvain(graph)

    communities: dict[int, list[str]] = {}
    for node in sorted(partition):
        communities.setdefault(partition[node], []).append(node)

    cluster_by_id = {c.id: c for c in prior}
    result_clusters: dict[str, EventCluster] = dict(cluster_by_id)
    removed: list[str] = []
    created = 0
    absorbed = 0
    merged = 0
    changed: set[str] = set()

    new_counts: dict[str, int] = {}
    for pid in live_ids:
        if pid in new_packet_ids:
            for term in set(docs[pid]):
                new_counts[term] = new_counts.get(term, 0) + 1
    peaks = detect_peaks(new_counts, baseline, params.peak_params)
    peak_scores = dict(peaks)

    for comm_id in sorted(communities):
        nodes = communities[comm_id]
        comm_clusters = [cluster_by_id[n] for n in nodes if n in cluster_by_id]
        comm_packets = [n for n in nodes if n not in cluster_by_id]
        if comm_clusters:
            comm_clusters.sort(key=lambda c: (c.created_at, c.id))
            target = comm_clusters[0]
            members = set(target.packets)
            for other in comm_clusters[1:]:
                target.packets.extend(p for p in other.packets if p not in members)
                members.update(other.packets)
                removed.append(other.id)
                del result_clusters[other.id]
                merged += 1
            if comm_packets:
                target.packets.extend(p for p in comm_packets if p not in members)
                absorbed += len(comm_packets)
            if comm_packets or len(comm_clusters) > 1:
                changed.add(target.id)
        elif len(comm_packets) >= params.min_cluster_size:
            first_time = min(packets[p].header.time_ms for p in comm_packets)
            zoom_start, zoom_end = scale_map.zoom_range(len(cell_key))
            cluster = EventCluster(
                id=leaf_cluster_id(cell_key, comm_packets),
                event_type=UNCLASSIFIED,
                packets=sorted(comm_packets),
                packet_count=len(comm_packets),
                centroid_lat=0.0,
                centroid_lon=0.0,
                centroid_vector=TermVector.zero(),
                cell_key=cell_key,
                timestamp=0,
                zoom_start=zoom_start,
                zoom_end=zoom_end,
                created_at=first_time,
            )
            result_clusters[cluster.id] = cluster
            changed.add(cluster.id)
            created += 1

    for cid in sorted(changed):
        c = result_clusters[cid]
        _refresh(c, packets, vectors)
        _assign_type(c, corpus, peak_scores, params.label_k)

    out = sorted(result_clusters.values(), key=lambda c: c.id)
    return DetectionResult(
        clusters=out,
        removed_ids=removed,
        created=created,
        absorbed_packets=absorbed,
        merged_clusters=merged,
    )


def _refresh(
    cluster: EventCluster,
    packets: Mapping[str, DataPacket],
    vectors: dict[str, TermVector],
) -> None:
    """Recompute membership-derived state from live members."""
    live = [pid for pid in cluster.packets if pid in packets]
    if not live:
        return
    cluster.packets = live
    cluster.packet_count = len(live)
    cluster.centroid_lat = sum(packets[p].header.lat for p in live) / len(live)
    cluster.centroid_lon = sum(packets[p].header.lon for p in live) / len(live)
    cluster.timestamp = max(packets[p].header.time_ms for p in live)
    member_vectors = [vectors[p] for p in live if p in vectors]
    if member_vectors:
        cluster.centroid_vector = mean_vector(member_vectors)


def _assign_type(
    cluster: EventCluster,
    corpus: ClassCorpus,
    peak_scores: dict[str, float],
    label_k: int,
) -> None:
    hit = classify(cluster.centroid_vector, corpus)
    if hit is not None:
        cluster.event_type = hit[0]
    else:
        terms = set(cluster.centroid_vector.weights)
        candidates = [(score, kw) for kw, score in peak_scores.items() if kw in terms]
        if candidates:
            candidates.sort(key=lambda sk: (-sk[0], sk[1]))
            cluster.event_type = UNSPECIFIED_PREFIX + candidates[0][1]
        else:
            cluster.event_type = UNCLASSIFIED
    cluster.label_terms = cluster.centroid_vector.top_terms(label_k)
