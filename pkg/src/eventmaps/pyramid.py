"""Multi-resolution in-memory geohash pyramid.

Leaves hold packets; interior cells hold subtree counts. Dense leaves
subdivide once they reach the split threshold, so high-count areas are
expanded to deeper precisions. Packets expire by TTL and are partitioned
into per-day buckets for snapshotting.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import geohash
from .geohash import BBox
from .packets import DataPacket


def day_of(time_ms: int) -> str:
    return datetime.fromtimestamp(time_ms / 1000, timezone.utc).strftime("%Y-%m-%d")


@dataclass
class Cell:
    key: str
    packet_ids: list[str] = field(default_factory=list)
    packet_count: int = 0
    clusters: list[str] = field(default_factory=list)
    children: dict[str, "Cell"] | None = None
    last_touched: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass(frozen=True)
class TimeRange:
    from_ms: int
    to_ms: int

    def __post_init__(self) -> None:
        if self.from_ms > self.to_ms:
            raise ValueError(f"inverted time range: {self.from_ms} > {self.to_ms}")

    def contains(self, t: int) -> bool:
        return self.from_ms <= t <= self.to_ms


OPEN_RANGE = TimeRange(0, 2**62)


class PyramidIndex:
    """Single-writer geohash pyramid over data packets."""

    def __init__(
        self,
        split_threshold: int = 500,
        max_precision: int = 8,
        ttl_ms: int = 24 * 3600 * 1000,
        root_precision: int = 1,
    ) -> None:
        if not (1 <= root_precision <= max_precision <= geohash.MAX_PRECISION):
            raise ValueError("root_precision <= max_precision <= 12 required")
        if split_threshold < 1:
            raise ValueError("split_threshold must be >= 1")
        self.split_threshold = split_threshold
        self.max_precision = max_precision
        self.ttl_ms = ttl_ms
        self.root_precision = root_precision
        self.roots: dict[str, Cell] = {}
        self.packets: dict[str, DataPacket] = {}
        self.leaf_keys: dict[str, str] = {}  # packet id -> leaf cell key
        self.day_buckets: dict[str, set[str]] = {}

    def __len__(self) -> int:
        return len(self.packets)

    def __contains__(self, packet_id: str) -> bool:
        return packet_id in self.packets

    # -- navigation ---------------------------------------------------------

    def cell(self, key: str) -> Cell | None:
        root = self.roots.get(key[: self.root_precision])
        if root is None:
            return None
        cell = root
        for depth in range(self.root_precision, len(key)):
            if cell.children is None:
                return None
            cell = cell.children.get(key[: depth + 1])
            if cell is None:
                return None
        return cell

    def _path(self, key: str) -> list[Cell]:
        """Cells from the root down to the deepest existing cell on key."""
        root = self.roots.get(key[: self.root_precision])
        if root is None:
            return []
        path = [root]
        cell = root
        for depth in range(self.root_precision, len(key)):
            if cell.children is None:
                break
            nxt = cell.children.get(key[: depth + 1])
            if nxt is None:
                break
            path.append(nxt)
            cell = nxt
        return path

    def leaf_for(self, lat: float, lon: float) -> Cell | None:
        """Current leaf cell covering the point, if that branch exists."""
        full = geohash.encode(lat, lon, self.max_precision)
        path = self._path(full)
        if not path:
            return None
        return path[-1] if path[-1].is_leaf else None

    def leaf_cells(self):
        stack = [self.roots[k] for k in sorted(self.roots)]
        while stack:
            cell = stack.pop()
            if cell.is_leaf:
                yield cell
            else:
                stack.extend(cell.children[k] for k in sorted(cell.children, reverse=True))

    # -- writes -------------------------------------------------------------

    def insert(self, packet: DataPacket) -> str:
        """Store the packet in the leaf covering its location, updating counts
        along the ancestor path; subdivides the leaf when it reaches the split
        threshold. Returns the final leaf key."""
        if packet.id in self.packets:
            raise ValueError(f"duplicate packet id {packet.id!r}")
        full = geohash.encode(packet.header.lat, packet.header.lon, self.max_precision)
        root_key = full[: self.root_precision]
        root = self.roots.get(root_key)
        if root is None:
            root = self.roots[root_key] = Cell(key=root_key)

        self.packets[packet.id] = packet
        cell = root
        cell.packet_count += 1
        cell.last_touched = packet.header.time_ms
        while cell.children is not None:
            child_key = full[: len(cell.key) + 1]
            child = cell.children.get(child_key)
            if child is None:
                child = cell.children[child_key] = Cell(key=child_key)
            cell = child
            cell.packet_count += 1
            cell.last_touched = packet.header.time_ms
        cell.packet_ids.append(packet.id)
        self.leaf_keys[packet.id] = cell.key
        self.day_buckets.setdefault(day_of(packet.header.time_ms), set()).add(packet.id)

        self._split_if_needed(cell)
        return self.leaf_keys[packet.id]

    def _split_if_needed(self, cell: Cell) -> None:
        """Subdivide overfull leaves, cascading while a child is still
        overfull; packet-to-leaf assignments are updated in place."""
        queue = [cell]
        while queue:
            leaf = queue.pop()
            if (
                not leaf.is_leaf
                or leaf.packet_count < self.split_threshold
                or len(leaf.key) >= self.max_precision
            ):
                continue
            leaf.children = {}
            depth = len(leaf.key)
            for pid in leaf.packet_ids:
                p = self.packets[pid]
                child_key = geohash.encode(p.header.lat, p.header.lon, depth + 1)
                child = leaf.children.get(child_key)
                if child is None:
                    child = leaf.children[child_key] = Cell(key=child_key)
                child.packet_ids.append(pid)
                child.packet_count += 1
                child.last_touched = max(child.last_touched, p.header.time_ms)
                self.leaf_keys[pid] = child_key
            leaf.packet_ids = []
            queue.extend(leaf.children.values())

    def remove(self, packet_id: str) -> None:
        packet = self.packets.pop(packet_id, None)
        if packet is None:
            return
        leaf_key = self.leaf_keys.pop(packet_id)
        path = self._path(leaf_key)
        for cell in path:
            cell.packet_count -= 1
        path[-1].packet_ids.remove(packet_id)
        day = day_of(packet.header.time_ms)
        bucket = self.day_buckets.get(day)
        if bucket is not None:
            bucket.discard(packet_id)
            if not bucket:
                del self.day_buckets[day]

    def evict_expired(self, now: int) -> int:
        """Remove every live packet older than now - ttl. Returns the count."""
        cutoff = now - self.ttl_ms
        cutoff_day = day_of(cutoff)
        stale: list[str] = []
        for day in list(self.day_buckets):
            if day > cutoff_day:
                continue
            for pid in self.day_buckets[day]:
                if self.packets[pid].header.time_ms < cutoff:
                    stale.append(pid)
        for pid in stale:
            self.remove(pid)
        return len(stale)

    # -- reads --------------------------------------------------------------

    def range_query(self, bbox: BBox, time_range: TimeRange = OPEN_RANGE) -> list[str]:
        """Exactly the live packet ids with location in bbox and time in
        range; cell pruning by bbox, exact filtering at leaves."""
        out: list[str] = []
        stack = list(self.roots.values())
        while stack:
            cell = stack.pop()
            if not geohash.decode(cell.key).intersects(bbox):
                continue
            if cell.is_leaf:
                for pid in cell.packet_ids:
                    h = self.packets[pid].header
                    if bbox.contains(h.lat, h.lon) and time_range.contains(h.time_ms):
                        out.append(pid)
            else:
                stack.extend(cell.children.values())
        out.sort()
        return out

    def range_aggregates(
        self, bbox: BBox, time_range: TimeRange = OPEN_RANGE, precision: int = 4
    ) -> list[tuple[str, int]]:
        """Per-cell live packet counts at the given precision for cells
        intersecting bbox (packets filtered exactly)."""
        counts: dict[str, int] = {}
        for pid in self.range_query(bbox, time_range):
            h = self.packets[pid].header
            key = geohash.encode(h.lat, h.lon, precision)
            counts[key] = counts.get(key, 0) + 1
        return sorted(counts.items())

    # -- audits -------------------------------------------------------------

    def audit_counts(self) -> list[str]:
        """Count-conservation violations: for every interior cell the count
        must equal the sum over children; for leaves, the stored ids."""
        problems: list[str] = []
        stack = list(self.roots.values())
        while stack:
            cell = stack.pop()
            if cell.is_leaf:
                if cell.packet_count != len(cell.packet_ids):
                    problems.append(f"{cell.key}: count {cell.packet_count} != ids {len(cell.packet_ids)}")
                if len(cell.key) > self.max_precision:
                    problems.append(f"{cell.key}: leaf deeper than max precision")
            else:
                if cell.packet_ids:
                    problems.append(f"{cell.key}: subdivided cell holds direct packets")
                total = sum(c.packet_count for c in cell.children.values())
                if cell.packet_count != total:
                    problems.append(f"{cell.key}: count {cell.packet_count} != children sum {total}")
                stack.extend(cell.children.values())
        return problems
