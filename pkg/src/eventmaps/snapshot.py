"""Time-partitioned disk snapshots.

Layout: <data_dir>/YYYY-MM/DD.packets.bin and DD.eois.bin plus a per-month
manifest with checksums. Record files are append-style binary: a magic +
format-version header, then length-prefixed, CRC-guarded JSON records.
Loading every partition of a period reconstructs an index that answers
queries identically to the original over that period.
"""
from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable

from .events import EventCluster
from .packets import DataPacket, PacketHeader, PacketPayload
from .pyramid import PyramidIndex
from .text import TermVector

MAGIC = b"EVSN"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">II")  # record length, crc32


class CorruptSnapshotError(Exception):
    pass


def packet_to_json(p: DataPacket) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "id": p.id,
        "source": p.header.source,
        "lat": p.header.lat,
        "lon": p.header.lon,
        "time": p.header.time_ms,
        "type": p.header.content_type,
        "text": p.payload.text,
        "tokens": p.payload.tokens,
        "tags": p.payload.tags,
    }
    if p.payload.user:
        rec["user"] = p.payload.user
    if p.payload.media_url:
        rec["media"] = p.payload.media_url
    if p.event_class:
        rec["eventClass"] = p.event_class
    if p.term_vector is not None:
        rec["vector"] = p.term_vector.weights
    return rec


def packet_from_json(rec: dict[str, Any]) -> DataPacket:
    header = PacketHeader(
        source=rec["source"],
        lat=rec["lat"],
        lon=rec["lon"],
        time_ms=rec["time"],
        content_type=rec.get("type", "text"),
    )
    payload = PacketPayload(
        text=rec.get("text", ""),
        tokens=list(rec.get("tokens", [])),
        tags=list(rec.get("tags", [])),
        user=rec.get("user"),
        media_url=rec.get("media"),
    )
    vector = rec.get("vector")
    return DataPacket(
        id=rec["id"],
        header=header,
        payload=payload,
        term_vector=TermVector.from_weights(vector) if vector else None,
        event_class=rec.get("eventClass"),
    )


def write_record_file(path: Path, records: Iterable[bytes]) -> str:
    """Write records and return the file's sha256 hex digest."""
    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        head = MAGIC + bytes([FORMAT_VERSION])
        fh.write(head)
        digest.update(head)
        for payload in records:
            frame = _HEADER.pack(len(payload), zlib.crc32(payload)) + payload
            fh.write(frame)
            digest.update(frame)
    return digest.hexdigest()


def read_record_file(path: Path, expect_sha256: str | None = None) -> list[bytes]:
    data = Path(path).read_bytes()
    if expect_sha256 is not None:
        actual = hashlib.sha256(data).hexdigest()
        if actual != expect_sha256:
            raise CorruptSnapshotError(f"{path}: checksum mismatch")
    if len(data) < 5 or data[:4] != MAGIC:
        raise CorruptSnapshotError(f"{path}: bad magic")
    if data[4] != FORMAT_VERSION:
        raise CorruptSnapshotError(f"{path}: unsupported format version {data[4]}")
    out: list[bytes] = []
    pos = 5
    while pos < len(data):
        if pos + _HEADER.size > len(data):
            raise CorruptSnapshotError(f"{path}: truncated record header")
        length, crc = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        payload = data[pos : pos + length]
        if len(payload) != length:
            raise CorruptSnapshotError(f"{path}: truncated record body")
        if zlib.crc32(payload) != crc:
            raise CorruptSnapshotError(f"{path}: record checksum mismatch")
        out.append(payload)
        pos += length
    return out


def _month_dir(data_dir: Path, month: str) -> Path:
    return Path(data_dir) / month


def _load_manifest(data_dir: Path, month: str) -> dict[str, Any]:
    path = _month_dir(data_dir, month) / "manifest"
    if not path.exists():
        return {"version": FORMAT_VERSION, "month": month, "days": {}}
    try:
        manifest = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptSnapshotError(f"{path}: unreadable manifest") from exc
    if manifest.get("month") != month:
        raise CorruptSnapshotError(f"{path}: manifest month mismatch")
    return manifest


def persist_day(
    data_dir: str | Path,
    day: str,
    packets: list[DataPacket],
    eois: list[EventCluster],
) -> dict[str, Any]:
    """Write one day's partition files and update the month manifest.
    `day` is YYYY-MM-DD. Returns the manifest entry written."""
    month, dd = day[:7], day[8:10]
    mdir = _month_dir(Path(data_dir), month)
    mdir.mkdir(parents=True, exist_ok=True)

    packets_path = mdir / f"{dd}.packets.bin"
    eois_path = mdir / f"{dd}.eois.bin"
    packets_sorted = sorted(packets, key=lambda p: p.id)
    eois_sorted = sorted(eois, key=lambda c: c.id)
    sha_p = write_record_file(
        packets_path,
        (json.dumps(packet_to_json(p), sort_keys=True).encode("utf-8") for p in packets_sorted),
    )
    sha_e = write_record_file(
        eois_path,
        (json.dumps(c.to_json(), sort_keys=True).encode("utf-8") for c in eois_sorted),
    )
    entry = {
        "packets": {"file": packets_path.name, "sha256": sha_p, "count": len(packets_sorted)},
        "eois": {"file": eois_path.name, "sha256": sha_e, "count": len(eois_sorted)},
    }
    manifest = _load_manifest(Path(data_dir), month)
    manifest["days"][dd] = entry
    (mdir / "manifest").write_text(json.dumps(manifest, indent=2, sort_keys=True), "utf-8")
    return entry


def available_days(data_dir: str | Path) -> list[str]:
    """Every persisted day (YYYY-MM-DD), across all month partitions."""
    root = Path(data_dir)
    if not root.exists():
        return []
    days: list[str] = []
    for mdir in sorted(root.iterdir()):
        if not mdir.is_dir() or len(mdir.name) != 7:
            continue
        manifest = _load_manifest(root, mdir.name)
        days.extend(f"{mdir.name}-{dd}" for dd in sorted(manifest["days"]))
    return days


def load_day(data_dir: str | Path, day: str) -> tuple[list[DataPacket], list[EventCluster]]:
    """Load one persisted day, verifying checksums."""
    month, dd = day[:7], day[8:10]
    manifest = _load_manifest(Path(data_dir), month)
    entry = manifest["days"].get(dd)
    if entry is None:
        return [], []
    mdir = _month_dir(Path(data_dir), month)
    packets = [
        packet_from_json(json.loads(raw))
        for raw in read_record_file(mdir / entry["packets"]["file"], entry["packets"]["sha256"])
    ]
    eois = [
        EventCluster.from_json(json.loads(raw))
        for raw in read_record_file(mdir / entry["eois"]["file"], entry["eois"]["sha256"])
    ]
    return packets, eois


def days_in_range(from_ms: int, to_ms: int) -> list[str]:
    """Every UTC day (YYYY-MM-DD) intersecting the time range."""
    start = datetime.fromtimestamp(from_ms / 1000, timezone.utc).date()
    end = datetime.fromtimestamp(to_ms / 1000, timezone.utc).date()
    out = []
    d = start
    while d <= end:
        out.append(d.isoformat())
        d += timedelta(days=1)
    return out


@dataclass
class SnapshotView:
    """Read-only reconstruction of persisted partitions."""

    index: PyramidIndex
    eois: dict[str, EventCluster]
    days: list[str]


def load_view(
    data_dir: str | Path,
    days: list[str],
    split_threshold: int = 500,
    max_precision: int = 8,
) -> SnapshotView:
    index = PyramidIndex(
        split_threshold=split_threshold, max_precision=max_precision, ttl_ms=2**61
    )
    eois: dict[str, EventCluster] = {}
    loaded: list[str] = []
    for day in days:
        packets, clusters = load_day(data_dir, day)
        if not packets and not clusters:
            continue
        loaded.append(day)
        for p in packets:
            if p.id not in index:
                index.insert(p)
        for c in clusters:
            eois[c.id] = c
    return SnapshotView(index=index, eois=eois, days=loaded)
