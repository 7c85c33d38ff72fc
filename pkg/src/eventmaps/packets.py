"""Source-agnostic data packets.

Raw per-source records are cleaned and wrapped into a generic composite
packet (metadata header + content payload) so every downstream layer works
against one shape. Each source plugs in through a declarative field-path
adapter; no source-specific field name escapes this module.
"""
from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

from .text import TermVector, tokenize


class PacketError(ValueError):
    pass


class UnknownSourceError(PacketError):
    pass


class DuplicateSourceError(PacketError):
    pass


class MissingGeoError(PacketError):
    pass


class MalformedTimeError(PacketError):
    pass


class AdapterSpecError(PacketError):
    pass


@dataclass(frozen=True)
class RawRecord:
    """One unparsed post/photo/review as received from a feed."""

    source_id: str
    body: dict[str, Any]
    received_at: int  # UTC ms

    def __post_init__(self) -> None:
        if not self.source_id:
            raise PacketError("source_id must be non-empty")
        if not self.body:
            raise PacketError("body must be non-empty")


@dataclass(frozen=True)
class PacketHeader:
    source: str
    lat: float
    lon: float
    time_ms: int  # UTC ms
    content_type: str = "text"  # "text" | "image+text"


@dataclass
class PacketPayload:
    text: str
    tokens: list[str]
    tags: list[str]
    user: dict[str, str] | None = None
    media_url: str | None = None


@dataclass
class DataPacket:
    id: str
    header: PacketHeader
    payload: PacketPayload
    term_vector: TermVector | None = None
    event_class: str | None = None


@dataclass(frozen=True)
class SourceAdapterSpec:
    """Declarative field-path mapping from a source's raw body to a packet.

    Paths are dot-separated keys into the record body ("geo.lat"). The
    optional token_tagger hook replaces stopword-filtered tokenization for
    sources that want real POS-based extraction.
    """

    source_id: str
    text_path: str
    lat_path: str
    lon_path: str
    time_path: str
    id_path: str | None = None
    tags_path: str | None = None
    user_paths: dict[str, str] = field(default_factory=dict)
    media_path: str | None = None
    content_type: str = "text"
    token_tagger: Callable[[str], list[str]] | None = None

    def __post_init__(self) -> None:
        for name in ("source_id", "text_path", "lat_path", "lon_path", "time_path"):
            if not getattr(self, name):
                raise AdapterSpecError(f"adapter field {name} is required")
        if self.content_type not in ("text", "image+text"):
            raise AdapterSpecError(f"unknown content_type {self.content_type!r}")


class AdapterRegistry:
    """Read-mostly registry; registration happens at startup or config reload."""

    def __init__(self) -> None:
        self._adapters: dict[str, SourceAdapterSpec] = {}

    def register(self, spec: SourceAdapterSpec) -> None:
        if spec.source_id in self._adapters:
            raise DuplicateSourceError(f"adapter for {spec.source_id!r} already registered")
        self._adapters[spec.source_id] = spec

    def get(self, source_id: str) -> SourceAdapterSpec:
        spec = self._adapters.get(source_id)
        if spec is None:
            raise UnknownSourceError(f"no adapter registered for {source_id!r}")
        return spec

    def sources(self) -> list[str]:
        return sorted(self._adapters)

    @classmethod
    def with_defaults(cls) -> "AdapterRegistry":
        reg = cls()
        reg.register(
            SourceAdapterSpec(
                source_id="twitter",
                text_path="text",
                lat_path="geo.lat",
                lon_path="geo.lon",
                time_path="created_at",
                id_path="id",
                user_paths={"name": "user.name", "followers": "user.followers"},
            )
        )
        reg.register(
            SourceAdapterSpec(
                source_id="flickr",
                text_path="title",
                lat_path="latitude",
                lon_path="longitude",
                time_path="taken_at",
                id_path="photo_id",
                tags_path="tags",
                media_path="url",
                user_paths={"name": "owner"},
                content_type="image+text",
            )
        )
        reg.register(
            SourceAdapterSpec(
                source_id="synthetic",
                text_path="text",
                lat_path="lat",
                lon_path="lon",
                time_path="time",
                id_path="id",
            )
        )
        return reg


_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
_MENTION_RE = re.compile(r"@\w+")
_RT_RE = re.compile(r"^\s*rt\b[: ]*", re.IGNORECASE)
_HASHTAG_RE = re.compile(r"#(\w+)")
_WS_RE = re.compile(r"\s+")

# ASCII controls map to space; the printable range is untouched.
_ASCII_CONTROL_TABLE = {
    i: " " for i in list(range(0x20)) + [0x7F] if chr(i) not in "\t\n\r"
}
_ASCII_CONTROL_TABLE.update({0x09: " ", 0x0A: " ", 0x0D: " "})


def _strip_symbols(text: str) -> str:
    # Emoji and control characters become whitespace so words never fuse.
    if text.isascii():
        return text.translate(_ASCII_CONTROL_TABLE)
    out = []
    for ch in text:
        cat = unicodedata.category(ch)
        if cat.startswith("C") or cat == "So" or ord(ch) > 0xFFFF:
            out.append(" ")
        else:
            out.append(ch)
    return "".join(out)


def clean_text(text: str) -> tuple[str, list[str]]:
    """Strip URLs, @mentions, RT markers, emoji and control characters;
    extract hashtags (returned lowercase without '#'); collapse whitespace.

    Idempotent: cleaning already-cleaned text returns it unchanged with no
    tags.
    """
    text = _strip_symbols(text)
    text = _URL_RE.sub(" ", text)
    text = _MENTION_RE.sub(" ", text)
    text = _RT_RE.sub("", text)
    tags = [m.group(1).lower() for m in _HASHTAG_RE.finditer(text)]
    text = _HASHTAG_RE.sub(" ", text)
    text = _WS_RE.sub(" ", text).strip()
    return text, tags


def _resolve(body: dict[str, Any], path: str) -> Any:
    cur: Any = body
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def _parse_time(value: Any) -> int:
    if isinstance(value, bool):
        raise MalformedTimeError(f"unusable timestamp {value!r}")
    if isinstance(value, (int, float)):
        ms = int(value)
        if ms <= 0:
            raise MalformedTimeError(f"non-positive timestamp {value!r}")
        return ms
    if isinstance(value, str):
        try:
            dt = datetime.fromisoformat(value.replace("Z", "+00:00"))
        except ValueError:
            raise MalformedTimeError(f"unparseable timestamp {value!r}") from None
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp() * 1000)
    raise MalformedTimeError(f"unusable timestamp {value!r}")


def packet_id(source: str, native_id: Any, time_ms: int, text: str) -> str:
    """Stable id: hash of (source, native id) when the source supplies one,
    else hash of (source, time, text). Dedups across re-ingestion."""
    if native_id is not None and str(native_id) != "":
        seed = f"{source}\x00{native_id}"
    else:
        seed = f"{source}\x01{time_ms}\x01{text}"
    return hashlib.sha1(seed.encode("utf-8")).hexdigest()[:20]


def wrap(record: RawRecord, adapter: SourceAdapterSpec) -> DataPacket:
    """Clean a raw record and wrap it into the generic packet format.

    Raises MissingGeoError when no usable coordinates are present (the whole
    pipeline is spatial, so such records are dropped and counted upstream)
    and MalformedTimeError for unusable timestamps.
    """
    body = record.body
    lat = _resolve(body, adapter.lat_path)
    lon = _resolve(body, adapter.lon_path)
    if not isinstance(lat, (int, float)) or not isinstance(lon, (int, float)) \
            or isinstance(lat, bool) or isinstance(lon, bool):
        raise MissingGeoError(f"record from {record.source_id!r} has no usable coordinates")
    lat, lon = float(lat), float(lon)
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise MissingGeoError(f"coordinates out of bounds: ({lat}, {lon})")

    raw_time = _resolve(body, adapter.time_path)
    if raw_time is None:
        raise MalformedTimeError(f"record from {record.source_id!r} has no timestamp")
    time_ms = _parse_time(raw_time)

    raw_text = _resolve(body, adapter.text_path)
    text, tags = clean_text(str(raw_text)) if raw_text is not None else ("", [])

    if adapter.tags_path:
        extra = _resolve(body, adapter.tags_path)
        if isinstance(extra, str):
            extra = extra.split()
        if isinstance(extra, list):
            for t in extra:
                t = str(t).lstrip("#").lower()
                if t and t not in tags:
                    tags.append(t)

    tagger = adapter.token_tagger or tokenize
    tokens = tagger(text)

    user: dict[str, str] | None = None
    if adapter.user_paths:
        found = {
            key: str(val)
            for key, path in adapter.user_paths.items()
            if (val := _resolve(body, path)) is not None
        }
        user = found or None

    media = _resolve(body, adapter.media_path) if adapter.media_path else None

    header = PacketHeader(
        source=adapter.source_id,
        lat=lat,
        lon=lon,
        time_ms=time_ms,
        content_type=adapter.content_type,
    )
    payload = PacketPayload(
        text=text,
        tokens=tokens,
        tags=tags,
        user=user,
        media_url=str(media) if media is not None else None,
    )
    pid = packet_id(adapter.source_id, _resolve(body, adapter.id_path) if adapter.id_path else None,
                    time_ms, text)
    return DataPacket(id=pid, header=header, payload=payload)


def validate(packet: DataPacket) -> list[str]:
    """Every invariant violation in the packet; clean packets return []."""
    violations: list[str] = []
    h, p = packet.header, packet.payload
    if not packet.id:
        violations.append("empty id")
    if not h.source:
        violations.append("empty source")
    if not (-90.0 <= h.lat <= 90.0):
        violations.append("lat out of range")
    if not (-180.0 <= h.lon <= 180.0):
        violations.append("lon out of range")
    if h.time_ms <= 0:
        violations.append("non-positive time")
    if h.content_type not in ("text", "image+text"):
        violations.append(f"unknown content type {h.content_type!r}")
    if not p.text and not p.tags:
        violations.append("empty content")
    if p.text and p.tokens != tokenize(p.text):
        violations.append("tokens do not derive from text")
    for t in p.tags:
        if t != t.lower() or t.startswith("#"):
            violations.append(f"tag not normalized: {t!r}")
    return violations


def content_terms(packet: DataPacket) -> list[str]:
    """Terms that feed the packet's vector: tokens plus tags."""
    return packet.payload.tokens + [t for t in packet.payload.tags if t not in packet.payload.tokens]
