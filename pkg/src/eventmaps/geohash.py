"""Geohash encoding, decoding, and bounding-box covers.

Keys use the standard base-32 alphabet; longer keys address smaller cells,
and a key's prefix addresses its ancestor cell.
"""
from __future__ import annotations

from dataclasses import dataclass

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_INDEX = {c: i for i, c in enumerate(BASE32)}

MAX_PRECISION = 12


class OutOfRangeError(ValueError):
    """Latitude/longitude or precision outside the supported domain."""


class InvalidKeyError(ValueError):
    """Key contains characters outside the geohash alphabet or is empty."""


@dataclass(frozen=True)
class BBox:
    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def __post_init__(self) -> None:
        if self.min_lat > self.max_lat or self.min_lon > self.max_lon:
            raise OutOfRangeError(f"inverted bbox: {self}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.min_lat + self.max_lat) / 2, (self.min_lon + self.max_lon) / 2)

    def contains(self, lat: float, lon: float) -> bool:
        # Inclusive on all edges; cells only share zero-measure boundaries.
        return self.min_lat <= lat <= self.max_lat and self.min_lon <= lon <= self.max_lon

    def intersects(self, other: "BBox") -> bool:
        return not (
            other.max_lat < self.min_lat
            or other.min_lat > self.max_lat
            or other.max_lon < self.min_lon
            or other.min_lon > self.max_lon
        )

    def contains_box(self, other: "BBox") -> bool:
        return (
            self.min_lat <= other.min_lat
            and self.max_lat >= other.max_lat
            and self.min_lon <= other.min_lon
            and self.max_lon >= other.max_lon
        )


WORLD = BBox(-90.0, -180.0, 90.0, 180.0)


def encode(lat: float, lon: float, precision: int) -> str:
    """Encode a point to a geohash key of the given length."""
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise OutOfRangeError(f"lat/lon out of range: ({lat}, {lon})")
    if not (1 <= precision <= MAX_PRECISION):
        raise OutOfRangeError(f"precision out of range: {precision}")

    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True  # longitude bit first
    ch = 0
    bit = 0
    out: list[str] = []
    while len(out) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if lon >= mid:
                ch = (ch << 1) | 1
                lon_lo = mid
            else:
                ch = ch << 1
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                ch = (ch << 1) | 1
                lat_lo = mid
            else:
                ch = ch << 1
                lat_hi = mid
        even = not even
        bit += 1
        if bit == 5:
            out.append(BASE32[ch])
            ch = 0
            bit = 0
    return "".join(out)


def decode(key: str) -> BBox:
    """Decode a geohash key to the bounding box of its cell."""
    if not key:
        raise InvalidKeyError("empty key")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in key:
        idx = _CHAR_INDEX.get(c)
        if idx is None:
            raise InvalidKeyError(f"invalid geohash character {c!r} in {key!r}")
        for shift in range(4, -1, -1):
            b = (idx >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2
                if b:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2
                if b:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return BBox(lat_lo, lon_lo, lat_hi, lon_hi)


def cell_size_degrees(precision: int) -> tuple[float, float]:
    """(lat span, lon span) of a cell at the given precision, in degrees."""
    lon_bits = (5 * precision + 1) // 2
    lat_bits = 5 * precision - lon_bits
    return 180.0 / (1 << lat_bits), 360.0 / (1 << lon_bits)


def cover(bbox: BBox, precision: int, budget: int = 1024) -> list[str]:
    """Compact set of geohash prefixes (length <= precision) covering bbox.

    A prefix is emitted once its cell lies fully inside the bbox or the
    target precision is reached. Boundary cells refine level by level until
    the budget would be exceeded, at which point they are emitted as coarser
    prefixes; callers filter exactly, so over-covering is safe.
    """
    if not (1 <= precision <= MAX_PRECISION):
        raise OutOfRangeError(f"precision out of range: {precision}")
    out: list[str] = []
    boundary = [c for c in BASE32 if decode(c).intersects(bbox)]
    level = 1
    while boundary and level < precision:
        interior = [p for p in boundary if bbox.contains_box(decode(p))]
        out.extend(interior)
        boundary = [p for p in boundary if not bbox.contains_box(decode(p))]
        if len(out) + len(boundary) * 32 > budget:
            break
        boundary = [
            p + c for p in boundary for c in BASE32 if decode(p + c).intersects(bbox)
        ]
        level += 1
    out.extend(boundary)
    out.sort()
    return out
