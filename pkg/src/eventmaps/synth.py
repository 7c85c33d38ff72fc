"""Synthetic labeled-stream generation.

Plants events at chosen display scales inside a precision-3 region, with
uniform background noise. An event at scale S is laid out as topic-term
packet clumps placed in hierarchically chosen descendant cells of its
anchor cell, so that sibling-cell merging recovers exactly the intended
scope: 4 children at the first level below the anchor, 2 at each deeper
level, down to the finest precision.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any

from . import geohash

SCALE_PRECISION = {
    "Local": 8,
    "Neighborhood": 6,
    "Sub-Locality": 5,
    "Locality": 4,
    "City": 3,
}

DEFAULT_VOLUMES = {
    "Local": 15,
    "Neighborhood": 96,
    "Sub-Locality": 192,
    "Locality": 384,
    "City": 768,
}

EARTH_RADIUS_M = 6_371_000.0


@dataclass
class PlantedEventSpec:
    event_id: str
    scale: str
    anchor_key: str
    start_ms: int
    end_ms: int
    topic_terms: list[str]
    volume: int
    noise_rate: float
    center_lat: float = 0.0  # filled from generated packets
    center_lon: float = 0.0
    radius_m: float = 0.0

    def __post_init__(self) -> None:
        if self.scale not in SCALE_PRECISION:
            raise ValueError(f"unknown scale {self.scale!r}")
        if len(self.anchor_key) != SCALE_PRECISION[self.scale]:
            raise ValueError(
                f"anchor key {self.anchor_key!r} length != precision for {self.scale}"
            )
        if self.volume < 1 or self.noise_rate < 0:
            raise ValueError("volume must be >= 1 and noise_rate >= 0")

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": "event",
            "id": self.event_id,
            "scale": self.scale,
            "anchorKey": self.anchor_key,
            "centerLat": self.center_lat,
            "centerLon": self.center_lon,
            "radiusM": self.radius_m,
            "start": self.start_ms,
            "end": self.end_ms,
            "topicTerms": list(self.topic_terms),
            "volume": self.volume,
            "noiseRate": self.noise_rate,
        }


def cell_radius_m(key: str) -> float:
    """Half-diagonal of the cell, in meters (worst case at the equator)."""
    import math

    lat_deg, lon_deg = geohash.cell_size_degrees(len(key))
    box = geohash.decode(key)
    mid_lat = (box.min_lat + box.max_lat) / 2
    lat_m = lat_deg * 111_320.0
    lon_m = lon_deg * 111_320.0 * max(math.cos(math.radians(mid_lat)), 0.05)
    return math.hypot(lat_m, lon_m) / 2


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    import math

    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def _random_descendant(rng: random.Random, key: str, precision: int) -> str:
    while len(key) < precision:
        key += rng.choice(geohash.BASE32)
    return key


def _clump_cells(rng: random.Random, anchor: str, max_precision: int) -> list[str]:
    """Descendant cells at max precision: 4 distinct children at the first
    level below the anchor, then 2 distinct children per deeper level."""
    cells = [anchor]
    first = True
    while len(cells[0]) < max_precision:
        fanout = 4 if first else 2
        first = False
        nxt: list[str] = []
        for cell in cells:
            children = rng.sample(geohash.BASE32, min(fanout, 32))
            nxt.extend(cell + c for c in children)
        cells = nxt
    return sorted(cells)


def _point_in_cell(rng: random.Random, key: str) -> tuple[float, float]:
    """Uniform point inside the central half of the cell, clear of borders."""
    box = geohash.decode(key)
    lat_span = box.max_lat - box.min_lat
    lon_span = box.max_lon - box.min_lon
    lat = box.min_lat + lat_span * (0.25 + 0.5 * rng.random())
    lon = box.min_lon + lon_span * (0.25 + 0.5 * rng.random())
    return lat, lon


def make_specs(
    region_key: str,
    seed: int,
    events_per_scale: int = 4,
    noise_rate: float = 10.0,
    day_start_ms: int = 1_700_000_000_000,
    day_span_ms: int = 24 * 3600 * 1000,
    event_span_ms: int = 2 * 3600 * 1000,
    volumes: dict[str, int] | None = None,
) -> list[PlantedEventSpec]:
    """Event specs across all five scales, anchored at distinct cells of the
    precision-3 region."""
    if len(region_key) != 3:
        raise ValueError("region_key must be a precision-3 geohash")
    rng = random.Random(seed)
    volumes = volumes or DEFAULT_VOLUMES
    specs: list[PlantedEventSpec] = []
    used_anchors: set[str] = set()
    n = 0
    for scale in ("Local", "Neighborhood", "Sub-Locality", "Locality", "City"):
        precision = SCALE_PRECISION[scale]
        for _ in range(events_per_scale):
            if scale == "City":
                anchor = region_key
            else:
                anchor = _random_descendant(rng, region_key, precision)
                while anchor in used_anchors:
                    anchor = _random_descendant(rng, region_key, precision)
            used_anchors.add(anchor)
            start = day_start_ms + int(rng.random() * (day_span_ms - event_span_ms))
            terms = [f"ev{n}term{j}" for j in range(8)]
            specs.append(
                PlantedEventSpec(
                    event_id=f"ev{n}",
                    scale=scale,
                    anchor_key=anchor,
                    start_ms=start,
                    end_ms=start + event_span_ms,
                    topic_terms=terms,
                    volume=volumes[scale],
                    noise_rate=noise_rate,
                )
            )
            n += 1
    return specs


@dataclass
class GeneratedStream:
    records: list[dict[str, Any]]
    specs: list[PlantedEventSpec]
    controls: list[dict[str, Any]] = field(default_factory=list)

    def record_lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True) for r in self.records]

    def truth_lines(self) -> list[str]:
        lines = [json.dumps(s.to_json(), sort_keys=True) for s in self.specs]
        lines.extend(json.dumps(c, sort_keys=True) for c in self.controls)
        return lines


def generate(
    specs: list[PlantedEventSpec],
    seed: int,
    region_key: str | None = None,
    max_precision: int = 8,
    noise_vocab_size: int = 8000,
    controls_per_scale: int = 4,
    total_records: int | None = None,
) -> GeneratedStream:
    """Deterministic labeled stream: event packets laid out per spec plus
    uniform background noise. When total_records is given, the noise count
    tops the stream up to exactly that size; otherwise it follows each
    spec's noise_rate."""
    rng = random.Random(seed)
    records: list[dict[str, Any]] = []
    region = region_key or (specs[0].anchor_key[:3] if specs else "9q5")
    region_box = geohash.decode(region)

    event_total = 0
    all_clump_cells: set[str] = set()
    for spec in specs:
        cells = _clump_cells(rng, spec.anchor_key, max_precision)
        all_clump_cells.update(cells)
        base, extra = divmod(spec.volume, len(cells))
        lats: list[float] = []
        lons: list[float] = []
        k = 0
        for ci, cell in enumerate(cells):
            clump_size = base + (1 if ci < extra else 0)
            for _ in range(clump_size):
                lat, lon = _point_in_cell(rng, cell)
                lats.append(lat)
                lons.append(lon)
                n_terms = rng.randint(4, 6)
                terms = rng.sample(spec.topic_terms, n_terms)
                records.append(
                    {
                        "source": "synthetic",
                        "id": f"{spec.event_id}-{k}",
                        "text": " ".join(terms),
                        "lat": round(lat, 7),
                        "lon": round(lon, 7),
                        "time": spec.start_ms
                        + int(rng.random() * (spec.end_ms - spec.start_ms)),
                    }
                )
                k += 1
        spec.center_lat = sum(lats) / len(lats)
        spec.center_lon = sum(lons) / len(lons)
        spec.radius_m = cell_radius_m(spec.anchor_key)
        event_total += k

    if total_records is not None:
        noise_total = max(total_records - event_total, 0)
    else:
        noise_total = int(sum(s.volume * s.noise_rate for s in specs))
    if specs:
        t_lo = min(s.start_ms for s in specs)
        t_hi = max(s.end_ms for s in specs)
    else:
        t_lo, t_hi = 1_700_000_000_000, 1_700_000_000_000 + 24 * 3600 * 1000
    vocab = [f"bg{i}word" for i in range(noise_vocab_size)]
    for k in range(noise_total):
        lat = region_box.min_lat + rng.random() * (region_box.max_lat - region_box.min_lat)
        lon = region_box.min_lon + rng.random() * (region_box.max_lon - region_box.min_lon)
        records.append(
            {
                "source": "synthetic",
                "id": f"noise-{k}",
                "text": " ".join(rng.sample(vocab, rng.randint(5, 8))),
                "lat": round(lat, 7),
                "lon": round(lon, 7),
                "time": t_lo + int(rng.random() * max(t_hi - t_lo, 1)),
            }
        )

    # Noise-control cells for the true-negative tally: pure-noise cells at
    # each sub-region precision, clear of every event's footprint. City
    # anchors span the whole region, so the avoid set tracks the actual
    # packet clumps instead.
    controls: list[dict[str, Any]] = []
    avoid = {s.anchor_key for s in specs if len(s.anchor_key) > 3}
    avoid.update(all_clump_cells)
    for scale, precision in SCALE_PRECISION.items():
        if precision <= 3:
            continue  # the region is a single precision-3 cell
        made = 0
        attempts = 0
        while made < controls_per_scale and attempts < 1000:
            attempts += 1
            key = _random_descendant(rng, region, precision)
            if any(key.startswith(a) or a.startswith(key) for a in avoid):
                continue
            controls.append({"kind": "control", "scale": scale, "cellKey": key})
            avoid.add(key)
            made += 1

    records.sort(key=lambda r: (r["time"], r["id"]))
    return GeneratedStream(records=records, specs=specs, controls=controls)
