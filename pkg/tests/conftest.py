from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from eventmaps.packets import DataPacket, PacketHeader, PacketPayload
from eventmaps.text import ClassCorpus, tokenize


@pytest.fixture
def seeded_corpus() -> ClassCorpus:
    """Small classifier corpus whose seed sets are tight enough that a
    single strong term clears the default threshold."""
    return ClassCorpus(
        {
            "disaster": {"earthquake": 1.0, "flood": 1.0, "fire": 1.0, "storm": 1.0},
            "sports": {"match": 1.0, "goal": 1.0, "league": 1.0, "game": 1.0},
            "musical": {"concert": 1.0, "band": 1.0, "gig": 1.0},
        },
        threshold=0.30,
    )


def make_packet(
    pid: str,
    text: str,
    lat: float,
    lon: float,
    time_ms: int,
    source: str = "synthetic",
    tags: list[str] | None = None,
) -> DataPacket:
    return DataPacket(
        id=pid,
        header=PacketHeader(source=source, lat=lat, lon=lon, time_ms=time_ms),
        payload=PacketPayload(text=text, tokens=tokenize(text), tags=tags or []),
    )


def record_line(pid: str, text: str, lat: float, lon: float, time_ms: int) -> str:
    return json.dumps(
        {"source": "synthetic", "id": pid, "text": text, "lat": lat, "lon": lon, "time": time_ms}
    )
