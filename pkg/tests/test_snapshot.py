import json
import random

import pytest

from eventmaps.geohash import WORLD, BBox
from eventmaps.pyramid import OPEN_RANGE, PyramidIndex, TimeRange
from eventmaps.snapshot import (
    CorruptSnapshotError,
    available_days,
    days_in_range,
    load_day,
    load_view,
    persist_day,
    read_record_file,
    write_record_file,
)
from eventmaps.text import TermVector

from conftest import make_packet
from test_scope import make_cluster

T0 = 1_718_064_000_000  # 2024-06-11 00:00 UTC
DAY_MS = 24 * 3600 * 1000


def build_index(rng, n, t0=T0, days=1):
    index = PyramidIndex(split_threshold=8, ttl_ms=2**61)
    packets = []
    for i in range(n):
        p = make_packet(
            f"p{i:04d}",
            rng.choice(["storm coming fast", "goal great match", "quiet calm day"]),
            rng.uniform(-60, 60),
            rng.uniform(-170, 170),
            t0 + int(rng.random() * days * DAY_MS),
        )
        index.insert(p)
        packets.append(p)
    return index, packets


class TestRecordFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "x.bin"
        records = [b"alpha", b"beta", json.dumps({"k": 1}).encode()]
        sha = write_record_file(path, records)
        assert read_record_file(path, sha) == records

    def test_corrupt_byte_detected(self, tmp_path):
        path = tmp_path / "x.bin"
        sha = write_record_file(path, [b"hello world records"])
        data = bytearray(path.read_bytes())
        data[10] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptSnapshotError):
            read_record_file(path, sha)
        with pytest.raises(CorruptSnapshotError):
            read_record_file(path)  # per-record crc catches it without the sha too

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"NOPE\x01")
        with pytest.raises(CorruptSnapshotError):
            read_record_file(path)


class TestPersistLoad:
    def test_round_trip_query_equivalence(self, tmp_path):
        rng = random.Random(31)
        index, packets = build_index(rng, 250)
        day = "2024-06-11"
        eois = [
            make_cluster("c1", "dr5ru7e0", {"storm": 1.0}, timestamp=T0 + 1000),
            make_cluster("c2", "9q5ru7e0", {"goal": 1.0}, timestamp=T0 + 2000),
        ]
        persist_day(tmp_path, day, packets, eois)

        view = load_view(tmp_path, [day], split_threshold=8)
        assert len(view.index) == len(index)
        assert {c.id for c in view.eois.values()} == {"c1", "c2"}
        for _ in range(40):
            lat1, lat2 = sorted(rng.uniform(-70, 70) for _ in range(2))
            lon1, lon2 = sorted(rng.uniform(-170, 170) for _ in range(2))
            t1, t2 = sorted(T0 + int(rng.random() * DAY_MS) for _ in range(2))
            box = BBox(lat1, lon1, lat2, lon2)
            tr = TimeRange(t1, t2)
            assert view.index.range_query(box, tr) == index.range_query(box, tr)

    def test_packet_payload_survives(self, tmp_path):
        p = make_packet("pp", "fire on main", 40.78, -73.96, T0, tags=["breaking"])
        p.term_vector = TermVector.from_weights({"fire": 1.5, "main": 0.5})
        p.event_class = "disaster"
        persist_day(tmp_path, "2024-06-11", [p], [])
        loaded, _ = load_day(tmp_path, "2024-06-11")
        assert len(loaded) == 1
        q = loaded[0]
        assert q.id == p.id
        assert q.payload.text == "fire on main"
        assert q.payload.tags == ["breaking"]
        assert q.payload.tokens == p.payload.tokens
        assert q.term_vector.weights == p.term_vector.weights
        assert q.event_class == "disaster"

    def test_eoi_fields_survive(self, tmp_path):
        c = make_cluster("cx", "dr5ru7e0", {"storm": 2.0, "wind": 1.0}, timestamp=T0)
        c.parent_id = "parent123"
        c.visited = True
        persist_day(tmp_path, "2024-06-11", [], [c])
        _, eois = load_day(tmp_path, "2024-06-11")
        out = eois[0]
        assert out.id == "cx"
        assert out.parent_id == "parent123"
        assert out.visited is True
        assert out.centroid_vector.weights == c.centroid_vector.weights
        assert out.label_terms == c.label_terms
        assert (out.zoom_start, out.zoom_end) == (c.zoom_start, c.zoom_end)

    def test_empty_day_round_trips(self, tmp_path):
        persist_day(tmp_path, "2024-06-11", [], [])
        packets, eois = load_day(tmp_path, "2024-06-11")
        assert packets == [] and eois == []
        view = load_view(tmp_path, ["2024-06-11"])
        assert len(view.index) == 0

    def test_missing_day_loads_empty(self, tmp_path):
        assert load_day(tmp_path, "2024-06-11") == ([], [])

    def test_manifest_tamper_detected(self, tmp_path):
        rng = random.Random(5)
        _, packets = build_index(rng, 20)
        persist_day(tmp_path, "2024-06-11", packets, [])
        target = tmp_path / "2024-06" / "11.packets.bin"
        data = bytearray(target.read_bytes())
        data[-1] ^= 0x01
        target.write_bytes(bytes(data))
        with pytest.raises(CorruptSnapshotError):
            load_day(tmp_path, "2024-06-11")

    def test_month_walk_over_daily_partitions(self, tmp_path):
        rng = random.Random(8)
        # data spread over June: one partition per day touched
        index, packets = build_index(rng, 300, t0=T0 - 10 * DAY_MS, days=30)
        by_day = {}
        for p in packets:
            from eventmaps.pyramid import day_of

            by_day.setdefault(day_of(p.header.time_ms), []).append(p)
        for day, plist in by_day.items():
            persist_day(tmp_path, day, plist, [])
        days = available_days(tmp_path)
        assert set(days) == set(by_day)
        june = [d for d in days if d.startswith("2024-06")]
        view = load_view(tmp_path, june, split_threshold=8)
        want = sorted(
            p.id for p in packets if day_of(p.header.time_ms).startswith("2024-06")
        )
        assert view.index.range_query(WORLD, OPEN_RANGE) == want


def test_days_in_range_spans_june():
    from datetime import datetime, timezone

    start = int(datetime(2017, 6, 1, tzinfo=timezone.utc).timestamp() * 1000)
    end = int(datetime(2017, 6, 30, 23, tzinfo=timezone.utc).timestamp() * 1000)
    days = days_in_range(start, end)
    assert len(days) == 30
    assert days[0] == "2017-06-01" and days[-1] == "2017-06-30"
