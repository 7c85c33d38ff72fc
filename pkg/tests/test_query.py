import random

import pytest

from eventmaps import geohash
from eventmaps.geohash import WORLD, BBox
from eventmaps.pyramid import TimeRange
from eventmaps.query import EoIQuery, InvalidQueryError, execute, matches, plan, tag_cloud
from eventmaps.scope import ScaleMap

from test_scope import make_cluster

T0 = 1_700_000_000_000
SCALE_MAP = ScaleMap()


def query(zoom=17, bbox=None, t=(T0 - 3600_000, T0 + 3600_000), **kw):
    return EoIQuery(
        zoom=zoom,
        bbox=bbox or WORLD,
        time_range=TimeRange(*t),
        **kw,
    )


class TestPlan:
    def test_fine_zoom_small_bbox(self):
        box = geohash.decode("dr5ru7e")
        p = plan(query(zoom=17, bbox=BBox(box.min_lat, box.min_lon, box.max_lat, box.max_lon)), SCALE_MAP)
        assert p.precision == 8
        assert p.days == ()
        assert p.use_memory
        assert all(len(x) <= 8 for x in p.prefixes)
        assert any(x.startswith("dr5ru7") or "dr5ru7e".startswith(x) for x in p.prefixes)

    def test_world_at_coarse_zoom(self):
        p = plan(query(zoom=3), SCALE_MAP)
        assert p.precision == 2
        # whole world covers as the 32 top cells
        assert p.prefixes == tuple(sorted(geohash.BASE32))

    def test_history_plan_lists_june_days(self):
        from datetime import datetime, timezone

        start = int(datetime(2017, 6, 1, tzinfo=timezone.utc).timestamp() * 1000)
        end = int(datetime(2017, 6, 30, 12, tzinfo=timezone.utc).timestamp() * 1000)
        p = plan(query(zoom=5, t=(start, end), include_history=True), SCALE_MAP)
        assert len(p.days) == 30
        assert all(d.startswith("2017-06") for d in p.days)

    def test_memory_skipped_when_live_range_disjoint(self):
        live = TimeRange(T0, T0 + 1000)
        p = plan(query(zoom=5, t=(T0 - 10_000, T0 - 5_000)), SCALE_MAP, live)
        assert not p.use_memory

    def test_invalid_queries_rejected(self):
        with pytest.raises(InvalidQueryError):
            query(zoom=19)
        with pytest.raises(InvalidQueryError):
            query(limit=0)
        with pytest.raises(ValueError):
            query(t=(10, 5))


class TestExecute:
    def setup_method(self):
        self.local = make_cluster("local1", "dr5ru7e0", {"fire": 1.0}, count=4,
                                  event_type="disaster", timestamp=T0)
        self.city = make_cluster("city1", "dr5", {"parade": 1.0}, count=50,
                                 event_type="social", timestamp=T0)
        self.eois = [self.local, self.city]

    def run(self, q):
        return execute(plan(q, SCALE_MAP), q, self.eois)

    def test_zoom17_returns_local_eoi(self):
        got = self.run(query(zoom=17))
        assert [c.id for c in got] == ["local1"]

    def test_zoom2_returns_city_not_local(self):
        got = self.run(query(zoom=7))
        assert [c.id for c in got] == ["city1"]

    def test_bbox_filters_centroid(self):
        far = BBox(-10, -10, -5, -5)
        assert self.run(query(zoom=17, bbox=far)) == []

    def test_time_filter(self):
        assert self.run(query(zoom=17, t=(T0 + 10_000, T0 + 20_000))) == []

    def test_keyword_matches_label_or_type(self):
        assert self.run(query(zoom=17, keyword="fire"))
        assert self.run(query(zoom=17, keyword="disaster"))
        assert self.run(query(zoom=17, keyword="#FIRE"))  # normalized
        assert self.run(query(zoom=17, keyword="parade")) == []

    def test_ordering_and_limit_prefix(self):
        eois = [
            make_cluster(f"c{i}", "dr5ru7e0", {"fire": 1.0}, count=10 - i, timestamp=T0)
            for i in range(6)
        ]
        self.eois = eois
        full = self.run(query(zoom=17, limit=6))
        assert [c.packet_count for c in full] == sorted(
            [c.packet_count for c in eois], reverse=True
        )
        for n in range(1, 6):
            assert self.run(query(zoom=17, limit=n)) == full[:n]

    def test_zoom_consistency_within_scope(self):
        for zoom in range(self.city.zoom_start, self.city.zoom_end + 1):
            got = self.run(query(zoom=zoom))
            assert [c.id for c in got] == ["city1"]


class TestRandomizedOracle:
    def test_execute_equals_linear_scan(self):
        rng = random.Random(23)
        for _ in range(25):
            eois = []
            for i in range(rng.randint(5, 60)):
                precision = rng.randint(1, 8)
                key = "".join(rng.choice(geohash.BASE32) for _ in range(precision))
                eois.append(
                    make_cluster(
                        f"e{i}",
                        key,
                        {rng.choice(["fire", "goal", "opera"]): 1.0},
                        count=rng.randint(1, 99),
                        event_type=rng.choice(["disaster", "sports", "unclassified"]),
                        timestamp=T0 + rng.randint(-5000, 5000),
                    )
                )
            zoom = rng.randint(0, 18)
            lat1, lat2 = sorted(rng.uniform(-80, 80) for _ in range(2))
            lon1, lon2 = sorted(rng.uniform(-170, 170) for _ in range(2))
            t1, t2 = sorted(T0 + rng.randint(-6000, 6000) for _ in range(2))
            kw = rng.choice([None, "fire", "sports"])
            q = query(zoom=zoom, bbox=BBox(lat1, lon1, lat2, lon2), t=(t1, t2),
                      keyword=kw, limit=1000)
            got = execute(plan(q, SCALE_MAP), q, eois)
            want = [e for e in eois if matches(e, q, kw)]
            want.sort(key=lambda c: (-c.packet_count, c.id))
            assert [c.id for c in got] == [c.id for c in want]


class TestTagCloud:
    def test_single_eoi_cloud(self):
        eoi = make_cluster("c", "dr5ru7e0", {"fire": 2.0, "downtown": 1.0}, count=3)
        cloud = tag_cloud([eoi], k=5)
        assert cloud[0][0] == "fire"
        assert {t for t, _ in cloud} == {"fire", "downtown"}

    def test_empty_scope(self):
        assert tag_cloud([], k=5) == []

    def test_shared_term_outranks_unique(self):
        a = make_cluster("a", "dr5ru7e0", {"concert": 1.0, "uniquea": 1.0}, count=10)
        b = make_cluster("b", "dr5ru7e1", {"concert": 1.0, "uniqueb": 1.0}, count=5)
        cloud = dict(tag_cloud([a, b], k=5))
        assert cloud["concert"] == pytest.approx(15.0)
        assert cloud["concert"] > cloud["uniquea"] > cloud["uniqueb"]

    def test_k_must_be_positive(self):
        with pytest.raises(InvalidQueryError):
            tag_cloud([], k=0)
