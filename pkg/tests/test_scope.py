import pytest

from eventmaps import geohash
from eventmaps.events import UNCLASSIFIED, EventCluster
from eventmaps.scope import (
    ScaleMap,
    ScopeParams,
    aggregate_level,
    run_full_aggregation,
    should_merge,
)
from eventmaps.text import TermVector

T0 = 1_700_000_000_000
SCALE_MAP = ScaleMap()


def make_cluster(
    cid,
    cell_key,
    terms,
    count=5,
    event_type="sports",
    timestamp=T0,
    lat=None,
    lon=None,
):
    box = geohash.decode(cell_key)
    clat, clon = box.center
    zoom_start, zoom_end = SCALE_MAP.zoom_range(len(cell_key))
    return EventCluster(
        id=cid,
        event_type=event_type,
        packets=[f"{cid}-p{i}" for i in range(count)],
        packet_count=count,
        centroid_lat=lat if lat is not None else clat,
        centroid_lon=lon if lon is not None else clon,
        centroid_vector=TermVector.from_weights(terms),
        cell_key=cell_key,
        timestamp=timestamp,
        zoom_start=zoom_start,
        zoom_end=zoom_end,
        created_at=timestamp,
        label_terms=TermVector.from_weights(terms).top_terms(5),
    )


class TestScaleMap:
    def test_bands_contiguous_and_non_overlapping(self):
        zooms = []
        for band in SCALE_MAP.bands:
            zooms.extend(range(band.zoom_start, band.zoom_end + 1))
        assert sorted(zooms) == list(range(0, 19))
        assert len(zooms) == len(set(zooms))

    def test_precision_round_trip(self):
        for zoom in range(19):
            p = SCALE_MAP.precision_for_zoom(zoom)
            lo, hi = SCALE_MAP.zoom_range(p)
            assert lo <= zoom <= hi

    def test_scale_names(self):
        assert SCALE_MAP.scale_name(8) == "Local"
        assert SCALE_MAP.scale_name(7) == "Local"
        assert SCALE_MAP.scale_name(6) == "Neighborhood"
        assert SCALE_MAP.scale_name(5) == "Sub-Locality"
        assert SCALE_MAP.scale_name(4) == "Locality"
        assert SCALE_MAP.scale_name(3) == "City"
        assert SCALE_MAP.scale_zoom_range("City") == (0, 8)
        assert SCALE_MAP.scale_zoom_range("Local") == (16, 18)


class TestShouldMerge:
    def test_same_topic_close_in_time(self):
        a = make_cluster("a", "dr5ru7e0", {"goal": 1.0, "match": 1.0}, event_type="sports")
        b = make_cluster(
            "b", "dr5ru7e1", {"goal": 1.0, "match": 1.0}, event_type="sports",
            timestamp=T0 + 10 * 60 * 1000,
        )
        assert should_merge(a, b, ScopeParams())

    def test_time_gate_blocks(self):
        a = make_cluster("a", "dr5ru7e0", {"goal": 1.0})
        b = make_cluster("b", "dr5ru7e1", {"goal": 1.0}, timestamp=T0 + 3 * 24 * 3600 * 1000)
        assert not should_merge(a, b, ScopeParams(time_overlap_ms=6 * 3600 * 1000))

    def test_similarity_gate_blocks(self):
        a = make_cluster("a", "dr5ru7e0", {"goal": 1.0})
        b = make_cluster("b", "dr5ru7e1", {"opera": 1.0})
        assert not should_merge(a, b, ScopeParams())

    def test_type_gate(self):
        a = make_cluster("a", "dr5ru7e0", {"goal": 1.0}, event_type="sports")
        b = make_cluster("b", "dr5ru7e1", {"goal": 1.0}, event_type="musical")
        assert not should_merge(a, b, ScopeParams())
        c = make_cluster("c", "dr5ru7e1", {"goal": 1.0}, event_type=UNCLASSIFIED)
        assert should_merge(a, c, ScopeParams())


class TestAggregateLevel:
    def test_four_siblings_merge_to_parent(self):
        terms = {"goal": 1.0, "match": 1.0}
        clusters = {}
        for i, suffix in enumerate("0123"):
            c = make_cluster(f"c{i}", "dr5ru7e" + suffix, terms, count=5)
            clusters[c.id] = c
        created = aggregate_level(clusters, 8, ScopeParams())
        assert len(created) == 1
        parent = created[0]
        assert parent.cell_key == "dr5ru7e"
        assert parent.packet_count == 20
        assert (parent.zoom_start, parent.zoom_end) == SCALE_MAP.zoom_range(7)
        assert parent.event_type == "sports"
        assert not parent.visited
        assert all(clusters[f"c{i}"].visited for i in range(4))
        assert all(clusters[f"c{i}"].parent_id == parent.id for i in range(4))
        # packet-count-weighted centroid
        members = [clusters[f"c{i}"] for i in range(4)]
        want_lat = sum(m.centroid_lat * m.packet_count for m in members) / 20
        assert parent.centroid_lat == pytest.approx(want_lat, abs=1e-9)

    def test_unrelated_topics_do_not_merge(self):
        clusters = {
            "a": make_cluster("a", "dr5ru7e0", {"goal": 1.0}),
            "b": make_cluster("b", "dr5ru7e1", {"opera": 1.0}),
        }
        created = aggregate_level(clusters, 8, ScopeParams())
        assert created == []
        assert clusters["a"].visited and clusters["b"].visited

    def test_single_cluster_stays_at_level(self):
        clusters = {"a": make_cluster("a", "dr5ru7e0", {"goal": 1.0})}
        created = aggregate_level(clusters, 8, ScopeParams())
        assert created == []
        a = clusters["a"]
        assert a.visited and a.parent_id is None
        assert (a.zoom_start, a.zoom_end) == SCALE_MAP.zoom_range(8)

    def test_no_cross_parent_merges(self):
        terms = {"goal": 1.0}
        clusters = {
            "a": make_cluster("a", "dr5ru7e0", terms),
            "b": make_cluster("b", "dr5ru7f0", terms),  # different precision-7 parent
        }
        created = aggregate_level(clusters, 8, ScopeParams())
        assert created == []


def planted_chain(region="dr5", levels=("0", "1"), terms=None):
    """Matching leaf clusters laid out pairwise under every ancestor from
    precision 8 up to the region, so full aggregation merges to the region."""
    terms = terms or {"goal": 1.0, "match": 1.0}
    clusters = {}
    keys = [region]
    while len(keys[0]) < 8:
        keys = [k + c for k in keys for c in levels]
    for i, key in enumerate(keys):
        c = make_cluster(f"leaf{i:03d}", key, terms, count=3)
        clusters[c.id] = c
    return clusters, keys


class TestFullAggregation:
    def test_city_wide_chain_reaches_region_root(self):
        clusters, keys = planted_chain()
        created = run_full_aggregation(clusters, ScopeParams())
        assert created > 0
        roots = [c for c in clusters.values() if c.parent_id is None]
        assert len(roots) == 1
        root = roots[0]
        assert root.cell_key == "dr5"
        assert SCALE_MAP.scale_name(len(root.cell_key)) == "City"
        assert root.packet_count == 3 * len(keys)
        assert root.visited

    def test_isolated_leaf_event_stays_local(self):
        clusters = {"a": make_cluster("a", "dr5ru7e0", {"goal": 1.0})}
        run_full_aggregation(clusters, ScopeParams())
        a = clusters["a"]
        assert a.parent_id is None
        assert SCALE_MAP.scale_name(len(a.cell_key)) == "Local"

    def test_far_apart_same_topic_events_stay_separate(self):
        # same topic, ~500 km apart: different precision-3 ancestors
        terms = {"goal": 1.0}
        clusters = {
            "a": make_cluster("a", geohash.encode(40.7, -74.0, 8), terms),
            "b": make_cluster("b", geohash.encode(42.4, -71.1, 8), terms),
        }
        key_a = clusters["a"].cell_key
        key_b = clusters["b"].cell_key
        assert key_a[:3] != key_b[:3]
        run_full_aggregation(clusters, ScopeParams())
        roots = [c for c in clusters.values() if c.parent_id is None]
        assert len(roots) == 2

    def test_packet_conservation_over_roots(self):
        clusters, keys = planted_chain()
        # add an unrelated isolated cluster
        clusters["solo"] = make_cluster("solo", "dr5ru7e0", {"opera": 1.0}, count=7)
        leaf_total = sum(c.packet_count for c in clusters.values() if c.origin == "leaf")
        run_full_aggregation(clusters, ScopeParams())
        root_total = sum(c.packet_count for c in clusters.values() if c.parent_id is None)
        assert root_total == leaf_total

    def test_idempotent_for_a_window(self):
        clusters, _ = planted_chain()
        run_full_aggregation(clusters, ScopeParams())
        snapshot = {
            cid: (c.cell_key, c.packet_count, c.zoom_start, c.zoom_end, c.parent_id)
            for cid, c in clusters.items()
        }
        run_full_aggregation(clusters, ScopeParams())
        again = {
            cid: (c.cell_key, c.packet_count, c.zoom_start, c.zoom_end, c.parent_id)
            for cid, c in clusters.items()
        }
        assert snapshot == again

    def test_monotone_scope(self):
        clusters, _ = planted_chain()
        run_full_aggregation(clusters, ScopeParams())
        by_id = dict(clusters)
        for c in clusters.values():
            if c.parent_id is not None:
                parent = by_id[c.parent_id]
                assert parent.zoom_start < c.zoom_start

    def test_derived_clusters_rebuilt_not_duplicated(self):
        clusters, _ = planted_chain()
        run_full_aggregation(clusters, ScopeParams())
        n_first = len(clusters)
        run_full_aggregation(clusters, ScopeParams())
        assert len(clusters) == n_first
