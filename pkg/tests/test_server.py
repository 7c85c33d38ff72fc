import json

import pytest
from fastapi.testclient import TestClient

from eventmaps.engine import Engine, PipelineConfig
from eventmaps.server import create_app

from conftest import record_line

T0 = 1_700_000_000_000
HOUR = 3600 * 1000

FIG10_FIELDS = {
    "id",
    "eventType",
    "packetcount",
    "packets",
    "@timestamp",
    "zoomStart",
    "zoomEnd",
    "cellkey",
    "location",
    "visited",
    "labelTerms",
}


@pytest.fixture
def engine(tmp_path):
    return Engine(
        PipelineConfig(
            split_threshold=10, peak_min_count=10**9, data_dir=str(tmp_path / "data")
        )
    )


@pytest.fixture
def client(engine):
    return TestClient(create_app(engine))


def seeded(engine):
    lines = [
        record_line(f"e{i}", "earthquake fire downtown", 40.78 + i * 1e-7, -73.96, T0 + i * 1000)
        for i in range(12)
    ]
    engine.run_window(lines=lines, now=T0 + HOUR)
    return engine


def eoi_params(zoom=17, **kw):
    params = {
        "zoom": zoom,
        "bbox": "-90,-180,90,180",
        "from": T0 - HOUR,
        "to": T0 + HOUR,
    }
    params.update(kw)
    return params


class TestIngest:
    def test_accepted_and_dropped_counts(self, client):
        lines = [
            record_line("a", "flood warning", 10, 10, T0),
            record_line("b", "flood warning", 10.0001, 10, T0),
            json.dumps({"source": "synthetic", "id": "c", "text": "no geo", "time": T0}),
        ]
        resp = client.post("/ingest", content="\n".join(lines))
        assert resp.status_code == 202
        assert resp.json() == {"accepted": 2, "dropped": 1}

    def test_unreadable_body_400(self, client):
        resp = client.post("/ingest", content=b"\xff\xfe\xfa")
        assert resp.status_code == 400

    def test_buffer_cap_429(self, tmp_path):
        engine = Engine(PipelineConfig(ingest_buffer_cap=2, data_dir=str(tmp_path)))
        client = TestClient(create_app(engine))
        lines = "\n".join(record_line(f"x{i}", "words here", 0, 0, T0) for i in range(10))
        resp = client.post("/ingest", content=lines)
        assert resp.status_code == 429


class TestEois:
    def test_fig10_schema_fields(self, client, engine):
        seeded(engine)
        resp = client.get("/eois", params=eoi_params())
        assert resp.status_code == 200
        records = resp.json()
        assert len(records) == 1
        rec = records[0]
        assert set(rec) == FIG10_FIELDS
        assert rec["eventType"] == "disaster"
        assert rec["packetcount"] == 12
        assert len(rec["packets"]) == 12
        assert rec["zoomStart"] <= 17 <= rec["zoomEnd"]
        assert set(rec["location"]) == {"lat", "lon"}
        assert isinstance(rec["labelTerms"], list)
        assert rec["cellkey"].startswith("dr")

    def test_zoom_scope_filtering(self, client, engine):
        seeded(engine)
        low = client.get("/eois", params=eoi_params(zoom=2)).json()
        assert low == []

    def test_from_after_to_422(self, client):
        params = eoi_params()
        params["from"], params["to"] = params["to"], params["from"]
        assert client.get("/eois", params=params).status_code == 422

    def test_bad_bbox_422(self, client):
        assert client.get("/eois", params=eoi_params(bbox="1,2,3")).status_code == 422
        assert client.get("/eois", params=eoi_params(bbox="9,9,1,1")).status_code == 422
        assert client.get("/eois", params=eoi_params(bbox="a,b,c,d")).status_code == 422

    def test_bad_zoom_422(self, client):
        assert client.get("/eois", params=eoi_params(zoom=99)).status_code == 422

    def test_keyword_filter(self, client, engine):
        seeded(engine)
        hit = client.get("/eois", params=eoi_params(keyword="earthquake")).json()
        miss = client.get("/eois", params=eoi_params(keyword="opera")).json()
        assert len(hit) == 1 and miss == []

    def test_limit(self, client, engine):
        seeded(engine)
        assert len(client.get("/eois", params=eoi_params(limit=1)).json()) == 1


class TestTagCloud:
    def test_terms_with_weights(self, client, engine):
        seeded(engine)
        resp = client.get("/tagcloud", params={**eoi_params(), "k": 3})
        assert resp.status_code == 200
        cloud = resp.json()
        assert 0 < len(cloud) <= 3
        assert all(set(item) == {"term", "weight"} for item in cloud)
        terms = [item["term"] for item in cloud]
        assert "earthquake" in terms or "fire" in terms

    def test_invalid_k_422(self, client):
        resp = client.get("/tagcloud", params={**eoi_params(), "k": 0})
        assert resp.status_code == 422


class TestStatsHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json()["status"] == "ok"

    def test_stats_shape(self, client, engine):
        seeded(engine)
        resp = client.get("/stats")
        assert resp.status_code == 200
        body = resp.json()
        assert body["livePackets"] == 12
        assert body["version"] == 1
        assert len(body["windows"]) == 1
        window = body["windows"][0]
        assert window["ingested"] == window["indexed"] + sum(window["dropped"].values())


class TestEndToEndOverHttp:
    def test_ingest_then_window_then_query(self, client, engine):
        lines = "\n".join(
            record_line(f"w{i}", "concert band stage", 51.5 + i * 1e-7, -0.1, T0 + i)
            for i in range(12)
        )
        assert client.post("/ingest", content=lines).json()["accepted"] == 12
        engine.run_window(now=T0 + HOUR)  # the scheduler drives this in production
        records = client.get("/eois", params=eoi_params()).json()
        assert len(records) == 1
        assert records[0]["eventType"] == "musical"
