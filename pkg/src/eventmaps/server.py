"""HTTP facade over the pipeline engine."""
from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException, Query, Request, Response

from .engine import Engine, now_ms
from .geohash import BBox, OutOfRangeError
from .pyramid import TimeRange
from .query import EoIQuery, InvalidQueryError


def parse_bbox(raw: str) -> BBox:
    parts = raw.split(",")
    if len(parts) != 4:
        raise InvalidQueryError("bbox must be 'minLat,minLon,maxLat,maxLon'")
    try:
        min_lat, min_lon, max_lat, max_lon = (float(p) for p in parts)
    except ValueError:
        raise InvalidQueryError(f"bbox has non-numeric parts: {raw!r}") from None
    try:
        return BBox(min_lat, min_lon, max_lat, max_lon)
    except OutOfRangeError as exc:
        raise InvalidQueryError(str(exc)) from None


def build_query(
    zoom: int,
    bbox: str,
    from_ms: int,
    to_ms: int,
    keyword: str | None,
    limit: int,
    history: bool,
) -> EoIQuery:
    if from_ms > to_ms:
        raise InvalidQueryError(f"from > to: {from_ms} > {to_ms}")
    try:
        return EoIQuery(
            zoom=zoom,
            bbox=parse_bbox(bbox),
            time_range=TimeRange(from_ms, to_ms),
            keyword=keyword,
            limit=limit,
            include_history=history,
        )
    except ValueError as exc:
        raise InvalidQueryError(str(exc)) from None


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="eventmaps", version="0.1.0")
    app.state.engine = engine

    @app.post("/ingest", status_code=202)
    async def ingest(request: Request) -> dict:
        body = await request.body()
        try:
            text = body.decode("utf-8")
        except UnicodeDecodeError:
            raise HTTPException(status_code=400, detail="body is not valid UTF-8")
        try:
            accepted, dropped = engine.ingest_lines(text.splitlines(), received_at=now_ms())
        except BufferError:
            raise HTTPException(status_code=429, detail="ingest buffer full")
        return {"accepted": accepted, "dropped": dropped}

    @app.get("/eois")
    def eois(
        zoom: int,
        bbox: str,
        from_ms: int = Query(alias="from"),
        to_ms: int = Query(alias="to"),
        keyword: str | None = None,
        limit: int = 100,
        history: bool = False,
    ) -> list[dict]:
        try:
            query = build_query(zoom, bbox, from_ms, to_ms, keyword, limit, history)
        except InvalidQueryError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return [c.to_record() for c in engine.query(query)]

    @app.get("/tagcloud")
    def tagcloud(
        zoom: int,
        bbox: str,
        from_ms: int = Query(alias="from"),
        to_ms: int = Query(alias="to"),
        keyword: str | None = None,
        history: bool = False,
        k: int = 25,
    ) -> list[dict]:
        try:
            if k < 1:
                raise InvalidQueryError(f"k must be >= 1: {k}")
            query = build_query(zoom, bbox, from_ms, to_ms, keyword, 1, history)
        except InvalidQueryError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return [{"term": t, "weight": w} for t, w in engine.tag_cloud(query, k)]

    @app.get("/stats")
    def stats() -> dict:
        return engine.stats_summary()

    @app.get("/health")
    def health() -> dict:
        view = engine.published
        return {"status": "ok", "version": view.version, "livePackets": len(view.index)}

    return app


class WindowScheduler:
    """Background thread driving run_window every window_ms."""

    def __init__(self, engine: Engine, window_ms: int | None = None) -> None:
        self.engine = engine
        self.window_ms = window_ms if window_ms is not None else engine.config.window_ms
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _loop(self) -> None:
        while not self._stop.wait(self.window_ms / 1000.0):
            self.engine.run_window()


def serve(engine: Engine, host: str, port: int, window_ms: int | None = None) -> None:
    import uvicorn

    scheduler = WindowScheduler(engine, window_ms)
    scheduler.start()
    try:
        uvicorn.run(create_app(engine), host=host, port=port, log_level="info")
    finally:
        scheduler.stop()
