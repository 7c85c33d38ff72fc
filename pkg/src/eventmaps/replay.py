"""Replay record files through the pipeline, window by window."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .engine import Engine, PipelineStats


def window_batches(lines: Iterable[str], window_ms: int) -> list[tuple[int, list[str]]]:
    """Group record lines into (window_end_ms, lines) batches by timestamp.
    Lines without a parseable time go to the first window; order within a
    window follows the file."""
    buckets: dict[int, list[str]] = {}
    times: list[int] = []
    kept: list[tuple[int | None, str]] = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        t: int | None = None
        try:
            body = json.loads(line)
            raw = body.get("time") if isinstance(body, dict) else None
            if isinstance(raw, (int, float)):
                t = int(raw)
                times.append(t)
        except json.JSONDecodeError:
            pass
        kept.append((t, line))
    if not kept:
        return []
    t0 = min(times) if times else 0
    for t, line in kept:
        slot = 0 if t is None else (t - t0) // window_ms
        buckets.setdefault(int(slot), []).append(line)
    return [
        (t0 + (slot + 1) * window_ms, buckets[slot]) for slot in sorted(buckets)
    ]


def replay_file(
    path: str | Path,
    engine: Engine,
    window_ms: int | None = None,
) -> list[PipelineStats]:
    """Feed a record file through the engine in timestamp-ordered windows.
    Returns one stats entry per window."""
    window = window_ms if window_ms is not None else engine.config.window_ms
    lines = Path(path).read_text("utf-8").splitlines()
    out: list[PipelineStats] = []
    for window_end, batch in window_batches(lines, window):
        out.append(engine.run_window(lines=batch, now=window_end))
    return out


def replay_to_endpoint(
    path: str | Path,
    base_url: str,
    window_ms: int,
    chunk_size: int = 5000,
) -> list[dict]:
    """Stream a record file to a running service's ingest endpoint, one
    window at a time. Returns the per-post responses."""
    import urllib.request

    lines = Path(path).read_text("utf-8").splitlines()
    responses: list[dict] = []
    for _, batch in window_batches(lines, window_ms):
        for i in range(0, len(batch), chunk_size):
            chunk = "\n".join(batch[i : i + chunk_size])
            req = urllib.request.Request(
                base_url.rstrip("/") + "/ingest",
                data=chunk.encode("utf-8"),
                method="POST",
                headers={"Content-Type": "text/plain; charset=utf-8"},
            )
            with urllib.request.urlopen(req) as resp:
                responses.append(json.loads(resp.read().decode("utf-8")))
    return responses
