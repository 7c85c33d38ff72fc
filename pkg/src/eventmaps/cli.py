"""Command-line entry points: generate, replay, evaluate, bench, serve."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .engine import Engine, PipelineConfig
from .evaluate import evaluate, load_eois, load_truth
from .replay import replay_file, replay_to_endpoint
from .synth import generate, make_specs


def benchmark_config(**overrides) -> PipelineConfig:
    """Pipeline thresholds for synthetic benchmark runs: a low split
    threshold so planted densities expand the pyramid to their intended
    depth, a two-day TTL covering a full replayed day, and keyword peaks
    effectively off so event typing stays neutral across sibling cells."""
    base = dict(
        split_threshold=10,
        packet_ttl_ms=48 * 3600 * 1000,
        peak_min_count=10**9,
    )
    base.update(overrides)
    return PipelineConfig(**base)


def cmd_generate(args: argparse.Namespace) -> int:
    specs = make_specs(
        region_key=args.region,
        seed=args.seed,
        events_per_scale=args.events_per_scale,
        noise_rate=args.noise_rate,
    )
    stream = generate(specs, seed=args.seed, region_key=args.region,
                      total_records=args.total_records)
    Path(args.out).write_text("\n".join(stream.record_lines()) + "\n", "utf-8")
    Path(args.truth).write_text("\n".join(stream.truth_lines()) + "\n", "utf-8")
    print(f"wrote {len(stream.records)} records to {args.out}")
    print(f"wrote {len(stream.specs)} events + {len(stream.controls)} controls to {args.truth}")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    if args.endpoint:
        responses = replay_to_endpoint(args.file, args.endpoint, args.window_ms or 30 * 60 * 1000)
        accepted = sum(r.get("accepted", 0) for r in responses)
        dropped = sum(r.get("dropped", 0) for r in responses)
        print(f"streamed to {args.endpoint}: accepted={accepted} dropped={dropped}")
        return 0
    config = benchmark_config() if args.bench_config else PipelineConfig()
    if args.data_dir:
        config.data_dir = args.data_dir
    engine = Engine(config)
    stats = replay_file(args.file, engine, window_ms=args.window_ms)
    for s in stats:
        print(json.dumps(s.to_json()))
    if args.dump_eois:
        view = engine.published
        lines = [json.dumps(c.to_json(), sort_keys=True) for c in view.eois.values()]
        Path(args.dump_eois).write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
        print(f"wrote {len(lines)} detected events to {args.dump_eois}")
    if args.persist:
        days = engine.persist()
        print(f"persisted days: {', '.join(days)}")
    total = sum(s.duration_ms for s in stats)
    print(f"{len(stats)} windows, {total / 1000.0:.2f}s total processing")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    eois = load_eois(args.eois)
    truth = load_truth(args.truth)
    report = evaluate(eois, truth)
    print(report.format_table())
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True), "utf-8")
        print(f"wrote report to {args.report}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    specs = make_specs(region_key=args.region, seed=args.seed, events_per_scale=8)
    stream = generate(specs, seed=args.seed, region_key=args.region,
                      total_records=args.records)
    engine = Engine(benchmark_config(peak_min_count=10))
    lines = stream.record_lines()
    started = time.perf_counter()
    stats = engine.run_window(lines=lines)
    elapsed = time.perf_counter() - started
    print(json.dumps(stats.to_json(), indent=2))
    print(f"{stats.ingested} records end-to-end in {elapsed:.2f}s "
          f"({stats.ingested / max(elapsed, 1e-9):,.0f} records/s)")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.window_ms:
        config.window_ms = args.window_ms
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    if args.data_dir:
        config.data_dir = args.data_dir
    engine = Engine(config)
    serve(engine, config.host, config.port, window_ms=config.window_ms)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventmaps")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a labeled synthetic stream")
    g.add_argument("--out", required=True, help="records file (JSON lines)")
    g.add_argument("--truth", required=True, help="ground-truth file (JSON lines)")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--region", default="9q5", help="precision-3 geohash region")
    g.add_argument("--events-per-scale", type=int, default=4)
    g.add_argument("--noise-rate", type=float, default=10.0)
    g.add_argument("--total-records", type=int, default=None,
                   help="top noise up to exactly this many records")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("replay", help="replay a record file through the pipeline")
    r.add_argument("--file", required=True)
    r.add_argument("--endpoint", default=None, help="stream to a running service instead")
    r.add_argument("--window-ms", type=int, default=None)
    r.add_argument("--bench-config", action="store_true",
                   help="use the synthetic benchmark thresholds")
    r.add_argument("--data-dir", default=None)
    r.add_argument("--dump-eois", default=None, help="write detected events to this file")
    r.add_argument("--persist", action="store_true", help="write snapshot partitions at the end")
    r.set_defaults(func=cmd_replay)

    e = sub.add_parser("evaluate", help="score detected events against ground truth")
    e.add_argument("--eois", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--report", default=None, help="write JSON report here")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="single-window throughput benchmark")
    b.add_argument("--records", type=int, default=100_000)
    b.add_argument("--seed", type=int, default=11)
    b.add_argument("--region", default="9q5")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("serve", help="run the HTTP service")
    s.add_argument("--config", default=None, help="JSON config file")
    s.add_argument("--host", default=None)
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--window-ms", type=int, default=None)
    s.add_argument("--data-dir", default=None)
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
