"""Command-line entry point.

Subcommands:

    run           execute a scenario config, write trace + metrics
    bench         reaction-latency benchmark, agent vs. polled chart
    serve         host a lifting workflow behind the HTTP/event-stream surface
    verify-trace  recompute metrics from a trace and compare with metrics.json
    diff-trace    byte-compare two trace files, report first divergence

Exit code 0 only if the command's invariant checks pass.  Log verbosity is
controlled by the PLANTMAS_LOG environment variable (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .harness import bench_latency, compute_exchanger_metrics, load_config, run
from .trace import check_wellformed, diff_traces, read_trace


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    results = run(cfg, out_dir=args.out)
    print(json.dumps(results, indent=2, sort_keys=True))
    failed = [c for c in results["checks"] if not c["ok"]]
    for check in failed:
        print(f"invariant check failed on trace {check['trace']}: {check['problems']}",
              file=sys.stderr)
    return 1 if failed else 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    results = bench_latency(cfg, args.trials)
    print(json.dumps(results, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.json", "w") as f:
            json.dump(results, f, indent=2, sort_keys=True)
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    cfg = load_config(args.config, seed_override=args.seed)
    handle = serve(cfg, port=args.port, tick_interval=args.tick_interval)
    print(f"serving lifting workflow on http://127.0.0.1:{handle.port}/", flush=True)
    try:
        handle._thread.join()
    except KeyboardInterrupt:
        handle.shutdown()
    return 0


def _close(a, b, tol=1e-9) -> bool:
    if a is None or b is None:
        return a == b
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)


def _cmd_verify_trace(args) -> int:
    """Well-formedness plus metric consistency against a metrics document."""
    records = list(read_trace(args.trace))
    problems = check_wellformed(records)
    if args.metrics:
        with open(args.metrics) as f:
            stored_doc = json.load(f)
        key = args.paradigm or ("agent" if "agent" in stored_doc else "sfc")
        stored = stored_doc.get(key)
        if stored is None:
            problems.append(f"metrics document has no {key!r} section")
        else:
            recomputed = compute_exchanger_metrics(
                records, args.dt, args.threshold, args.setpoint, args.band)
            for s, r in zip(stored["latencies"], recomputed["latencies"]):
                if not _close(s["latency"], r["latency"]):
                    problems.append(f"latency mismatch at t={s['at']}: "
                                    f"stored {s['latency']}, recomputed {r['latency']}")
            for field in ("time_above_threshold", "settling_time"):
                if not _close(stored[field], recomputed[field]):
                    problems.append(f"{field} mismatch: stored {stored[field]}, "
                                    f"recomputed {recomputed[field]}")
    if problems:
        for p in problems:
            print(f"FAIL: {p}")
        return 1
    print(f"OK: {args.trace} ({len(records)} records)")
    return 0


def _cmd_diff_trace(args) -> int:
    divergence = diff_traces(args.a, args.b)
    if divergence is None:
        print("identical")
        return 0
    print(divergence)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plantmas")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="directory for trace + metrics files")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("bench", help="reaction-latency benchmark")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("serve", help="host the approval-console HTTP surface")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--tick-interval", type=float, default=0.2)
    p.set_defaults(fn=_cmd_serve)

    p = sub.add_parser("verify-trace", help="check a trace and its metrics document")
    p.add_argument("trace")
    p.add_argument("--metrics", default=None, help="metrics.json written by `run`")
    p.add_argument("--paradigm", choices=["agent", "sfc"], default=None)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=60.0)
    p.add_argument("--setpoint", type=float, default=45.0)
    p.add_argument("--band", type=float, default=1.0)
    p.set_defaults(fn=_cmd_verify_trace)

    p = sub.add_parser("diff-trace", help="compare two trace files byte by byte")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(fn=_cmd_diff_trace)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PLANTMAS_LOG", "WARNING").upper())
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
