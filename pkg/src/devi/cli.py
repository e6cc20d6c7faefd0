"""Command line entry points: scenario replay, live service, benchmarks, people."""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional, Sequence

from devi import people
from devi.sim.bench import filter_bench
from devi.sim.config import SimConfig
from devi.sim.runner import run_scenario
from devi.sim.scenario import ScenarioParseError, load_scenario


def _load_config(path: Optional[str]) -> SimConfig:
    return SimConfig.from_file(path) if path else SimConfig()


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = run_scenario(config, scenario)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    print(f"scenario: {report.scenario}")
    print(f"simulated: {report.sim_ms} ms over {report.ticks} ticks")
    print(f"visitors serviced: {sum(1 for v in report.visitors if v['dequeued_ms'] is not None)}"
          f" of {len(report.visitors)}")
    for entry in report.recognitions:
        print(f"  recognition @{entry['ms']}ms: {entry['outcome']}"
              f" ({entry['person_name'] or '-'}; truth {entry['truth_identity'] or '-'})")
    if report.intent_accuracy is not None:
        print(f"intent accuracy: {report.intent_accuracy:.3f}")
    print(f"registrations: {report.registered or 'none'}")
    if args.report:
        print(f"report written to {args.report}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from devi.sim.service import serve

    config = _load_config(args.config)
    try:
        server, service = serve(config, port=args.port, static_dir=args.static)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    host, port = server.server_address[:2]
    print(f"devi sim listening on http://{host}:{port}")
    if args.static:
        print(f"console served from {args.static}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        service.stop()
        server.server_close()
    return 0


def cmd_filter_bench(args: argparse.Namespace) -> int:
    alphas = tuple(float(a) for a in args.alphas.split(","))
    started = time.perf_counter()
    rows = filter_bench(
        samples=args.samples,
        alphas=alphas,
        sigma_mm=args.sigma,
        true_mm=args.true_mm,
        seed=args.seed,
    )
    elapsed = time.perf_counter() - started
    print(f"{args.samples} samples at {args.true_mm:.0f} mm, noise sigma {args.sigma} mm")
    print(f"{'alpha':>6}  {'mean (mm)':>10}  {'std (mm)':>9}")
    for row in rows:
        print(f"{row.alpha:>6.2g}  {row.mean_mm:>10.2f}  {row.std_mm:>9.2f}")
    print(f"({elapsed * 1000:.0f} ms)")
    if args.json:
        payload = [
            {"alpha": r.alpha, "mean_mm": r.mean_mm, "std_mm": r.std_mm} for r in rows
        ]
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_people(args: argparse.Namespace) -> int:
    store = people.PersonStore(path=args.store)
    if args.people_cmd == "list":
        records = store.all_records()
        if not records:
            print("no people on record")
            return 0
        print(f"{'id':16}  {'name':20} {'seen':>5}  {'last_seen':>10}  {'faces':>5}")
        for r in records:
            print(f"{r.person_id:16}  {r.name:20} {r.recognition_count:>5}"
                  f"  {r.last_seen:>10}  {len(r.embeddings):>5}")
        return 0
    if args.people_cmd == "purge":
        try:
            store.purge(args.person_id)
        except people.UnknownPerson:
            print(f"error: no person {args.person_id!r}", file=sys.stderr)
            return 1
        print(f"purged {args.person_id}")
        return 0
    return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devi", description="DEVI receptionist core simulator"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="replay a scenario file")
    run_p.add_argument("scenario", help="scenario JSON path")
    run_p.add_argument("--config", help="config JSON path")
    run_p.add_argument("--report", help="write the metrics report JSON here")
    run_p.set_defaults(fn=cmd_run)

    serve_p = sub.add_parser("serve", help="run the live HTTP service")
    serve_p.add_argument("--config", help="config JSON path")
    serve_p.add_argument("--port", type=int, default=8765)
    serve_p.add_argument("--static", help="directory with the built console UI")
    serve_p.set_defaults(fn=cmd_serve)

    bench_p = sub.add_parser("filter-bench", help="smoothing factor sweep")
    bench_p.add_argument("--samples", type=int, default=500)
    bench_p.add_argument("--alphas", default="1,0.1,0.3,0.5,0.7,0.9")
    bench_p.add_argument("--sigma", type=float, default=5.94)
    bench_p.add_argument("--true-mm", type=float, default=1000.0, dest="true_mm")
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--json", help="also write rows as JSON here")
    bench_p.set_defaults(fn=cmd_filter_bench)

    people_p = sub.add_parser("people", help="inspect the person database")
    people_p.add_argument("--store", default="people.db", help="database path")
    people_sub = people_p.add_subparsers(dest="people_cmd", required=True)
    people_sub.add_parser("list", help="print all records")
    purge_p = people_sub.add_parser("purge", help="delete one record")
    purge_p.add_argument("person_id")
    people_p.set_defaults(fn=cmd_people)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
