"""Command line front end.

Subcommands:

* ``explore``  -- exhaustively enumerate a scenario's interleavings
* ``bench``    -- run the cycle-cost sweeps and footprint report
* ``dma-demo`` -- stream a frame file through the pause-capable DMA model
* ``report``   -- regenerate the architecture comparison table

Exit codes: 0 success, 1 unexpected invariant violation, 2 usage or
schema error.  The environment variable RTOSLAB_OUT overrides ``--out``.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from pathlib import Path

from . import bench, hw
from .architecture import architecture_ids
from .explorer import explore
from .machine import ConfigError, SimFault
from .scenario import (bundled_scenario_names, load_bundled, load_scenario,
                       make_run_fn, run_once, validate_scenario)

DEFAULT_OUT = "out"


def _out_dir(args) -> Path:
    out = os.environ.get("RTOSLAB_OUT") or args.out or DEFAULT_OUT
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_doc(args) -> dict:
    if args.random_tasks:
        return random_scenario(args.seed or 0, args.random_tasks)
    ref = args.scenario
    if ref is None:
        raise ConfigError("explore needs --scenario or --random-tasks")
    if Path(ref).exists():
        return load_scenario(ref)
    if ref in bundled_scenario_names():
        return load_bundled(ref)
    raise ConfigError(f"no such scenario file or bundled name: {ref!r}")


def random_scenario(seed: int, n_tasks: int) -> dict:
    """Small generated give/take scenario; deterministic in the seed.

    The seed shapes only the scenario (priorities, script lengths); the
    explorer's enumeration order never depends on it.
    """
    rng = random.Random(seed)
    doc = {
        "version": 1,
        "name": f"random-{seed}-{n_tasks}",
        "architecture": "baseline",
        "stepBound": 200,
        "semaphores": [{"name": "s", "maxCount": 4, "isrReleased": True}],
        "tasks": [],
        "isrs": [{"index": 0, "priority": 10, "gives": "s"}],
        "events": [{"name": f"e{i}", "isr": 0} for i in range(n_tasks)],
        "invariants": ["conservation", "no-lost-wakeup", "list-well-formed"],
    }
    for i in range(n_tasks):
        script = [{"op": "take", "sem": "s"},
                  {"op": "compute", "steps": rng.randint(0, 2)}]
        doc["tasks"].append({"name": f"t{i}", "priority": rng.randint(1, 3),
                             "script": script})
    validate_scenario(doc)
    return doc


def _parse_cost_model(text):
    if not text:
        return None
    if Path(text).exists():
        return json.loads(Path(text).read_text())
    return json.loads(text)


def cmd_explore(args) -> int:
    doc = _load_doc(args)
    run_fn = make_run_fn(doc, arch_id=args.arch,
                         cost_model=_parse_cost_model(args.cost_model),
                         step_bound=args.step_bound)
    report = explore(run_fn, max_schedules=args.max_schedules)
    out = _out_dir(args)
    name = doc["name"] + (f"-{args.arch}" if args.arch else "")
    path = out / f"explore-{name}.json"
    path.write_text(report.to_json() + "\n")
    expected = doc.get("expectViolation", False)
    print(f"{doc['name']}: {report.schedules} schedules, "
          f"{report.violation_count} with violations -> {path}")
    if report.errors:
        print(f"  {len(report.errors)} schedules errored "
              f"({report.step_bound_hits} step-bound)", file=sys.stderr)
    if expected and report.violation_count == 0:
        print("expected a violation but found none", file=sys.stderr)
        return 1
    if not expected and report.violation_count > 0:
        return 1
    return 0


def cmd_bench(args) -> int:
    out = _out_dir(args)
    n_values = [int(x) for x in args.n_range.split(",")] if args.n_range else [2, 4, 8, 16, 32]
    cm = _parse_cost_model(args.cost_model)
    arch_list = [args.arch] if args.arch else architecture_ids()
    for arch_id in arch_list:
        rows = bench.masked_interval_sweep(arch_id, n_values, cost_model=cm)
        bench.write_sweep(out, arch_id, "masked-interval", rows,
                          meta={"seed": args.seed})
        probe = bench.latency_probe(arch_id, cost_model=cm)
        bench.write_sweep(out, arch_id, "latency", [probe])
        print(f"{arch_id}: max masked {max(r['maxMaskedCycles'] for r in rows)} cycles, "
              f"unblock in {probe['irqEntriesToReady']} interrupt entries")
    for variant in ("sorted", "unsorted"):
        rows = [bench.ready_list_pathology(variant, n) for n in n_values]
        bench.write_sweep(out, f"ready-list-{variant}", "pathology", rows)
    expiry = bench.systick_expiry_cost()
    bench.write_sweep(out, "strictly-atomic", "systick-expiry", [expiry])
    cmd_report(args)
    return 0


def cmd_report(args) -> int:
    out = _out_dir(args)
    configs = [
        {"isrSemaphores": 4, "tasks": 8, "NUM_ISR_SEMPHR_COUNTS": 16, "NUM_ISR_SMPHRS": 8},
        {"isrSemaphores": 10, "tasks": 16, "NUM_ISR_SEMPHR_COUNTS": 10, "NUM_ISR_SMPHRS": 10},
        {"isrSemaphores": 32, "tasks": 32, "NUM_ISR_SEMPHR_COUNTS": 64, "NUM_ISR_SMPHRS": 32},
    ]
    path = bench.write_report(out, configs)
    print(f"wrote {path}")
    return 0


def cmd_dma_demo(args) -> int:
    out = _out_dir(args)
    if args.frames:
        payloads = hw.load_frame_stream(args.frames)
    else:
        from importlib import resources
        data = resources.files("rtoslab").joinpath("scenarios/dma_frames.bin").read_bytes()
        payloads = hw.decode_frames(data)
    report = hw.dma_lossless_demo(payloads, delay_cycles=args.delay)
    path = out / "dma-demo.json"
    path.write_text(json.dumps(report, indent=2) + "\n")
    ok = report["lossless"] and not report["tornStateFindings"]
    print(f"{len(payloads)} frames, lossless={report['lossless']} -> {path}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtoslab",
                                description="deterministic RTOS simulation laboratory")
    p.add_argument("--out", default=None,
                   help="output directory (env RTOSLAB_OUT overrides)")
    p.add_argument("--seed", type=int, default=None,
                   help="scenario-generation seed")
    # Accepted after the subcommand too; SUPPRESS keeps the sub-level
    # default from clobbering a value given before the subcommand.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("explore", parents=[common],
                       help="enumerate scenario interleavings")
    e.add_argument("--scenario", help="scenario file or bundled name")
    e.add_argument("--arch", choices=architecture_ids())
    e.add_argument("--step-bound", type=int)
    e.add_argument("--max-schedules", type=int)
    e.add_argument("--random-tasks", type=int)
    e.add_argument("--cost-model", help="JSON text or file of step costs")
    e.set_defaults(fn=cmd_explore)

    b = sub.add_parser("bench", parents=[common], help="run cycle-cost sweeps")
    b.add_argument("--arch", choices=architecture_ids())
    b.add_argument("--n-range", help="comma-separated task counts")
    b.add_argument("--cost-model")
    b.set_defaults(fn=cmd_bench)

    r = sub.add_parser("report", parents=[common],
                       help="regenerate the comparison table")
    r.set_defaults(fn=cmd_report)

    d = sub.add_parser("dma-demo", parents=[common],
                       help="stream frames through the DMA model")
    d.add_argument("--frames", help="binary frame-stream file")
    d.add_argument("--delay", type=int, default=10_000)
    d.set_defaults(fn=cmd_dma_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SimFault as e:
        print(f"simulation fault: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
