"""Replay the lost-entry race in the deferred-release ring.

Two interrupt handlers record releases into the shared ring.  With plain
reads and writes, one interleaving overwrites the other handler's slot and
a worker sleeps forever; the exclusive-access insert survives the same
schedule space.  The explorer finds the bug, prints the guilty schedule,
and replays it.

Run:  python demos/explore_fifo_race.py
"""

from rtoslab import explore, load_bundled, make_run_fn, replay


def main() -> None:
    for name in ("fig3_nonatomic", "fig3_fifo_insert"):
        run_fn = make_run_fn(load_bundled(name))
        report = explore(run_fn)
        print(f"{name}: {report.schedules} schedules, "
              f"{report.violation_count} with violations")
        if report.violations:
            trace = report.violations[0]
            print(f"  first bad schedule, choices={trace.choices}:")
            for v in trace.violations:
                print(f"    {v}")
            again = replay(run_fn, trace.choices)
            assert again.violations == trace.violations
            print("  replayed from the recorded choices: same findings")
        print()


if __name__ == "__main__":
    main()
