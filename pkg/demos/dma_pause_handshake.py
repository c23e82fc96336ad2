"""Stream frames through the pause-capable DMA ring, then try to race it.

First the bundled five-frame stream is recovered losslessly after a
10,000-cycle handler delay.  Then the explorer interleaves the controller
with a CPU reconfiguring the ring interrupt: with the pause handshake no
schedule observes a torn write index, without it thousands do.

Run:  python demos/dma_pause_handshake.py
"""

from importlib import resources

from rtoslab import Interleaver, RunResult, StepBoundExceeded, explore
from rtoslab.hw import (DmaController, configure_next_interrupt,
                        configure_without_handshake, decode_frames,
                        dma_lossless_demo)


def make_run_fn(handshake: bool, payload: bytes = b"abcdef"):
    def run_fn(prefix):
        dc = DmaController(64)
        dc.feed(payload)
        findings = []
        done = [False]

        def cpu():
            fn = configure_next_interrupt if handshake else configure_without_handshake
            for _ in fn(dc, len(payload), findings):
                yield
            done[0] = True

        def controller():
            while dc.busy or not done[0]:
                dc.step()
                yield

        il = Interleaver(prefix, step_bound=200, max_preemptions=3)
        try:
            il.run([controller(), cpu()])
        except StepBoundExceeded as e:
            return RunResult(il.option_counts, il.choices, 0, [],
                             error=f"step bound: {e}")
        return RunResult(il.option_counts, il.choices, 0, list(findings))

    return run_fn


def main() -> None:
    data = resources.files("rtoslab").joinpath("scenarios/dma_frames.bin").read_bytes()
    payloads = decode_frames(data)
    report = dma_lossless_demo(payloads, delay_cycles=10_000)
    print(f"{len(payloads)} frames through a {report['delayCycles']}-cycle "
          f"handler delay: lossless={report['lossless']}")
    for p in report["recoveredFrames"]:
        print(f"  recovered {p or '(empty)'}")
    print()
    for handshake in (True, False):
        r = explore(make_run_fn(handshake), max_schedules=5000)
        label = "with pause handshake" if handshake else "without handshake"
        print(f"{label}: {r.schedules} schedules, "
              f"{r.violation_count} with torn state")


if __name__ == "__main__":
    main()
