"""Hardware-side answers to kernel-induced interrupt latency.

Two models live here.  The GPIO priority escape sacrifices one GPIO pin:
the critical peripheral's handler runs above the ceiling the kernel ever
masks, drains the device and flips the pin; a second, kernel-visible ISR
wired to that pin performs the semaphore work whenever the kernel
unmasks.  The pause-capable DMA controller streams variable-size frames
into a byte ring and adds a write-only pause-request / read-only
paused-state register pair so software can reconfigure the ring interrupt
without racing the controller's own index update.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

from .machine import ConfigError

# -- GPIO priority escape ---------------------------------------------------


@dataclass
class EscapeHandler:
    """The critical peripheral's handler configuration."""

    above_ceiling: bool
    calls_kernel: bool = False

    def validate(self) -> None:
        if self.above_ceiling and self.calls_kernel:
            raise ConfigError(
                "a handler above the kernel's mask ceiling cannot call kernel "
                "operations; route the give through the GPIO loopback ISR")


@dataclass
class LossReport:
    arrivals: int
    losses: int
    max_service_delay: int
    escape: bool
    sacrificed: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "arrivals": self.arrivals,
            "losses": self.losses,
            "maxServiceDelayCycles": self.max_service_delay,
            "escape": self.escape,
            "sacrificed": self.sacrificed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def gpio_escape_scenario(stream_period: int, mask_pattern: Sequence[Tuple[int, int]],
                         horizon: int, handler: Optional[EscapeHandler] = None) -> LossReport:
    """Single-buffered peripheral fed every ``stream_period`` cycles while
    the kernel masks over ``mask_pattern`` intervals.

    Without the escape the handler waits out any covering mask; a new
    arrival that lands before the previous byte was drained overwrites it
    (one loss).  Above the ceiling the handler always runs immediately, so
    the device is drained before the next arrival; only the semaphore give
    (via the sacrificed GPIO pin's ISR) waits for the unmask.
    """
    handler = handler or EscapeHandler(above_ceiling=True)
    handler.validate()
    intervals = sorted(mask_pattern)

    def service_time(t: int) -> int:
        if handler.above_ceiling:
            return t
        for s, e in intervals:
            if s <= t < e:
                return e
        return t

    arrivals = list(range(0, horizon, stream_period))
    losses = 0
    max_delay = 0
    drained_at = -1
    for t in arrivals:
        if t < drained_at:
            losses += 1  # previous byte still undrained: overwritten
            continue
        done = service_time(t)
        max_delay = max(max_delay, done - t)
        drained_at = done
    sacrificed = {"gpioPins": 1} if handler.above_ceiling else {}
    return LossReport(len(arrivals), losses, max_delay,
                      escape=handler.above_ceiling, sacrificed=sacrificed)


# -- pause-capable DMA controller -------------------------------------------


class DmaController:
    """Byte-ring DMA with a pause handshake.

    The CPU-visible write index register updates in two micro-phases, so a
    read between them can observe a torn value; that is exactly the hazard
    the pause handshake removes.  A pause request is honored only between
    transfer/update steps, never in the middle of one.
    """

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self.ring = bytearray(capacity)
        self.write_index = 0  # CPU-visible register
        self._committed = 0
        self.interrupt_index: Optional[int] = None
        self.pause_request = False
        self.paused_state = False
        self.mid_update = False
        self.irq = False
        self._pending = deque()
        self._overruns = 0

    # device side ----------------------------------------------------------

    def feed(self, data: bytes) -> None:
        self._pending.extend(data)

    @property
    def busy(self) -> bool:
        return bool(self._pending) or self.mid_update

    def step(self) -> None:
        """One controller micro-step."""
        if self.mid_update:
            # Second phase: commit the full write index.
            self.write_index = self._committed
            self.mid_update = False
            self._maybe_irq()
            return
        if self.paused_state:
            if not self.pause_request:
                self.paused_state = False
            return
        if self.pause_request:
            # Only honored between transfers ("ignores pause requests if it
            # is in the middle of transferring data").
            self.paused_state = True
            return
        if self._pending:
            b = self._pending.popleft()
            self.ring[self._committed % self.capacity] = b
            self._committed += 1
            # First phase of the register update: low byte only.  The
            # register is inconsistent until the next step commits it.
            self.write_index = (self.write_index & ~0xFF) | (self._committed & 0xFF)
            self.mid_update = True

    def _maybe_irq(self) -> None:
        if self.interrupt_index is not None and self.write_index >= self.interrupt_index:
            self.irq = True
            self.interrupt_index = None

    # CPU side -------------------------------------------------------------

    def read_write_index(self, findings: Optional[List[str]] = None) -> int:
        if self.mid_update and findings is not None:
            findings.append(
                f"torn write-index read: observed {self.write_index}, "
                f"committed {self._committed}")
        return self.write_index

    def set_interrupt_index(self, pos: int, findings: Optional[List[str]] = None) -> None:
        if self.mid_update and findings is not None:
            findings.append("interruptIndex written while writeIndex mid-update")
        self.interrupt_index = pos
        self._maybe_irq()


def configure_next_interrupt(dc: DmaController, pos: int,
                             findings: Optional[List[str]] = None) -> Iterator:
    """The safe reconfiguration handshake, one yield per CPU step:
    request pause, spin for paused state, read, configure, release."""
    dc.pause_request = True
    yield
    while not dc.paused_state:
        yield
    dc.read_write_index(findings)
    yield
    dc.set_interrupt_index(pos, findings)
    yield
    dc.pause_request = False
    yield


def configure_without_handshake(dc: DmaController, pos: int,
                                findings: Optional[List[str]] = None) -> Iterator:
    """Mutant: reads and configures while the controller may be mid-update."""
    dc.read_write_index(findings)
    yield
    dc.set_interrupt_index(pos, findings)
    yield


# -- frames -----------------------------------------------------------------


def encode_frames(payloads: Sequence[bytes]) -> bytes:
    out = bytearray()
    for p in payloads:
        if len(p) > 0xFFFF:
            raise ConfigError("payload exceeds the 2-byte length header")
        out += len(p).to_bytes(2, "little")
        out += p
    return bytes(out)


def decode_frames(data: bytes) -> List[bytes]:
    frames = []
    i = 0
    while i + 2 <= len(data):
        n = int.from_bytes(data[i:i + 2], "little")
        if i + 2 + n > len(data):
            break  # incomplete tail
        frames.append(bytes(data[i + 2:i + 2 + n]))
        i += 2 + n
    return frames


def load_frame_stream(path) -> List[bytes]:
    return decode_frames(Path(path).read_bytes())


def dma_lossless_demo(payloads: Sequence[bytes], delay_cycles: int = 10_000,
                      capacity: int = 1024) -> dict:
    """Stream the frames into the ring while the handler sleeps, then
    recover them with the pause handshake.  Returns a byte-exact report."""
    stream = encode_frames(payloads)
    if len(stream) > capacity:
        raise ConfigError("stream backlog exceeds ring capacity")
    dc = DmaController(capacity)
    dc.feed(stream)
    findings: List[str] = []
    cycle = 0
    # Handler is busy elsewhere: the controller streams alone.
    while cycle < delay_cycles or dc.busy:
        dc.step()
        cycle += 1
    # Delayed handler wakes up: handshake, then drain the stable region.
    recovered = bytearray()
    read_index = 0
    hs = configure_next_interrupt(dc, pos=len(stream), findings=findings)
    for _ in hs:
        dc.step()
        cycle += 1
    stable = dc._committed
    while read_index < stable:
        recovered.append(dc.ring[read_index % capacity])
        read_index += 1
    frames = decode_frames(bytes(recovered))
    return {
        "injectedFrames": [p.hex() for p in payloads],
        "recoveredFrames": [p.hex() for p in frames],
        "lossless": frames == list(payloads),
        "tornStateFindings": findings,
        "cycles": cycle,
        "delayCycles": delay_cycles,
    }
