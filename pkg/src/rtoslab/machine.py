"""Abstract execution machine: contexts, atomic memory, cycle ledger, dispatch.

Everything in the laboratory runs on one logical stream.  Kernel code is
written as Python generators that yield a step kind string at every point
where preemption is observable; the machine charges the cycle cost of the
step, lets a chooser inject external interrupt events at the boundary, and
dispatches any deliverable interrupt before the next step executes.

Cost accounting that does not create a preemption point (e.g. work inside a
masked region) is charged directly through ``Machine.cost``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Tuple


class SimFault(Exception):
    """Fatal simulation fault (unknown cell, unbalanced mask, ...)."""


class ConfigError(Exception):
    """Invalid static configuration (semaphore budget, schema, ...)."""


class StepBoundExceeded(Exception):
    """A run exceeded its primitive-step bound; coverage is partial."""


class CtxKind(enum.Enum):
    TASK = "task"
    PERIPHERAL_ISR = "peripheral"
    SOFTWARE_IRQ = "swi"
    SYSTICK_IRQ = "systick"


# Dispatch levels: numerically lower preempts higher.  All peripheral ISR
# priorities sit below SOFT_LEVEL; SWI and SysTick share SOFT_LEVEL; tasks
# are never dispatched as interrupts and live at TASK_LEVEL.
SOFT_LEVEL = 1000
TASK_LEVEL = 2000


@dataclass(frozen=True)
class Ctx:
    kind: CtxKind
    priority: int
    index: int = 0

    @property
    def level(self) -> int:
        if self.kind is CtxKind.PERIPHERAL_ISR:
            if not 0 <= self.priority < SOFT_LEVEL:
                raise ConfigError("peripheral priority out of range")
            return self.priority
        if self.kind in (CtxKind.SOFTWARE_IRQ, CtxKind.SYSTICK_IRQ):
            return SOFT_LEVEL
        return TASK_LEVEL

    def __repr__(self) -> str:
        return f"{self.kind.value}{self.index}(p{self.priority})"


class ReservationMode(enum.Enum):
    CLEARED_ON_PREEMPTION = "cleared-on-preemption"
    SURVIVES_PREEMPTION = "survives-preemption"


class AtomicMemory:
    """Word cells with a single exclusive reservation and compare-exchange.

    In CLEARED_ON_PREEMPTION mode the machine clears the reservation on
    every interrupt entry/exit and task switch (ARM-style local monitor).
    In SURVIVES_PREEMPTION mode only a write to the reserved cell clears it
    (the cmpxchg-style caveat the sorted-insert head trick exists for).
    """

    def __init__(self, mode: ReservationMode = ReservationMode.CLEARED_ON_PREEMPTION):
        self.mode = mode
        self.cells: Dict[str, int] = {}
        self.reservation: Optional[Tuple[Ctx, str]] = None

    def alloc(self, cell: str, value: int = 0) -> None:
        self.cells[cell] = value

    def _require(self, cell: str) -> None:
        if cell not in self.cells:
            raise SimFault(f"unknown cell {cell!r}")

    def read(self, cell: str) -> int:
        self._require(cell)
        return self.cells[cell]

    def write(self, ctx: Ctx, cell: str, value: int) -> None:
        self._require(cell)
        self.cells[cell] = value
        if self.reservation is not None and self.reservation[1] == cell:
            self.reservation = None

    def load_exclusive(self, ctx: Ctx, cell: str) -> int:
        self._require(cell)
        self.reservation = (ctx, cell)
        return self.cells[cell]

    def store_exclusive(self, ctx: Ctx, cell: str, value: int) -> bool:
        self._require(cell)
        if self.reservation != (ctx, cell):
            return False
        self.cells[cell] = value
        self.reservation = None
        return True

    def compare_exchange(self, ctx: Ctx, cell: str, expected: int, desired: int) -> Tuple[bool, int]:
        self._require(cell)
        observed = self.cells[cell]
        if observed != expected:
            return False, observed
        self.cells[cell] = desired
        if self.reservation is not None and self.reservation[1] == cell:
            self.reservation = None
        return True, expected

    def clear_reservation(self) -> None:
        self.reservation = None

    def on_context_boundary(self) -> None:
        if self.mode is ReservationMode.CLEARED_ON_PREEMPTION:
            self.reservation = None


class MaskLevel(enum.Enum):
    PERIPHERAL = "peripheral"
    SOFTWARE = "software"


#: Default cycle costs per primitive step kind.  Unlisted kinds cost 1.
#: ``loop_iter`` is pinned to 8 so list-traversal arithmetic is exact;
#: ``isr_body`` is the constant ISR body (the masked give/take constant c0);
#: ``irq_entry`` is the hardware interrupt latency.
DEFAULT_COST_MODEL: Dict[str, int] = {
    "loop_iter": 8,
    "isr_body": 150,
    "irq_entry": 12,
    "ctx_switch": 4,
    "idle": 1,
    "unbuffer_step": 1,
}


class CycleLedger:
    """Cycle clock plus the record of masked intervals per mask level."""

    def __init__(self, cost_model: Optional[Dict[str, int]] = None):
        self.cost_model = dict(DEFAULT_COST_MODEL)
        if cost_model:
            self.cost_model.update(cost_model)
        self.now = 0
        self.kind_cycles: Dict[str, int] = {}
        self.intervals: List[Tuple[MaskLevel, int, int]] = []
        self._open: Dict[MaskLevel, int] = {}

    def cost_of(self, kind: str) -> int:
        return self.cost_model.get(kind, 1)

    def step(self, kind: str) -> int:
        c = self.cost_of(kind)
        self.now += c
        self.kind_cycles[kind] = self.kind_cycles.get(kind, 0) + c
        return c

    def advance(self, cycles: int) -> None:
        self.now += cycles

    def open_interval(self, level: MaskLevel) -> None:
        self._open[level] = self.now

    def close_interval(self, level: MaskLevel) -> None:
        start = self._open.pop(level)
        self.intervals.append((level, start, self.now))

    def intervals_at(self, level: MaskLevel) -> List[Tuple[int, int]]:
        return [(s, e) for (lv, s, e) in self.intervals if lv is level]

    def max_masked(self, level: MaskLevel) -> int:
        spans = [e - s for s, e in self.intervals_at(level)]
        return max(spans) if spans else 0

    def total_masked(self, level: MaskLevel) -> int:
        return sum(e - s for s, e in self.intervals_at(level))

    def finalize(self) -> None:
        if self._open:
            raise SimFault(f"masked interval still open at report time: {self._open}")


# Control yields understood by Machine.run.
BLOCK = ("block",)
IDLE = ("idle",)


@dataclass
class Frame:
    ctx: Ctx
    gen: Iterator
    resume: object = None


class Machine:
    """Interrupt controller, mask state, and the frame-stack step loop."""

    def __init__(
        self,
        cost_model: Optional[Dict[str, int]] = None,
        mode: ReservationMode = ReservationMode.CLEARED_ON_PREEMPTION,
        tick_quantum: Optional[int] = None,
        step_bound: Optional[int] = None,
    ):
        self.mem = AtomicMemory(mode)
        self.ledger = CycleLedger(cost_model)
        self.tick_quantum = tick_quantum
        self.next_tick = tick_quantum if tick_quantum else None
        self.step_bound = step_bound
        self.steps = 0

        self.mask_depth: Dict[MaskLevel, int] = {MaskLevel.PERIPHERAL: 0, MaskLevel.SOFTWARE: 0}
        self._ctx_mask_balance: Dict[Tuple[Ctx, MaskLevel], int] = {}

        self.isr_priority: Dict[int, int] = {}
        self.isr_factory: Dict[int, Callable[["Machine", Ctx], Iterator]] = {}
        self.isr_payload: Dict[int, object] = {}
        self.pending_peripheral: List[int] = []
        self.active_peripheral: List[int] = []

        self.swi_factory: Optional[Callable[["Machine", Ctx], Iterator]] = None
        self.swi_pending = False
        self.swi_active = False
        self.systick_factory: Optional[Callable[["Machine", Ctx], Iterator]] = None
        self.systick_pending = False
        self.systick_active = False

        self.frames: List[Frame] = []
        self.boundary_hook: Optional[Callable[["Machine"], None]] = None
        self.chooser = None
        self.idle_hook: Optional[Callable[[], Optional[int]]] = None
        self.on_frame_event: Optional[Callable[[str, Ctx], None]] = None
        self.irq_entries = 0
        self.tallies: Dict[str, int] = {}

    # -- configuration ----------------------------------------------------

    def register_isr(self, index: int, priority: int, factory: Callable) -> None:
        if not 0 <= priority < SOFT_LEVEL:
            raise ConfigError("peripheral ISR priority must sit above task level")
        self.isr_priority[index] = priority
        self.isr_factory[index] = factory

    def register_swi(self, factory: Callable) -> None:
        self.swi_factory = factory

    def register_systick(self, factory: Callable) -> None:
        self.systick_factory = factory

    # -- interrupt controller --------------------------------------------

    def raise_peripheral(self, index: int) -> None:
        if index not in self.isr_factory:
            raise ConfigError(f"no ISR registered at index {index}")
        if index not in self.pending_peripheral and index not in self.active_peripheral:
            self.pending_peripheral.append(index)

    def assert_swi(self) -> None:
        # Re-assertion while the handler runs coalesces into one more run.
        self.swi_pending = True

    def assert_systick(self) -> None:
        self.systick_pending = True

    def peripheral_busy(self, index: int) -> bool:
        return index in self.pending_peripheral or index in self.active_peripheral

    # -- masking ----------------------------------------------------------

    def mask(self, ctx: Ctx, level: MaskLevel) -> None:
        self.mask_depth[level] += 1
        self._ctx_mask_balance[(ctx, level)] = self._ctx_mask_balance.get((ctx, level), 0) + 1
        if self.mask_depth[level] == 1:
            self.ledger.open_interval(level)

    def unmask(self, ctx: Ctx, level: MaskLevel) -> None:
        if self._ctx_mask_balance.get((ctx, level), 0) <= 0:
            raise SimFault(f"unmask without mask by {ctx} at {level}")
        self._ctx_mask_balance[(ctx, level)] -= 1
        self.mask_depth[level] -= 1
        if self.mask_depth[level] == 0:
            self.ledger.close_interval(level)

    def masked(self, level: MaskLevel) -> bool:
        return self.mask_depth[level] > 0

    def software_delivery_blocked(self) -> bool:
        # Masking at peripheral level implies the software level as well.
        return self.masked(MaskLevel.SOFTWARE) or self.masked(MaskLevel.PERIPHERAL)

    # -- execution --------------------------------------------------------

    def cost(self, kind: str, times: int = 1) -> None:
        for _ in range(times):
            self.ledger.step(kind)

    def tally(self, name: str, n: int = 1) -> None:
        """Event counter with no cycle cost (benchmark instrumentation)."""
        self.tallies[name] = self.tallies.get(name, 0) + n

    def execute(self, gen: Iterator) -> object:
        """Run a single generator to completion with no interrupt delivery.

        Used by the benchmark engine, where cycle accounting matters but
        scheduling does not.
        """
        result = None
        try:
            while True:
                kind = gen.send(None)
                if isinstance(kind, str):
                    self.ledger.step(kind)
        except StopIteration as stop:
            result = stop.value
        return result

    def _current_level(self) -> int:
        return self.frames[-1].ctx.level if self.frames else TASK_LEVEL

    def _push_frame(self, ctx: Ctx, gen: Iterator) -> None:
        self.mem.on_context_boundary()
        self.frames.append(Frame(ctx, gen))
        self.irq_entries += 1
        self.ledger.step("irq_entry")
        if self.on_frame_event:
            self.on_frame_event("enter", ctx)

    def _dispatch(self) -> None:
        while True:
            top = self._current_level()
            if not self.masked(MaskLevel.PERIPHERAL) and self.pending_peripheral:
                cand = sorted(self.pending_peripheral, key=lambda i: (self.isr_priority[i], i))
                best = cand[0]
                if self.isr_priority[best] < top:
                    self.pending_peripheral.remove(best)
                    self.active_peripheral.append(best)
                    ctx = Ctx(CtxKind.PERIPHERAL_ISR, self.isr_priority[best], best)
                    self._push_frame(ctx, self.isr_factory[best](self, ctx))
                    continue
            if not self.software_delivery_blocked() and top > SOFT_LEVEL:
                if self.systick_pending and self.systick_factory:
                    self.systick_pending = False
                    self.systick_active = True
                    ctx = Ctx(CtxKind.SYSTICK_IRQ, 0)
                    self._push_frame(ctx, self.systick_factory(self, ctx))
                    continue
                if self.swi_pending and self.swi_factory:
                    self.swi_pending = False
                    self.swi_active = True
                    ctx = Ctx(CtxKind.SOFTWARE_IRQ, 0)
                    self._push_frame(ctx, self.swi_factory(self, ctx))
                    continue
            return

    def _pop_frame(self) -> None:
        frame = self.frames.pop()
        self.mem.on_context_boundary()
        if frame.ctx.kind is CtxKind.PERIPHERAL_ISR:
            self.active_peripheral.remove(frame.ctx.index)
        elif frame.ctx.kind is CtxKind.SOFTWARE_IRQ:
            self.swi_active = False
        elif frame.ctx.kind is CtxKind.SYSTICK_IRQ:
            self.systick_active = False
        if self.on_frame_event:
            self.on_frame_event("exit", frame.ctx)

    def _check_tick(self) -> None:
        if self.next_tick is not None and self.ledger.now >= self.next_tick:
            self.assert_systick()
            while self.next_tick <= self.ledger.now:
                self.next_tick += self.tick_quantum

    def run(self, root_ctx: Ctx, root_gen: Iterator) -> None:
        """Drive the root program (the task world) until quiescence."""
        self.frames = [Frame(root_ctx, root_gen)]
        while self.frames:
            self._check_tick()
            if self.chooser is not None:
                # choose() fires the picked event itself; None means either
                # nothing enabled or a recorded decision not to inject.
                while self.chooser.choose(self) is not None:
                    pass
            self._dispatch()
            frame = self.frames[-1]
            try:
                item = frame.gen.send(frame.resume)
                frame.resume = None
            except StopIteration:
                if len(self.frames) == 1:
                    return
                self._pop_frame()
                continue
            if item == IDLE:
                if self.chooser is not None and self.chooser.has_enabled(self):
                    delta = self.idle_hook() if self.idle_hook is not None else None
                    if delta is not None and delta > 0:
                        # Time can still pass: declining the injection means
                        # sleeping until the next tick instead.
                        if self.chooser.choose(self) is None:
                            self.ledger.advance(delta)
                        continue
                    # Nothing else can happen: injection is forced, otherwise
                    # the idle boundary would repeat forever.
                    self.chooser.choose(self, forced=True)
                    continue
                if self.pending_peripheral or self.swi_pending or self.systick_pending:
                    continue
                if self.idle_hook is not None:
                    delta = self.idle_hook()
                    if delta is not None and delta > 0:
                        self.ledger.advance(delta)
                        continue
                return
            self.steps += 1
            if self.step_bound is not None and self.steps > self.step_bound:
                raise StepBoundExceeded(f"exceeded step bound {self.step_bound}")
            self.ledger.step(item)
            if self.boundary_hook:
                self.boundary_hook(self)
