"""The barriers-and-requests kernel.

Each ISR-released semaphore carries one small field, the barrier-and-
unblock count.  A task raises it (to 1) before its preemptible blocked-
list insert and lowers it afterwards.  A releasing ISR that finds the
barrier raised does not wait: it bumps the field and returns, converting
its unblock into a *request* that the barrier-holding task performs on the
ISR's behalf once its insert is done.  With the barrier clear, the ISR
unblocks directly with the same lock-free give core the strictly atomic
kernel uses.  No path masks peripheral interrupts.
"""

from __future__ import annotations

from typing import Iterator, Optional

from .architecture import Architecture, register_architecture
from .atomic_arch import atomic_give_core, self_rescue
from .kernel import Kernel, Outcome, Semaphore, Task
from .machine import Ctx, MaskLevel, SimFault


@register_architecture
class BarriersArch(Architecture):
    id = "barriers"
    atomic_ready_list = True

    def __init__(self, config=None):
        self.config = dict(config or {})

    def on_create_semaphore(self, k: Kernel, sem: Semaphore) -> None:
        if sem.isr_released:
            k.m.mem.alloc(sem.bau_cell, 0)

    def give_from_isr(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        m = k.m
        if not sem.isr_released:
            raise SimFault(f"semaphore {sem.name!r} not created as ISR-released")
        m.cost("isr_body")
        k.note_give(sem)
        mem = m.mem
        while True:
            w = mem.load_exclusive(ctx, sem.bau_cell)
            yield "atomic"
            if w == 0:
                break
            ok = mem.store_exclusive(ctx, sem.bau_cell, w + 1)
            yield "atomic"
            if ok:
                return  # request recorded; the barrier holder unblocks for us
        yield from atomic_give_core(k, ctx, sem, from_isr=True)

    def give_from_task(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.SOFTWARE)
        # No task holds the barrier here: raising it requires the software
        # mask this context now owns.
        k.note_give(sem)
        yield from atomic_give_core(k, ctx, sem, from_isr=False)
        m.unmask(ctx, MaskLevel.SOFTWARE)
        yield "unit"

    def take(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
             timeout: Optional[int] = None) -> Iterator:
        m = k.m
        mem = m.mem
        m.mask(ctx, MaskLevel.SOFTWARE)
        old, _ = yield from k.atomic_add(ctx, sem.count_cell, -1, floor=0)
        if old > 0:
            k.note_dec_take(sem)
            m.unmask(ctx, MaskLevel.SOFTWARE)
            yield "unit"
            return Outcome.ACQUIRED
        self._block_bookkeeping(k, ctx, task, sem, timeout)
        if not sem.isr_released:
            # Only tasks contend here and the software mask serializes them.
            k.blocked_list(sem).masked_insert_sorted(ctx, task.tid)
        else:
            if mem.read(sem.bau_cell) != 0:
                raise SimFault(f"barrier of {sem.name} already raised")
            mem.write(ctx, sem.bau_cell, 1)
            yield "unit"
            # The insert itself is plain and preemptible: releasing ISRs
            # see the barrier and queue requests instead of touching links.
            yield from k.blocked_list(sem).stepped_insert_sorted(ctx, task.tid)
            w = yield from k.atomic_exchange(ctx, sem.bau_cell, 0)
            for _ in range(w - 1):
                yield from atomic_give_core(k, ctx, sem, from_isr=False)
            yield from self_rescue(k, ctx, task, sem)
        m.unmask(ctx, MaskLevel.SOFTWARE)
        outcome = yield ("block",)
        return outcome

    def swi_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        yield from k.swi_switch_check(ctx)

    def systick_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        # Runs below every peripheral but above tasks, so no barrier can be
        # raised now; expiry removals still race ISR extractions, hence the
        # lock-free removal in blocked_remove.
        yield from self._expire_timeouts(k, ctx)
        yield from k.swi_switch_check(ctx)

    def blocked_remove(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        removed = yield from k.blocked_list(sem).atomic_remove(ctx, task.tid)
        return removed
