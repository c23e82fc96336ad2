"""The classical kernel: semaphore paths run under a full interrupt mask.

ISR release and task-side blocking manipulate the sorted lists directly
with peripheral-level interrupts disabled for the whole critical section,
so the maximum masked interval grows by one list-loop iteration (8 cycles)
per task: the degradation the rest of the laboratory removes.
"""

from __future__ import annotations

from typing import Iterator, Optional

from .architecture import Architecture, register_architecture
from .kernel import Kernel, Outcome, Semaphore, Task, TaskState
from .machine import Ctx, MaskLevel


@register_architecture
class BaselineArch(Architecture):
    id = "baseline"
    atomic_ready_list = False

    def __init__(self, config=None):
        self.config = config or {}

    def _masked_give(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        """Shared by ISR and task release; caller holds the peripheral mask."""
        m = k.m
        k.note_give(sem)
        bl = k.blocked_list(sem)
        tid = bl.masked_extract_head(ctx)
        if tid is None:
            count = m.mem.read(sem.count_cell)
            if count >= sem.max_count:
                sem.overflows += 1
                sem.gives -= 1
                sem.give_seqs.pop()
            else:
                m.mem.write(ctx, sem.count_cell, count + 1)
        else:
            task = k.tasks[tid]
            yield from k.ready_task(ctx, task, sem)
            if k.current is None or task.priority < k.current.priority:
                m.assert_swi()

    def give_from_isr(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.PERIPHERAL)
        m.cost("isr_body")
        yield from self._masked_give(k, ctx, sem)
        m.unmask(ctx, MaskLevel.PERIPHERAL)

    def give_from_task(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.PERIPHERAL)
        yield from self._masked_give(k, ctx, sem)
        m.unmask(ctx, MaskLevel.PERIPHERAL)
        yield "unit"

    def take(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
             timeout: Optional[int] = None) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.PERIPHERAL)
        count = m.mem.read(sem.count_cell)
        if count > 0:
            m.mem.write(ctx, sem.count_cell, count - 1)
            k.note_dec_take(sem)
            m.unmask(ctx, MaskLevel.PERIPHERAL)
            yield "unit"
            return Outcome.ACQUIRED
        self._block_bookkeeping(k, ctx, task, sem, timeout)
        k.blocked_list(sem).masked_insert_sorted(ctx, task.tid)
        m.unmask(ctx, MaskLevel.PERIPHERAL)
        outcome = yield ("block",)
        return outcome

    def swi_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        yield from k.swi_switch_check(ctx)

    def systick_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.PERIPHERAL)
        yield from self._expire_timeouts(k, ctx)
        m.unmask(ctx, MaskLevel.PERIPHERAL)
        yield from k.swi_switch_check(ctx)

    def blocked_remove(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        k.blocked_list(sem).masked_remove(ctx, task.tid)
        return True
        yield  # pragma: no cover - generator marker
