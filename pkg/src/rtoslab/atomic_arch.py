"""The strictly atomic kernel: every shared list is lock-free.

Semaphore release never masks anything; it extracts the highest-priority
waiter with exclusive accesses, or banks a count when nobody is visible.
The taker publishes its blocked state *before* the sorted insert and then
re-checks the count, so a release that raced the insert is never lost.
Task-level calls hold only the software mask (the scheduler's own level);
peripheral interrupts stay enabled everywhere.

Because blocked/ready/delayed membership plus the running pointer fully
determine a task's scheduling state, the per-task state word is redundant
here; ``deduce_state`` recomputes it structurally and the invariant suite
cross-checks it against the bookkeeping field.
"""

from __future__ import annotations

from typing import Iterator, Optional

from .architecture import Architecture, register_architecture
from .kernel import Kernel, Outcome, Semaphore, Task, TaskState
from .machine import Ctx, MaskLevel


def atomic_give_core(k: Kernel, ctx: Ctx, sem: Semaphore, from_isr: bool) -> Iterator:
    """Lock-free give body: unblock the head waiter or bank a count.

    The caller has already recorded the give (``note_give``).  Safe against
    concurrent givers, one extractor, and a taker mid-insert (the taker's
    own re-check claims the banked count).
    """
    tid = yield from k.blocked_list(sem).atomic_extract_head(ctx)
    if tid is None:
        old, new = yield from k.atomic_add(ctx, sem.count_cell, 1, ceil=sem.max_count)
        if old == new:
            sem.overflows += 1
            sem.gives -= 1
            sem.give_seqs.pop()
        return
    task = k.tasks[tid]
    yield from k.ready_task(ctx, task, sem, from_isr=from_isr)
    if k.current is None or task.priority < k.current.priority:
        k.m.assert_swi()


def self_rescue(k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
    """Post-insert re-check: claim a count banked by a give that ran while
    this task was not yet visible on the blocked list."""
    if task.resume is not None:
        return  # a give already readied us
    old, _ = yield from k.atomic_add(ctx, sem.count_cell, -1, floor=0)
    if old == 0:
        return
    removed = yield from k.blocked_list(sem).atomic_remove(ctx, task.tid)
    if removed:
        k.note_dec_take(sem)
        yield from k.ready_task(ctx, task, None)
    else:
        # An ISR extracted us between the decrement and the removal; its
        # give owns the unblock, so return the count we grabbed.
        yield from k.atomic_add(ctx, sem.count_cell, 1, ceil=sem.max_count)


def deduce_state(k: Kernel, task: Task) -> TaskState:
    """Recompute a task's scheduling state from list membership alone."""
    if k.current is task:
        return TaskState.RUNNING
    in_ready = task.tid in k.rl_members()
    in_delayed = k.delayed.contains(task.tid)
    in_blocked = any(k.blocked_list(s).contains(task.tid) for s in k.sems.values())
    if in_blocked:
        return TaskState.BLOCKED_DELAYED if in_delayed else TaskState.BLOCKED
    if in_ready:
        return TaskState.READY_DELAYED if in_delayed else TaskState.READY
    if in_delayed:
        return TaskState.DELAYED
    return TaskState.DONE


@register_architecture
class StrictlyAtomicArch(Architecture):
    id = "strictly-atomic"
    atomic_ready_list = True

    def __init__(self, config=None):
        self.config = dict(config or {})

    def give_from_isr(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        k.m.cost("isr_body")
        k.note_give(sem)
        yield from atomic_give_core(k, ctx, sem, from_isr=True)

    def give_from_task(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.SOFTWARE)
        k.note_give(sem)
        yield from atomic_give_core(k, ctx, sem, from_isr=False)
        m.unmask(ctx, MaskLevel.SOFTWARE)
        yield "unit"

    def take(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
             timeout: Optional[int] = None) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.SOFTWARE)
        old, _ = yield from k.atomic_add(ctx, sem.count_cell, -1, floor=0)
        if old > 0:
            k.note_dec_take(sem)
            m.unmask(ctx, MaskLevel.SOFTWARE)
            yield "unit"
            return Outcome.ACQUIRED
        # Publish the blocked state before becoming visible on the list.
        self._block_bookkeeping(k, ctx, task, sem, timeout)
        yield from k.blocked_list(sem).atomic_insert_sorted(ctx, task.tid)
        yield from self_rescue(k, ctx, task, sem)
        m.unmask(ctx, MaskLevel.SOFTWARE)
        outcome = yield ("block",)
        return outcome

    def swi_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        yield from k.swi_switch_check(ctx)

    def systick_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        yield from self._expire_timeouts(k, ctx)
        yield from k.swi_switch_check(ctx)

    def blocked_remove(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        removed = yield from k.blocked_list(sem).atomic_remove(ctx, task.tid)
        return removed
