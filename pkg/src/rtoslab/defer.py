"""The defer-structure kernel: ISRs record releases, the SWI does the lists.

Interrupt handlers never touch blocked lists or the ready list.  A release
is recorded in one of four defer structures using only atomic accesses;
the lowest-priority software interrupt handler drains the structure and
performs every unblock.  Tasks get exclusive list access by masking only
the software level, so peripheral interrupts are never disabled.
"""

from __future__ import annotations

from typing import Iterator, List, Optional, Tuple

from .architecture import Architecture, register_architecture
from .kernel import Kernel, Outcome, Semaphore, Task, TaskState
from .lists import ABSENT
from .machine import ConfigError, Ctx, MaskLevel, SimFault


def _pow2_at_least(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


def find_lowest_set_bit(word: int) -> Tuple[int, int]:
    """Binary search for the lowest set bit of a 32-bit word.

    Returns (bit position, iterations); always exactly 5 iterations
    (16/8/4/2/1-wide halves).
    """
    if word == 0:
        raise ValueError("word has no set bit")
    pos = 0
    iters = 0
    for half in (16, 8, 4, 2, 1):
        iters += 1
        mask = (1 << half) - 1
        if word & mask:
            continue
        word >>= half
        pos += half
    return pos, iters


class SemCountsFifo:
    """Ring of semaphore references, one entry per outstanding release."""

    name = "sem-counts-fifo"
    needs_unblock_count = False
    asserts_swi_on_record = False
    #: tasks must drain before their own list surgery to preserve order
    drain_before_task_ops = True

    def __init__(self, m, capacity: int, atomic: bool = True):
        self.m = m
        self.capacity = capacity
        self.ring_size = _pow2_at_least(capacity)
        self.atomic = atomic
        m.mem.alloc("ds.head", 0)
        m.mem.alloc("ds.tail", 0)
        for i in range(self.ring_size):
            m.mem.alloc(f"ds.slot{i}", 0)

    def occupancy(self) -> int:
        return self.m.mem.read("ds.head") - self.m.mem.read("ds.tail")

    def is_empty(self) -> bool:
        return self.occupancy() == 0

    def record(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        mem = self.m.mem
        if self.occupancy() >= self.capacity:
            raise SimFault("NUM_ISR_SEMPHR_COUNTS exceeded: defer ring overflow")
        if self.atomic:
            # Claim the index first, then fill the slot.  A preempting
            # handler claims the next index; the drain runs below every
            # handler, so claimed slots are filled before it looks.
            while True:
                h = mem.load_exclusive(ctx, "ds.head")
                yield "atomic"
                ok = mem.store_exclusive(ctx, "ds.head", h + 1)
                yield "atomic"
                if ok:
                    break
            mem.write(ctx, f"ds.slot{h % self.ring_size}", sem.sid)
            yield "atomic"
        else:
            # Deliberately broken variant: the lost-entry bug the atomic
            # instruction sequence exists to avert.
            h = mem.read("ds.head")
            yield "unit"
            mem.write(ctx, f"ds.slot{h % self.ring_size}", sem.sid)
            yield "unit"
            mem.write(ctx, "ds.head", h + 1)
            yield "unit"

    def drain(self, k: Kernel, ctx: Ctx) -> Iterator:
        mem = self.m.mem
        while True:
            t = mem.read("ds.tail")
            h = mem.read("ds.head")
            if t == h:
                return
            yield "unbuffer_step"
            sem = k.sems_by_id[mem.read(f"ds.slot{t % self.ring_size}")]
            yield from _drain_unblocks(k, ctx, sem, 1)
            mem.write(ctx, "ds.tail", t + 1)
            yield "atomic"


class SemFifo:
    """Ring of at most one reference per ISR semaphore; multiplicity lives
    in the semaphore's unblock count."""

    name = "sem-fifo"
    needs_unblock_count = True
    asserts_swi_on_record = True
    drain_before_task_ops = False

    def __init__(self, m, capacity: int):
        self.m = m
        self.capacity = capacity
        self.ring_size = _pow2_at_least(capacity)
        m.mem.alloc("ds.head", 0)
        m.mem.alloc("ds.tail", 0)
        for i in range(self.ring_size):
            m.mem.alloc(f"ds.slot{i}", 0)

    def occupancy(self) -> int:
        return self.m.mem.read("ds.head") - self.m.mem.read("ds.tail")

    def is_empty(self) -> bool:
        return self.occupancy() == 0

    def record(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        mem = self.m.mem
        old = yield from k.fetch_inc_uc(ctx, sem)
        if old != 0:
            return  # reference already buffered; no new entry
        if self.occupancy() >= self.capacity:
            raise SimFault("NUM_ISR_SMPHRS exceeded: defer ring overflow")
        # Claim-then-fill, as in the ring-of-counts structure.
        while True:
            h = mem.load_exclusive(ctx, "ds.head")
            yield "atomic"
            ok = mem.store_exclusive(ctx, "ds.head", h + 1)
            yield "atomic"
            if ok:
                break
        mem.write(ctx, f"ds.slot{h % self.ring_size}", sem.sid)
        yield "atomic"
        k.m.assert_swi()

    def drain(self, k: Kernel, ctx: Ctx) -> Iterator:
        mem = self.m.mem
        while True:
            t = mem.read("ds.tail")
            h = mem.read("ds.head")
            if t == h:
                return
            yield "unbuffer_step"
            sem = k.sems_by_id[mem.read(f"ds.slot{t % self.ring_size}")]
            mem.write(ctx, "ds.tail", t + 1)
            yield "atomic"
            cnt = yield from k.atomic_exchange(ctx, sem.uc_cell, 0)
            yield from _drain_unblocks(k, ctx, sem, cnt)


class LinkedListFifo:
    """FIFO of semaphores linked through their defer-next cells, seeded
    with a sentinel so inserters never consider the head."""

    name = "linked-list-fifo"
    needs_unblock_count = True
    asserts_swi_on_record = True
    drain_before_task_ops = False

    def __init__(self, m, k: Kernel):
        self.m = m
        self.k = k
        self.sentinel = k.create_semaphore("_defer_sentinel", max_count=1, initial=0,
                                           isr_released=False)
        m.mem.alloc(self.sentinel.uc_cell, 0)
        m.mem.alloc(self.sentinel.defer_next_cell, self.sentinel.sid)
        m.mem.alloc("ds.lltail", self.sentinel.sid)

    def _dnext(self, sem: Semaphore) -> str:
        return sem.defer_next_cell

    def is_empty(self) -> bool:
        return self.m.mem.read(self._dnext(self.sentinel)) == self.sentinel.sid

    def record(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        mem = self.m.mem
        old = yield from k.fetch_inc_uc(ctx, sem)
        if old != 0:
            return
        mem.write(ctx, self._dnext(sem), sem.sid)  # self-link: end marker
        yield "atomic"
        while True:
            t = mem.load_exclusive(ctx, "ds.lltail")
            yield "atomic"
            ok = mem.store_exclusive(ctx, "ds.lltail", sem.sid)
            yield "atomic"
            if ok:
                break
        mem.write(ctx, k.sems_by_id[t].defer_next_cell, sem.sid)
        yield "atomic"
        k.m.assert_swi()

    def drain(self, k: Kernel, ctx: Ctx) -> Iterator:
        mem = self.m.mem
        sent = self.sentinel
        while True:
            first_id = mem.read(self._dnext(sent))
            if first_id == sent.sid:
                return
            yield "unbuffer_step"
            first = k.sems_by_id[first_id]
            nxt = mem.read(self._dnext(first))
            if nxt == first_id:
                # first is (still) the last node: swing the tail back to the
                # sentinel before unlinking, retrying if an ISR appended.
                t = mem.load_exclusive(ctx, "ds.lltail")
                yield "atomic"
                if t != first_id:
                    continue
                ok = mem.store_exclusive(ctx, "ds.lltail", sent.sid)
                yield "atomic"
                if not ok:
                    continue
                # A handler may already have appended behind the sentinel;
                # only clear the head link if it still names the retiree.
                mem.compare_exchange(ctx, self._dnext(sent), first_id, sent.sid)
            else:
                mem.write(ctx, self._dnext(sent), nxt)
            yield "atomic"
            mem.write(ctx, self._dnext(first), ABSENT)
            cnt = yield from k.atomic_exchange(ctx, first.uc_cell, 0)
            yield from _drain_unblocks(k, ctx, first, cnt)


class BitmapFlags:
    """One 32-bit word; each ISR semaphore owns the bit at its array index."""

    name = "bitmap-flags"
    needs_unblock_count = True
    asserts_swi_on_record = True
    drain_before_task_ops = False

    def __init__(self, m, num_isr_smphrs: int):
        if num_isr_smphrs > 32:
            raise ConfigError("NUM_ISR_SMPHRS<=32 for the bitmap defer structure")
        self.m = m
        self.num_isr_smphrs = num_isr_smphrs
        self.slots: List[Optional[Semaphore]] = []
        m.mem.alloc("ds.bitmap", 0)

    def assign_index(self, sem: Semaphore) -> None:
        if len(self.slots) >= self.num_isr_smphrs:
            raise ConfigError(
                f"NUM_ISR_SMPHRS<={self.num_isr_smphrs} exceeded by {sem.name!r}")
        sem.bitmap_index = len(self.slots)
        self.slots.append(sem)

    def is_empty(self) -> bool:
        return self.m.mem.read("ds.bitmap") == 0

    def record(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        mem = self.m.mem
        old = yield from k.fetch_inc_uc(ctx, sem)
        if old != 0:
            return
        bit = 1 << sem.bitmap_index
        while True:
            w = mem.load_exclusive(ctx, "ds.bitmap")
            yield "atomic"
            ok = mem.store_exclusive(ctx, "ds.bitmap", w | bit)
            yield "atomic"
            if ok:
                k.m.assert_swi()
                return

    def drain(self, k: Kernel, ctx: Ctx) -> Iterator:
        mem = self.m.mem
        while True:
            w = mem.read("ds.bitmap")
            if w == 0:
                return
            pos, iters = find_lowest_set_bit(w)
            for _ in range(iters):
                yield "unbuffer_step"
            while True:
                w2 = mem.load_exclusive(ctx, "ds.bitmap")
                yield "atomic"
                ok = mem.store_exclusive(ctx, "ds.bitmap", w2 & ~(1 << pos))
                yield "atomic"
                if ok:
                    break
            sem = self.slots[pos]
            cnt = yield from k.atomic_exchange(ctx, sem.uc_cell, 0)
            yield from _drain_unblocks(k, ctx, sem, cnt)


def _drain_unblocks(k: Kernel, ctx: Ctx, sem: Semaphore, n: int) -> Iterator:
    """Unblock up to n head tasks; each consumes one deferred count."""
    for _ in range(n):
        old, _new = yield from k.atomic_add(ctx, sem.count_cell, -1, floor=0)
        if old == 0:
            return  # releases already consumed by direct takes
        bl = k.blocked_list(sem)
        tid = bl.masked_extract_head(ctx)
        if tid is None:
            # Nobody waiting: put the count back for a future take.
            yield from k.atomic_add(ctx, sem.count_cell, 1, ceil=sem.max_count)
            return
        yield from k.ready_task(ctx, k.tasks[tid], sem)


class DeferArch(Architecture):
    """Common give/take/drain wiring for the four defer structures."""

    atomic_ready_list = False
    variant = "?"

    def __init__(self, config=None):
        self.config = dict(config or {})
        self.ds = None

    def _make_structure(self, k: Kernel):
        raise NotImplementedError

    def configure(self, k: Kernel) -> None:
        self.ds = self._make_structure(k)

    def on_create_semaphore(self, k: Kernel, sem: Semaphore) -> None:
        if sem.isr_released:
            if self.ds is not None and getattr(self.ds, "needs_unblock_count", False):
                k.m.mem.alloc(sem.uc_cell, 0)
            if isinstance(self.ds, LinkedListFifo):
                k.m.mem.alloc(sem.defer_next_cell, ABSENT)
            if isinstance(self.ds, BitmapFlags):
                self.ds.assign_index(sem)

    # -- ISR side ----------------------------------------------------------

    def give_from_isr(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        m = k.m
        if not sem.isr_released:
            raise SimFault(f"semaphore {sem.name!r} not created as ISR-released")
        m.cost("isr_body")
        k.note_give(sem)
        old, new = yield from k.atomic_add(ctx, sem.count_cell, 1, ceil=sem.max_count)
        if old == new:
            sem.overflows += 1
            sem.gives -= 1
            sem.give_seqs.pop()
            return
        yield from self.ds.record(k, ctx, sem)
        if not self.ds.asserts_swi_on_record:
            # Ring-of-counts variant: assert only when the first waiter
            # outranks the running task; empty blocked list asserts nothing.
            head = k.blocked_list(sem).peek_head()
            if head is not None and (k.current is None
                                     or k.tasks[head].priority < k.current.priority):
                m.assert_swi()

    # -- task side ----------------------------------------------------------

    def _readied_higher(self, k: Kernel, mark: int, task: Task) -> bool:
        return any(prio < task.priority for (_t, prio, _s) in k.readied_log[mark:])

    def give_from_task(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.SOFTWARE)
        mark = len(k.readied_log)
        if self.ds.drain_before_task_ops:
            yield from self.ds.drain(k, ctx)
        k.note_give(sem)
        bl = k.blocked_list(sem)
        tid = bl.masked_extract_head(ctx)
        if tid is None:
            old, new = yield from k.atomic_add(ctx, sem.count_cell, 1, ceil=sem.max_count)
            if old == new:
                sem.overflows += 1
                sem.gives -= 1
                sem.give_seqs.pop()
        else:
            yield from k.ready_task(ctx, k.tasks[tid], sem)
        if self._readied_higher(k, mark, task):
            m.assert_swi()
        m.unmask(ctx, MaskLevel.SOFTWARE)
        yield "unit"

    def take(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
             timeout: Optional[int] = None) -> Iterator:
        m = k.m
        m.mask(ctx, MaskLevel.SOFTWARE)
        mark = len(k.readied_log)
        if self.ds.drain_before_task_ops:
            yield from self.ds.drain(k, ctx)
        old, _ = yield from k.atomic_add(ctx, sem.count_cell, -1, floor=0)
        if old > 0:
            k.note_dec_take(sem)
            if self._readied_higher(k, mark, task):
                m.assert_swi()
            m.unmask(ctx, MaskLevel.SOFTWARE)
            yield "unit"
            return Outcome.ACQUIRED
        self._block_bookkeeping(k, ctx, task, sem, timeout)
        k.blocked_list(sem).masked_insert_sorted(ctx, task.tid)
        m.assert_swi()  # blocking self: let the SWI switch tasks
        m.unmask(ctx, MaskLevel.SOFTWARE)
        outcome = yield ("block",)
        return outcome

    # -- handlers ------------------------------------------------------------

    def service_pending(self, k: Kernel) -> bool:
        return not self.ds.is_empty()

    def swi_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        yield from self.ds.drain(k, ctx)
        yield from k.swi_switch_check(ctx)

    def systick_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        # The defer structure drains first so unblock order stays intact.
        yield from self.ds.drain(k, ctx)
        yield from self._expire_timeouts(k, ctx)
        yield from k.swi_switch_check(ctx)

    def blocked_remove(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        k.blocked_list(sem).masked_remove(ctx, task.tid)
        return True
        yield  # pragma: no cover - generator marker


@register_architecture
class DeferSemCountsArch(DeferArch):
    id = "defer-semcounts"
    variant = "SemCountsFifo"

    def _make_structure(self, k: Kernel):
        cap = int(self.config.get("NUM_ISR_SEMPHR_COUNTS", 16))
        return SemCountsFifo(k.m, cap, atomic=True)


@register_architecture
class DeferSemCountsNonAtomicArch(DeferArch):
    """Mutant: the ring insert uses plain accesses and loses entries."""

    id = "defer-semcounts-nonatomic"
    variant = "SemCountsFifo(non-atomic mutant)"

    def _make_structure(self, k: Kernel):
        cap = int(self.config.get("NUM_ISR_SEMPHR_COUNTS", 16))
        return SemCountsFifo(k.m, cap, atomic=False)


@register_architecture
class DeferSemFifoArch(DeferArch):
    id = "defer-semfifo"
    variant = "SemFifo"

    def _make_structure(self, k: Kernel):
        cap = int(self.config.get("NUM_ISR_SMPHRS", 8))
        return SemFifo(k.m, cap)


@register_architecture
class DeferLinkedListArch(DeferArch):
    id = "defer-linkedlist"
    variant = "LinkedListFifo"

    def _make_structure(self, k: Kernel):
        return LinkedListFifo(k.m, k)


@register_architecture
class DeferBitmapArch(DeferArch):
    id = "defer-bitmap"
    variant = "BitmapFlags"

    def _make_structure(self, k: Kernel):
        cap = int(self.config.get("NUM_ISR_SMPHRS", 32))
        return BitmapFlags(k.m, cap)
