"""Task and semaphore records, kernel lists, and the task-world loop.

The kernel owns the objects every architecture shares: task control blocks,
semaphores, the ready list (in one of three representations), the per-
semaphore blocked lists, and the delayed list.  Architecture objects plug
in the give/take/drain paths; the kernel provides the context-switch loop
(`world`), readied-order logging, and the bookkeeping the invariant
library checks against.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

from .lists import ABSENT, LinkedList, UnsortedReadyList
from .machine import (BLOCK, IDLE, ConfigError, Ctx, CtxKind, Machine, MaskLevel, SimFault)

SCHED_CTX = Ctx(CtxKind.TASK, 0, index=999)


class Outcome(enum.Enum):
    ACQUIRED = "acquired"
    TIMED_OUT = "timed-out"


class TaskState(enum.Enum):
    RUNNING = "running"
    READY = "ready"
    BLOCKED = "blocked"
    DELAYED = "delayed"
    BLOCKED_DELAYED = "blocked-delayed"
    READY_DELAYED = "ready-delayed"
    DONE = "done"


@dataclass
class Task:
    tid: int
    name: str
    priority: int
    state: TaskState = TaskState.READY
    gen: Optional[Iterator] = None
    resume: object = None
    blocked_on: Optional["Semaphore"] = None
    deadline: Optional[int] = None
    #: True while the script generator is parked at a block yield
    waiting: bool = False
    #: True while a kernel call is in flight (state deduction is undefined)
    in_op: bool = False

    @property
    def ctx(self) -> Ctx:
        return Ctx(CtxKind.TASK, self.priority, self.tid)


@dataclass
class Semaphore:
    sid: int
    name: str
    max_count: int
    isr_released: bool
    initial: int = 0
    bitmap_index: Optional[int] = None
    # ground truth counters for the invariant library
    gives: int = 0
    unblocks: int = 0
    dec_takes: int = 0
    overflows: int = 0
    give_seqs: List[Optional[int]] = field(default_factory=list)

    @property
    def count_cell(self) -> str:
        return f"sem{self.sid}.count"

    @property
    def blocked_head_cell(self) -> str:
        return f"sem{self.sid}.bhead"

    @property
    def uc_cell(self) -> str:
        return f"sem{self.sid}.uc"

    @property
    def bau_cell(self) -> str:
        return f"sem{self.sid}.bau"

    @property
    def defer_next_cell(self) -> str:
        return f"sem{self.sid}.dnext"

    def conditional_fields(self, mem) -> List[str]:
        out = []
        for label, cell in (("unblockCount", self.uc_cell),
                            ("barrierAndUnblockCount", self.bau_cell),
                            ("deferNext", self.defer_next_cell)):
            if cell in mem.cells:
                out.append(label)
        if self.bitmap_index is not None:
            out.append("bitmapIndex")
        return out


UC_MAX = 0xFFFF  # 16-bit unblock counters saturate fatally, never wrap


class Kernel:
    def __init__(self, m: Machine, arch, ready_variant: str = "sorted",
                 k_tails: int = 1, config: Optional[Dict[str, int]] = None):
        self.m = m
        self.arch = arch
        self.config = dict(config or {})
        self.tasks: Dict[int, Task] = {}
        self.sems: Dict[str, Semaphore] = {}
        self.sems_by_id: Dict[int, Semaphore] = {}
        self._next_tid = 1
        self._next_sid = 1
        self.current: Optional[Task] = None
        self.preempt_flag = False
        self.readied_log: List[Tuple[int, int, Optional[int]]] = []
        self._give_seq = 0
        self.ready_variant = ready_variant
        self.k_tails = k_tails

        def prio(tid: int) -> int:
            return self.tasks[tid].priority

        if ready_variant == "sorted":
            self.rl_sorted = LinkedList(m, "rl.head", lambda n: f"t{n}.nr", prio)
            self.rl_unsorted = None
        elif ready_variant == "unsorted":
            self.rl_sorted = None
            self.rl_unsorted = UnsortedReadyList(m, "rl", prio, k=k_tails)
        else:
            raise ConfigError(f"unknown ready list variant {ready_variant!r}")

        self.delayed = LinkedList(m, "dl.head", lambda n: f"t{n}.nd",
                                  lambda tid: self.tasks[tid].deadline or 0)
        arch.configure(self)
        m.register_swi(lambda mm, ctx: arch.swi_handler(self, ctx))
        m.register_systick(lambda mm, ctx: arch.systick_handler(self, ctx))
        m.idle_hook = self._idle_hook

    # -- construction -----------------------------------------------------

    def create_task(self, name: str, priority: int, script=None) -> Task:
        t = Task(self._next_tid, name, priority)
        self._next_tid += 1
        self.tasks[t.tid] = t
        for cell in (f"t{t.tid}.nb", f"t{t.tid}.nr", f"t{t.tid}.nd"):
            self.m.mem.alloc(cell, ABSENT)
        if script is not None:
            t.gen = script(self, t)
        return t

    def create_semaphore(self, name: str, max_count: int, initial: int = 0,
                         isr_released: bool = False) -> Semaphore:
        if initial > max_count:
            raise ConfigError("initial count exceeds maxCount")
        if max_count > 0xFFFE:
            raise ConfigError("maxCount capped at 65534")
        s = Semaphore(self._next_sid, name, max_count, isr_released, initial=initial)
        self._next_sid += 1
        self.m.mem.alloc(s.count_cell, initial)
        self.m.mem.alloc(s.blocked_head_cell, ABSENT)
        s.give_seqs = [None] * initial
        self.sems_by_id[s.sid] = s
        self.arch.on_create_semaphore(self, s)
        self.sems[name] = s
        return s

    def blocked_list(self, sem: Semaphore) -> LinkedList:
        return LinkedList(self.m, sem.blocked_head_cell, lambda n: f"t{n}.nb",
                          lambda tid: self.tasks[tid].priority)

    # -- ready list facade -------------------------------------------------

    def rl_insert(self, ctx: Ctx, tid: int) -> Iterator:
        if self.rl_sorted is not None:
            if self.arch.atomic_ready_list:
                yield from self.rl_sorted.atomic_insert_sorted(ctx, tid)
            else:
                self.rl_sorted.masked_insert_sorted(ctx, tid)
        else:
            yield from self.rl_unsorted.atomic_insert(ctx, tid)

    def rl_extract_min(self, ctx: Ctx):
        if self.rl_sorted is not None:
            if self.arch.atomic_ready_list:
                node = yield from self.rl_sorted.atomic_extract_head(ctx)
            else:
                node = self.rl_sorted.masked_extract_head(ctx)
        else:
            node = yield from self.rl_unsorted.atomic_extract_min(ctx)
        return node

    def rl_peek_min(self) -> Optional[int]:
        if self.rl_sorted is not None:
            return self.rl_sorted.peek_head()
        return self.rl_unsorted.peek_min()

    def rl_members(self) -> List[int]:
        if self.rl_sorted is not None:
            return self.rl_sorted.to_pylist()
        return self.rl_unsorted.to_pylist()

    # -- give/unblock bookkeeping -----------------------------------------

    def note_give(self, sem: Semaphore) -> int:
        self._give_seq += 1
        sem.gives += 1
        sem.give_seqs.append(self._give_seq)
        return self._give_seq

    def note_dec_take(self, sem: Semaphore) -> None:
        sem.dec_takes += 1
        if sem.give_seqs:
            sem.give_seqs.pop(0)

    def ready_task(self, ctx: Ctx, task: Task, sem: Optional[Semaphore],
                   outcome: Outcome = Outcome.ACQUIRED, from_isr: bool = False) -> Iterator:
        """Move a formerly blocked/delayed task into the ready list."""
        seq = None
        if sem is not None and outcome is Outcome.ACQUIRED:
            sem.unblocks += 1
            if sem.give_seqs:
                seq = sem.give_seqs.pop(0)
        task.resume = outcome
        task.blocked_on = None
        if task.state is TaskState.BLOCKED_DELAYED:
            if from_isr:
                # ISRs never touch the delayed list; SWI/SysTick clean up.
                task.state = TaskState.READY_DELAYED
            else:
                self.delayed.masked_remove(ctx, task.tid)
                task.deadline = None
                task.state = TaskState.READY
        else:
            if task.state is TaskState.DELAYED:
                self.delayed.masked_remove(ctx, task.tid)
                task.deadline = None
            task.state = TaskState.READY
        self.readied_log.append((task.tid, task.priority, seq))
        yield from self.rl_insert(ctx, task.tid)

    def collect_ready_delayed(self, ctx: Ctx) -> None:
        """SWI/SysTick duty: finish the delayed-list exit of tasks an ISR
        already moved to the ready list."""
        for tid in list(self.delayed.to_pylist()):
            task = self.tasks[tid]
            if task.state is TaskState.READY_DELAYED:
                self.delayed.masked_remove(ctx, tid)
                task.deadline = None
                task.state = TaskState.READY

    def expired_delayed(self) -> List[Task]:
        now = self.m.ledger.now
        out = []
        for tid in self.delayed.to_pylist():
            task = self.tasks[tid]
            if task.deadline is not None and task.deadline <= now:
                out.append(task)
        return out

    # -- context switching -------------------------------------------------

    def swi_switch_check(self, ctx: Ctx) -> Iterator:
        """Preempt the running task if a readier task outranks it."""
        self.collect_ready_delayed(ctx)
        head = self.rl_peek_min()
        if head is None:
            return
        if self.current is None:
            self.preempt_flag = True
            return
        if self.tasks[head].priority < self.current.priority:
            cur = self.current
            if cur.state is TaskState.RUNNING:
                # Otherwise an ISR already readied it mid-call and it sits
                # in the ready list; reinserting would corrupt the list.
                cur.state = TaskState.READY
                yield from self.rl_insert(ctx, cur.tid)
            self.preempt_flag = True

    def all_finished(self) -> bool:
        return all(t.state is TaskState.DONE for t in self.tasks.values())

    def _idle_hook(self) -> Optional[int]:
        if self.m.tick_quantum and not self.delayed.empty():
            return max(1, self.m.next_tick - self.m.ledger.now)
        return None

    def start(self) -> None:
        """Place the initially ready tasks into the ready list (pre-run, so
        the insert generators are drained without charging cycles)."""
        for task in self.tasks.values():
            if task.state is TaskState.READY and task.gen is not None:
                for _ in self.rl_insert(SCHED_CTX, task.tid):
                    pass

    def _in_ready(self, tid: int) -> bool:
        return tid in self.rl_members()

    def world(self) -> Iterator:
        """Root program: runs task scripts, honoring block and preemption."""
        m = self.m
        while True:
            if self.preempt_flag:
                self.preempt_flag = False
                if self.current is not None and self.current.state is not TaskState.RUNNING:
                    self.current = None
            if self.current is None:
                tid = yield from self.rl_extract_min(SCHED_CTX)
                if tid is None:
                    if self.all_finished():
                        return
                    if self.rl_peek_min() is not None:
                        continue  # an interrupt filled the list mid-extract
                    if self.arch.service_pending(self) and not self.m.swi_active:
                        # A conditional-assert architecture left deferred
                        # work behind; the scheduler pass services it.
                        self.m.assert_swi()
                        yield "unit"
                        continue
                    yield IDLE
                    continue
                task = self.tasks[tid]
                if task.state is TaskState.READY_DELAYED:
                    self.delayed.masked_remove(SCHED_CTX, tid)
                    task.deadline = None
                task.state = TaskState.RUNNING
                self.current = task
                m.mem.on_context_boundary()
                yield "ctx_switch"
                continue
            task = self.current
            if task.gen is None:
                task.state = TaskState.DONE
                self.current = None
                continue
            if task.waiting:
                # Parked at a block yield: deliver the stored outcome.
                task.waiting = False
                send, task.resume = task.resume, None
                if send is None:
                    raise SimFault(f"task {task.name} scheduled without an outcome")
            else:
                send = None
            try:
                item = task.gen.send(send)
            except StopIteration:
                task.state = TaskState.DONE
                self.current = None
                continue
            if item == BLOCK:
                task.waiting = True
                if task.resume is not None and not self._in_ready(task.tid):
                    # Readied mid-call: the scheduler pass that resumed this
                    # task consumed its ready entry, so restore it.
                    yield from self.rl_insert(SCHED_CTX, task.tid)
                self.current = None
                continue
            yield item

    # -- script-facing operations ------------------------------------------

    def sem_take(self, task: Task, sem: Semaphore,
                 timeout: Optional[int] = None) -> Iterator:
        task.in_op = True
        outcome = yield from self.arch.take(self, task.ctx, task, sem, timeout)
        task.in_op = False
        return outcome

    def sem_give(self, task: Task, sem: Semaphore) -> Iterator:
        task.in_op = True
        yield from self.arch.give_from_task(self, task.ctx, task, sem)
        task.in_op = False

    def isr_give(self, ctx: Ctx, sem: Semaphore) -> Iterator:
        yield from self.arch.give_from_isr(self, ctx, sem)

    @staticmethod
    def compute(steps: int) -> Iterator:
        for _ in range(steps):
            yield "unit"

    # -- shared helpers for architecture code ------------------------------

    def atomic_add(self, ctx: Ctx, cell: str, delta: int,
                   floor: int = 0, ceil: Optional[int] = None) -> Iterator:
        """Exclusive read-modify-write; returns (old, new) or (old, old)
        when clamped at a bound."""
        mem = self.m.mem
        while True:
            old = mem.load_exclusive(ctx, cell)
            yield "atomic"
            new = old + delta
            if new < floor or (ceil is not None and new > ceil):
                return old, old
            ok = mem.store_exclusive(ctx, cell, new)
            yield "atomic"
            if ok:
                return old, new

    def atomic_exchange(self, ctx: Ctx, cell: str, value: int) -> Iterator:
        mem = self.m.mem
        while True:
            old = mem.load_exclusive(ctx, cell)
            yield "atomic"
            ok = mem.store_exclusive(ctx, cell, value)
            yield "atomic"
            if ok:
                return old

    def fetch_inc_uc(self, ctx: Ctx, sem: Semaphore) -> Iterator:
        old, new = yield from self.atomic_add(ctx, sem.uc_cell, 1, ceil=UC_MAX)
        if old == new:
            raise SimFault(f"unblock count of {sem.name} saturated at {UC_MAX}")
        return old
