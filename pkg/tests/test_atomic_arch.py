"""The strictly atomic kernel and its structural state deduction."""

import pytest

from rtoslab import Ctx, CtxKind, Machine, MaskLevel, TaskState, make_architecture, run_once
from rtoslab.atomic_arch import deduce_state
from rtoslab.kernel import SCHED_CTX, Kernel
from tests.conftest import scenario_for_arch

ISR_CTX = Ctx(CtxKind.PERIPHERAL_ISR, 10, 0)


def make_kernel():
    m = Machine()
    arch = make_architecture("strictly-atomic", {})
    return m, arch, Kernel(m, arch)


def drain(gen):
    try:
        while True:
            next(gen)
    except StopIteration as stop:
        return stop.value


class TestDeduceState:
    def test_states_follow_list_membership(self):
        m, arch, k = make_kernel()
        sem = k.create_semaphore("s", max_count=4, isr_released=True)
        t = k.create_task("a", priority=1)
        assert deduce_state(k, t) is TaskState.DONE
        drain(k.rl_insert(SCHED_CTX, t.tid))
        assert deduce_state(k, t) is TaskState.READY
        drain(k.rl_extract_min(SCHED_CTX))
        k.blocked_list(sem).masked_insert_sorted(SCHED_CTX, t.tid)
        assert deduce_state(k, t) is TaskState.BLOCKED
        t.deadline = 100
        k.delayed.masked_insert_sorted(SCHED_CTX, t.tid)
        assert deduce_state(k, t) is TaskState.BLOCKED_DELAYED
        k.blocked_list(sem).masked_remove(SCHED_CTX, t.tid)
        assert deduce_state(k, t) is TaskState.DELAYED
        k.current = t
        assert deduce_state(k, t) is TaskState.RUNNING


class TestGiveCore:
    def test_isr_give_never_masks(self):
        m, arch, k = make_kernel()
        sem = k.create_semaphore("s", max_count=4, isr_released=True)
        t = k.create_task("w", priority=1)
        t.state = TaskState.BLOCKED
        t.blocked_on = sem
        k.blocked_list(sem).masked_insert_sorted(SCHED_CTX, t.tid)
        m.execute(arch.give_from_isr(k, ISR_CTX, sem))
        m.ledger.finalize()
        assert t.state is TaskState.READY
        assert m.ledger.total_masked(MaskLevel.PERIPHERAL) == 0

    def test_give_without_waiter_banks_count(self):
        m, arch, k = make_kernel()
        sem = k.create_semaphore("s", max_count=2, isr_released=True)
        m.execute(arch.give_from_isr(k, ISR_CTX, sem))
        assert m.mem.read(sem.count_cell) == 1

    def test_overflow_counted(self):
        m, arch, k = make_kernel()
        sem = k.create_semaphore("s", max_count=1, isr_released=True)
        m.execute(arch.give_from_isr(k, ISR_CTX, sem))
        m.execute(arch.give_from_isr(k, ISR_CTX, sem))
        assert m.mem.read(sem.count_cell) == 1
        assert sem.overflows == 1


class TestScenarios:
    @pytest.mark.parametrize("name", ["basic_give_take", "fig3_fifo_insert",
                                      "ordering_two_sems",
                                      "blocked_delayed_timeout"])
    def test_bundled_scenarios_clean(self, name):
        res = run_once(scenario_for_arch(name, "strictly-atomic"))
        assert res.violations == []
        assert res.error is None
