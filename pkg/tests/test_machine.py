"""Atomic memory, mask accounting, and interrupt dispatch."""

import pytest

from rtoslab import (DEFAULT_COST_MODEL, AtomicMemory, ConfigError, Ctx,
                     CtxKind, CycleLedger, Machine, MaskLevel,
                     ReservationMode, SimFault, StepBoundExceeded)

T = Ctx(CtxKind.TASK, 3, 1)
I = Ctx(CtxKind.PERIPHERAL_ISR, 10, 0)


class TestAtomicMemory:
    def test_unknown_cell_faults(self):
        mem = AtomicMemory()
        with pytest.raises(SimFault):
            mem.read("nope")
        with pytest.raises(SimFault):
            mem.write(T, "nope", 1)

    def test_exclusive_pair_succeeds_unmolested(self):
        mem = AtomicMemory()
        mem.alloc("c", 7)
        assert mem.load_exclusive(T, "c") == 7
        assert mem.store_exclusive(T, "c", 8)
        assert mem.read("c") == 8

    def test_store_fails_without_reservation(self):
        mem = AtomicMemory()
        mem.alloc("c", 0)
        assert not mem.store_exclusive(T, "c", 1)
        assert mem.read("c") == 0

    def test_intervening_write_clears_reservation(self):
        mem = AtomicMemory()
        mem.alloc("c", 0)
        mem.load_exclusive(T, "c")
        mem.write(I, "c", 5)
        assert not mem.store_exclusive(T, "c", 1)
        assert mem.read("c") == 5

    def test_write_elsewhere_keeps_reservation(self):
        mem = AtomicMemory()
        mem.alloc("c", 0)
        mem.alloc("d", 0)
        mem.load_exclusive(T, "c")
        mem.write(I, "d", 5)
        assert mem.store_exclusive(T, "c", 1)

    def test_reservation_cleared_on_boundary(self):
        mem = AtomicMemory(ReservationMode.CLEARED_ON_PREEMPTION)
        mem.alloc("c", 0)
        mem.load_exclusive(T, "c")
        mem.on_context_boundary()
        assert not mem.store_exclusive(T, "c", 1)

    def test_reservation_survives_boundary_in_sticky_mode(self):
        mem = AtomicMemory(ReservationMode.SURVIVES_PREEMPTION)
        mem.alloc("c", 0)
        mem.load_exclusive(T, "c")
        mem.on_context_boundary()
        assert mem.store_exclusive(T, "c", 1)

    def test_compare_exchange(self):
        mem = AtomicMemory()
        mem.alloc("c", 4)
        ok, seen = mem.compare_exchange(T, "c", 9, 1)
        assert not ok and seen == 4 and mem.read("c") == 4
        ok, seen = mem.compare_exchange(T, "c", 4, 1)
        assert ok and mem.read("c") == 1

    def test_compare_exchange_same_value_clears_reservation(self):
        # The head-confirm trick: a CAS writing the old value back still
        # defeats a concurrent exclusive pair on the same cell.
        mem = AtomicMemory(ReservationMode.SURVIVES_PREEMPTION)
        mem.alloc("c", 4)
        mem.load_exclusive(T, "c")
        ok, _ = mem.compare_exchange(I, "c", 4, 4)
        assert ok
        assert not mem.store_exclusive(T, "c", 9)


class TestCycleLedger:
    def test_default_costs(self):
        led = CycleLedger()
        assert led.cost_of("loop_iter") == 8
        assert led.cost_of("isr_body") == 150
        assert led.cost_of("never-heard-of-it") == 1

    def test_override_merges(self):
        led = CycleLedger({"isr_body": 99})
        assert led.cost_of("isr_body") == 99
        assert led.cost_of("loop_iter") == DEFAULT_COST_MODEL["loop_iter"]

    def test_intervals_per_level(self):
        led = CycleLedger()
        led.open_interval(MaskLevel.PERIPHERAL)
        led.advance(30)
        led.close_interval(MaskLevel.PERIPHERAL)
        led.open_interval(MaskLevel.SOFTWARE)
        led.advance(5)
        led.close_interval(MaskLevel.SOFTWARE)
        assert led.max_masked(MaskLevel.PERIPHERAL) == 30
        assert led.total_masked(MaskLevel.SOFTWARE) == 5
        led.finalize()

    def test_open_interval_at_finalize_faults(self):
        led = CycleLedger()
        led.open_interval(MaskLevel.PERIPHERAL)
        with pytest.raises(SimFault):
            led.finalize()


class TestMasking:
    def test_nested_masks_form_one_interval(self, machine):
        m = machine
        m.mask(T, MaskLevel.PERIPHERAL)
        m.ledger.advance(10)
        m.mask(T, MaskLevel.PERIPHERAL)
        m.ledger.advance(10)
        m.unmask(T, MaskLevel.PERIPHERAL)
        m.ledger.advance(10)
        m.unmask(T, MaskLevel.PERIPHERAL)
        assert m.ledger.intervals_at(MaskLevel.PERIPHERAL) == [(0, 30)]

    def test_unbalanced_unmask_faults(self, machine):
        with pytest.raises(SimFault):
            machine.unmask(T, MaskLevel.PERIPHERAL)

    def test_peripheral_mask_blocks_software_delivery(self, machine):
        machine.mask(T, MaskLevel.PERIPHERAL)
        assert machine.software_delivery_blocked()
        machine.unmask(T, MaskLevel.PERIPHERAL)
        assert not machine.software_delivery_blocked()


def _one_shot(record, tag):
    def factory(m, ctx):
        def isr():
            record.append(tag)
            yield "isr_body"
        return isr()
    return factory


class TestDispatch:
    def test_pending_isr_preempts_at_step_boundary(self):
        m = Machine()
        record = []
        m.register_isr(0, 10, _one_shot(record, "isr"))

        def root():
            yield "unit"
            m.raise_peripheral(0)
            record.append("before")
            yield "unit"
            record.append("after")

        m.run(T, root())
        assert record == ["before", "isr", "after"]

    def test_priority_order_among_pending(self):
        m = Machine()
        record = []
        m.register_isr(0, 20, _one_shot(record, "low"))
        m.register_isr(1, 5, _one_shot(record, "high"))

        def root():
            m.raise_peripheral(0)
            m.raise_peripheral(1)
            yield "unit"

        m.run(T, root())
        assert record == ["high", "low"]

    def test_masked_isr_delivered_after_unmask(self):
        m = Machine()
        record = []
        m.register_isr(0, 10, _one_shot(record, "isr"))

        def root():
            m.mask(T, MaskLevel.PERIPHERAL)
            m.raise_peripheral(0)
            yield "unit"
            record.append("masked")
            m.unmask(T, MaskLevel.PERIPHERAL)
            yield "unit"
            record.append("open")

        m.run(T, root())
        assert record == ["masked", "isr", "open"]

    def test_swi_runs_below_peripherals(self):
        m = Machine()
        record = []
        m.register_swi(_one_shot(record, "swi"))

        def isr_factory(mm, ctx):
            def isr():
                m.assert_swi()
                record.append("isr")
                yield "isr_body"
            return isr()

        m.register_isr(0, 10, isr_factory)

        def root():
            m.raise_peripheral(0)
            yield "unit"
            record.append("task")
            yield "unit"

        m.run(T, root())
        # SWI fires after the ISR returns, before the task resumes.
        assert record == ["isr", "swi", "task"]

    def test_swi_reassertion_coalesces(self):
        m = Machine()
        runs = []

        def swi_factory(mm, ctx):
            def swi():
                runs.append(1)
                yield "unit"
            return swi()

        m.register_swi(swi_factory)

        def root():
            m.assert_swi()
            m.assert_swi()
            yield "unit"
            yield "unit"

        m.run(T, root())
        assert len(runs) == 1

    def test_irq_entry_cost_charged(self):
        m = Machine()
        m.register_isr(0, 10, _one_shot([], "x"))

        def root():
            m.raise_peripheral(0)
            yield "unit"

        m.run(T, root())
        assert m.irq_entries >= 1
        assert m.ledger.kind_cycles["irq_entry"] == 12 * m.irq_entries

    def test_unknown_isr_index_rejected(self):
        m = Machine()
        with pytest.raises(ConfigError):
            m.raise_peripheral(3)

    def test_isr_priority_must_be_peripheral_range(self):
        m = Machine()
        with pytest.raises(ConfigError):
            m.register_isr(0, 5000, _one_shot([], "x"))

    def test_step_bound(self):
        m = Machine(step_bound=5)

        def root():
            while True:
                yield "unit"

        with pytest.raises(StepBoundExceeded):
            m.run(T, root())

    def test_tick_asserts_systick(self):
        m = Machine(tick_quantum=50)
        ticks = []

        def systick_factory(mm, ctx):
            def h():
                ticks.append(m.ledger.now)
                yield "unit"
            return h()

        m.register_systick(systick_factory)

        def root():
            for _ in range(120):
                yield "unit"

        m.run(T, root())
        assert ticks and all(t >= 50 for t in ticks)

    def test_execute_charges_without_dispatch(self):
        m = Machine()
        m.register_isr(0, 10, _one_shot([], "x"))
        m.raise_peripheral(0)

        def work():
            yield "loop_iter"
            yield "loop_iter"
            return 42

        assert m.execute(work()) == 42
        assert m.ledger.kind_cycles["loop_iter"] == 16
        assert m.pending_peripheral == [0]  # nothing dispatched
