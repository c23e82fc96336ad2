"""Shared builders for the test suite.

The heavyweight pieces live here: the raw-list concurrency harness (several
inserters plus one extractor steered by the Interleaver), the DMA
reconfiguration harness, and the cross-architecture scenario sweep.
"""

from __future__ import annotations

import copy
from typing import List, Optional, Sequence

import pytest

from rtoslab import (ABSENT, Ctx, CtxKind, Interleaver, LinkedList, Machine,
                     ReservationMode, RunResult, StepBoundExceeded,
                     load_bundled)
from rtoslab.hw import (DmaController, configure_next_interrupt,
                        configure_without_handshake)

# Architectures whose interrupt paths never mask peripheral interrupts.
UNMASKED_ARCHS = [
    "barriers",
    "defer-bitmap",
    "defer-linkedlist",
    "defer-semcounts",
    "defer-semfifo",
    "strictly-atomic",
]
ALL_ARCHS = ["baseline"] + UNMASKED_ARCHS
NON_MUTANT_SCENARIOS = [
    "basic_give_take",
    "blocked_delayed_timeout",
    "fig3_fifo_insert",
    "ordering_two_sems",
]


def scenario_for_arch(name: str, arch_id: str) -> dict:
    """Bundled scenario re-targeted at one architecture, with the
    peripheral-masking check forced on for the unmasked architectures."""
    doc = copy.deepcopy(load_bundled(name))
    doc["architecture"] = arch_id
    if arch_id != "baseline":
        inv = doc.setdefault("invariants", [])
        if "zero-peripheral-masking" not in inv:
            inv.append("zero-peripheral-masking")
    return doc


# -- raw sorted-list concurrency harness ------------------------------------


def make_list_run_fn(insert_nodes: Sequence[int],
                     seed_nodes: Sequence[int] = (),
                     mode: ReservationMode = ReservationMode.CLEARED_ON_PREEMPTION,
                     step_bound: int = 400,
                     max_preemptions: int = 4):
    """Replayable run over concurrent sorted inserts plus one head extractor.

    The extractor is marked lowest priority: the Interleaver only advances
    it while no inserter is mid-operation, matching the single-CPU setting
    where every inserter context preempts the extractor context.  In the
    cleared-on-preemption mode every generator switch drops the exclusive
    reservation, as an interrupt entry would.
    """
    all_nodes = sorted(set(seed_nodes) | set(insert_nodes))
    # Valid extractor results: None (ran before any insert with no seed),
    # the seeded minimum, or any inserted node below the seeded minimum.
    valid_got = {None} if not seed_nodes else set()
    if seed_nodes:
        smin = min(seed_nodes)
        valid_got.add(smin)
        valid_got.update(n for n in insert_nodes if n < smin)
    else:
        valid_got.update(insert_nodes)

    def run_fn(prefix: List[int]) -> RunResult:
        m = Machine(mode=mode)
        for n in all_nodes:
            m.mem.alloc(f"n{n}.next", ABSENT)
        lst = LinkedList(m, "bl.head", lambda t: f"n{t}.next", key=lambda t: t)
        sched = Ctx(CtxKind.TASK, 0, 99)
        for n in sorted(seed_nodes):
            lst.masked_insert_sorted(sched, n)
        got: List[Optional[int]] = []

        def extractor():
            r = yield from lst.atomic_extract_head(Ctx(CtxKind.TASK, 5, 98))
            got.append(r)

        gens = [lst.atomic_insert_sorted(Ctx(CtxKind.PERIPHERAL_ISR, i, i), n)
                for i, n in enumerate(insert_nodes)]
        gens.append(extractor())
        il = Interleaver(prefix, step_bound=step_bound,
                         max_preemptions=max_preemptions,
                         low=[len(gens) - 1])
        state = {"prev": None}

        def on_step(picked: int) -> None:
            if state["prev"] is not None and picked != state["prev"]:
                m.mem.on_context_boundary()
            state["prev"] = picked

        try:
            il.run(gens, on_step=on_step)
        except StepBoundExceeded as e:
            return RunResult(il.option_counts, il.choices, 0, [],
                             error=f"step bound: {e}")
        violations: List[str] = []
        try:
            final = lst.to_pylist()
        except AssertionError as e:
            return RunResult(il.option_counts, il.choices, 0, [f"shape: {e}"])
        if final != sorted(final):
            violations.append(f"final list not sorted: {final}")
        taken = got[0] if got else None
        survivors = set(final) | ({taken} if taken is not None else set())
        if survivors != set(all_nodes) or len(final) + (taken is not None) != len(all_nodes):
            violations.append(f"nodes lost or duplicated: got={taken} final={final}")
        if taken not in valid_got:
            violations.append(f"extractor returned {taken}, expected one of {valid_got}")
        return RunResult(il.option_counts, il.choices, 0, violations)

    return run_fn


# -- DMA reconfiguration harness --------------------------------------------


def make_dma_run_fn(handshake: bool, payload: bytes = b"abcdef",
                    step_bound: int = 200, max_preemptions: int = 3):
    """Replayable run interleaving the DMA controller with a CPU that
    reconfigures the ring interrupt; torn-state findings are violations.

    Schedules that starve one side forever (the controller spinning while
    the CPU waits for the paused state, or vice versa) cannot finish; they
    hit the step bound and are reported as truncated, not as violations.
    """

    def run_fn(prefix: List[int]) -> RunResult:
        dc = DmaController(64)
        dc.feed(payload)
        findings: List[str] = []
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

        il = Interleaver(prefix, step_bound=step_bound,
                         max_preemptions=max_preemptions)
        try:
            il.run([controller(), cpu()])
        except StepBoundExceeded as e:
            return RunResult(il.option_counts, il.choices, 0, [],
                             error=f"step bound: {e}")
        return RunResult(il.option_counts, il.choices, 0, list(findings))

    return run_fn


@pytest.fixture
def machine():
    return Machine()
