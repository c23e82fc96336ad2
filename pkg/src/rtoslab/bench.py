"""Cycle-cost benchmarks: masked-interval sweeps, ready-list pathology,
memory footprints, SysTick expiry cost and unblock-latency probes.

Everything here is exact: the simulator is deterministic, so curves are
closed-form checkable and repeated runs are byte-identical.  Results go
out as CSV (curves), JSON (raw numbers) and a Markdown comparison table.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .architecture import make_architecture
from .kernel import SCHED_CTX, Kernel, TaskState
from .lists import LinkedList, UnsortedReadyList
from .machine import Ctx, CtxKind, Machine, MaskLevel

ISR_CTX = Ctx(CtxKind.PERIPHERAL_ISR, 10, 0)


def _fingerprint(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# -- masked interval sweep --------------------------------------------------

def _kernel_with_blocked_waiter(arch_id: str, n: int,
                                cost_model: Optional[Dict[str, int]] = None,
                                ready_variant: str = "sorted", k_tails: int = 1):
    """n-task stand: one task blocked on an ISR semaphore plus n-1 ready
    tasks of the same priority, so the unblock insert walks n-1 links."""
    m = Machine(cost_model=cost_model)
    arch = make_architecture(arch_id, {})
    k = Kernel(m, arch, ready_variant=ready_variant, k_tails=k_tails)
    sem = k.create_semaphore("s", max_count=10, isr_released=True)
    waiter = k.create_task("w", priority=5)
    for i in range(n - 1):
        t = k.create_task(f"f{i}", priority=5)
        for _ in k.rl_insert(SCHED_CTX, t.tid):
            pass
    waiter.state = TaskState.BLOCKED
    waiter.blocked_on = sem
    k.blocked_list(sem).masked_insert_sorted(SCHED_CTX, waiter.tid)
    return m, k, sem


def masked_interval_sweep(arch_id: str, n_values: Sequence[int],
                          cost_model: Optional[Dict[str, int]] = None,
                          ready_variant: str = "sorted",
                          k_tails: int = 1) -> List[Dict]:
    """Max peripheral-masked cycles of one ISR give, per task count."""
    rows = []
    for n in n_values:
        m, k, sem = _kernel_with_blocked_waiter(arch_id, n, cost_model,
                                                ready_variant, k_tails)
        m.execute(k.arch.give_from_isr(k, ISR_CTX, sem))
        m.ledger.finalize()
        c0 = m.ledger.cost_of("isr_body")
        loop = m.ledger.cost_of("loop_iter")
        rows.append({
            "n": n,
            "maxMaskedCycles": m.ledger.max_masked(MaskLevel.PERIPHERAL),
            "predictedBaseline": c0 + loop * (n - 1),
        })
    return rows


# -- ready list pathology ---------------------------------------------------

def ready_list_pathology(variant: str, n: int, k_tails: int = 1) -> Dict:
    """Traversal cycles of readying n tasks, highest priority first then the
    rest in descending priority, plus (unsorted) one extract-min scan."""
    m = Machine()
    prios = {tid: tid - 1 for tid in range(1, n + 1)}  # tid 1 is highest
    if variant == "sorted":
        lst = LinkedList(m, "rl.head", lambda t: f"n{t}", prios.__getitem__)
        for tid in prios:
            m.mem.alloc(f"n{tid}", 0)
        before = m.ledger.kind_cycles.get("loop_iter", 0)
        for tid in range(1, n + 1):
            lst.masked_insert_sorted(SCHED_CTX, tid)
        total = m.ledger.kind_cycles.get("loop_iter", 0) - before
    elif variant == "unsorted":
        lst = UnsortedReadyList(m, "rl", prios.__getitem__, k=k_tails)
        for tid in range(1, n + 1):
            m.execute(lst.atomic_insert(SCHED_CTX, tid))
        before = m.ledger.kind_cycles.get("loop_iter", 0)
        head = m.execute(lst.atomic_extract_min(SCHED_CTX))
        assert head == 1, "extract-min must return the highest-priority task"
        total = m.ledger.kind_cycles.get("loop_iter", 0) - before
    else:
        raise ValueError(f"unknown ready list variant {variant!r}")
    mm = n - 1
    loop = m.ledger.cost_of("loop_iter")
    return {
        "variant": variant,
        "n": n,
        "traversalCycles": total,
        "predictedSorted": loop * (mm * mm + mm) // 2,
        "predictedUnsorted": loop * mm,
    }


# -- memory footprint -------------------------------------------------------

#: Table axes: unblock latency class and whether capacity is compile-time.
_ARCH_AXES = {
    "baseline": ("direct under full mask", False),
    "defer-semcounts": ("conditional SWI hop", True),
    "defer-semfifo": ("SWI hop (latency doubled)", True),
    "defer-linkedlist": ("SWI hop (latency doubled)", False),
    "defer-bitmap": ("SWI hop (latency doubled)", True),
    "barriers": ("inline in the releasing ISR", False),
    "strictly-atomic": ("inline in the releasing ISR", False),
}


def memory_footprint(arch_id: str, config: Dict[str, int]) -> Dict:
    """Closed-form extra RAM versus the classic kernel (32-bit words).

    Per-semaphore fields count 2 bytes for an unblock/barrier counter and
    4 for a reference; the strictly atomic kernel's singly linked task
    links drop one 4-byte word per task from the doubly-linked baseline.
    """
    isr_sems = config.get("isrSemaphores", 0)
    tasks = config.get("tasks", 0)
    if arch_id == "defer-semcounts":
        n = config.get("NUM_ISR_SEMPHR_COUNTS", 16)
        total = 4 * n
        parts = {"ring": 4 * n}
    elif arch_id == "defer-semfifo":
        n = config.get("NUM_ISR_SMPHRS", 8)
        total = 4 * n + 2 * isr_sems
        parts = {"ring": 4 * n, "unblockCounts": 2 * isr_sems}
    elif arch_id == "defer-linkedlist":
        total = 6 * isr_sems
        parts = {"deferNext": 4 * isr_sems, "unblockCounts": 2 * isr_sems}
    elif arch_id == "defer-bitmap":
        total = 4 + 2 * isr_sems
        parts = {"bitmapWord": 4, "unblockCounts": 2 * isr_sems}
    elif arch_id == "barriers":
        total = 2 * isr_sems
        parts = {"barrierAndUnblockCounts": 2 * isr_sems}
    elif arch_id == "strictly-atomic":
        total = -4 * tasks
        parts = {"singleVsDoubleLinks": -4 * tasks}
    elif arch_id == "baseline":
        total = 0
        parts = {}
    else:
        raise ValueError(f"no footprint model for {arch_id!r}")
    latency, static_capacity = _ARCH_AXES[arch_id]
    return {
        "architecture": arch_id,
        "totalBytes": total,
        "parts": parts,
        "latencyClass": latency,
        "staticCapacity": static_capacity,
        "config": dict(config),
    }


# -- strictly-atomic SysTick expiry cost ------------------------------------

def systick_expiry_cost(n: int = 16,
                        cost_model: Optional[Dict[str, int]] = None) -> Dict:
    """Worst-case expiry sweep: n BlockedDelayed tasks time out in the same
    tick and each lock-free blocked-list removal walks to its position.

    The delayed (expiry) order is the reverse of the blocked order, so the
    removals visit n, n-1, ..., 1 nodes: 8·(n²+n)/2 cycles of traversal."""
    m = Machine(cost_model=cost_model)
    arch = make_architecture("strictly-atomic", {})
    k = Kernel(m, arch)
    sem = k.create_semaphore("s", max_count=n, isr_released=True)
    for i in range(1, n + 1):
        t = k.create_task(f"t{i}", priority=n + 1 - i)
        t.state = TaskState.BLOCKED_DELAYED
        t.blocked_on = sem
        t.deadline = 100
        k.blocked_list(sem).masked_insert_sorted(SCHED_CTX, t.tid)
        k.delayed.masked_insert_sorted(SCHED_CTX, t.tid)
    if m.ledger.now < 100:
        m.ledger.advance(100 - m.ledger.now)
    before = m.tallies.get("remove_iter", 0)
    m.execute(arch.systick_handler(k, Ctx(CtxKind.SYSTICK_IRQ, 0)))
    iters = m.tallies.get("remove_iter", 0) - before
    loop = m.ledger.cost_of("loop_iter")
    return {
        "n": n,
        "removalIterations": iters,
        "removalCycles": iters * loop,
        "predicted": loop * (n * n + n) // 2,
    }


# -- unblock latency probe --------------------------------------------------

class _WaiterBlockedTrigger:
    """Chooser that raises ISR 0 once, as soon as the waiter has parked
    in the blocked list and been switched out."""

    def __init__(self, k: Kernel, sem, waiter):
        self.k = k
        self.sem = sem
        self.waiter = waiter
        self.fired_at: Optional[int] = None

    def _ready_to_fire(self, m: Machine) -> bool:
        return (self.fired_at is None
                and not self.k.blocked_list(self.sem).empty()
                and self.waiter.waiting
                and self.k.current is not self.waiter)

    def has_enabled(self, m: Machine) -> bool:
        return self._ready_to_fire(m)

    def choose(self, m: Machine, forced: bool = False):
        if not self._ready_to_fire(m):
            return None
        self.fired_at = m.ledger.now
        m.raise_peripheral(0)
        return self


def latency_probe(arch_id: str,
                  cost_model: Optional[Dict[str, int]] = None) -> Dict:
    """Give-to-ready and give-to-dispatch cycles for one high-priority
    unblock, including how many interrupt entries the unblock needed."""
    m = Machine(cost_model=cost_model)
    arch = make_architecture(arch_id, {})
    k = Kernel(m, arch)
    sem = k.create_semaphore("s", max_count=1, isr_released=True)

    def hi_script(kk, task):
        def gen():
            yield from kk.sem_take(task, sem)
        return gen()

    def lo_script(kk, task):
        def gen():
            yield from kk.compute(200)
        return gen()

    hi = k.create_task("hi", priority=1, script=hi_script)
    k.create_task("lo", priority=9, script=lo_script)
    m.register_isr(0, 10, lambda mm, ctx: k.isr_give(ctx, sem))
    trigger = _WaiterBlockedTrigger(k, sem, hi)
    m.chooser = trigger
    probe = {"t_ready": None, "t_dispatch": None, "entries": None, "entries_at_fire": None}

    def on_frame(kind, ctx):
        if trigger.fired_at is not None and probe["entries_at_fire"] is None:
            probe["entries_at_fire"] = m.irq_entries - 1  # current entry counts

    def on_boundary(mm):
        if trigger.fired_at is None:
            return
        if probe["t_ready"] is None and k.readied_log:
            probe["t_ready"] = mm.ledger.now
            probe["entries"] = mm.irq_entries - probe["entries_at_fire"]
        if probe["t_dispatch"] is None and k.current is hi:
            probe["t_dispatch"] = mm.ledger.now

    m.on_frame_event = on_frame
    m.boundary_hook = on_boundary
    k.start()
    m.run(SCHED_CTX, k.world())
    m.ledger.finalize()
    return {
        "architecture": arch_id,
        "irqEntriesToReady": probe["entries"],
        "giveToReadyCycles": probe["t_ready"] - trigger.fired_at,
        "giveToDispatchCycles": probe["t_dispatch"] - trigger.fired_at,
    }


# -- report writers ---------------------------------------------------------

def write_sweep(out_dir, arch_id: str, sweep: str, rows: List[Dict],
                meta: Optional[Dict] = None) -> Path:
    """Emit <out>/bench/<arch>/<sweep>.csv and .json; returns the directory."""
    d = Path(out_dir) / "bench" / arch_id
    d.mkdir(parents=True, exist_ok=True)
    payload = {"sweep": sweep, "architecture": arch_id, "rows": rows,
               "meta": meta or {}, "fingerprint": _fingerprint(rows)}
    (d / f"{sweep}.json").write_text(json.dumps(payload, indent=2) + "\n")
    if rows:
        with open(d / f"{sweep}.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return d


def write_report(out_dir, configs: Sequence[Dict[str, int]]) -> Path:
    """Markdown comparison table over the footprint/latency axes."""
    d = Path(out_dir) / "bench"
    d.mkdir(parents=True, exist_ok=True)
    lines = ["# Architecture comparison", ""]
    for cfg in configs:
        lines.append(f"## Config {json.dumps(cfg, sort_keys=True)}")
        lines.append("")
        lines.append("| architecture | extra bytes | unblock latency | static capacity |")
        lines.append("|---|---|---|---|")
        for arch_id in sorted(_ARCH_AXES):
            fp = memory_footprint(arch_id, cfg)
            lines.append(f"| {arch_id} | {fp['totalBytes']} | {fp['latencyClass']} "
                         f"| {'yes' if fp['staticCapacity'] else 'no'} |")
        lines.append("")
    path = d / "report.md"
    path.write_text("\n".join(lines))
    return path
