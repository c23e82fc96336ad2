"""End-of-run invariant checks over a quiescent kernel.

Each check receives the kernel after its machine has gone quiescent and
returns a list of violation strings (empty when the invariant holds).
Checks are registered by name so scenarios can select them; ``check_all``
runs a selection (or every registered check) and prefixes each finding
with the check's name.
"""

from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence

from .kernel import Kernel, TaskState
from .machine import MaskLevel

_CHECKS: Dict[str, Callable[[Kernel], List[str]]] = {}


def invariant(name: str):
    def deco(fn):
        _CHECKS[name] = fn
        return fn
    return deco


def invariant_names() -> List[str]:
    return sorted(_CHECKS)


def check_all(k: Kernel, names: Optional[Sequence[str]] = None) -> List[str]:
    out: List[str] = []
    for name in (names if names is not None else invariant_names()):
        if name not in _CHECKS:
            raise KeyError(f"unknown invariant {name!r}")
        out.extend(f"{name}: {msg}" for msg in _CHECKS[name](k))
    return out


def _user_sems(k: Kernel):
    return [s for s in k.sems.values() if not s.name.startswith("_")]


@invariant("zero-peripheral-masking")
def _zero_peripheral_masking(k: Kernel) -> List[str]:
    cycles = k.m.ledger.total_masked(MaskLevel.PERIPHERAL)
    if cycles:
        return [f"peripheral interrupts were masked for {cycles} cycles"]
    return []


@invariant("conservation")
def _conservation(k: Kernel) -> List[str]:
    out = []
    for s in _user_sems(k):
        count = k.m.mem.read(s.count_cell)
        if s.initial + s.gives != count + s.unblocks + s.dec_takes:
            out.append(
                f"{s.name}: initial {s.initial} + gives {s.gives} != "
                f"count {count} + unblocks {s.unblocks} + takes {s.dec_takes}")
    return out


@invariant("no-lost-wakeup")
def _no_lost_wakeup(k: Kernel) -> List[str]:
    m = k.m
    out = []
    ds = getattr(k.arch, "ds", None)
    service_pending = m.swi_pending or m.systick_pending or bool(m.pending_peripheral)
    if ds is not None and not ds.is_empty():
        service_pending = True
    if service_pending:
        return []  # not quiescent enough to judge
    for s in _user_sems(k):
        count = k.m.mem.read(s.count_cell)
        waiters = k.blocked_list(s).to_pylist()
        if count > 0 and waiters:
            out.append(f"{s.name}: count {count} with waiters {waiters} and no pending service")
    return out


@invariant("ready-order-chronological")
def _ready_order(k: Kernel) -> List[str]:
    out = []
    log = k.readied_log
    for i in range(len(log)):
        for j in range(i + 1, len(log)):
            ti, pi, si = log[i]
            tj, pj, sj = log[j]
            if pi == pj and si is not None and sj is not None and si >= sj:
                out.append(
                    f"task {ti} (give #{si}) readied before task {tj} (give #{sj}) "
                    f"at equal priority {pi}")
    return out


@invariant("list-well-formed")
def _list_well_formed(k: Kernel) -> List[str]:
    out = []
    try:
        rl = k.rl_members()
        if k.rl_sorted is not None:
            keys = [k.tasks[t].priority for t in rl]
            if keys != sorted(keys):
                out.append(f"ready list keys out of order: {keys}")
    except AssertionError as e:
        out.append(f"ready list: {e}")
    try:
        dl = k.delayed.to_pylist()
        keys = [k.tasks[t].deadline or 0 for t in dl]
        if keys != sorted(keys):
            out.append(f"delayed list deadlines out of order: {keys}")
    except AssertionError as e:
        out.append(f"delayed list: {e}")
    for s in _user_sems(k):
        try:
            bl = k.blocked_list(s).to_pylist()
            keys = [k.tasks[t].priority for t in bl]
            if keys != sorted(keys):
                out.append(f"{s.name} blocked list keys out of order: {keys}")
        except AssertionError as e:
            out.append(f"{s.name} blocked list: {e}")
    return out


@invariant("state-deduction")
def _state_deduction(k: Kernel) -> List[str]:
    from .atomic_arch import deduce_state
    out = []
    for t in k.tasks.values():
        if t.in_op:
            continue  # mid-call states are deliberately transient
        deduced = deduce_state(k, t)
        actual = t.state
        if actual is TaskState.RUNNING and k.current is t:
            continue
        if deduced is not actual:
            out.append(f"task {t.name}: recorded {actual.value}, deduced {deduced.value}")
    return out


@invariant("all-tasks-complete")
def _all_tasks_complete(k: Kernel) -> List[str]:
    stuck = [t.name for t in k.tasks.values()
             if t.gen is not None and t.state is not TaskState.DONE]
    if stuck:
        return [f"tasks never finished: {stuck}"]
    return []
