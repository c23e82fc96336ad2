"""Scenario files: schema validation, kernel construction, run functions.

A scenario is a JSON document (versioned schema in ``schema/``) naming the
tasks, semaphores, ISRs, injectable events and the invariants to check.
From one scenario this module builds either a single deterministic run
(events fired as early as possible) or a replayable run function for the
interleaving explorer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import jsonschema

# Importing the architecture modules populates the registry.
from . import atomic_arch, barriers, baseline, defer  # noqa: F401
from .architecture import make_architecture
from .explorer import RunResult, ScriptedChooser
from .invariants import check_all
from .kernel import SCHED_CTX, Kernel, Task
from .machine import Ctx, Machine, ConfigError, SimFault, StepBoundExceeded

DEFAULT_STEP_BOUND = 60


def _schema() -> dict:
    text = resources.files("rtoslab").joinpath("schema/scenario-v1.json").read_text()
    return json.loads(text)


def validate_scenario(doc: dict) -> None:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as e:
        raise ConfigError(f"scenario schema violation: {e.message}") from None
    names = [t["name"] for t in doc.get("tasks", [])]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate task names")
    sem_names = {s["name"] for s in doc.get("semaphores", [])}
    for t in doc.get("tasks", []):
        for op in t["script"]:
            if op["op"] in ("take", "give") and op.get("sem") not in sem_names:
                raise ConfigError(f"task {t['name']} references unknown semaphore")
    isr_indexes = {i["index"] for i in doc.get("isrs", [])}
    for i in doc.get("isrs", []):
        if i["gives"] not in sem_names:
            raise ConfigError(f"ISR {i['index']} gives unknown semaphore")
    event_names = set()
    for e in doc.get("events", []):
        if e["isr"] not in isr_indexes:
            raise ConfigError(f"event {e['name']} targets unknown ISR {e['isr']}")
        event_names.add(e["name"])
    for e in doc.get("events", []):
        for dep in e.get("after", []):
            if dep not in event_names:
                raise ConfigError(f"event {e['name']} depends on unknown event {dep!r}")


def load_scenario(path) -> dict:
    doc = json.loads(Path(path).read_text())
    validate_scenario(doc)
    return doc


def bundled_scenario_names() -> List[str]:
    root = resources.files("rtoslab").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> dict:
    text = resources.files("rtoslab").joinpath(f"scenarios/{name}.json").read_text()
    doc = json.loads(text)
    validate_scenario(doc)
    return doc


@dataclass
class Event:
    """An injectable external stimulus: raising one peripheral interrupt."""

    name: str
    isr_index: int
    after: List[str] = field(default_factory=list)
    when_swi_idle: bool = False
    count: int = 1
    fired: int = 0

    def completed(self, m: Machine) -> bool:
        return self.fired >= self.count and not m.peripheral_busy(self.isr_index)

    def enabled(self, m: Machine, events: Sequence["Event"]) -> bool:
        if self.fired >= self.count:
            return False
        if m.peripheral_busy(self.isr_index):
            return False
        by_name = {e.name: e for e in events}
        if any(not by_name[a].completed(m) for a in self.after):
            return False
        if self.when_swi_idle and (m.swi_pending or m.swi_active):
            return False
        return True

    def fire(self, m: Machine) -> None:
        self.fired += 1
        m.raise_peripheral(self.isr_index)


class EagerChooser:
    """Deterministic steering: fire every enabled event immediately.

    Used for single-run scenario execution and for cross-architecture
    order comparison, where one canonical schedule is wanted.
    """

    def __init__(self, events: Sequence[Event]):
        self.events = list(events)
        self.option_counts: List[int] = []
        self.choices: List[int] = []

    def _enabled(self, m: Machine) -> List[Event]:
        return [e for e in self.events if e.enabled(m, self.events)]

    def has_enabled(self, m: Machine) -> bool:
        return bool(self._enabled(m))

    def choose(self, m: Machine, forced: bool = False) -> Optional[Event]:
        enabled = self._enabled(m)
        if not enabled:
            return None
        enabled[0].fire(m)
        return enabled[0]


def _script_gen(k: Kernel, task: Task, ops: List[dict]):
    def gen():
        for op in ops:
            if op["op"] == "take":
                yield from k.sem_take(task, k.sems[op["sem"]], op.get("timeout"))
            elif op["op"] == "give":
                yield from k.sem_give(task, k.sems[op["sem"]])
            else:
                yield from k.compute(op.get("steps", 1))
    return gen()


def build_kernel(doc: dict, arch_id: Optional[str] = None,
                 cost_model: Optional[Dict[str, int]] = None,
                 step_bound: Optional[int] = None) -> Tuple[Machine, Kernel, List[Event]]:
    """Instantiate machine, kernel, tasks, semaphores, ISRs and events."""
    arch_id = arch_id or doc.get("architecture", "baseline")
    config = dict(doc.get("config", {}))
    cm = dict(doc.get("costModel", {}))
    if cost_model:
        cm.update(cost_model)
    m = Machine(
        cost_model=cm,
        tick_quantum=doc.get("tickQuantum"),
        step_bound=step_bound or doc.get("stepBound", DEFAULT_STEP_BOUND),
    )
    arch = make_architecture(arch_id, config)
    rl = doc.get("readyList", {})
    k = Kernel(m, arch, ready_variant=rl.get("variant", "sorted"),
               k_tails=rl.get("kTails", 1), config=config)
    for s in doc.get("semaphores", []):
        k.create_semaphore(s["name"], s["maxCount"], s.get("initial", 0),
                           s.get("isrReleased", False))
    for t in doc["tasks"]:
        ops = t["script"]
        k.create_task(t["name"], t["priority"],
                      script=lambda kk, task, ops=ops: _script_gen(kk, task, ops))
    for i in doc.get("isrs", []):
        sem = k.sems[i["gives"]]
        m.register_isr(i["index"], i["priority"],
                       lambda mm, ctx, s=sem: k.isr_give(ctx, s))
    events = [Event(e["name"], e["isr"], list(e.get("after", [])),
                    e.get("whenSwiIdle", False), e.get("count", 1))
              for e in doc.get("events", [])]
    return m, k, events


def _finish(m: Machine, k: Kernel, doc: dict, chooser) -> RunResult:
    violations: List[str] = []
    error = None
    try:
        k.start()
        m.run(SCHED_CTX, k.world())
        m.ledger.finalize()
        violations = check_all(k, doc.get("invariants"))
    except StepBoundExceeded as e:
        error = f"step bound: {e}"
    except (SimFault, AssertionError) as e:
        violations = [f"fault: {type(e).__name__}: {e}"]
    return RunResult(
        option_counts=list(chooser.option_counts),
        choices=list(chooser.choices),
        steps=m.steps,
        violations=violations,
        error=error,
        detail=(m, k),
    )


def make_run_fn(doc: dict, arch_id: Optional[str] = None,
                cost_model: Optional[Dict[str, int]] = None,
                step_bound: Optional[int] = None):
    """Replayable run function over the scenario's injectable events."""
    def run_fn(prefix: List[int]) -> RunResult:
        m, k, events = build_kernel(doc, arch_id, cost_model, step_bound)
        chooser = ScriptedChooser(events, prefix)
        m.chooser = chooser
        return _finish(m, k, doc, chooser)
    return run_fn


def run_once(doc: dict, arch_id: Optional[str] = None,
             cost_model: Optional[Dict[str, int]] = None,
             step_bound: Optional[int] = None) -> RunResult:
    """One canonical deterministic run with eager event injection."""
    m, k, events = build_kernel(doc, arch_id, cost_model, step_bound)
    chooser = EagerChooser(events)
    m.chooser = chooser
    return _finish(m, k, doc, chooser)
