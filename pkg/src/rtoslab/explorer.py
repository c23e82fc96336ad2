"""Exhaustive interleaving exploration by stateless replay.

A *run function* executes one complete schedule from scratch, steered by a
prefix of recorded choices: at every decision point it follows the prefix
while it lasts and then defaults to option 0, logging how many options
were available.  The explorer enumerates the schedule tree depth-first by
re-running with every untaken alternative appended to the prefix.  Because
each run rebuilds all state, no backtracking support is needed from the
system under test.

Two steering adapters cover the laboratory's needs: ``ScriptedChooser``
injects external interrupt events at machine step boundaries, and
``Interleaver`` picks which of several live generators advances next (for
raw data-structure concurrency runs).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence

from .machine import Machine, StepBoundExceeded


@dataclass
class RunResult:
    """Outcome of one schedule."""

    option_counts: List[int] = field(default_factory=list)
    choices: List[int] = field(default_factory=list)
    steps: int = 0
    violations: List[str] = field(default_factory=list)
    error: Optional[str] = None
    detail: object = None


@dataclass
class Trace:
    choices: List[int]
    violations: List[str]
    error: Optional[str] = None


@dataclass
class ExplorationReport:
    schedules: int = 0
    violations: List[Trace] = field(default_factory=list)
    errors: List[Trace] = field(default_factory=list)
    step_bound_hits: int = 0
    max_steps: int = 0
    duration_s: float = 0.0
    truncated: bool = False

    @property
    def violation_count(self) -> int:
        return len(self.violations)

    def to_dict(self) -> Dict:
        return {
            "schedules": self.schedules,
            "violationCount": self.violation_count,
            "violations": [
                {"choices": t.choices, "violations": t.violations} for t in self.violations
            ],
            "errors": [
                {"choices": t.choices, "error": t.error} for t in self.errors
            ],
            "stepBoundHits": self.step_bound_hits,
            "maxSteps": self.max_steps,
            "durationSeconds": self.duration_s,
            "truncated": self.truncated,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), indent=2, **kw)


def explore(run_fn: Callable[[List[int]], RunResult],
            max_schedules: Optional[int] = None) -> ExplorationReport:
    """Enumerate every schedule reachable through the run function's
    decision points.  ``max_schedules`` truncates the search (reported)."""
    report = ExplorationReport()
    t0 = time.monotonic()
    stack: List[List[int]] = [[]]
    while stack:
        if max_schedules is not None and report.schedules >= max_schedules:
            report.truncated = True
            break
        prefix = stack.pop()
        res = run_fn(prefix)
        report.schedules += 1
        report.max_steps = max(report.max_steps, res.steps)
        if res.error is not None:
            if "step bound" in res.error:
                report.step_bound_hits += 1
            report.errors.append(Trace(res.choices, res.violations, res.error))
        if res.violations:
            report.violations.append(Trace(res.choices, list(res.violations)))
        # Deepest decision pushed first so the earliest untaken alternative
        # is popped next: truncated searches still cover early divergences.
        for i in reversed(range(len(prefix), len(res.option_counts))):
            base = res.choices[:i]
            for alt in range(res.option_counts[i] - 1, 0, -1):
                if alt != res.choices[i]:
                    stack.append(base + [alt])
    report.duration_s = time.monotonic() - t0
    return report


def replay(run_fn: Callable[[List[int]], RunResult], choices: Sequence[int]) -> RunResult:
    """Re-execute one schedule from its recorded choice list."""
    return run_fn(list(choices))


class ScriptedChooser:
    """Steers external event injection at machine boundaries.

    At every boundary with at least one enabled event the options are
    [inject nothing] + one per enabled event; when the machine is idle the
    no-injection option disappears (idling forever is not a schedule).
    """

    def __init__(self, events: Sequence, prefix: Sequence[int]):
        self.events = list(events)
        self.prefix = list(prefix)
        self.option_counts: List[int] = []
        self.choices: List[int] = []

    def _enabled(self, m: Machine) -> List:
        return [e for e in self.events if e.enabled(m, self.events)]

    def has_enabled(self, m: Machine) -> bool:
        return bool(self._enabled(m))

    def choose(self, m: Machine, forced: bool = False):
        enabled = self._enabled(m)
        if not enabled:
            return None
        options = enabled if forced else [None] + enabled
        i = len(self.choices)
        choice = self.prefix[i] if i < len(self.prefix) else 0
        self.option_counts.append(len(options))
        self.choices.append(choice)
        picked = options[choice]
        if picked is not None:
            picked.fire(m)
        return picked


class Interleaver:
    """Runs several generators to completion, choosing the next to advance
    at every step; used for raw lock-free structure exploration.

    ``max_preemptions`` bounds how often a still-live generator may be
    switched away from.  Retry loops in lock-free code make the unbounded
    schedule tree infinite (an adversarial scheduler can fail a reservation
    forever); with a finite budget every explored schedule terminates,
    because the last generator eventually runs in isolation.  Switching
    away from a finished generator is free.
    """

    def __init__(self, prefix: Sequence[int], step_bound: int = 2000,
                 max_preemptions: Optional[int] = None,
                 low: Sequence[int] = ()):
        self.prefix = list(prefix)
        self.option_counts: List[int] = []
        self.choices: List[int] = []
        self.step_bound = step_bound
        self.max_preemptions = max_preemptions
        #: indices of lowest-priority generators: on a single CPU they are
        #: preempted by everything else, so they only advance while no other
        #: generator is mid-operation.
        self.low = set(low)

    def run(self, gens: Sequence[Iterator],
            on_step: Optional[Callable[[int], None]] = None) -> None:
        live = {i: g for i, g in enumerate(gens)}
        started: set = set()
        steps = 0
        last: Optional[int] = None
        preemptions = 0
        while live:
            budget = (self.max_preemptions is None
                      or preemptions < self.max_preemptions)
            if not budget and last in live:
                picked = last
            else:
                high_busy = any(i in started for i in live if i not in self.low)
                idx_list = sorted(i for i in live
                                  if not (high_busy and i in self.low))
                i = len(self.choices)
                choice = self.prefix[i] if i < len(self.prefix) else 0
                self.option_counts.append(len(idx_list))
                self.choices.append(choice)
                picked = idx_list[choice]
            if last is not None and picked != last and last in live:
                preemptions += 1
            started.add(picked)
            try:
                next(live[picked])
            except StopIteration:
                del live[picked]
            last = picked
            if on_step is not None:
                on_step(picked)
            steps += 1
            if steps > self.step_bound:
                raise StepBoundExceeded(f"exceeded step bound {self.step_bound}")
