"""Deterministic RTOS simulation laboratory.

A cycle-accounting abstract machine hosts a classic semaphore kernel and
three alternative architectures whose interrupt handlers never mask
peripheral interrupts.  An exhaustive interleaving explorer, a cycle-cost
benchmark harness, and models of two hardware-side mitigations (GPIO
priority escape, pause-capable DMA) round out the toolbox.
"""

from .architecture import Architecture, architecture_ids, make_architecture
from .explorer import (ExplorationReport, Interleaver, RunResult,
                       ScriptedChooser, explore, replay)
from .invariants import check_all, invariant_names
from .kernel import Kernel, Outcome, Semaphore, Task, TaskState
from .lists import ABSENT, LinkedList, UnsortedReadyList
from .machine import (DEFAULT_COST_MODEL, AtomicMemory, ConfigError, Ctx,
                      CtxKind, CycleLedger, Machine, MaskLevel,
                      ReservationMode, SimFault, StepBoundExceeded)
from .scenario import (EagerChooser, Event, build_kernel, load_bundled,
                       load_scenario, make_run_fn, run_once,
                       bundled_scenario_names, validate_scenario)

__version__ = "0.1.0"

__all__ = [
    "ABSENT", "Architecture", "AtomicMemory", "ConfigError", "Ctx", "CtxKind",
    "CycleLedger", "DEFAULT_COST_MODEL", "EagerChooser", "Event",
    "ExplorationReport", "Interleaver", "Kernel", "LinkedList", "Machine",
    "MaskLevel", "Outcome", "ReservationMode", "RunResult", "ScriptedChooser",
    "Semaphore", "SimFault", "StepBoundExceeded", "Task", "TaskState",
    "UnsortedReadyList", "architecture_ids", "build_kernel",
    "bundled_scenario_names", "check_all", "explore", "invariant_names",
    "load_bundled", "load_scenario", "make_architecture", "make_run_fn",
    "replay", "run_once", "validate_scenario",
]
