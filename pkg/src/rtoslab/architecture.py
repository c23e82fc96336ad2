"""Architecture interface and registry.

An architecture object supplies the semaphore give/take paths, the SWI and
SysTick handlers, and the timeout extraction path.  All of them are
generators over the machine's primitive-step protocol.
"""

from __future__ import annotations

from typing import Dict, Iterator, Optional

from .kernel import Kernel, Outcome, Semaphore, Task, TaskState
from .machine import ConfigError, Ctx


class Architecture:
    id: str = "?"
    #: True when ready-list mutation uses the atomic insertion algorithm
    #: (sorted variant); the unsorted variant is always atomic.
    atomic_ready_list = False

    def configure(self, k: Kernel) -> None:
        pass

    def on_create_semaphore(self, k: Kernel, sem: Semaphore) -> None:
        pass

    def give_from_isr(self, k: Kernel, ctx: Ctx, sem: Semaphore) -> Iterator:
        raise NotImplementedError

    def give_from_task(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        raise NotImplementedError

    def take(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
             timeout: Optional[int] = None) -> Iterator:
        raise NotImplementedError

    def swi_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        raise NotImplementedError

    def systick_handler(self, k: Kernel, ctx: Ctx) -> Iterator:
        raise NotImplementedError

    def blocked_remove(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore) -> Iterator:
        """Timeout path: remove a BlockedDelayed task from its blocked list.
        Returns True when this context performed the removal."""
        raise NotImplementedError

    def service_pending(self, k: Kernel) -> bool:
        """True when deferred work awaits the next scheduler pass; the idle
        scheduler asserts the SWI for it instead of sleeping."""
        return False

    # -- shared pieces -----------------------------------------------------

    def _block_bookkeeping(self, k: Kernel, ctx: Ctx, task: Task, sem: Semaphore,
                           timeout: Optional[int]) -> None:
        task.blocked_on = sem
        if timeout is not None:
            task.deadline = k.m.ledger.now + timeout
            task.state = TaskState.BLOCKED_DELAYED
            k.delayed.masked_insert_sorted(ctx, task.tid)
        else:
            task.state = TaskState.BLOCKED

    def _expire_timeouts(self, k: Kernel, ctx: Ctx) -> Iterator:
        for task in k.expired_delayed():
            sem = task.blocked_on
            if task.state is TaskState.BLOCKED_DELAYED and sem is not None:
                removed = yield from self.blocked_remove(k, ctx, task, sem)
                if removed:
                    yield from k.ready_task(ctx, task, sem, Outcome.TIMED_OUT)
            elif task.state is TaskState.DELAYED:
                yield from k.ready_task(ctx, task, None, Outcome.TIMED_OUT)


_REGISTRY: Dict[str, type] = {}


def register_architecture(cls) -> type:
    _REGISTRY[cls.id] = cls
    return cls


def make_architecture(arch_id: str, config: Optional[Dict[str, int]] = None) -> Architecture:
    try:
        cls = _REGISTRY[arch_id]
    except KeyError:
        raise ConfigError(f"unknown architecture id {arch_id!r}") from None
    return cls(config or {})


def architecture_ids():
    return sorted(_REGISTRY)
