"""Singly linked list primitives over atomic memory cells.

Link encoding, shared by every list in the laboratory:

* ``0``        -- absent: the node is in no list (and signals concurrent
                  inserters that a node was extracted under them);
* ``node``     -- a link equal to the node itself marks the end of the list;
* otherwise    -- the next node in the list.

Node ids are positive ints.  Each list is a head cell plus a per-node next
cell; the priority of a node comes from a callback so the same machinery
serves blocked lists, ready lists and the delayed list.

Two families of operations are provided.  The ``masked_*`` family performs
plain reads/writes and never yields: callers run it under an interrupt mask
and only traversal cost (``loop_iter``) is charged.  The ``atomic_*``
family yields at every primitive step and uses exclusive/compare-exchange
accesses, so the explorer can preempt it anywhere.
"""

from __future__ import annotations

from typing import Callable, Iterator, List, Optional

from .machine import Ctx, Machine

ABSENT = 0


class LinkedList:
    def __init__(self, m: Machine, head_cell: str, next_cell: Callable[[int], str],
                 key: Callable[[int], int]):
        self.m = m
        self.head_cell = head_cell
        self.next_cell = next_cell
        self.key = key
        if head_cell not in m.mem.cells:
            m.mem.alloc(head_cell, ABSENT)

    # -- inspection (test/invariant helpers, zero cost) -------------------

    def to_pylist(self, limit: int = 1000) -> List[int]:
        out: List[int] = []
        node = self.m.mem.read(self.head_cell)
        while node != ABSENT:
            if node in out or len(out) > limit:
                raise AssertionError(f"cycle in list {self.head_cell}: {out + [node]}")
            out.append(node)
            nxt = self.m.mem.read(self.next_cell(node))
            if nxt == node:
                break
            if nxt == ABSENT:
                raise AssertionError(f"absent link inside list {self.head_cell} at {node}")
            node = nxt
        return out

    def contains(self, node: int) -> bool:
        return node in self.to_pylist()

    def empty(self) -> bool:
        return self.m.mem.read(self.head_cell) == ABSENT

    def peek_head(self) -> Optional[int]:
        h = self.m.mem.read(self.head_cell)
        return h if h != ABSENT else None

    # -- masked (plain) operations ----------------------------------------

    def masked_insert_sorted(self, ctx: Ctx, node: int) -> int:
        """Sorted insert, FIFO among equal keys.  Returns loop iterations."""
        mem = self.m.mem
        h = mem.read(self.head_cell)
        if h == ABSENT or self.key(node) < self.key(h):
            mem.write(ctx, self.next_cell(node), h if h != ABSENT else node)
            mem.write(ctx, self.head_cell, node)
            return 0
        cur = h
        iters = 0
        while True:
            iters += 1
            self.m.cost("loop_iter")
            nxt = mem.read(self.next_cell(cur))
            if nxt == cur:
                mem.write(ctx, self.next_cell(node), node)
                mem.write(ctx, self.next_cell(cur), node)
                return iters
            if self.key(nxt) <= self.key(node):
                cur = nxt
                continue
            mem.write(ctx, self.next_cell(node), nxt)
            mem.write(ctx, self.next_cell(cur), node)
            return iters

    def masked_extract_head(self, ctx: Ctx) -> Optional[int]:
        mem = self.m.mem
        h = mem.read(self.head_cell)
        if h == ABSENT:
            return None
        nxt = mem.read(self.next_cell(h))
        mem.write(ctx, self.head_cell, ABSENT if nxt == h else nxt)
        mem.write(ctx, self.next_cell(h), ABSENT)
        return h

    def masked_remove(self, ctx: Ctx, node: int) -> int:
        """Remove ``node`` from anywhere; returns traversal iterations."""
        mem = self.m.mem
        h = mem.read(self.head_cell)
        if h == ABSENT:
            raise AssertionError(f"remove {node} from empty list {self.head_cell}")
        if h == node:
            self.m.cost("loop_iter")
            nxt = mem.read(self.next_cell(node))
            mem.write(ctx, self.head_cell, ABSENT if nxt == node else nxt)
            mem.write(ctx, self.next_cell(node), ABSENT)
            return 1
        cur = h
        iters = 1
        self.m.cost("loop_iter")
        while True:
            nxt = mem.read(self.next_cell(cur))
            if nxt == cur:
                raise AssertionError(f"{node} not found in list {self.head_cell}")
            iters += 1
            self.m.cost("loop_iter")
            if nxt == node:
                after = mem.read(self.next_cell(node))
                mem.write(ctx, self.next_cell(cur), cur if after == node else after)
                mem.write(ctx, self.next_cell(node), ABSENT)
                return iters
            cur = nxt

    def stepped_insert_sorted(self, ctx: Ctx, node: int) -> Iterator:
        """Sorted insert with plain accesses but a preemption point per
        traversal step.  Used where a protocol (barrier, mask) keeps other
        mutators of this list out while interrupts stay enabled."""
        mem = self.m.mem
        h = mem.read(self.head_cell)
        yield "unit"
        if h == ABSENT or self.key(node) < self.key(h):
            mem.write(ctx, self.next_cell(node), h if h != ABSENT else node)
            mem.write(ctx, self.head_cell, node)
            yield "unit"
            return
        cur = h
        while True:
            yield "loop_iter"
            nxt = mem.read(self.next_cell(cur))
            if nxt == cur:
                mem.write(ctx, self.next_cell(node), node)
                mem.write(ctx, self.next_cell(cur), node)
                yield "unit"
                return
            if self.key(nxt) <= self.key(node):
                cur = nxt
                continue
            mem.write(ctx, self.next_cell(node), nxt)
            mem.write(ctx, self.next_cell(cur), node)
            yield "unit"
            return

    # -- atomic operations -------------------------------------------------

    def atomic_extract_head(self, ctx: Ctx) -> Iterator:
        """Exclusive head extraction (ISR unblock path, ready-list extractor)."""
        mem = self.m.mem
        while True:
            h = mem.load_exclusive(ctx, self.head_cell)
            yield "atomic"
            if h == ABSENT:
                return None
            nxt = mem.read(self.next_cell(h))
            if nxt == ABSENT:
                # Someone extracted h under us; retry from a fresh head.
                yield "atomic"
                continue
            ok = mem.store_exclusive(ctx, self.head_cell, ABSENT if nxt == h else nxt)
            yield "atomic"
            if ok:
                mem.write(ctx, self.next_cell(h), ABSENT)
                yield "atomic"
                return h

    def atomic_insert_sorted(self, ctx: Ctx, node: int) -> Iterator:
        """Sorted insertion safe against concurrent inserters and one
        head-extractor, and against mid-list extraction signalled by an
        absent link (restart from head)."""
        mem = self.m.mem
        key = self.key(node)
        while True:  # restart loop
            h = mem.load_exclusive(ctx, self.head_cell)
            yield "atomic"
            if h == ABSENT or key < self.key(h):
                mem.write(ctx, self.next_cell(node), h if h != ABSENT else node)
                ok = mem.store_exclusive(ctx, self.head_cell, node)
                yield "atomic"
                if ok:
                    return
                continue
            cur = h
            restart = False
            while not restart:
                nxt = mem.load_exclusive(ctx, self.next_cell(cur))
                yield "atomic"
                if nxt == ABSENT:
                    restart = True  # cur was extracted; restart from head
                    break
                if nxt != cur and self.key(nxt) <= key:
                    cur = nxt
                    yield "loop_iter"
                    continue
                # Insert after cur (end of list when nxt == cur).
                mem.write(ctx, self.next_cell(node), node if nxt == cur else nxt)
                ok = mem.store_exclusive(ctx, self.next_cell(cur), node)
                yield "atomic"
                if ok:
                    if cur == h:
                        # Inserting right after the head: one head CAS with
                        # its own old value defeats a racing head-extractor
                        # (clears its reservation so its store retries and
                        # sees this node).  If the CAS fails the head moved:
                        # either another inserter pushed a new head (this
                        # node is fine) or the extractor already unhooked h
                        # (this node hangs off a dead cell and must be
                        # inserted again).
                        okc, _ = mem.compare_exchange(ctx, self.head_cell, h, h)
                        yield "atomic"
                        if not okc:
                            placed = yield from self._confirm_membership(ctx, node)
                            if placed:
                                return
                            break  # restart from the new head
                    return
                # Failed: something else was inserted (re-read next) or cur
                # left the list (absent link, handled on re-read).
            # fall through to restart from head

    def _confirm_membership(self, ctx: Ctx, node: int) -> Iterator:
        """After a failed head-confirm CAS: is ``node`` in the live list?

        An absent link on ``node`` itself also counts as placed: only an
        extractor clears links, and it can only reach nodes that were in
        the list.  A traversal that runs into an absent link raced an
        extraction and starts over.
        """
        mem = self.m.mem
        while True:
            cur = mem.read(self.head_cell)
            yield "unit"
            broken = False
            while cur != ABSENT:
                if cur == node:
                    return True
                self.m.cost("loop_iter")
                nxt = mem.read(self.next_cell(cur))
                if nxt == ABSENT:
                    broken = True
                    break
                if nxt == cur:
                    break
                cur = nxt
            if broken:
                yield "unit"
                continue
            if mem.read(self.next_cell(node)) == ABSENT:
                return True
            return False

    def atomic_remove(self, ctx: Ctx, node: int) -> Iterator:
        """O(n) removal from an arbitrary position using only exclusive
        accesses, restarting from the head when a traversed link goes
        absent (a concurrent head-extraction got there first).

        Returns True if this context performed the removal, False if the
        node had already left the list.  Charges one ``loop_iter`` per node
        visited, head included.
        """
        mem = self.m.mem
        while True:  # restart loop
            h = mem.load_exclusive(ctx, self.head_cell)
            yield "atomic"
            if h == ABSENT:
                return False
            if h == node:
                self.m.cost("loop_iter")
                self.m.tally("remove_iter")
                nxt = mem.read(self.next_cell(node))
                if nxt == ABSENT:
                    return False
                ok = mem.store_exclusive(ctx, self.head_cell, ABSENT if nxt == node else nxt)
                yield "atomic"
                if ok:
                    mem.write(ctx, self.next_cell(node), ABSENT)
                    yield "atomic"
                    return True
                continue
            cur = h
            self.m.cost("loop_iter")
            self.m.tally("remove_iter")
            restart = False
            while not restart:
                nxt = mem.load_exclusive(ctx, self.next_cell(cur))
                yield "atomic"
                if nxt == ABSENT:
                    restart = True
                    break
                if nxt == cur:
                    return False  # reached end without finding node
                self.m.cost("loop_iter")
                self.m.tally("remove_iter")
                if nxt == node:
                    after = mem.read(self.next_cell(node))
                    if after == ABSENT:
                        return False
                    ok = mem.store_exclusive(ctx, self.next_cell(cur),
                                             cur if after == node else after)
                    yield "atomic"
                    if ok:
                        mem.write(ctx, self.next_cell(node), ABSENT)
                        yield "atomic"
                        return True
                    continue  # re-read next of cur
                cur = nxt


class UnsortedReadyList:
    """Unsorted ready list with k tails.

    Tails 0..k-2 are dedicated to priorities 0..k-2; tail k-1 serves the
    rest.  Insertion is O(1) from any context; extraction of the minimum is
    single-extractor and scans the shared slot, re-checking the dedicated
    slots every iteration.  k=1 degenerates to the single-tail list.
    """

    def __init__(self, m: Machine, name: str, key: Callable[[int], int], k: int = 1):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.m = m
        self.k = k
        self.key = key
        self.name = name
        self.next_cell = lambda n: f"{name}.next{n}"
        self.head_cells = [f"{name}.head{i}" for i in range(k)]
        self.tail_cells = [f"{name}.tail{i}" for i in range(k)]
        for c in self.head_cells + self.tail_cells:
            m.mem.alloc(c, ABSENT)

    def _slot(self, node: int) -> int:
        return min(self.key(node), self.k - 1)

    def ensure_node(self, node: int) -> None:
        cell = self.next_cell(node)
        if cell not in self.m.mem.cells:
            self.m.mem.alloc(cell, ABSENT)

    def atomic_insert(self, ctx: Ctx, node: int) -> Iterator:
        mem = self.m.mem
        self.ensure_node(node)
        slot = self._slot(node)
        mem.write(ctx, self.next_cell(node), node)  # self-link: end marker
        yield "atomic"
        while True:
            t = mem.load_exclusive(ctx, self.tail_cells[slot])
            yield "atomic"
            ok = mem.store_exclusive(ctx, self.tail_cells[slot], node)
            yield "atomic"
            if ok:
                break
        if t == ABSENT:
            mem.write(ctx, self.head_cells[slot], node)
        else:
            mem.write(ctx, self.next_cell(t), node)
        yield "atomic"

    def _pylist(self, slot: int) -> List[int]:
        out: List[int] = []
        node = self.m.mem.read(self.head_cells[slot])
        while node != ABSENT:
            if node in out:
                raise AssertionError(f"cycle in ready slot {slot}")
            out.append(node)
            nxt = self.m.mem.read(self.next_cell(node))
            if nxt in (node, ABSENT):
                break
            node = nxt
        return out

    def to_pylist(self) -> List[int]:
        return [n for s in range(self.k) for n in self._pylist(s)]

    def contains(self, node: int) -> bool:
        return node in self.to_pylist()

    def empty(self) -> bool:
        return all(self.m.mem.read(h) == ABSENT for h in self.head_cells)

    def peek_min(self) -> Optional[int]:
        """Scan for the minimum key without removing (costed)."""
        best = None
        for slot in range(self.k - 1):
            h = self.m.mem.read(self.head_cells[slot])
            if h != ABSENT:
                return h
        nodes = self._pylist(self.k - 1)
        for i, n in enumerate(nodes):
            if i > 0:
                self.m.cost("loop_iter")
            if best is None or self.key(n) < self.key(best):
                best = n
        return best

    def _unlink(self, ctx: Ctx, slot: int, prev: Optional[int], node: int) -> Iterator:
        mem = self.m.mem
        nxt = mem.read(self.next_cell(node))
        last = nxt == node
        if prev is None:
            if last:
                # Removing the only/last-known head: retire the tail first so
                # a concurrent inserter either appends behind us or lands on
                # a reset slot, never on a node we already removed.
                while True:
                    t = mem.load_exclusive(ctx, self.tail_cells[slot])
                    yield "atomic"
                    if t != node:
                        # Someone appended after node; its next is linked by
                        # the (higher-priority, completed) inserter.
                        nxt = mem.read(self.next_cell(node))
                        mem.write(ctx, self.head_cells[slot], nxt)
                        break
                    ok = mem.store_exclusive(ctx, self.tail_cells[slot], ABSENT)
                    yield "atomic"
                    if ok:
                        mem.write(ctx, self.head_cells[slot], ABSENT)
                        break
            else:
                mem.write(ctx, self.head_cells[slot], nxt)
                yield "atomic"
        else:
            if last:
                while True:
                    t = mem.load_exclusive(ctx, self.tail_cells[slot])
                    yield "atomic"
                    if t != node:
                        nxt = mem.read(self.next_cell(node))
                        mem.write(ctx, self.next_cell(prev), nxt)
                        break
                    ok = mem.store_exclusive(ctx, self.tail_cells[slot], prev)
                    yield "atomic"
                    if ok:
                        mem.write(ctx, self.next_cell(prev), prev)
                        break
            else:
                mem.write(ctx, self.next_cell(prev), nxt)
                yield "atomic"
        mem.write(ctx, self.next_cell(node), ABSENT)

    def atomic_extract_min(self, ctx: Ctx) -> Iterator:
        """Single-extractor removal of the minimum-key node (FIFO on ties)."""
        mem = self.m.mem
        # Dedicated slots are O(1).
        for slot in range(self.k - 1):
            h = mem.read(self.head_cells[slot])
            if h != ABSENT:
                yield "atomic"
                yield from self._unlink(ctx, slot, None, h)
                return h
        slot = self.k - 1
        h = mem.read(self.head_cells[slot])
        yield "atomic"
        if h == ABSENT:
            return None
        best, best_prev = h, None
        prev, cur = None, h
        while True:
            nxt = mem.read(self.next_cell(cur))
            if nxt in (cur, ABSENT):
                break
            yield "loop_iter"
            # A high-priority unblock may have landed in a dedicated slot
            # while we scan; serve it first.
            for ded in range(self.k - 1):
                dh = mem.read(self.head_cells[ded])
                if dh != ABSENT:
                    yield from self._unlink(ctx, ded, None, dh)
                    return dh
            prev, cur = cur, nxt
            if self.key(cur) < self.key(best):
                best, best_prev = cur, prev
        yield from self._unlink(ctx, slot, best_prev, best)
        return best
