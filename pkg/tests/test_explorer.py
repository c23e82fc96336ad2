"""The schedule-tree explorer and its two steering adapters."""

import pytest

from rtoslab import (Ctx, CtxKind, Event, Interleaver, Machine, RunResult,
                     ScriptedChooser, StepBoundExceeded, explore, replay)

T = Ctx(CtxKind.TASK, 0, 1)


def make_counting_run_fn(depth, options=2):
    """Synthetic tree: ``depth`` decision points, ``options`` choices each."""

    def run_fn(prefix):
        choices = []
        for i in range(depth):
            choices.append(prefix[i] if i < len(prefix) else 0)
        return RunResult(option_counts=[options] * depth, choices=choices,
                         steps=depth)

    return run_fn


class TestExplore:
    def test_enumerates_full_tree(self):
        report = explore(make_counting_run_fn(3, options=2))
        assert report.schedules == 8
        assert report.violation_count == 0
        assert not report.truncated

    def test_counts_are_product_of_options(self):
        report = explore(make_counting_run_fn(2, options=3))
        assert report.schedules == 9

    def test_truncation_reported(self):
        report = explore(make_counting_run_fn(4, options=2), max_schedules=5)
        assert report.schedules == 5
        assert report.truncated

    def test_truncated_search_covers_early_divergences_first(self):
        seen = []

        def run_fn(prefix):
            res = make_counting_run_fn(3, options=2)(prefix)
            seen.append(tuple(res.choices))
            return res

        explore(run_fn, max_schedules=4)
        # Both options of the first decision show up within four schedules.
        assert {c[0] for c in seen} == {0, 1}

    def test_violations_carry_replayable_choices(self):
        def run_fn(prefix):
            res = make_counting_run_fn(2, options=2)(prefix)
            if res.choices == [1, 1]:
                res.violations = ["boom"]
            return res

        report = explore(run_fn)
        assert report.violation_count == 1
        trace = report.violations[0]
        assert trace.choices == [1, 1]
        assert replay(run_fn, trace.choices).violations == ["boom"]

    def test_errors_and_step_bound_hits_counted(self):
        def run_fn(prefix):
            res = make_counting_run_fn(1, options=2)(prefix)
            if res.choices == [1]:
                res.error = "step bound: exceeded"
            return res

        report = explore(run_fn)
        assert len(report.errors) == 1
        assert report.step_bound_hits == 1

    def test_report_serializes(self):
        report = explore(make_counting_run_fn(2))
        d = report.to_dict()
        assert d["schedules"] == 4
        assert d["violationCount"] == 0
        assert isinstance(report.to_json(), str)


class TestScriptedChooser:
    def _run_fn(self, compute_steps):
        def run_fn(prefix):
            m = Machine()
            fired = []

            def isr_factory(mm, ctx):
                def isr():
                    fired.append(mm.ledger.now)
                    yield "isr_body"
                return isr()

            m.register_isr(0, 10, isr_factory)
            events = [Event("rx", 0)]
            chooser = ScriptedChooser(events, prefix)
            m.chooser = chooser

            def root():
                for _ in range(compute_steps):
                    yield "unit"

            m.run(T, root())
            return RunResult(list(chooser.option_counts), list(chooser.choices),
                             m.steps, [], detail=len(fired))

        return run_fn

    @pytest.mark.parametrize("steps", [1, 2, 4])
    def test_closed_form_schedule_count(self, steps):
        """One one-shot interrupt against s unit steps: it can fire at the
        boundary before any of the s steps, at the final boundary, or not
        at all, giving s + 2 schedules of which s + 1 take the interrupt."""
        report = explore(self._run_fn(steps))
        assert report.schedules == steps + 2

    @pytest.mark.parametrize("steps", [1, 2, 4])
    def test_fired_schedule_count(self, steps):
        fired_schedules = 0

        def counting(prefix, _inner=self._run_fn(steps)):
            nonlocal fired_schedules
            res = _inner(prefix)
            if res.detail:
                fired_schedules += 1
            return res

        explore(counting)
        assert fired_schedules == steps + 1


class TestInterleaver:
    def _gen(self, log, tag, n):
        for i in range(n):
            log.append((tag, i))
            yield

    def test_default_prefix_runs_first_generator_to_completion(self):
        log = []
        il = Interleaver([])
        il.run([self._gen(log, "a", 2), self._gen(log, "b", 2)])
        assert log == [("a", 0), ("a", 1), ("b", 0), ("b", 1)]

    def test_prefix_steers_switches(self):
        log = []
        il = Interleaver([1, 0])
        il.run([self._gen(log, "a", 2), self._gen(log, "b", 1)])
        assert log[0] == ("b", 0)
        assert il.option_counts[0] == 2

    def test_step_bound(self):
        def forever():
            while True:
                yield

        il = Interleaver([], step_bound=10)
        with pytest.raises(StepBoundExceeded):
            il.run([forever()])

    def test_preemption_budget_pins_last_generator(self):
        log = []
        # Alternate on every step; after 2 preemptions the last-picked
        # generator runs to completion without further decision points.
        il = Interleaver([0, 1, 0], max_preemptions=2)
        il.run([self._gen(log, "a", 4), self._gen(log, "b", 4)])
        tags = [t for t, _ in log]
        switches = sum(1 for x, y in zip(tags, tags[1:]) if x != y)
        assert switches <= 3  # budgeted preemptions plus the final handoff

    def test_low_generator_not_offered_while_high_one_is_mid_run(self):
        log = []
        il = Interleaver([], low=[1])
        il.run([self._gen(log, "a", 3), self._gen(log, "low", 1)])
        assert [t for t, _ in log] == ["a", "a", "a", "low"]
        # Once generator 0 has started, every decision has a single option
        # until it finishes.
        assert il.option_counts[0] == 2
        assert all(c == 1 for c in il.option_counts[1:])

    def test_low_generator_can_start_first(self):
        log = []
        low = Interleaver([1], low=[1])
        low.run([self._gen(log, "a", 1), self._gen(log, "b", 1)])
        # Before anything starts, the low generator is a valid first pick.
        assert log[0] == ("b", 0)
