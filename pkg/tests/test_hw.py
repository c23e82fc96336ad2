"""Hardware models: GPIO priority escape and the pause-capable DMA ring."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtoslab import ConfigError, explore
from rtoslab.hw import (DmaController, EscapeHandler, configure_next_interrupt,
                        configure_without_handshake, decode_frames,
                        dma_lossless_demo, encode_frames, gpio_escape_scenario,
                        load_frame_stream)
from tests.conftest import make_dma_run_fn


class TestEscapeHandler:
    def test_above_ceiling_must_not_call_kernel(self):
        with pytest.raises(ConfigError):
            EscapeHandler(above_ceiling=True, calls_kernel=True).validate()

    def test_below_ceiling_may_call_kernel(self):
        EscapeHandler(above_ceiling=False, calls_kernel=True).validate()


class TestGpioEscape:
    def test_masked_baseline_loses_data(self):
        report = gpio_escape_scenario(200, [(100, 500)], 2000,
                                      EscapeHandler(above_ceiling=False))
        assert report.losses > 0
        assert not report.escape
        assert report.sacrificed == {}

    def test_escape_removes_the_loss(self):
        report = gpio_escape_scenario(200, [(100, 500)], 2000)
        assert report.losses == 0
        assert report.escape
        assert report.sacrificed == {"gpioPins": 1}
        assert report.max_service_delay == 0

    def test_loss_requires_mask_longer_than_period(self):
        report = gpio_escape_scenario(200, [(100, 250)], 2000,
                                      EscapeHandler(above_ceiling=False))
        assert report.losses == 0
        assert report.max_service_delay > 0

    def test_report_serializes(self):
        report = gpio_escape_scenario(200, [(100, 500)], 2000)
        d = report.to_dict()
        assert d["arrivals"] == 10
        assert "maxServiceDelayCycles" in d
        assert isinstance(report.to_json(), str)


class TestFrames:
    def test_roundtrip_fixed(self):
        payloads = [b"", b"a", b"hello", b"\x00" * 300]
        assert decode_frames(encode_frames(payloads)) == payloads

    @given(st.lists(st.binary(max_size=64), max_size=8))
    def test_roundtrip_random(self, payloads):
        assert decode_frames(encode_frames(payloads)) == payloads

    def test_incomplete_tail_dropped(self):
        data = encode_frames([b"abc"]) + b"\x05\x00xy"
        assert decode_frames(data) == [b"abc"]

    def test_oversized_payload_rejected(self):
        with pytest.raises(ConfigError):
            encode_frames([b"x" * 0x10000])

    def test_load_frame_stream(self, tmp_path):
        p = tmp_path / "frames.bin"
        p.write_bytes(encode_frames([b"one", b"two"]))
        assert load_frame_stream(p) == [b"one", b"two"]


class TestDmaController:
    def test_streams_bytes_into_ring(self):
        dc = DmaController(16)
        dc.feed(b"abc")
        while dc.busy:
            dc.step()
        assert bytes(dc.ring[:3]) == b"abc"
        assert dc.write_index == 3

    def test_write_index_updates_in_two_phases(self):
        dc = DmaController(16)
        dc.feed(bytes([1]))
        dc.step()
        assert dc.mid_update
        findings = []
        dc.read_write_index(findings)
        assert findings  # torn read observed
        dc.step()
        assert not dc.mid_update
        assert dc.read_write_index(findings) == 1

    def test_pause_honored_only_between_transfers(self):
        dc = DmaController(16)
        dc.feed(bytes([1]))
        dc.step()  # first phase of the index update
        dc.pause_request = True
        dc.step()  # commits the update, does not pause yet
        assert not dc.paused_state
        dc.step()
        assert dc.paused_state
        dc.pause_request = False
        dc.step()
        assert not dc.paused_state

    def test_interrupt_fires_on_crossing(self):
        dc = DmaController(16)
        dc.set_interrupt_index(2)
        dc.feed(b"ab")
        while dc.busy:
            dc.step()
        assert dc.irq

    def test_handshake_reads_are_never_torn(self):
        dc = DmaController(16)
        dc.feed(b"abcdef")
        findings = []
        hs = configure_next_interrupt(dc, 6, findings)
        for _ in hs:
            dc.step()
        assert findings == []

    def test_skipping_the_handshake_can_tear(self):
        dc = DmaController(16)
        dc.feed(b"ab")
        dc.step()  # leaves the index mid-update
        findings = []
        for _ in configure_without_handshake(dc, 2, findings):
            pass
        assert findings


class TestDmaExploration:
    def test_handshake_has_no_torn_schedule(self):
        report = explore(make_dma_run_fn(handshake=True), max_schedules=5000)
        assert report.schedules > 10
        assert report.violation_count == 0
        assert all("step bound" in t.error for t in report.errors)

    def test_mutant_has_torn_schedules(self):
        report = explore(make_dma_run_fn(handshake=False), max_schedules=5000)
        assert report.violation_count > 0


class TestLosslessDemo:
    def test_recovers_all_frames(self):
        payloads = [b"alpha", b"", b"gamma" * 10, b"\xff\x00", b"tail"]
        report = dma_lossless_demo(payloads, delay_cycles=10_000)
        assert report["lossless"]
        assert report["tornStateFindings"] == []
        assert report["recoveredFrames"] == [p.hex() for p in payloads]

    def test_backlog_beyond_capacity_rejected(self):
        with pytest.raises(ConfigError):
            dma_lossless_demo([b"x" * 100], capacity=64)
