"""Command line front end: subcommands, outputs, exit codes."""

import json

import pytest

from rtoslab.cli import main
from rtoslab.hw import encode_frames


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv("RTOSLAB_OUT", raising=False)


class TestExplore:
    def test_bundled_scenario_exits_zero(self, tmp_path):
        rc = main(["--out", str(tmp_path), "explore",
                   "--scenario", "basic_give_take"])
        assert rc == 0
        payload = json.loads((tmp_path / "explore-basic_give_take.json").read_text())
        assert payload["violationCount"] == 0

    def test_out_flag_accepted_after_subcommand(self, tmp_path):
        rc = main(["explore", "--scenario", "basic_give_take",
                   "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "explore-basic_give_take.json").exists()

    def test_env_var_overrides_out(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RTOSLAB_OUT", str(tmp_path / "env"))
        rc = main(["--out", str(tmp_path / "flag"), "explore",
                   "--scenario", "basic_give_take"])
        assert rc == 0
        assert (tmp_path / "env" / "explore-basic_give_take.json").exists()
        assert not (tmp_path / "flag").exists()

    def test_declared_mutant_exits_zero_with_artifact(self, tmp_path):
        rc = main(["--out", str(tmp_path), "explore",
                   "--scenario", "fig3_nonatomic"])
        assert rc == 0
        payload = json.loads((tmp_path / "explore-fig3_nonatomic.json").read_text())
        assert payload["violationCount"] >= 1
        assert payload["violations"][0]["choices"]

    def test_scenario_file_path_accepted(self, tmp_path):
        from rtoslab import load_bundled
        doc = load_bundled("basic_give_take")
        p = tmp_path / "scn.json"
        p.write_text(json.dumps(doc))
        rc = main(["--out", str(tmp_path), "explore", "--scenario", str(p)])
        assert rc == 0

    def test_missing_scenario_is_usage_error(self, tmp_path):
        rc = main(["--out", str(tmp_path), "explore", "--scenario", "ghost"])
        assert rc == 2

    def test_malformed_file_is_usage_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        rc = main(["--out", str(tmp_path), "explore", "--scenario", str(p)])
        assert rc == 2

    def test_schema_violation_is_usage_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"version": 1, "name": "x"}))
        rc = main(["--out", str(tmp_path), "explore", "--scenario", str(p)])
        assert rc == 2

    def test_random_scenario_generation(self, tmp_path):
        rc = main(["--out", str(tmp_path), "--seed", "3", "explore",
                   "--random-tasks", "2"])
        assert rc == 0

    def test_unknown_architecture_is_usage_error(self, tmp_path):
        rc = main(["--out", str(tmp_path), "explore",
                   "--scenario", "basic_give_take", "--arch", "vliw"])
        assert rc == 2


class TestBench:
    def test_single_architecture_sweep(self, tmp_path):
        rc = main(["--out", str(tmp_path), "bench", "--arch", "baseline",
                   "--n-range", "2,4"])
        assert rc == 0
        d = tmp_path / "bench" / "baseline"
        assert (d / "masked-interval.csv").exists()
        assert (d / "latency.json").exists()
        assert (tmp_path / "bench" / "report.md").exists()


class TestReport:
    def test_writes_comparison_table(self, tmp_path):
        rc = main(["--out", str(tmp_path), "report"])
        assert rc == 0
        text = (tmp_path / "bench" / "report.md").read_text()
        assert "strictly-atomic" in text


class TestDmaDemo:
    def test_bundled_stream(self, tmp_path):
        rc = main(["--out", str(tmp_path), "dma-demo"])
        assert rc == 0
        payload = json.loads((tmp_path / "dma-demo.json").read_text())
        assert payload["lossless"]
        assert len(payload["injectedFrames"]) == 5

    def test_custom_stream_file(self, tmp_path):
        p = tmp_path / "frames.bin"
        p.write_bytes(encode_frames([b"one", b"two"]))
        rc = main(["--out", str(tmp_path), "dma-demo", "--frames", str(p),
                   "--delay", "100"])
        assert rc == 0


class TestUsage:
    def test_no_subcommand_is_usage_error(self):
        assert main([]) == 2

    def test_unknown_flag_is_usage_error(self):
        assert main(["explore", "--warp-speed"]) == 2
