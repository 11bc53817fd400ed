import json
import subprocess
import sys

import numpy as np
import pytest

from specklerng.cli import main
from specklerng.config import PipelineConfig
from specklerng.extractor import output_bits
from specklerng.pipeline import file_sha256
from specklerng.puf_sim import SpeckleImage, write_pgm

SMALL = """
[puf]
in_dims = [16, 16]
out_dims = [64, 64]

[dataset]
intra = 5
inter = 12

[battery]
subseq_bits = 10000
tests = ["frequency", "block_frequency", "runs", "cumulative_sums"]
"""


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def simulated(small, tmp_path):
    out = tmp_path / "run"
    assert run("simulate", "--config", small, "--out", out) == 0
    return out


class TestSimulate:
    def test_layout_and_shared_intra_pattern(self, simulated):
        ds = simulated / "dataset"
        intra = json.loads((ds / "intra" / "manifest.json").read_text())
        inter = json.loads((ds / "inter" / "manifest.json").read_text())
        assert len(intra["frames"]) == 5 and len(inter["frames"]) == 12
        assert len({f["pattern_seed"] for f in intra["frames"]}) == 1
        assert len({f["pattern_seed"] for f in inter["frames"]}) == 12
        assert len({f["noise_seed"] for f in intra["frames"]}) == 5
        assert len(list(ds.glob("*/*.pgm"))) == 17
        assert (ds / "puf.json").is_file() and (ds / "config.toml").is_file()

    def test_rerun_is_byte_identical(self, simulated, small, tmp_path):
        again = tmp_path / "again"
        assert run("simulate", "--config", small, "--out", again) == 0
        for f in sorted((simulated / "dataset").glob("*/*.pgm")):
            twin = again / "dataset" / f.parent.name / f.name
            assert f.read_bytes() == twin.read_bytes()

    def test_seed_override_changes_frames(self, simulated, small, tmp_path):
        other = tmp_path / "other"
        assert run("simulate", "--config", small, "--out", other, "--seed", 99) == 0
        name = "inter/frame_0000.pgm"
        assert (other / "dataset" / name).read_bytes() != (simulated / "dataset" / name).read_bytes()

    def test_inter_zero_names_field(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[dataset]\ninter = 0\n")
        assert run("simulate", "--config", bad, "--out", tmp_path / "x") == 2
        assert "dataset.inter" in capsys.readouterr().err

    def test_missing_config_is_io_error(self, tmp_path):
        assert run("simulate", "--config", tmp_path / "nope.toml") == 3


class TestCharacterize:
    def test_reports(self, simulated, small, capsys):
        assert run("characterize", simulated, "--config", small, "--out", simulated) == 0
        out = simulated / "characterize"
        stats = json.loads((out / "characterize.json").read_text())
        assert stats["euclidean"]["separated"] is True
        assert 0.4 < stats["hamming"]["inter"]["mean"] < 0.6
        assert stats["hamming"]["inter"]["n_pairs"] == 66
        for name in ("euclidean_intra", "euclidean_inter", "hamming_intra", "hamming_inter"):
            assert (out / f"{name}.csv").read_text().startswith("bin_start,bin_end,count")
        assert "separated: true" in capsys.readouterr().out

    def test_missing_frames_are_listed(self, simulated, capsys):
        (simulated / "dataset" / "inter" / "frame_0003.pgm").unlink()
        (simulated / "dataset" / "inter" / "frame_0007.pgm").unlink()
        assert run("characterize", simulated, "--out", simulated) == 3
        err = capsys.readouterr().err
        assert "frame_0003.pgm" in err and "frame_0007.pgm" in err

    def test_single_image_dataset(self, simulated):
        manifest = simulated / "dataset" / "inter" / "manifest.json"
        m = json.loads(manifest.read_text())
        m["frames"] = m["frames"][:1]
        manifest.write_text(json.dumps(m))
        assert run("characterize", simulated, "--out", simulated) == 2


class TestCalibrate:
    def test_simulated(self, simulated):
        assert run("calibrate", simulated, "--out", simulated) == 0
        report = json.loads((simulated / "calibrate" / "entropy.json").read_text())
        assert 0 < report["h_min"] < 8
        assert report["block_bits"] >= 256
        assert (simulated / "calibrate" / "grey_histogram.csv").is_file()

    def test_fixed_h_min(self, simulated, capsys):
        assert run("calibrate", simulated, "--out", simulated, "--h-min", 5.959) == 0
        assert json.loads(capsys.readouterr().out)["block_bits"] == 344

    def test_uniform_noise_frames(self, simulated):
        gen = np.random.default_rng(0)
        for f in (simulated / "dataset" / "inter").glob("*.pgm"):
            # every grey value exactly 16 times, shuffled: flat histogram
            write_pgm(f, SpeckleImage(gen.permutation(np.repeat(np.arange(256), 16))
                                      .astype(np.uint8).reshape(64, 64)))
        assert run("calibrate", simulated, "--out", simulated) == 0
        report = json.loads((simulated / "calibrate" / "entropy.json").read_text())
        assert report["h_min"] == 8.0 and report["block_bits"] == 256


class TestExtract:
    def test_requires_calibration(self, simulated, capsys):
        assert run("extract", simulated, "--out", simulated) == 2
        assert "extractor.block_bits" in capsys.readouterr().err

    def test_explicit_block_bits(self, simulated, small):
        assert run("extract", simulated, "--config", small, "--out", simulated,
                   "--block-bits", 344, "--export-ascii") == 0
        out = simulated / "extract"
        data = (out / "random.bin").read_bytes()
        assert len(data) * 8 == 12 * output_bits(64 * 64 * 8, 344)
        ascii_bits = (out / "random.txt").read_text()
        assert ascii_bits == "".join(f"{b:08b}" for b in data)
        prov = json.loads((out / "provenance.json").read_text())
        assert prov["sha256"] == file_sha256(out / "random.bin")
        assert prov["puf"]["seed"] == 1 and len(prov["pattern_seeds"]) == 12
        tp = json.loads((out / "throughput.json").read_text())
        assert tp["random_bits"] == output_bits(64 * 64 * 8, 344) * tp["frames"]
        assert tp["raw_bits"] == 12 * 64 * 64 * 8
        assert tp["reference_bits_per_second"] == 0.96e9

    def test_uses_calibration_and_is_thread_independent(self, simulated, monkeypatch):
        assert run("calibrate", simulated, "--out", simulated) == 0
        assert run("extract", simulated, "--out", simulated) == 0
        first = file_sha256(simulated / "extract" / "random.bin")
        monkeypatch.setenv("SPECKLE_RNG_THREADS", "4")
        assert run("extract", simulated, "--out", simulated) == 0
        assert file_sha256(simulated / "extract" / "random.bin") == first

    def test_bad_thread_env(self, simulated, monkeypatch):
        monkeypatch.setenv("SPECKLE_RNG_THREADS", "lots")
        assert run("extract", simulated, "--out", simulated, "--block-bits", 344) == 2


class TestTest:
    def test_all_zero_stream_fails(self, tmp_path, small):
        (tmp_path / "z.bin").write_bytes(bytes(20_000))
        assert run("test", tmp_path / "z.bin", "--config", small, "--out", tmp_path) == 1
        report = json.loads((tmp_path / "test" / "test_report.json").read_text())
        assert report["verdict"] == "fail"
        freq = next(t for t in report["tests"] if t["name"] == "frequency")
        assert freq["passed"] is False

    def test_too_short(self, tmp_path, small):
        (tmp_path / "s.bin").write_bytes(bytes(1000))
        assert run("test", tmp_path / "s.bin", "--config", small, "--out", tmp_path) == 2

    def test_random_stream_passes(self, tmp_path, small):
        (tmp_path / "r.bin").write_bytes(np.random.default_rng(1).bytes(50_000))
        assert run("test", tmp_path / "r.bin", "--config", small, "--out", tmp_path) == 0
        header = (tmp_path / "test" / "p_values.csv").read_text().splitlines()[0]
        assert header.startswith("subsequence,frequency,block_frequency,runs")


class TestPipeline:
    def test_small_run(self, small, tmp_path):
        out = tmp_path / "p"
        assert run("pipeline", "--config", small, "--out", out) == 0
        for rel in ("config.toml", "summary.json", "correlation.json", "dataset/puf.json",
                    "characterize/characterize.json", "calibrate/entropy.json",
                    "extract/random.bin", "extract/provenance.json", "extract/throughput.json",
                    "test/test_report.json", "test/p_values.csv"):
            assert (out / rel).is_file(), rel
        summary = json.loads((out / "summary.json").read_text())
        pattern = summary["correlation"]["pattern_vs_output"]
        assert abs(pattern["pearson"]) <= pattern["bound"]
        tp = summary["throughput"]
        block = summary["entropy"]["block_bits"]
        assert tp["random_bits"] == tp["frames"] * output_bits(64 * 64 * 8, block)
        assert summary["bitstream"]["sha256"] == file_sha256(out / "extract" / "random.bin")

    def test_broken_output_dir(self, small, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        assert run("pipeline", "--config", small, "--out", blocker) == 3
        assert "stage 'setup'" in capsys.readouterr().err


def test_bench(small, tmp_path, capsys):
    assert run("bench", "--config", small, "--frames", 4, "--repeats", 1,
               "--block-bits", 344, "--json") == 0
    out = capsys.readouterr().out
    assert "Mbit/s" in out and "0.96 Gbit/s" in out
    payload = json.loads(out[out.index("{"):])
    assert payload["extraction"]["random_bits"] == 4 * output_bits(64 * 64 * 8, 344)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "specklerng", "--help"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    for name in ("simulate", "characterize", "calibrate", "extract", "test", "pipeline", "bench"):
        assert name in proc.stdout


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--threads", "x"])
    assert err.value.code == 2


def test_config_file_matches_defaults(small):
    cfg = PipelineConfig.load(small)
    assert cfg.dataset.inter == 12 and cfg.camera.noise_seed == 0
