import time

import numpy as np
import pytest

from specklerng.config import PipelineConfig
from specklerng.entropy import entropy_report, grey_histogram
from specklerng.extractor import extract
from specklerng.pipeline import frame_plan, render_frames
from specklerng.validation import run_battery


@pytest.fixture(scope="session")
def desk_config():
    return PipelineConfig()


@pytest.fixture(scope="session")
def desk_frames(desk_config):
    """Default desk-scale datasets: 100 intra frames and 200 inter frames."""
    plan = frame_plan(desk_config)
    return {kind: render_frames(desk_config, plan[kind]) for kind in ("intra", "inter")}


@pytest.fixture(scope="session")
def bulk_frames():
    """Inter frames enough for a 100 Mbit stream at the calibrated block length."""
    cfg = PipelineConfig()
    cfg.dataset.inter = 260
    return render_frames(cfg, frame_plan(cfg)["inter"])


@pytest.fixture(scope="session")
def desk_entropy(desk_frames):
    return entropy_report(grey_histogram(desk_frames["inter"]))


@pytest.fixture(scope="session")
def bulk_stream(bulk_frames, desk_entropy):
    cfg = PipelineConfig().extractor_config(desk_entropy.block_bits)
    return extract(bulk_frames, cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bulk_battery(bulk_stream):
    """NIST subset over 100 x 1 Mbit of the bulk stream, with its wall time."""
    bits = bulk_stream.bits.unpack()[:100_000_000]
    t0 = time.perf_counter()
    report = run_battery(bits, subseq_bits=1_000_000, alpha=0.01)
    return report, time.perf_counter() - t0
