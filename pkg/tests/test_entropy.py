import hashlib
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specklerng.entropy import (
    EntropyReport,
    GreyHistogram,
    chi2_uniform,
    entropy_report,
    grey_histogram,
    min_entropy,
    report_from_h_min,
    required_block_bits,
)
from specklerng.extractor import ExtractorConfig, hashed_image_view
from specklerng.puf_sim import SpeckleImage


def hist_with(**bins):
    counts = np.zeros(256, dtype=np.int64)
    for k, v in bins.items():
        counts[int(k[1:])] = v
    return GreyHistogram(counts)


class TestGreyHistogram:
    def test_single_zero_image(self):
        h = grey_histogram([SpeckleImage(np.zeros((2, 2), dtype=np.uint8))])
        assert h.counts[0] == 4 and h.total == 4

    def test_pooled(self):
        imgs = [SpeckleImage(np.full((2, 2), v, dtype=np.uint8)) for v in (10, 20)]
        h = grey_histogram(imgs)
        assert (h.counts[10], h.counts[20], h.total) == (4, 4, 8)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            grey_histogram([])

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            GreyHistogram(np.ones(255))

    def test_csv(self, tmp_path):
        hist_with(g3=1, g4=3).write_csv(tmp_path / "g.csv")
        rows = (tmp_path / "g.csv").read_text().splitlines()
        assert rows[0] == "grey,count,probability"
        assert rows[5] == "4,3,0.75"

    def test_simulated_frames_are_not_uniform(self, desk_frames):
        _, p = chi2_uniform(grey_histogram(desk_frames["inter"]))
        assert p < 0.01


class TestMinEntropy:
    def test_uniform_is_eight(self):
        assert min_entropy(GreyHistogram(np.full(256, 3))) == 8.0

    def test_single_value_is_zero(self):
        assert min_entropy(hist_with(g17=50)) == 0.0

    def test_quarter(self):
        assert min_entropy(hist_with(g0=1, g1=1, g2=1, g3=1)) == 2.0

    def test_empty(self):
        with pytest.raises(ValueError):
            min_entropy(GreyHistogram(np.zeros(256)))

    @given(st.integers(0, 255), st.integers(1, 5))
    def test_increment_to_unique_argmax_decreases(self, g, base):
        counts = np.full(256, base)
        before = min_entropy(GreyHistogram(counts))
        counts[g] += 1
        assert min_entropy(GreyHistogram(counts)) < before

    @given(st.lists(st.integers(0, 20), min_size=256, max_size=256).filter(lambda c: sum(c) > 0))
    def test_eight_only_when_uniform(self, counts):
        h = min_entropy(GreyHistogram(counts))
        assert 0 <= h <= 8
        assert (h == 8) == (len(set(counts)) == 1)


class TestBlockBits:
    @pytest.mark.parametrize("h,expected", [(5.959, 344), (8.0, 256), (4.0, 512), (5.95, 352),
                                            (6.445, 320)])
    def test_examples(self, h, expected):
        assert required_block_bits(h, 256) == expected

    @pytest.mark.parametrize("h", [0.0, -1.0, 8.01])
    def test_domain(self, h):
        with pytest.raises(ValueError):
            required_block_bits(h)

    @given(st.floats(0.05, 8.0), st.floats(0.05, 8.0))
    def test_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert required_block_bits(hi) <= required_block_bits(lo)
        assert required_block_bits(lo) >= 256
        assert required_block_bits(lo) % 8 == 0
        assert required_block_bits(lo) >= math.ceil(256 * 8 / lo)


class TestReport:
    def test_invariants(self):
        r = entropy_report(hist_with(g0=1, g1=1, g2=2))
        assert r.h_min == 1.0 and r.p_max == 0.5
        assert r.extraction_ratio == r.h_min / 8
        assert r.block_bits == 2048

    def test_ratio_for_fixed_h_min(self):
        r = report_from_h_min(5.95)
        assert r.to_dict()["extraction_ratio_3dp"] == 0.744
        assert r.extraction_ratio == pytest.approx(0.74375)

    def test_zero_entropy_rejected(self):
        with pytest.raises(ValueError):
            entropy_report(hist_with(g5=9))

    def test_dict_roundtrip(self):
        r = entropy_report(hist_with(g0=3, g1=1), source="x")
        assert EntropyReport.from_dict(r.to_dict()) == r

    def test_simulated_dataset(self, desk_entropy):
        assert 0 < desk_entropy.h_min < 8
        assert desk_entropy.block_bits >= 256


class TestHashedView:
    def test_simulated_frame_passes_uniformity(self, desk_frames, desk_entropy):
        view = hashed_image_view(desk_frames["inter"][0], ExtractorConfig(desk_entropy.block_bits))
        assert chi2_uniform(view)[1] >= 0.01

    def test_constant_frame_repeats_one_digest(self):
        view = hashed_image_view(SpeckleImage(np.zeros((16, 16), dtype=np.uint8)),
                                 ExtractorConfig(256))
        digest = hashlib.sha256(bytes(32)).digest()
        assert view == GreyHistogram.from_bytes(digest * 8)

    def test_short_frame_gives_empty_view(self):
        view = hashed_image_view(SpeckleImage(np.zeros((4, 4), dtype=np.uint8)),
                                 ExtractorConfig(344))
        assert view.empty
