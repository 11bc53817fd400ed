"""Min-entropy of raw frames and the SHA-256 input-block length it implies."""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chisquare

from .puf_sim import SpeckleImage

SYMBOL_BITS = 8


@dataclass(frozen=True, eq=False)
class GreyHistogram:
    """Pooled counts of the 256 grey values."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (256,) or np.any(counts < 0):
            raise ValueError("histogram needs 256 non-negative counts")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def empty(self):
        return self.total == 0

    def probabilities(self):
        return self.counts / self.total

    def __add__(self, other):
        return GreyHistogram(self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, GreyHistogram):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    @classmethod
    def from_bytes(cls, raw):
        return cls(np.bincount(np.frombuffer(bytes(raw), dtype=np.uint8), minlength=256))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grey", "count", "probability"])
            probs = self.probabilities() if self.total else np.zeros(256)
            for g, (c, p) in enumerate(zip(self.counts, probs)):
                writer.writerow([g, int(c), repr(float(p))])


def grey_histogram(images):
    images = list(images)
    if not images:
        raise ValueError("grey_histogram needs at least one image")
    counts = np.zeros(256, dtype=np.int64)
    for img in images:
        grey = img.grey if isinstance(img, SpeckleImage) else np.asarray(img, dtype=np.uint8)
        counts += np.bincount(grey.ravel(), minlength=256)
    return GreyHistogram(counts)


def min_entropy(hist):
    """``-log2(p_max)`` in bits per 8-bit symbol."""
    if hist.total <= 0:
        raise ValueError("min-entropy of an empty histogram is undefined")
    p_max = int(hist.counts.max()) / hist.total
    return -math.log2(p_max) if p_max < 1 else 0.0


def required_block_bits(h_min, out_bits=256):
    """Input bits per hash block: ``ceil(out_bits * 8 / h_min)`` rounded up to a byte."""
    if not 0 < h_min <= SYMBOL_BITS:
        raise ValueError(f"h_min must lie in (0, {SYMBOL_BITS}], got {h_min}")
    if out_bits <= 0:
        raise ValueError("out_bits must be positive")
    # round() absorbs float noise such as 2048/8.000000000001
    bits = math.ceil(round(out_bits * SYMBOL_BITS / h_min, 9))
    return -(-bits // 8) * 8


@dataclass(frozen=True)
class EntropyReport:
    h_min: float
    p_max: float
    extraction_ratio: float
    block_bits: int
    out_bits: int = 256
    total_symbols: int = 0
    source: str = ""

    def to_dict(self):
        return {
            "h_min": self.h_min,
            "h_min_3dp": round(self.h_min, 3),
            "h_min_2dp": round(self.h_min, 2),
            "p_max": self.p_max,
            "extraction_ratio": self.extraction_ratio,
            "extraction_ratio_3dp": round(self.extraction_ratio, 3),
            "block_bits": self.block_bits,
            "out_bits": self.out_bits,
            "total_symbols": self.total_symbols,
            "source": self.source,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        return cls(h_min=float(d["h_min"]), p_max=float(d["p_max"]),
                   extraction_ratio=float(d["extraction_ratio"]), block_bits=int(d["block_bits"]),
                   out_bits=int(d.get("out_bits", 256)), total_symbols=int(d.get("total_symbols", 0)),
                   source=str(d.get("source", "")))


def entropy_report(hist, out_bits=256, source=""):
    h = min_entropy(hist)
    if h <= 0:
        raise ValueError("source has zero min-entropy; nothing can be extracted")
    return EntropyReport(
        h_min=h,
        p_max=int(hist.counts.max()) / hist.total,
        extraction_ratio=h / SYMBOL_BITS,
        block_bits=required_block_bits(h, out_bits),
        out_bits=out_bits,
        total_symbols=hist.total,
        source=source,
    )


def report_from_h_min(h_min, out_bits=256, source=""):
    """EntropyReport for a min-entropy measured elsewhere."""
    return EntropyReport(h_min=h_min, p_max=2.0**-h_min, extraction_ratio=h_min / SYMBOL_BITS,
                         block_bits=required_block_bits(h_min, out_bits), out_bits=out_bits,
                         source=source)


def chi2_uniform(hist):
    """Chi-square statistic and p-value of the histogram against uniform."""
    res = chisquare(hist.counts)
    return float(res.statistic), float(res.pvalue)
