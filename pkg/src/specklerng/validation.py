"""Output validation: Pearson decorrelation, Hamming-distance fit, NIST battery."""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import gammaincc

from . import nist
from .bits import BitString
from .errors import InsufficientDataError, UndefinedCorrelationError
from .fingerprint import pairwise_hamming_counts

UNIFORMITY_CUTOFF = 0.0001
MIN_SUBSEQUENCES = 10


def pearson(a, b):
    """Product-moment correlation of two equal-length sequences."""
    if isinstance(a, (bytes, bytearray)):
        a = np.frombuffer(a, dtype=np.uint8)
    if isinstance(b, (bytes, bytearray)):
        b = np.frombuffer(b, dtype=np.uint8)
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} != {b.size}")
    if a.size < 2:
        raise ValueError("pearson needs at least 2 values")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        raise UndefinedCorrelationError("correlation undefined for zero-variance input")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return max(-1.0, min(1.0, r))


def null_correlation_bound(n, k=4.0):
    """``k`` standard deviations of the null distribution of r for n samples."""
    return k / math.sqrt(n)


def degrees_of_freedom(mu, sigma):
    """``mu (1 - mu) / sigma**2`` for a fractional Hamming-distance distribution."""
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return mu * (1 - mu) / sigma**2


def _gaussian(x, amplitude, center, width):
    return amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)


@dataclass
class HDFitReport:
    mu: float
    sigma: float
    n_pairs: int
    dof: float
    word_bits: int
    amplitude: float
    center: float
    width: float
    r_squared: float
    bin_centers: np.ndarray = field(repr=False)
    density: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "n_pairs": self.n_pairs,
            "dof": self.dof,
            "word_bits": self.word_bits,
            "gaussian_fit": {"amplitude": self.amplitude, "center": self.center,
                             "width": self.width, "r_squared": self.r_squared},
        }


def hd_fit(words):
    """All-pairs fractional Hamming distances of equal-length words plus a Gaussian fit.

    The histogram has one bin per possible distance ``k / word_bits`` and is
    normalized to a probability density before fitting.
    """
    words = list(words)
    if len(words) < 2:
        raise ValueError("hd_fit needs at least 2 words")
    lengths = {len(w) for w in words}
    if len(lengths) != 1:
        raise ValueError(f"words have unequal lengths {sorted(lengths)}")
    (bits,) = lengths
    matrix = np.stack([w.unpack() for w in words])
    return hd_fit_matrix(matrix)


def hd_fit_matrix(matrix):
    """:func:`hd_fit` for an unpacked ``(n_words, word_bits)`` 0/1 matrix."""
    matrix = np.asarray(matrix)
    k, bits = matrix.shape
    counts = pairwise_hamming_counts(matrix)
    frac = counts / bits
    mu, sigma = float(frac.mean()), float(frac.std())
    hist = np.bincount(counts, minlength=bits + 1).astype(np.float64)
    centers = np.arange(bits + 1) / bits
    density = hist / (hist.sum() / bits)
    p0 = (density.max(), mu, sigma if sigma > 0 else 1.0 / bits)
    try:
        (amp, center, width), _ = curve_fit(_gaussian, centers, density, p0=p0)
        fitted = _gaussian(centers, amp, center, width)
        ss_res = float(np.sum((density - fitted) ** 2))
        ss_tot = float(np.sum((density - density.mean()) ** 2))
        r2 = 1 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    except RuntimeError:
        amp = center = width = r2 = float("nan")
    dof = degrees_of_freedom(mu, sigma) if 0 < mu < 1 and sigma > 0 else float("nan")
    return HDFitReport(mu, sigma, counts.size, dof, bits, float(amp), float(center),
                       abs(float(width)), r2, centers, density)


def proportion_threshold(m, alpha=0.01):
    """Lower edge of the acceptable pass proportion for ``m`` subsequences."""
    p = 1 - alpha
    return p - 3 * math.sqrt(p * alpha / m)


def uniformity_p_value(p_values, bins=10):
    """Chi-square P-value of P-values over ``bins`` equal bins in [0, 1]."""
    p_values = np.asarray(p_values, dtype=np.float64)
    m = p_values.size
    idx = np.minimum((p_values * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    expected = m / bins
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return float(gammaincc((bins - 1) / 2.0, chi2 / 2.0))


@dataclass
class SeriesResult:
    """Aggregate of one P-value series (a test, or one output of a multi-P test)."""

    name: str
    p_values: np.ndarray = field(repr=False)
    uniformity: float
    proportion: float
    threshold: float

    @property
    def passed(self):
        return self.uniformity >= UNIFORMITY_CUTOFF and self.proportion >= self.threshold

    def to_dict(self):
        return {"name": self.name, "uniformity": self.uniformity, "proportion": self.proportion,
                "threshold": self.threshold, "passed": self.passed}


def aggregate(name, p_values, alpha):
    p = np.asarray(p_values, dtype=np.float64)
    return SeriesResult(name, p, uniformity_p_value(p), float(np.mean(p >= alpha)),
                        proportion_threshold(p.size, alpha))


@dataclass
class TestResult:
    """One test item; multi-P tests carry several series."""

    __test__ = False

    name: str
    series: list

    @property
    def uniformity(self):
        return min(s.uniformity for s in self.series)

    @property
    def proportion(self):
        return min(s.proportion for s in self.series)

    @property
    def passed(self):
        return all(s.passed for s in self.series)

    def to_dict(self):
        return {"name": self.name, "uniformity": self.uniformity, "proportion": self.proportion,
                "passed": self.passed, "series": [s.to_dict() for s in self.series]}


@dataclass
class TestReport:
    __test__ = False

    tests: list
    sequence_bits: int
    subseq_bits: int
    subsequences: int
    alpha: float
    params: dict

    @property
    def passed(self):
        return all(t.passed for t in self.tests)

    @property
    def threshold(self):
        return proportion_threshold(self.subsequences, self.alpha)

    def __getitem__(self, name):
        for t in self.tests:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self):
        return {
            "verdict": "pass" if self.passed else "fail",
            "sequence_bits": self.sequence_bits,
            "subseq_bits": self.subseq_bits,
            "subsequences": self.subsequences,
            "alpha": self.alpha,
            "proportion_threshold": self.threshold,
            "uniformity_cutoff": UNIFORMITY_CUTOFF,
            "params": self.params,
            "tests": [t.to_dict() for t in self.tests],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def write_p_values_csv(self, path):
        columns = [s for t in self.tests for s in t.series]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["subsequence"] + [s.name for s in columns])
            for i in range(self.subsequences):
                writer.writerow([i] + [repr(float(s.p_values[i])) for s in columns])


def _series_names(name, count):
    labels = nist.P_VALUE_LABELS.get(name)
    if count == 1:
        return [name]
    if labels is None or len(labels) != count:
        labels = [str(i) for i in range(count)]
    return [f"{name}.{lab}" for lab in labels]


def run_battery(bits, subseq_bits=1_000_000, alpha=0.01, tests=None, params=None, threads=1):
    """Split ``bits`` into whole subsequences and run every enabled test on each.

    ``params`` maps test name to keyword overrides. The incomplete final
    subsequence is discarded.
    """
    eps = nist.as_bits(bits)
    names = list(tests or nist.TESTS)
    params = {name: {**nist.DEFAULT_PARAMS.get(name, {}), **(params or {}).get(name, {})}
              for name in names}
    if eps.size < 2 * subseq_bits:
        raise InsufficientDataError(
            f"battery needs at least 2 subsequences ({2 * subseq_bits} bits), got {eps.size}",
            2 * subseq_bits)
    m = eps.size // subseq_bits
    if m < MIN_SUBSEQUENCES:
        raise InsufficientDataError(
            f"battery needs at least {MIN_SUBSEQUENCES} subsequences of {subseq_bits} bits, "
            f"got {m}", MIN_SUBSEQUENCES * subseq_bits)
    for name in names:
        need = nist.recommended_min_length(name, params[name])
        if subseq_bits < need:
            raise InsufficientDataError(
                f"{name} needs subsequences of at least {need} bits, got {subseq_bits}", need)

    def one(i):
        chunk = eps[i * subseq_bits:(i + 1) * subseq_bits]
        return [nist.nist_test(name, chunk, params[name]) for name in names]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(m)))
    else:
        rows = [one(i) for i in range(m)]

    results = []
    for j, name in enumerate(names):
        per_sub = np.array([row[j] for row in rows], dtype=np.float64)
        series = [aggregate(label, per_sub[:, k], alpha)
                  for k, label in enumerate(_series_names(name, per_sub.shape[1]))]
        results.append(TestResult(name, series))
    return TestReport(results, int(eps.size), subseq_bits, m, alpha, params)


def word_matrix(stream, width=256):
    bits = stream.bits if hasattr(stream, "bits") else stream
    if not isinstance(bits, BitString):
        bits = BitString.from_bits(bits)
    return bits.word_matrix(width)
