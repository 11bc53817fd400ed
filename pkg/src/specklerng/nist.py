"""Eight tests from NIST SP 800-22 rev. 1a.

Each test takes a 1-D array of 0/1 values (or a BitString) and returns a
list of P-values; single-statistic tests return a one-element list.
"""

import math

import numpy as np
from scipy.special import erfc, gammaincc
from scipy.stats import norm

from .bits import BitString
from .errors import InsufficientDataError


def as_bits(bits):
    if isinstance(bits, BitString):
        return bits.unpack()
    if isinstance(bits, str):
        return BitString.from_bits(bits).unpack()
    return np.asarray(bits, dtype=np.uint8).ravel()


def _need(n, minimum, name):
    if n < minimum:
        raise InsufficientDataError(f"{name} needs at least {minimum} bits, got {n}", minimum)


def igamc(a, x):
    return float(gammaincc(a, x))


def frequency(bits):
    """Frequency (monobit) test."""
    eps = as_bits(bits)
    n = eps.size
    _need(n, 1, "frequency")
    s = 2 * int(eps.sum()) - n
    return [float(erfc(abs(s) / math.sqrt(n) / math.sqrt(2)))]


def block_frequency(bits, block_size=128):
    """Frequency within non-overlapping blocks of ``block_size`` bits."""
    eps = as_bits(bits)
    m = int(block_size)
    blocks = eps.size // m
    _need(eps.size, m, "block_frequency")
    pi = eps[: blocks * m].reshape(blocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((pi - 0.5) ** 2))
    return [igamc(blocks / 2.0, chi2 / 2.0)]


def runs(bits):
    """Runs test; returns 0.0 when the frequency prerequisite fails."""
    eps = as_bits(bits)
    n = eps.size
    _need(n, 2, "runs")
    pi = eps.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return [0.0]
    v = 1 + int(np.count_nonzero(eps[1:] != eps[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return [float(erfc(num / den))]


# (min n, block length M, class lower edge, class probabilities)
_LONGEST_RUN_TABLE = (
    (750000, 10000, 10, (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6272, 128, 4, (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, 1, (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_runs(blocks):
    """Longest run of ones in each row of a 0/1 matrix."""
    rows, m = blocks.shape
    best = np.zeros(rows, dtype=np.int64)
    current = np.zeros(rows, dtype=np.int64)
    for j in range(m):
        col = blocks[:, j].astype(bool)
        current = np.where(col, current + 1, 0)
        np.maximum(best, current, out=best)
    return best


def longest_run(bits):
    """Longest run of ones in a block; block length chosen from ``len(bits)``."""
    eps = as_bits(bits)
    n = eps.size
    _need(n, 128, "longest_run")
    for min_n, m, low, probs in _LONGEST_RUN_TABLE:
        if n >= min_n:
            break
    blocks = n // m
    longest = _longest_runs(eps[: blocks * m].reshape(blocks, m))
    k = len(probs) - 1
    classes = np.clip(longest, low, low + k) - low
    nu = np.bincount(classes, minlength=k + 1)
    expected = blocks * np.asarray(probs)
    chi2 = float(np.sum((nu - expected) ** 2 / expected))
    return [igamc(k / 2.0, chi2 / 2.0)]


def _cusum_p(z, n):
    sqn = math.sqrt(n)
    total = 1.0
    lo = int((-n / z + 1) / 4)
    hi = int((n / z - 1) / 4)
    k = np.arange(lo, hi + 1)
    total -= float(np.sum(norm.cdf((4 * k + 1) * z / sqn) - norm.cdf((4 * k - 1) * z / sqn)))
    lo = int((-n / z - 3) / 4)
    k = np.arange(lo, hi + 1)
    total += float(np.sum(norm.cdf((4 * k + 3) * z / sqn) - norm.cdf((4 * k + 1) * z / sqn)))
    return min(max(total, 0.0), 1.0)


def cumulative_sums(bits):
    """Cumulative sums test, forward then reverse."""
    eps = as_bits(bits)
    n = eps.size
    _need(n, 1, "cumulative_sums")
    x = 2 * eps.astype(np.int64) - 1
    out = []
    for seq in (x, x[::-1]):
        z = int(np.max(np.abs(np.cumsum(seq))))
        out.append(_cusum_p(z, n))
    return out


def spectral(bits):
    """Discrete Fourier transform (spectral) test."""
    eps = as_bits(bits)
    n = eps.size
    _need(n, 2, "spectral")
    x = 2.0 * eps - 1.0
    mod = np.abs(np.fft.fft(x)[: n // 2])
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = int(np.count_nonzero(mod < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return [float(erfc(abs(d) / math.sqrt(2)))]


def pattern_counts(eps, m):
    """Counts of all overlapping ``m``-bit patterns with wrap-around."""
    if m <= 0:
        return np.array([eps.size], dtype=np.int64)
    n = eps.size
    ext = np.concatenate([eps, eps[: m - 1]]).astype(np.int64)
    vals = np.zeros(n, dtype=np.int64)
    for j in range(m):
        vals = (vals << 1) | ext[j:j + n]
    return np.bincount(vals, minlength=1 << m)


def _psi2(eps, m):
    if m <= 0:
        return 0.0
    n = eps.size
    counts = pattern_counts(eps, m).astype(np.float64)
    return float((1 << m) / n * np.sum(counts**2) - n)


def serial(bits, m=16):
    """Serial test; returns the two P-values for the first and second differences."""
    eps = as_bits(bits)
    n = eps.size
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    _need(n, m, "serial")
    p0, p1, p2 = _psi2(eps, m), _psi2(eps, m - 1), _psi2(eps, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    return [igamc(2 ** (m - 2), d1 / 2.0), igamc(2 ** (m - 3), d2 / 2.0)]


def _phi(eps, m):
    counts = pattern_counts(eps, m)
    c = counts[counts > 0] / eps.size
    return float(np.sum(c * np.log(c)))


def approximate_entropy(bits, m=10):
    eps = as_bits(bits)
    n = eps.size
    if m < 1:
        raise ValueError("approximate entropy needs m >= 1")
    _need(n, m + 1, "approximate_entropy")
    apen = _phi(eps, m) - _phi(eps, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return [igamc(2 ** (m - 1), chi2 / 2.0)]


TESTS = {
    "frequency": frequency,
    "block_frequency": block_frequency,
    "runs": runs,
    "longest_run": longest_run,
    "cumulative_sums": cumulative_sums,
    "spectral": spectral,
    "serial": serial,
    "approximate_entropy": approximate_entropy,
}

# how many P-values each test yields
P_VALUE_LABELS = {
    "cumulative_sums": ("forward", "reverse"),
    "serial": ("p1", "p2"),
}

DEFAULT_PARAMS = {
    "block_frequency": {"block_size": 128},
    "serial": {"m": 16},
    "approximate_entropy": {"m": 10},
}


def recommended_min_length(name, params=None):
    """Smallest sequence length the SP 800-22 guidance allows for this test."""
    params = {**DEFAULT_PARAMS.get(name, {}), **(params or {})}
    if name == "block_frequency":
        m = params["block_size"]
        return max(100, m)
    if name == "longest_run":
        return 128
    if name == "spectral":
        return 1000
    if name == "serial":
        # m < floor(log2 n) - 2
        return 2 ** (params["m"] + 3)
    if name == "approximate_entropy":
        # m < floor(log2 n) - 5
        return 2 ** (params["m"] + 6)
    return 100


def nist_test(name, bits, params=None):
    """Run one test by name with ``params`` merged over the battery defaults."""
    try:
        fn = TESTS[name]
    except KeyError:
        raise ValueError(f"unknown test {name!r}; known: {sorted(TESTS)}") from None
    kwargs = {**DEFAULT_PARAMS.get(name, {}), **(params or {})}
    return fn(bits, **kwargs)
