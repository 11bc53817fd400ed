"""Distance metrics and Gabor-hash fingerprints for speckle datasets."""

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .bits import BitString
from .puf_sim import SpeckleImage


def normalize_image(img):
    """Grey values scaled to ``[0, 1]`` (grey / 255)."""
    grey = img.grey if isinstance(img, SpeckleImage) else np.asarray(img)
    return grey.astype(np.float64) / 255.0


def euclidean_distance(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def hamming_distance(a, b):
    """Fractional Hamming distance of two equal-length bit strings."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} != {len(b)}")
    if len(a) == 0:
        raise ValueError("hamming distance of empty strings is undefined")
    diff = np.bitwise_xor(a.data, b.data)
    return int(np.unpackbits(diff).sum()) / len(a)


@dataclass(frozen=True)
class GaborParams:
    """Single-orientation complex Gabor filter sampled on a strided grid.

    ``radius`` defaults to ``ceil(3 * sigma)``; the kernel is
    ``(2 * radius + 1)`` pixels square.
    """

    wavelength: float = 8.0
    sigma: float = 4.0
    orientation_deg: float = 45.0
    stride: int = 8
    radius: int | None = None

    def __post_init__(self):
        if self.wavelength <= 0 or self.sigma <= 0:
            raise ValueError("wavelength and sigma must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def support(self):
        r = math.ceil(3 * self.sigma) if self.radius is None else int(self.radius)
        return 2 * r + 1

    def kernel(self):
        """Complex kernel whose real part sums to zero."""
        r = self.support // 2
        y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
        theta = math.radians(self.orientation_deg)
        u = x * math.cos(theta) + y * math.sin(theta)
        gauss = np.exp(-(x**2 + y**2) / (2 * self.sigma**2))
        carrier = np.cos(2 * np.pi * u / self.wavelength)
        real = gauss * (carrier - np.sum(gauss * carrier) / np.sum(gauss))
        imag = gauss * np.sin(2 * np.pi * u / self.wavelength)
        return real + 1j * imag

    def grid_shape(self, image_shape):
        k = self.support
        rows, cols = image_shape
        if rows < k or cols < k:
            raise ValueError(f"image {image_shape} is smaller than the {k}x{k} Gabor kernel")
        return (rows - k) // self.stride + 1, (cols - k) // self.stride + 1

    def hash_length(self, image_shape):
        gy, gx = self.grid_shape(image_shape)
        return gy * gx


def gabor_response(img, params=GaborParams()):
    """Complex filter response on the strided grid, shape ``params.grid_shape``."""
    norm = normalize_image(img)
    params.grid_shape(norm.shape)
    k = params.support
    windows = sliding_window_view(norm, (k, k))[::params.stride, ::params.stride]
    return np.tensordot(windows, params.kernel(), axes=([2, 3], [0, 1]))


def gabor_hash(img, params=GaborParams()):
    """Binarized Gabor response: bit 1 where the real part is positive.

    Bits are emitted in row-major grid order; the length is
    ``params.hash_length(img.shape)``.
    """
    response = gabor_response(img, params)
    return BitString.from_bits((response.real > 0).ravel())


@dataclass
class DatasetStats:
    mean: float
    std: float
    cv: float
    n: int
    n_pairs: int
    bin_edges: np.ndarray
    counts: np.ndarray
    values: np.ndarray = field(repr=False)

    def to_dict(self):
        return {
            "mean": self.mean,
            "std": self.std,
            "cv": self.cv,
            "n": self.n,
            "n_pairs": self.n_pairs,
            "min": float(self.values.min()),
            "max": float(self.values.max()),
        }

    def write_histogram_csv(self, path):
        write_histogram_csv(path, self.bin_edges, self.counts)


def write_histogram_csv(path, edges, counts):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start", "bin_end", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            writer.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def _pairwise_euclidean(items):
    x = np.stack([normalize_image(i).ravel() for i in items])
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    iu = np.triu_indices(len(items), k=1)
    return np.sqrt(np.maximum(d2[iu], 0.0))


def pairwise_hamming_counts(matrix):
    """Upper-triangle Hamming counts for rows of a 0/1 matrix.

    Uses ``|a| + |b| - 2 a·b`` in float64, exact for rows shorter than 2**26.
    """
    x = np.asarray(matrix, dtype=np.float64)
    ones = x.sum(axis=1)
    n = len(x)
    out = np.empty(n * (n - 1) // 2, dtype=np.int64)
    pos = 0
    chunk = max(1, 2**24 // max(n, 1))
    for start in range(0, n - 1, chunk):
        stop = min(start + chunk, n - 1)
        dots = x[start:stop] @ x.T
        for i in range(start, stop):
            row = ones[i] + ones[i + 1:] - 2.0 * dots[i - start, i + 1:]
            out[pos:pos + row.size] = np.rint(row)
            pos += row.size
    return out


def _pairwise_hamming(items):
    lengths = {len(b) for b in items}
    if len(lengths) != 1:
        raise ValueError(f"bit strings have unequal lengths {sorted(lengths)}")
    (length,) = lengths
    if length == 0:
        raise ValueError("hamming distance of empty strings is undefined")
    matrix = np.stack([b.unpack() for b in items])
    return pairwise_hamming_counts(matrix) / length


def pairwise_stats(items, metric="euclidean", bins="fd"):
    """Statistics of ``metric`` over all unordered pairs of ``items``.

    ``metric`` is ``"euclidean"`` (images), ``"hamming"`` (BitStrings) or a
    callable taking two items. ``bins`` is passed to ``numpy.histogram``.
    """
    items = list(items)
    if len(items) < 2:
        raise ValueError(f"pairwise statistics need at least 2 items, got {len(items)}")
    if metric == "euclidean":
        values = _pairwise_euclidean(items)
    elif metric == "hamming":
        values = _pairwise_hamming(items)
    elif callable(metric):
        values = np.array([metric(a, b) for a, b in combinations(items, 2)], dtype=np.float64)
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return summarize(values, n=len(items), bins=bins)


def summarize(values, n, bins="fd"):
    values = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(values))
    std = float(np.std(values))
    cv = std / mean if mean != 0 else (0.0 if std == 0 else math.inf)
    if np.ptp(values) == 0:
        counts, edges = np.histogram(values, bins=1)
    else:
        counts, edges = np.histogram(values, bins=bins)
    return DatasetStats(mean, std, cv, n, values.size, edges, counts, values)


def histograms_disjoint(a, b):
    """True when the value ranges of two DatasetStats do not overlap."""
    return bool(a.values.max() < b.values.min() or b.values.max() < a.values.min())
