"""Deterministic speckle simulator standing in for the optical bench.

A phase pattern (the SLM challenge) modulates a flat wavefront, which is
spectrally resampled onto the camera grid and then passed through a cascade
of random phase screens separated by unitary Fresnel steps. The camera
stage squares the field, applies the diffuse-halo envelope, exposes at a
fixed percentile and adds shot and read noise before 8-bit quantization.

Shapes are ``(rows, cols)`` throughout.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import SimulationError
from .rng import stream

TWO_PI = 2.0 * np.pi

DEFAULT_IN_DIMS = (64, 64)
DEFAULT_OUT_DIMS = (256, 256)
DEFAULT_NUM_SCREENS = 3
DEFAULT_PROPAGATION_DISTANCE = 100.0
DEFAULT_EXPOSURE_PERCENTILE = 0.99


def _dims(dims, name="dims"):
    if isinstance(dims, (int, np.integer)):
        dims = (dims, dims)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or min(dims) <= 0:
        raise ValueError(f"{name} must be two positive integers, got {dims}")
    return dims


@dataclass(frozen=True, eq=False)
class PhasePattern:
    """SLM configuration: per-pixel phase in ``[0, 2π)``."""

    phase: np.ndarray

    def __post_init__(self):
        phase = np.array(self.phase, dtype=np.float64)
        if phase.ndim != 2 or phase.size == 0:
            raise ValueError("phase pattern must be a non-empty 2D array")
        if not np.all((phase >= 0) & (phase < TWO_PI)):
            raise ValueError("phase values must lie in [0, 2*pi)")
        phase.setflags(write=False)
        object.__setattr__(self, "phase", phase)

    @property
    def height(self):
        return self.phase.shape[0]

    @property
    def width(self):
        return self.phase.shape[1]

    @property
    def shape(self):
        return self.phase.shape

    def to_slm_bytes(self):
        """Phase quantized to 8-bit SLM grey levels, row-major."""
        levels = np.floor(self.phase * (256.0 / TWO_PI)).astype(np.int64)
        return np.clip(levels, 0, 255).astype(np.uint8).tobytes()


@dataclass(frozen=True, eq=False)
class SpeckleImage:
    """One 8-bit camera frame."""

    grey: np.ndarray

    def __post_init__(self):
        grey = np.asarray(self.grey)
        if grey.ndim != 2 or grey.size == 0:
            raise ValueError("image must be a non-empty 2D array")
        if grey.dtype != np.uint8:
            if grey.min() < 0 or grey.max() > 255:
                raise ValueError("grey values must lie in 0..255")
            grey = grey.astype(np.uint8)
        grey = np.array(grey, order="C")
        grey.setflags(write=False)
        object.__setattr__(self, "grey", grey)

    @property
    def height(self):
        return self.grey.shape[0]

    @property
    def width(self):
        return self.grey.shape[1]

    @property
    def shape(self):
        return self.grey.shape

    def __eq__(self, other):
        if not isinstance(other, SpeckleImage):
            return NotImplemented
        return np.array_equal(self.grey, other.grey)


@dataclass(frozen=True)
class NoiseParams:
    """Camera noise.

    ``shot_scale`` is grey levels per photo-electron, so shot variance is
    ``shot_scale * signal``; ``read_sigma`` is additive Gaussian noise in
    grey levels.
    """

    shot_scale: float = 0.5
    read_sigma: float = 2.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.shot_scale < 0 or self.read_sigma < 0:
            raise ValueError("noise strengths must be non-negative")
        if not 0 <= self.noise_seed < 2**64:
            raise ValueError("noise_seed must be a 64-bit unsigned integer")

    @property
    def noiseless(self):
        return self.shot_scale == 0 and self.read_sigma == 0

    def with_seed(self, noise_seed):
        return NoiseParams(self.shot_scale, self.read_sigma, int(noise_seed))


@dataclass(frozen=True)
class Halo:
    """Smooth, challenge-independent light reaching the camera.

    The speckle intensity is weighted by a Gaussian envelope (standard
    deviation ``waist`` times the frame size per axis, on a uniform
    ``floor``), and a Gaussian diffuse background of peak ``background``
    times the mean speckle intensity (width ``background_waist``) is added.
    """

    waist: float = 0.3
    floor: float = 0.1
    background: float = 2.0
    background_waist: float = 0.25

    def __post_init__(self):
        if self.waist <= 0 or self.background_waist <= 0:
            raise ValueError("halo widths must be positive")
        if not 0 <= self.floor <= 1:
            raise ValueError("halo floor must lie in [0, 1]")
        if self.background < 0:
            raise ValueError("halo background must be >= 0")

    @staticmethod
    def _gauss(shape, waist):
        rows, cols = shape
        y = (np.arange(rows) - (rows - 1) / 2) / (waist * rows)
        x = (np.arange(cols) - (cols - 1) / 2) / (waist * cols)
        return np.exp(-0.5 * (y[:, None] ** 2 + x[None, :] ** 2))

    def envelope(self, shape):
        return self.floor + (1.0 - self.floor) * self._gauss(shape, self.waist)

    def apply(self, intensity):
        out = intensity * self.envelope(intensity.shape)
        if self.background:
            out = out + self.background * intensity.mean() * self._gauss(intensity.shape,
                                                                         self.background_waist)
        return out


@dataclass(frozen=True, eq=False)
class PufModel:
    """Seeded multi-screen scatterer.

    Only the parameters are state; the screens are regenerated from ``seed``
    on first use, so two models with equal parameters are bit-identical.
    """

    seed: int
    num_screens: int = DEFAULT_NUM_SCREENS
    in_dims: tuple = DEFAULT_IN_DIMS
    out_dims: tuple = DEFAULT_OUT_DIMS
    propagation_distance: float = DEFAULT_PROPAGATION_DISTANCE

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if int(self.num_screens) < 1:
            raise ValueError("num_screens must be >= 1")
        if self.propagation_distance < 0 or not np.isfinite(self.propagation_distance):
            raise ValueError("propagation_distance must be finite and >= 0")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "num_screens", int(self.num_screens))
        object.__setattr__(self, "in_dims", _dims(self.in_dims, "in_dims"))
        object.__setattr__(self, "out_dims", _dims(self.out_dims, "out_dims"))
        object.__setattr__(self, "propagation_distance", float(self.propagation_distance))

    def __eq__(self, other):
        if not isinstance(other, PufModel):
            return NotImplemented
        return self.params() == other.params()

    def __hash__(self):
        return hash(tuple(self.params().items()))

    @cached_property
    def screens(self):
        """Per-screen phase arrays in ``[0, 2π)``, shape ``out_dims``."""
        out = []
        for k in range(self.num_screens):
            phase = stream(self.seed, "screen", k).uniform(0.0, TWO_PI, size=self.out_dims)
            phase.setflags(write=False)
            out.append(phase)
        return tuple(out)

    @cached_property
    def _screen_factors(self):
        return tuple(np.exp(1j * s) for s in self.screens)

    @cached_property
    def transfer_function(self):
        """Fresnel transfer function on the output grid (unit modulus)."""
        return fresnel_transfer(self.out_dims, self.propagation_distance)

    def params(self):
        return {
            "seed": self.seed,
            "num_screens": self.num_screens,
            "in_dims": list(self.in_dims),
            "out_dims": list(self.out_dims),
            "propagation_distance": self.propagation_distance,
        }

    def to_json(self):
        return json.dumps(self.params(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return create_puf(**json.loads(text))


def uniform_phase_pattern(seed, dims=DEFAULT_IN_DIMS):
    """I.i.d. uniform phases over ``[0, 2π)`` from a seeded stream."""
    dims = _dims(dims)
    phase = stream(seed, "pattern").uniform(0.0, TWO_PI, size=dims)
    # uniform(0, 2π) can round up to exactly 2π in float64
    phase[phase >= TWO_PI] = 0.0
    return PhasePattern(phase)


def create_puf(seed, num_screens=DEFAULT_NUM_SCREENS, in_dims=DEFAULT_IN_DIMS,
               out_dims=DEFAULT_OUT_DIMS, propagation_distance=DEFAULT_PROPAGATION_DISTANCE):
    return PufModel(seed, num_screens, tuple(_dims(in_dims, "in_dims")),
                    tuple(_dims(out_dims, "out_dims")), propagation_distance)


def fresnel_transfer(shape, distance):
    """``exp(-iπ z (fx² + fy²))`` with frequencies in cycles per pixel."""
    fy = np.fft.fftfreq(shape[0])
    fx = np.fft.fftfreq(shape[1])
    return np.exp(-1j * np.pi * distance * (fy[:, None] ** 2 + fx[None, :] ** 2))


def fresnel_step(field, transfer):
    """One unitary free-space propagation step (spectral method)."""
    return np.fft.ifft2(np.fft.fft2(field, norm="ortho") * transfer, norm="ortho")


def _shared_frequency_index(n_in, n_out):
    lo = max(-(n_in // 2), -(n_out // 2))
    hi = min((n_in - 1) // 2, (n_out - 1) // 2)
    k = np.arange(lo, hi + 1)
    return k % n_in, k % n_out


def spectral_resample(field, shape):
    """Resample a field onto ``shape`` by zero-padding/cropping its spectrum.

    Upsampling keeps every frequency, so field energy is preserved exactly
    (orthonormal FFTs).
    """
    shape = _dims(shape, "shape")
    if field.shape == shape:
        return np.asarray(field, dtype=np.complex128)
    spectrum = np.fft.fft2(field, norm="ortho")
    iy, oy = _shared_frequency_index(field.shape[0], shape[0])
    ix, ox = _shared_frequency_index(field.shape[1], shape[1])
    out = np.zeros(shape, dtype=np.complex128)
    out[np.ix_(oy, ox)] = spectrum[np.ix_(iy, ix)]
    return np.fft.ifft2(out, norm="ortho")


def propagate(puf, pattern):
    """Complex output field for ``pattern`` through ``puf``.

    The input ``exp(i·phase)`` is resampled to ``out_dims``, then each
    screen is preceded by one Fresnel step.
    """
    if pattern.shape != puf.in_dims:
        raise ValueError(f"pattern dims {pattern.shape} != puf in_dims {puf.in_dims}")
    field = spectral_resample(np.exp(1j * pattern.phase), puf.out_dims)
    transfer = puf.transfer_function
    for screen in puf._screen_factors:
        field = fresnel_step(field, transfer) * screen
    return field


def _dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def _axis_operators(n_in, n_out, distance):
    f_in, f_out = _dft_matrix(n_in), _dft_matrix(n_out)
    select = np.zeros((n_out, n_in))
    i, o = _shared_frequency_index(n_in, n_out)
    select[o, i] = 1.0
    resample = f_out.conj().T @ select @ f_in
    freq = np.fft.fftfreq(n_out)
    step = f_out.conj().T @ np.diag(np.exp(-1j * np.pi * distance * freq**2)) @ f_out
    return resample, step


def transmission_matrix(puf):
    """Dense complex transmission matrix of ``puf`` built from explicit DFT matrices.

    Maps the row-major input field ``exp(i·phase).ravel()`` to the row-major
    output field. Independent of the FFT code path and meant for small
    dims only (size is ``prod(out_dims) × prod(in_dims)``).
    """
    (hi, wi), (ho, wo) = puf.in_dims, puf.out_dims
    if hi * wi * ho * wo > 2**22:
        raise ValueError("transmission_matrix is only practical for small dims")
    ry, py = _axis_operators(hi, ho, puf.propagation_distance)
    rx, px = _axis_operators(wi, wo, puf.propagation_distance)
    matrix = np.kron(ry, rx)
    hop = np.kron(py, px)
    for screen in puf.screens:
        matrix = np.exp(1j * screen.ravel())[:, None] * (hop @ matrix)
    return matrix


def propagate_dense(puf, pattern, matrix=None):
    """Output field via the dense transmission matrix."""
    if pattern.shape != puf.in_dims:
        raise ValueError(f"pattern dims {pattern.shape} != puf in_dims {puf.in_dims}")
    if matrix is None:
        matrix = transmission_matrix(puf)
    return (matrix @ np.exp(1j * pattern.phase).ravel()).reshape(puf.out_dims)


def capture(field, noise=NoiseParams(), exposure_percentile=DEFAULT_EXPOSURE_PERCENTILE,
            halo=Halo()):
    """Camera model: intensity, halo, exposure, noise, 8-bit quantization.

    The ``exposure_percentile`` quantile of the intensity (after the halo) is
    mapped to grey 255 before noise. ``halo=None`` gives flat detection.
    """
    if not 0 < exposure_percentile <= 1:
        raise ValueError("exposure_percentile must lie in (0, 1]")
    field = np.asarray(field)
    if not np.all(np.isfinite(field)):
        raise SimulationError("non-finite values in field")
    intensity = np.abs(field) ** 2
    if halo is not None:
        intensity = halo.apply(intensity)
    ref = float(np.quantile(intensity, exposure_percentile))
    if ref <= 0:
        ref = float(intensity.max())
    if ref <= 0:
        return SpeckleImage(np.zeros(intensity.shape, dtype=np.uint8))
    signal = intensity * (255.0 / ref)
    if not noise.noiseless:
        gen = stream(noise.noise_seed, "capture")
        if noise.shot_scale > 0:
            signal = gen.poisson(signal / noise.shot_scale) * noise.shot_scale
        if noise.read_sigma > 0:
            signal = signal + gen.normal(0.0, noise.read_sigma, size=signal.shape)
    return SpeckleImage(np.clip(np.rint(signal), 0, 255).astype(np.uint8))


def render(puf, pattern, noise=NoiseParams(), exposure_percentile=DEFAULT_EXPOSURE_PERCENTILE,
           halo=Halo()):
    return capture(propagate(puf, pattern), noise, exposure_percentile, halo)


def render_many(puf, patterns, noises, exposure_percentile=DEFAULT_EXPOSURE_PERCENTILE,
                halo=Halo(), threads=1):
    """Render ``patterns[i]`` with ``noises[i]``; output order follows input order."""
    patterns, noises = list(patterns), list(noises)
    if len(patterns) != len(noises):
        raise ValueError("need one NoiseParams per pattern")
    puf.screens, puf.transfer_function, puf._screen_factors  # warm caches before threading

    def one(i):
        return render(puf, patterns[i], noises[i], exposure_percentile, halo)

    if threads <= 1 or len(patterns) < 2:
        return [one(i) for i in range(len(patterns))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(patterns))))


def write_pgm(path, img):
    """Binary PGM (P5, maxval 255)."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.grey.tobytes())


def _pgm_tokens(raw, count):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        (magic, w, h, maxval), offset = _pgm_tokens(raw, 4)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{os.fspath(path)}: truncated PGM header") from exc
    if magic != b"P5" or int(maxval) != 255:
        raise ValueError(f"{os.fspath(path)}: only 8-bit binary PGM (P5, maxval 255) is supported")
    w, h = int(w), int(h)
    body = raw[offset:offset + w * h]
    if len(body) != w * h:
        raise ValueError(f"{os.fspath(path)}: expected {w * h} pixel bytes, found {len(body)}")
    return SpeckleImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w))

