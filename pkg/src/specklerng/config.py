"""Pipeline configuration: nested dataclasses with TOML round-trip."""

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import nist
from .extractor import DIGEST_BITS, ExtractorConfig
from .fingerprint import GaborParams
from .puf_sim import Halo, NoiseParams, create_puf


class ConfigError(ValueError):
    """Invalid configuration value; ``path`` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class PufSection:
    seed: int = 1
    num_screens: int = 3
    in_dims: list = field(default_factory=lambda: [64, 64])
    out_dims: list = field(default_factory=lambda: [256, 256])
    propagation_distance: float = 100.0


@dataclass
class DatasetSection:
    pattern_seed: int = 1000
    intra: int = 100
    inter: int = 200


@dataclass
class CameraSection:
    exposure_percentile: float = 0.99
    shot_scale: float = 0.5
    read_sigma: float = 2.0
    noise_seed: int = 0
    halo: bool = True
    halo_waist: float = 0.3
    halo_floor: float = 0.1
    halo_background: float = 2.0
    halo_background_waist: float = 0.25


@dataclass
class GaborSection:
    wavelength: float = 8.0
    sigma: float = 4.0
    orientation_deg: float = 45.0
    stride: int = 8


@dataclass
class ExtractorSection:
    # 0 means: use the calibrated value
    block_bits: int = 0
    span_images: bool = False
    # empty means: no crop
    crop: list = field(default_factory=list)
    export_ascii: bool = False


@dataclass
class BatterySection:
    subseq_bits: int = 1_000_000
    alpha: float = 0.01
    tests: list = field(default_factory=lambda: list(nist.TESTS))
    block_frequency_m: int = 128
    serial_m: int = 16
    approximate_entropy_m: int = 10


@dataclass
class PipelineConfig:
    output_dir: str = "out"
    threads: int = 1
    puf: PufSection = field(default_factory=PufSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    camera: CameraSection = field(default_factory=CameraSection)
    gabor: GaborSection = field(default_factory=GaborSection)
    extractor: ExtractorSection = field(default_factory=ExtractorSection)
    battery: BatterySection = field(default_factory=BatterySection)

    # --- derived objects -------------------------------------------------

    def make_puf(self):
        p = self.puf
        return create_puf(p.seed, p.num_screens, tuple(p.in_dims), tuple(p.out_dims),
                          p.propagation_distance)

    def noise(self, noise_seed=None):
        c = self.camera
        return NoiseParams(c.shot_scale, c.read_sigma,
                           c.noise_seed if noise_seed is None else noise_seed)

    def halo(self):
        c = self.camera
        return (Halo(c.halo_waist, c.halo_floor, c.halo_background, c.halo_background_waist)
                if c.halo else None)

    def gabor_params(self):
        g = self.gabor
        return GaborParams(g.wavelength, g.sigma, g.orientation_deg, g.stride)

    def extractor_config(self, block_bits=None):
        e = self.extractor
        bits = block_bits if block_bits is not None else e.block_bits
        return ExtractorConfig(int(bits), DIGEST_BITS, e.span_images,
                               tuple(e.crop) if e.crop else None)

    def battery_params(self):
        b = self.battery
        return {
            "block_frequency": {"block_size": b.block_frequency_m},
            "serial": {"m": b.serial_m},
            "approximate_entropy": {"m": b.approximate_entropy_m},
        }

    # --- serialization ---------------------------------------------------

    def to_dict(self):
        return asdict(self)

    def to_toml(self):
        return tomli_w.dumps(self.to_dict())

    def digest(self):
        """SHA-256 of the result-relevant settings (output_dir and threads excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data):
        cfg = _build(cls, data, "")
        validate(cfg)
        return cfg

    @classmethod
    def from_toml(cls, text):
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("<file>", f"invalid TOML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        return cls.from_toml(raw.decode("utf-8"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_toml())


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"{prefix}{name}", "unknown field")
    kwargs = {}
    defaults = cls()
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        default = getattr(defaults, name)
        path = f"{prefix}{name}"
        if hasattr(default, "__dataclass_fields__"):
            kwargs[name] = _build(type(default), value, path + ".")
        else:
            kwargs[name] = _coerce(value, default, path)
    return cls(**kwargs)


def _coerce(value, default, path):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return list(value)
    return value


def _check(ok, path, message):
    if not ok:
        raise ConfigError(path, message)


def _check_dims(dims, path):
    _check(len(dims) == 2 and all(isinstance(d, int) and not isinstance(d, bool) and d > 0
                                  for d in dims), path, "expected two positive integers")


def validate(cfg):
    """Raise ConfigError naming the first out-of-domain field."""
    _check(cfg.threads >= 1, "threads", "must be >= 1")
    _check(bool(cfg.output_dir), "output_dir", "must not be empty")
    p = cfg.puf
    _check(0 <= p.seed < 2**64, "puf.seed", "must be a 64-bit unsigned integer")
    _check(p.num_screens >= 1, "puf.num_screens", "must be >= 1")
    _check_dims(p.in_dims, "puf.in_dims")
    _check_dims(p.out_dims, "puf.out_dims")
    _check(p.propagation_distance >= 0, "puf.propagation_distance", "must be >= 0")
    d = cfg.dataset
    _check(0 <= d.pattern_seed < 2**63, "dataset.pattern_seed", "must be a non-negative integer")
    _check(d.intra >= 2, "dataset.intra", "must be >= 2")
    _check(d.inter >= 2, "dataset.inter", "must be >= 2")
    c = cfg.camera
    _check(0 < c.exposure_percentile <= 1, "camera.exposure_percentile", "must lie in (0, 1]")
    _check(c.shot_scale >= 0, "camera.shot_scale", "must be >= 0")
    _check(c.read_sigma >= 0, "camera.read_sigma", "must be >= 0")
    _check(0 <= c.noise_seed < 2**64, "camera.noise_seed", "must be a 64-bit unsigned integer")
    _check(c.halo_waist > 0, "camera.halo_waist", "must be > 0")
    _check(0 <= c.halo_floor <= 1, "camera.halo_floor", "must lie in [0, 1]")
    _check(c.halo_background >= 0, "camera.halo_background", "must be >= 0")
    _check(c.halo_background_waist > 0, "camera.halo_background_waist", "must be > 0")
    g = cfg.gabor
    _check(g.wavelength > 0, "gabor.wavelength", "must be > 0")
    _check(g.sigma > 0, "gabor.sigma", "must be > 0")
    _check(g.stride >= 1, "gabor.stride", "must be >= 1")
    support = 2 * math.ceil(3 * g.sigma) + 1
    _check(support <= min(p.out_dims), "gabor.sigma",
           f"kernel support {support} exceeds frame {p.out_dims}")
    e = cfg.extractor
    _check(e.block_bits == 0 or (e.block_bits >= DIGEST_BITS and e.block_bits % 8 == 0),
           "extractor.block_bits", "must be 0 (calibrate) or a multiple of 8 that is >= 256")
    if e.crop:
        _check_dims(e.crop, "extractor.crop")
        _check(e.crop[0] <= p.out_dims[0] and e.crop[1] <= p.out_dims[1],
               "extractor.crop", "exceeds puf.out_dims")
    b = cfg.battery
    _check(b.subseq_bits > 0, "battery.subseq_bits", "must be > 0")
    _check(0 < b.alpha < 1, "battery.alpha", "must lie in (0, 1)")
    _check(len(b.tests) > 0, "battery.tests", "must list at least one test")
    for i, name in enumerate(b.tests):
        _check(name in nist.TESTS, f"battery.tests[{i}]",
               f"unknown test {name!r}; known: {', '.join(nist.TESTS)}")
    _check(b.block_frequency_m >= 1, "battery.block_frequency_m", "must be >= 1")
    _check(b.serial_m >= 2, "battery.serial_m", "must be >= 2")
    _check(b.approximate_entropy_m >= 1, "battery.approximate_entropy_m", "must be >= 1")
    return cfg
