"""SHA-256 block extraction of raw frames into a full-entropy bitstream.

Each frame is serialized row-major, one byte per pixel, chopped into
``block_bits / 8``-byte blocks, and every block is replaced by its SHA-256
digest. The residual tail shorter than a block is discarded. No salt,
key or counter is mixed in.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bits import BitString
from .entropy import GreyHistogram

DIGEST_BITS = 256
DIGEST_BYTES = DIGEST_BITS // 8


@dataclass(frozen=True)
class ExtractorConfig:
    """``crop`` keeps the top-left ``(rows, cols)`` of every frame when set."""

    block_bits: int = 344
    out_bits_per_block: int = DIGEST_BITS
    span_images: bool = False
    crop: tuple | None = None

    def __post_init__(self):
        if self.block_bits < DIGEST_BITS or self.block_bits % 8:
            raise ValueError(f"block_bits must be a multiple of 8 and >= {DIGEST_BITS}, "
                             f"got {self.block_bits}")
        if self.out_bits_per_block != DIGEST_BITS:
            raise ValueError("SHA-256 emits exactly 256 bits per block")
        if self.crop is not None:
            crop = tuple(int(c) for c in self.crop)
            if len(crop) != 2 or min(crop) <= 0:
                raise ValueError("crop must be two positive integers")
            object.__setattr__(self, "crop", crop)

    @property
    def block_bytes(self):
        return self.block_bits // 8

    def to_dict(self):
        d = asdict(self)
        d["crop"] = list(self.crop) if self.crop else None
        return d

    def digest(self):
        text = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(text).hexdigest()


@dataclass
class RandomBitstream:
    bits: BitString
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.bits)

    @property
    def empty(self):
        return len(self.bits) == 0

    def to_bytes(self):
        return self.bits.to_bytes()

    def sha256(self):
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def write(self, path, ascii_path=None):
        """Raw MSB-first bytes, no header; optional ASCII 0/1 copy."""
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())
        if ascii_path is not None:
            with open(ascii_path, "w") as fh:
                fh.write(self.bits.to_ascii())


def image_to_bytes(img, crop=None):
    grey = img.grey
    if crop is not None:
        rows, cols = crop
        if rows > grey.shape[0] or cols > grey.shape[1]:
            raise ValueError(f"crop {crop} exceeds frame {grey.shape}")
        grey = grey[:rows, :cols]
    return np.ascontiguousarray(grey).tobytes()


def sha256(block):
    return hashlib.sha256(block).digest()


def hash_blocks(raw, block_bytes):
    """Concatenated digests of consecutive ``block_bytes`` blocks of ``raw``."""
    view = memoryview(raw)
    n = len(raw) // block_bytes
    h = hashlib.sha256
    return b"".join([h(view[i:i + block_bytes]).digest()
                     for i in range(0, n * block_bytes, block_bytes)])


def output_bits(raw_bits, block_bits):
    """Output-length law: ``floor(raw_bits / block_bits) * 256``."""
    return (raw_bits // block_bits) * DIGEST_BITS


def expected_output_bits(frame_bytes, cfg, n_frames=1):
    if cfg.span_images:
        return output_bits(frame_bytes * 8 * n_frames, cfg.block_bits)
    return n_frames * output_bits(frame_bytes * 8, cfg.block_bits)


def _units(images, cfg):
    if cfg.span_images:
        raw = b"".join(image_to_bytes(img, cfg.crop) for img in images)
        step = cfg.block_bytes * max(1, (1 << 20) // cfg.block_bytes)
        return [raw[i:i + step] for i in range(0, len(raw), step)]
    return [image_to_bytes(img, cfg.crop) for img in images]


def extract_bytes(images, cfg=ExtractorConfig(), threads=1):
    """Digest bytes for ``images``; identical for any ``threads``."""
    units = _units(list(images), cfg)
    b = cfg.block_bytes
    if threads <= 1 or len(units) < 2:
        return b"".join(hash_blocks(u, b) for u in units)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return b"".join(pool.map(lambda u: hash_blocks(u, b), units))


def extract(images, cfg=ExtractorConfig(), threads=1, provenance=None):
    """Hash ``images`` into a RandomBitstream.

    Returns an empty stream (``.empty``) when the input is shorter than one
    block.
    """
    images = list(images)
    if not images:
        raise ValueError("extract needs at least one image")
    out = extract_bytes(images, cfg, threads)
    prov = {"config": cfg.to_dict(), "config_digest": cfg.digest(), "frames": len(images)}
    prov.update(provenance or {})
    return RandomBitstream(BitString.from_bytes(out), prov)


def hashed_image_view(img, cfg=ExtractorConfig()):
    """Byte histogram of one frame after extraction.

    An empty histogram (``.empty``) means the frame is shorter than a block.
    """
    return GreyHistogram.from_bytes(extract_bytes([img], cfg))
