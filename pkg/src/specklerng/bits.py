"""Packed bit strings with MSB-first bit order."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class BitString:
    """Immutable packed binary sequence.

    Bits are stored MSB-first inside each byte (``numpy.packbits`` order);
    pad bits past ``length`` are always zero.
    """

    data: np.ndarray
    length: int

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.uint8).ravel()
        if self.length < 0 or self.length > 8 * data.size:
            raise ValueError(f"length {self.length} does not fit in {data.size} bytes")
        nbytes = (self.length + 7) // 8
        data = data[:nbytes].copy()
        tail = self.length % 8
        if tail:
            data[-1] &= np.uint8((0xFF << (8 - tail)) & 0xFF)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_bits(cls, bits):
        """Build from an iterable/array of 0/1 values or a string like ``"1011"``."""
        if isinstance(bits, str):
            arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(bits, dtype=np.uint8).ravel()
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(np.packbits(arr), int(arr.size))

    @classmethod
    def from_bytes(cls, raw, length=None):
        data = np.frombuffer(bytes(raw), dtype=np.uint8)
        return cls(data, 8 * data.size if length is None else length)

    def __len__(self):
        return self.length

    def __eq__(self, other):
        if not isinstance(other, BitString):
            return NotImplemented
        return self.length == other.length and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.length, self.data.tobytes()))

    def __repr__(self):
        preview = self.to_ascii()[:32]
        more = "..." if self.length > 32 else ""
        return f"BitString({preview!r}{more}, length={self.length})"

    def unpack(self):
        """Return the bits as a uint8 array of 0/1 values."""
        return np.unpackbits(self.data, count=self.length)

    def to_bytes(self):
        return self.data.tobytes()

    def to_ascii(self):
        return (self.unpack() + ord("0")).tobytes().decode("ascii")

    def count_ones(self):
        return int(np.unpackbits(self.data).sum())

    def complement(self):
        return BitString(~self.data, self.length)

    def __xor__(self, other):
        if self.length != other.length:
            raise ValueError(f"length mismatch: {self.length} != {other.length}")
        return BitString(self.data ^ other.data, self.length)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return BitString.from_bits(self.unpack()[key])
        return int(self.unpack()[key])

    def concat(self, *others):
        if all(len(b) % 8 == 0 for b in (self, *others)):
            data = np.concatenate([self.data] + [o.data for o in others])
            return BitString(data, self.length + sum(len(o) for o in others))
        return BitString.from_bits(np.concatenate([self.unpack()] + [o.unpack() for o in others]))

    def words(self, width):
        """Split into consecutive ``width``-bit strings, dropping any tail."""
        if width <= 0 or width % 8:
            raise ValueError("word width must be a positive multiple of 8")
        step = width // 8
        n = self.length // width
        return [BitString(self.data[i * step:(i + 1) * step], width) for i in range(n)]

    def word_matrix(self, width):
        """Unpacked ``(n_words, width)`` 0/1 matrix of consecutive words."""
        n = self.length // width
        return self.unpack()[: n * width].reshape(n, width)
