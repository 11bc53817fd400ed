import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specklerng.bits import BitString

bit_lists = st.lists(st.integers(0, 1), max_size=200)


def test_msb_first_packing():
    b = BitString.from_bits("10000000" "0000001")
    assert b.to_bytes() == bytes([0x80, 0x02])
    assert len(b) == 15


def test_pad_bits_are_zeroed():
    b = BitString(np.array([0xFF], dtype=np.uint8), 3)
    assert b.to_bytes() == bytes([0xE0])
    assert b == BitString.from_bits("111")


def test_length_must_fit():
    with pytest.raises(ValueError):
        BitString(np.zeros(1, dtype=np.uint8), 9)


def test_rejects_non_binary():
    with pytest.raises(ValueError):
        BitString.from_bits([0, 2, 1])


@given(bit_lists)
def test_roundtrip(bits):
    b = BitString.from_bits(bits)
    assert b.unpack().tolist() == bits
    assert b.to_ascii() == "".join(map(str, bits))
    assert b.count_ones() == sum(bits)


@given(bit_lists)
def test_complement_flips_every_bit(bits):
    b = BitString.from_bits(bits)
    assert b.complement().unpack().tolist() == [1 - x for x in bits]
    assert b.complement().complement() == b


def test_xor_and_slicing():
    a, b = BitString.from_bits("1100"), BitString.from_bits("1010")
    assert (a ^ b) == BitString.from_bits("0110")
    assert a[1:3] == BitString.from_bits("10")
    assert a[0] == 1 and a[3] == 0


@given(bit_lists, bit_lists)
def test_concat(x, y):
    joined = BitString.from_bits(x).concat(BitString.from_bits(y))
    assert joined.unpack().tolist() == x + y


def test_words_drop_tail():
    b = BitString.from_bytes(bytes(range(10)))
    words = b.words(32)
    assert len(words) == 2
    assert words[1].to_bytes() == bytes([4, 5, 6, 7])
    assert b.word_matrix(32).shape == (2, 32)
