import cmath
import math

import numpy as np
import pytest

from specklerng import nist
from specklerng.bits import BitString
from specklerng.errors import InsufficientDataError

PI_100 = ("11001001000011111101101010100010001000010110100011"
          "00001000110100110001001100011001100010100010111000")
LONGEST_128 = ("11001100000101010110110001001100111000000000001001"
               "00110101010001000100111101011010000000110101111100"
               "1100111001101101100010110010")

# worked examples from the SP 800-22 test descriptions: (test, bits, params, P-values)
WORKED = [
    ("frequency", "1011010101", {}, [0.527089]),
    ("frequency", PI_100, {}, [0.109599]),
    ("block_frequency", "0110011010", {"block_size": 3}, [0.801252]),
    ("block_frequency", PI_100, {"block_size": 10}, [0.706438]),
    ("runs", "1001101011", {}, [0.147232]),
    ("runs", PI_100, {}, [0.500798]),
    ("longest_run", LONGEST_128, {}, [0.180609]),
    ("cumulative_sums", "1011010111", {}, [0.4116588, 0.4116588]),
    ("cumulative_sums", PI_100, {}, [0.219194, 0.114866]),
    ("serial", "0011011101", {"m": 3}, [0.808792, 0.670320]),
    ("approximate_entropy", "0100110101", {"m": 3}, [0.261961]),
    ("approximate_entropy", PI_100, {"m": 2}, [0.235301]),
]


@pytest.mark.parametrize("name,bits,params,expected", WORKED,
                         ids=[f"{w[0]}-{len(w[1])}" for w in WORKED])
def test_worked_examples(name, bits, params, expected):
    got = nist.nist_test(name, bits, params)
    assert got == pytest.approx(expected, abs=1e-4)


def spectral_direct(bits):
    """Spectral statistic from an explicit O(n²) DFT."""
    x = [2 * b - 1 for b in bits]
    n = len(x)
    threshold = math.sqrt(math.log(1 / 0.05) * n)
    n1 = 0
    for k in range(n // 2):
        s = sum(x[j] * cmath.exp(-2j * math.pi * j * k / n) for j in range(n))
        n1 += abs(s) < threshold
    d = (n1 - 0.95 * n / 2) / math.sqrt(n * 0.95 * 0.05 / 4)
    return math.erfc(abs(d) / math.sqrt(2))


@pytest.mark.parametrize("seed,n", [(0, 10), (1, 100), (2, 257), (3, 1000)])
def test_spectral_matches_direct_dft(seed, n):
    bits = np.random.default_rng(seed).integers(0, 2, n)
    assert nist.spectral(bits)[0] == pytest.approx(spectral_direct(bits.tolist()), abs=1e-12)


class TestEdgeCases:
    def test_frequency_all_ones_fails(self):
        assert nist.frequency("1" * 100)[0] < 1e-20

    def test_frequency_alternating_is_one(self):
        assert nist.frequency("01" * 50)[0] == 1.0

    def test_runs_prerequisite(self):
        assert nist.runs("1" * 90 + "0" * 10) == [0.0]

    def test_accepts_bitstring_and_arrays(self):
        s = "1011010101"
        assert nist.frequency(BitString.from_bits(s)) == nist.frequency(s) == \
            nist.frequency(np.array(list(map(int, s))))

    @pytest.mark.parametrize("name,bits", [("longest_run", "1" * 100),
                                           ("block_frequency", "1" * 100),
                                           ("serial", "1" * 10)])
    def test_too_short(self, name, bits):
        with pytest.raises(InsufficientDataError) as err:
            nist.nist_test(name, bits)
        assert err.value.minimum is not None

    def test_unknown_test(self):
        with pytest.raises(ValueError):
            nist.nist_test("rank", "0101")

    def test_pattern_counts_wrap(self):
        counts = nist.pattern_counts(np.array([0, 1, 1]), 2)
        # 01, 11, 10 with wrap-around
        assert counts.tolist() == [0, 1, 1, 1]

    def test_multi_p_tests_return_all_values(self):
        bits = np.random.default_rng(5).integers(0, 2, 4096)
        assert len(nist.cumulative_sums(bits)) == 2
        assert len(nist.serial(bits, m=4)) == 2

    @pytest.mark.parametrize("name", sorted(nist.TESTS))
    def test_p_values_in_unit_interval(self, name):
        bits = np.random.default_rng(9).integers(0, 2, 1 << 17)
        assert all(0.0 <= p <= 1.0 for p in nist.nist_test(name, bits))

    def test_longest_run_table_selection(self):
        bits = np.random.default_rng(4).integers(0, 2, 750_000)
        assert 0 < nist.longest_run(bits)[0] <= 1

    def test_recommended_lengths(self):
        assert nist.recommended_min_length("serial", {"m": 16}) == 2**19
        assert nist.recommended_min_length("approximate_entropy", {"m": 10}) == 2**16
        assert nist.recommended_min_length("frequency") == 100
