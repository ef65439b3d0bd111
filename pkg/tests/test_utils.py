"""Unit tests for python_keed.utils conversion helpers."""

import numpy as np

from python_keed.utils import round_half_up, sha256_hex, str_to_json, to_signed, to_unsigned


# --- to_signed / to_unsigned ---

class TestToSigned:
    def test_positive_unchanged(self):
        assert to_signed(1000, 12) == 1000

    def test_all_ones_is_minus_one(self):
        """0xFFF in 12 bits is -1."""
        assert to_signed(0xFFF, 12) == -1

    def test_most_negative(self):
        assert to_signed(0x800, 12) == -2048

    def test_array_input(self):
        result = to_signed(np.array([0, 0x7FF, 0x800, 0xFFF]), 12)
        assert result.tolist() == [0, 2047, -2048, -1]

    def test_32_bit(self):
        assert to_signed(0xFFFFFFFF, 32) == -1


class TestToUnsigned:
    def test_inverse_of_to_signed(self):
        values = np.arange(-2048, 2048)
        assert np.array_equal(to_signed(to_unsigned(values, 12), 12), values)

    def test_minus_one(self):
        assert to_unsigned(np.array([-1]), 16).tolist() == [0xFFFF]


# --- round_half_up ---

class TestRoundHalfUp:
    def test_half_rounds_up(self):
        assert round_half_up(2.5) == 3
        assert round_half_up(3.5) == 4

    def test_negative_half_rounds_toward_positive(self):
        assert round_half_up(-2.5) == -2

    def test_plain_values(self):
        assert round_half_up(1.49) == 1
        assert round_half_up(1.51) == 2


# --- str_to_json ---

class TestStrToJson:
    def test_unquoted_keys(self):
        assert str_to_json("{seed:7,lambda:0.5}") == {"seed": 7, "lambda": 0.5}

    def test_standard_json(self):
        assert str_to_json('{"a": [1, 2, 3]}') == {"a": [1, 2, 3]}

    def test_nested(self):
        result = str_to_json("{model:{width:8},decode:{sigma:3}}")
        assert result["model"]["width"] == 8
        assert result["decode"]["sigma"] == 3


class TestSha256Hex:
    def test_known_digest(self):
        assert sha256_hex(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
