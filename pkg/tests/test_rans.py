import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selic.errors import DecodeError, EncodeError, InvalidInputError
from selic.rans import PROB_SCALE, STATE_LOWER, CdfTable, rc_decode, rc_encode

EQUAL_SPLIT = CdfTable([0, 32768, 65536])


def random_table(rng: np.random.Generator, alphabet_size: int) -> CdfTable:
    freqs = rng.integers(1, 50, size=alphabet_size)
    freqs = freqs * (PROB_SCALE - alphabet_size) // freqs.sum() + 1
    freqs[-1] += PROB_SCALE - freqs.sum()
    return CdfTable.from_frequencies(freqs)


def test_empty_stream_is_flushed_initial_state():
    assert rc_encode([], []) == struct.pack("<Q", STATE_LOWER)
    assert rc_decode(struct.pack("<Q", STATE_LOWER), [], 0) == []


def test_single_symbol_trace():
    # Hand-executed: x = 2**32 -> (x // 32768) << 16 | (x % 32768) + start.
    assert rc_encode([0], [EQUAL_SPLIT]) == struct.pack("<Q", 1 << 33)
    assert rc_encode([1], [EQUAL_SPLIT]) == struct.pack("<Q", (1 << 33) + 32768)
    assert rc_decode(rc_encode([0], [EQUAL_SPLIT]), [EQUAL_SPLIT], 1) == [0]
    assert rc_decode(rc_encode([1], [EQUAL_SPLIT]), [EQUAL_SPLIT], 1) == [1]


def test_round_trip_random_tables():
    rng = np.random.default_rng(0)
    tables = [random_table(rng, int(n)) for n in rng.integers(2, 600, size=40)]
    symbols = [int(rng.integers(0, t.alphabet_size)) for t in tables]
    per_symbol = [tables[i] for i in range(len(symbols))]
    data = rc_encode(symbols, per_symbol)
    assert rc_decode(data, per_symbol, len(symbols)) == symbols


def test_round_trip_large():
    rng = np.random.default_rng(1)
    distinct = [random_table(rng, int(n)) for n in rng.integers(2, 512, size=16)]
    picks = rng.integers(0, len(distinct), size=20000)
    tables = [distinct[i] for i in picks]
    symbols = [int(rng.integers(0, t.alphabet_size)) for t in tables]
    assert rc_decode(rc_encode(symbols, tables), tables, len(symbols)) == symbols


def test_skewed_tables_round_trip():
    # Minimum-width bins next to a dominant bin stress the renormalization.
    table = CdfTable([0, 1, 2, PROB_SCALE - 1, PROB_SCALE])
    symbols = [0, 1, 2, 3, 2, 2, 0, 3, 1, 2] * 50
    tables = [table] * len(symbols)
    assert rc_decode(rc_encode(symbols, tables), tables, len(symbols)) == symbols


def test_single_symbol_alphabet():
    table = CdfTable([0, PROB_SCALE])
    tables = [table] * 100
    data = rc_encode([0] * 100, tables)
    assert rc_decode(data, tables, 100) == [0] * 100


def test_encode_rejects_out_of_alphabet():
    with pytest.raises(EncodeError):
        rc_encode([2], [EQUAL_SPLIT])
    with pytest.raises(EncodeError):
        rc_encode([-1], [EQUAL_SPLIT])


def test_decode_rejects_truncation():
    rng = np.random.default_rng(2)
    table = random_table(rng, 300)
    symbols = [int(rng.integers(0, 300)) for _ in range(500)]
    tables = [table] * len(symbols)
    data = rc_encode(symbols, tables)
    assert len(data) > 8
    with pytest.raises(DecodeError):
        rc_decode(data[: len(data) - 4], tables, len(symbols))
    with pytest.raises(DecodeError):
        rc_decode(b"\x01\x02", tables, len(symbols))


def test_corrupt_bytes_never_crash():
    rng = np.random.default_rng(3)
    table = random_table(rng, 64)
    symbols = [int(rng.integers(0, 64)) for _ in range(200)]
    tables = [table] * len(symbols)
    data = bytearray(rc_encode(symbols, tables))
    for pos in range(len(data)):
        corrupted = bytes(data[:pos] + bytes([data[pos] ^ 0xFF]) + data[pos + 1 :])
        try:
            out = rc_decode(corrupted, tables, len(symbols))
            assert len(out) == len(symbols)
        except DecodeError:
            pass


def test_table_validation():
    with pytest.raises(InvalidInputError):
        CdfTable([0])
    with pytest.raises(InvalidInputError):
        CdfTable([1, PROB_SCALE])
    with pytest.raises(InvalidInputError):
        CdfTable([0, 100])
    with pytest.raises(InvalidInputError):
        CdfTable([0, 5, 5, PROB_SCALE])


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_round_trip_property(data):
    sizes = data.draw(st.lists(st.integers(2, 40), min_size=0, max_size=60))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    tables = [random_table(rng, n) for n in sizes]
    symbols = [int(rng.integers(0, t.alphabet_size)) for t in tables]
    assert rc_decode(rc_encode(symbols, tables), tables, len(symbols)) == symbols
