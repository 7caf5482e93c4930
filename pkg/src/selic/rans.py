"""Reference stream-ANS entropy coder.

This implementation is normative: any alternative coder backend must produce
byte-identical output. The algorithm is pinned exactly as follows.

State and precision
    64-bit unsigned state ``x`` with lower bound ``L = 2**32``; frequency
    precision 16 bits (every table sums to 65536).

Encoding (symbols consumed in REVERSE order)
    Start with ``x = L``. For each symbol (last first) with frequency ``f``
    and cumulative start ``s``: if ``x >= f << 48`` emit the low 32 bits of
    ``x`` and shift ``x`` right by 32; then
    ``x = (x // f) << 16 | ((x % f) + s)``.
    The byte stream is the final state as 8 little-endian bytes, followed by
    the emitted 32-bit words in reverse emission order, each little-endian.

Decoding (forward over the byte stream)
    Read the 8-byte state. For each symbol: ``cum = x & 0xFFFF`` selects the
    symbol whose bin contains ``cum``; ``x = f * (x >> 16) + cum - s``; if
    ``x < L`` read the next 4 bytes as a little-endian word ``w`` and set
    ``x = x << 32 | w``. Running out of bytes mid-stream is a decode error.
"""

from __future__ import annotations

import struct
from bisect import bisect_right
from typing import Sequence

import numpy as np

from .errors import DecodeError, EncodeError, InvalidInputError

PRECISION = 16
PROB_SCALE = 1 << PRECISION
STATE_LOWER = 1 << 32
MASK16 = PROB_SCALE - 1
MASK32 = (1 << 32) - 1


class CdfTable:
    """Cumulative frequency table over a contiguous integer alphabet.

    `cumulative` has one entry per symbol plus one: cumulative[0] == 0,
    cumulative[-1] == 65536, strictly increasing (so every symbol has a
    nonzero coded frequency).
    """

    __slots__ = ("cumulative", "alphabet_size")

    def __init__(self, cumulative: Sequence[int]):
        cum = [int(v) for v in cumulative]
        if len(cum) < 2:
            raise InvalidInputError("cdf table needs at least one symbol")
        if cum[0] != 0 or cum[-1] != PROB_SCALE:
            raise InvalidInputError(
                f"cumulative must run from 0 to {PROB_SCALE}, got {cum[0]}..{cum[-1]}"
            )
        for a, b in zip(cum, cum[1:]):
            if b <= a:
                raise InvalidInputError("cumulative frequencies must be strictly increasing")
        self.cumulative = cum
        self.alphabet_size = len(cum) - 1

    @classmethod
    def from_frequencies(cls, freqs: Sequence[int]) -> "CdfTable":
        cum = np.concatenate([[0], np.cumsum(np.asarray(freqs, dtype=np.int64))])
        return cls(cum.tolist())

    def freq(self, symbol: int) -> int:
        return self.cumulative[symbol + 1] - self.cumulative[symbol]

    def start(self, symbol: int) -> int:
        return self.cumulative[symbol]

    def find(self, cum_value: int) -> int:
        """Symbol whose bin [start, start+freq) contains cum_value."""
        return bisect_right(self.cumulative, cum_value) - 1

    def __eq__(self, other):
        return isinstance(other, CdfTable) and self.cumulative == other.cumulative

    def __hash__(self):
        return hash(tuple(self.cumulative))


def rc_encode(symbols: Sequence[int], tables: Sequence[CdfTable]) -> bytes:
    """Encode `symbols`, the i-th under `tables[i]`, into a byte stream."""
    n = len(symbols)
    if len(tables) != n:
        raise EncodeError(f"got {n} symbols but {len(tables)} tables")
    x = STATE_LOWER
    words = []
    for i in range(n - 1, -1, -1):
        table = tables[i]
        s = int(symbols[i])
        if s < 0 or s >= table.alphabet_size:
            raise EncodeError(
                f"symbol {s} at index {i} outside alphabet of size {table.alphabet_size}"
            )
        cum = table.cumulative
        f = cum[s + 1] - cum[s]
        if x >= f << 48:
            words.append(x & MASK32)
            x >>= 32
        x = ((x // f) << PRECISION) | ((x % f) + cum[s])
    out = bytearray(struct.pack("<Q", x))
    for w in reversed(words):
        out += struct.pack("<I", w)
    return bytes(out)


def rc_decode(data: bytes, tables: Sequence[CdfTable], count: int) -> list[int]:
    """Exact inverse of rc_encode for matching tables and count."""
    if count != len(tables):
        raise DecodeError(f"got count={count} but {len(tables)} tables")
    if len(data) < 8:
        raise DecodeError(f"stream too short for the coder state: {len(data)} bytes")
    x = struct.unpack_from("<Q", data, 0)[0]
    pos = 8
    symbols = []
    for i in range(count):
        table = tables[i]
        cum_value = x & MASK16
        s = table.find(cum_value)
        cum = table.cumulative
        f = cum[s + 1] - cum[s]
        x = f * (x >> PRECISION) + cum_value - cum[s]
        if x < STATE_LOWER:
            if pos + 4 > len(data):
                raise DecodeError(
                    f"truncated stream: needed a renormalization word for symbol {i}"
                )
            x = (x << 32) | struct.unpack_from("<I", data, pos)[0]
            pos += 4
        symbols.append(s)
    return symbols
