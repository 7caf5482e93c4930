#!/usr/bin/env python3
"""Round-trip symbols through the range coder and compare stream size
against the entropy of the source distribution."""

import math

import numpy as np

from selic import CdfTable, rc_decode, rc_encode

rng = np.random.default_rng(42)

# A skewed 8-symbol alphabet. Frequencies must sum to 65536, the coder's
# fixed probability scale; from_frequencies checks that.
freqs = [20000, 15000, 12000, 8000, 5000, 3000, 2000, 536]
table = CdfTable.from_frequencies(freqs)

n = 50_000
probs = np.asarray(freqs, dtype=np.float64) / 65536.0
symbols = rng.choice(len(freqs), size=n, p=probs).tolist()

stream = rc_encode(symbols, [table] * n)
decoded = rc_decode(stream, [table] * n, n)
assert decoded == symbols

entropy_bits = -sum(p * math.log2(p) for p in probs) * n
print(f"{n} symbols, alphabet {len(freqs)}")
print(f"entropy:   {entropy_bits / 8:10.1f} bytes")
print(f"stream:    {len(stream):10d} bytes")
print(f"overhead:  {8 * len(stream) / entropy_bits - 1:10.4%}")

# Streams are self-delimiting only through the symbol count; feeding a
# truncated buffer raises instead of returning garbage.
try:
    rc_decode(stream[: len(stream) // 2], [table] * n, n)
except Exception as exc:
    print(f"truncated stream rejected: {exc}")

# The native coder, when built, produces byte-identical output.
try:
    from selic.fastcoder import load_fast_coder

    fast = load_fast_coder()
    assert fast.encode(symbols, [table] * n) == stream
    assert fast.decode(stream, [table] * n, n) == symbols
    print(f"native coder agrees byte for byte ({fast.path})")
except Exception as exc:
    print(f"native coder not available: {exc}")
