"""Native coder bridge: load the compiled range-coder library when asked.

`get_coder(backend)` returns an (encode, decode) pair with the same
signatures as the reference functions in `rans`. The "fast" backend loads a
shared library over a C-style interface; its output is byte-identical to the
reference coder by contract, checked by the differential tests. Asking for
"fast" when the library is not built raises BackendUnavailableError rather
than silently falling back.

Library resolution order: the SELIC_FASTCODER_LIB environment variable, then
the conventional cargo output paths next to this package's repository root.
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .errors import BackendUnavailableError, ConfigError, DecodeError, EncodeError
from .rans import CdfTable, rc_decode, rc_encode

ABI_VERSION = 1

_ERROR_NAMES = {
    -1: "invalid arguments",
    -2: "invalid cdf table",
    -3: "symbol out of alphabet",
    -4: "output buffer too small",
    -5: "truncated stream",
}

_LIB_BASENAME = "libselic_fastcoder"
_LIB_SUFFIXES = (".so", ".dylib", ".dll")


def _candidate_paths() -> list[Path]:
    paths = []
    env = os.environ.get("SELIC_FASTCODER_LIB")
    if env:
        paths.append(Path(env))
    root = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        for suffix in _LIB_SUFFIXES:
            paths.append(root / "fastcoder" / "target" / profile / (_LIB_BASENAME + suffix))
    return paths


class FastCoder:
    """ctypes wrapper over the native coder's flat-buffer interface."""

    def __init__(self, path: str | Path):
        try:
            lib = ctypes.CDLL(str(path))
        except OSError as exc:
            raise BackendUnavailableError(f"cannot load fast coder at {path}: {exc}") from exc
        try:
            lib.selic_rc_abi_version.restype = ctypes.c_uint32
            lib.selic_rc_abi_version.argtypes = []
            abi = int(lib.selic_rc_abi_version())
        except AttributeError as exc:
            raise BackendUnavailableError(f"{path} exports no selic_rc_abi_version") from exc
        if abi != ABI_VERSION:
            raise BackendUnavailableError(
                f"fast coder ABI {abi} != expected {ABI_VERSION} (rebuild the library)"
            )
        lib.selic_rc_encode.restype = ctypes.c_int32
        lib.selic_rc_encode.argtypes = [
            ctypes.POINTER(ctypes.c_uint32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint64), ctypes.POINTER(ctypes.c_uint32),
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_size_t),
        ]
        lib.selic_rc_decode.restype = ctypes.c_int32
        lib.selic_rc_decode.argtypes = [
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint64), ctypes.POINTER(ctypes.c_uint32),
            ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint32),
        ]
        self._lib = lib
        self.path = str(path)

    @staticmethod
    def _flatten_tables(tables: list[CdfTable]):
        """Deduplicate tables into one flat cdf array + per-symbol views."""
        n = len(tables)
        # Whole-tensor coding repeats one table object millions of times;
        # list.count compares by identity first, so this sweep stays in C
        # instead of paying a Python-level loop per symbol.
        if n > 0 and tables.count(tables[0]) == n:
            cum = np.ascontiguousarray(tables[0].cumulative, dtype=np.uint32)
            return (
                cum,
                np.zeros(n, dtype=np.uint64),
                np.full(n, cum.shape[0], dtype=np.uint32),
            )
        flat_parts: list[np.ndarray] = []
        table_offset: dict[int, tuple[int, int]] = {}
        total = 0
        offsets = np.empty(len(tables), dtype=np.uint64)
        lens = np.empty(len(tables), dtype=np.uint32)
        for i, table in enumerate(tables):
            key = id(table)
            if key not in table_offset:
                cum = np.asarray(table.cumulative, dtype=np.uint32)
                table_offset[key] = (total, cum.shape[0])
                flat_parts.append(cum)
                total += cum.shape[0]
            off, length = table_offset[key]
            offsets[i] = off
            lens[i] = length
        flat = np.concatenate(flat_parts) if flat_parts else np.empty(0, dtype=np.uint32)
        return np.ascontiguousarray(flat), offsets, lens

    def encode(self, symbols, tables: list[CdfTable]) -> bytes:
        symbols = np.ascontiguousarray(symbols, dtype=np.uint32)
        if symbols.shape[0] != len(tables):
            raise EncodeError(f"{symbols.shape[0]} symbols but {len(tables)} tables")
        flat, offsets, lens = self._flatten_tables(tables)
        cap = 8 + 4 * symbols.shape[0] + 16
        out = np.empty(cap, dtype=np.uint8)
        out_len = ctypes.c_size_t(0)
        rc = self._lib.selic_rc_encode(
            symbols.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), symbols.shape[0],
            flat.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), flat.shape[0],
            offsets.ctypes.data_as(ctypes.POINTER(ctypes.c_uint64)),
            lens.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint8)), cap,
            ctypes.byref(out_len),
        )
        if rc != 0:
            raise EncodeError(f"fast coder encode failed: {_ERROR_NAMES.get(rc, rc)}")
        return out[: out_len.value].tobytes()

    def decode(self, data: bytes, tables: list[CdfTable], count: int) -> list[int]:
        if count != len(tables):
            raise DecodeError(f"count {count} != {len(tables)} tables")
        buf = np.frombuffer(data, dtype=np.uint8)
        flat, offsets, lens = self._flatten_tables(tables)
        out = np.empty(count, dtype=np.uint32)
        rc = self._lib.selic_rc_decode(
            buf.ctypes.data_as(ctypes.POINTER(ctypes.c_uint8)), buf.shape[0],
            flat.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), flat.shape[0],
            offsets.ctypes.data_as(ctypes.POINTER(ctypes.c_uint64)),
            lens.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
            count,
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
        )
        if rc != 0:
            raise DecodeError(f"fast coder decode failed: {_ERROR_NAMES.get(rc, rc)}")
        return out.tolist()


_loaded: FastCoder | None = None


def load_fast_coder(path: str | Path | None = None) -> FastCoder:
    """Load (and cache) the native coder; raises BackendUnavailableError."""
    global _loaded
    if path is not None:
        return FastCoder(path)
    if _loaded is not None:
        return _loaded
    candidates = _candidate_paths()
    for candidate in candidates:
        if candidate.exists():
            _loaded = FastCoder(candidate)
            return _loaded
    raise BackendUnavailableError(
        "fast coder library not found; build it with `cargo build --release` "
        f"under fastcoder/ or set SELIC_FASTCODER_LIB (searched: "
        f"{', '.join(str(c) for c in candidates)})"
    )


def get_coder(backend: str):
    """(encode, decode) callables for the requested coder backend."""
    if backend == "reference":
        return rc_encode, rc_decode
    if backend == "fast":
        coder = load_fast_coder()
        return coder.encode, coder.decode
    raise ConfigError(f"unknown coder backend {backend!r}")
