"""Rank-local buffer space: a flat byte array with a bump allocator.

Communication buffers, completion slots and CTS slots all live here, so
remote writes are plain byte copies and 8-byte slots can be polled by
simulated GPU stream operations.  Watchers let pollers react to writes
without scanning.
"""

from __future__ import annotations

import struct
from typing import Callable

_U64 = struct.Struct("<Q")


class RankMemory:
    def __init__(self, rank: int, size: int = 1 << 16):
        self.rank = rank
        self.data = bytearray(size)
        self._brk = 0
        # (lo, hi, callback) triples, notified when a write overlaps [lo, hi).
        self._watchers: list[tuple[int, int, Callable[[], None]]] = []

    def alloc(self, nbytes: int, align: int = 8) -> int:
        if nbytes < 0:
            raise ValueError("allocation size must be >= 0")
        base = (self._brk + align - 1) // align * align
        self._brk = base + nbytes
        if self._brk > len(self.data):
            self.data.extend(bytes(self._brk - len(self.data) + (1 << 16)))
        return base

    def check_range(self, base: int, nbytes: int) -> None:
        if base < 0 or nbytes < 0 or base + nbytes > len(self.data):
            raise IndexError(f"range [{base}, {base + nbytes}) outside rank "
                             f"{self.rank} buffer space")

    def read(self, base: int, nbytes: int) -> bytes:
        self.check_range(base, nbytes)
        return bytes(self.data[base:base + nbytes])

    def write(self, base: int, payload: bytes) -> None:
        self.check_range(base, len(payload))
        self.data[base:base + len(payload)] = payload
        self._notify(base, base + len(payload))

    def read_u64(self, base: int) -> int:
        return _U64.unpack_from(self.data, base)[0]

    def write_u64(self, base: int, value: int) -> None:
        _U64.pack_into(self.data, base, value & (2**64 - 1))
        self._notify(base, base + 8)

    def add_watcher(self, base: int, nbytes: int,
                    callback: Callable[[], None]) -> Callable[[], None]:
        entry = (base, base + nbytes, callback)
        self._watchers.append(entry)

        def remove() -> None:
            try:
                self._watchers.remove(entry)
            except ValueError:
                pass

        return remove

    def _notify(self, lo: int, hi: int) -> None:
        if not self._watchers:
            return
        for wlo, whi, callback in list(self._watchers):
            if lo < whi and wlo < hi:
                callback()
