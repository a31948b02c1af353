"""Process-stable seed derivation (builtin hash() is salted per process)."""

from __future__ import annotations

import zlib


def stable_seed(*parts) -> int:
    key = "|".join(str(p) for p in parts)
    return zlib.crc32(key.encode("utf-8")) & 0x7FFFFFFF
