"""Stable seed derivation (Python's ``hash`` is salted per process)."""

from __future__ import annotations

import hashlib


def derive_seed(base: int, *parts: object) -> int:
    blob = "|".join([str(base), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:4], "big")
