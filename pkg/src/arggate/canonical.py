"""Canonical JSON encoding and content hashing.

Every persisted artifact (argument documents, policies, case files,
ledger entries) is hashed over the same canonical byte encoding: UTF-8
JSON with object keys sorted lexicographically and no insignificant
whitespace.  Callers are responsible for ordering any order-significant
arrays before encoding.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


def canonical_dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value: Any) -> bytes:
    return canonical_dumps(value).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_value(value: Any) -> str:
    """SHA-256 of the canonical encoding, rendered as lowercase hex."""
    return sha256_hex(canonical_bytes(value))
