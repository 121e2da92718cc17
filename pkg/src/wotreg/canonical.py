"""Canonical JSON encoding shared by everything that signs or hashes.

Canonical form: object keys sorted by UTF-8 byte order, no insignificant
whitespace, minimal string escaping, and integers only (floats are rejected
so that signed bytes are exact and portable). Every signed record and every
ledger payload in this package is the canonical encoding of a plain dict.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

DIGEST_SIZE = 32


class FormatError(ValueError):
    """Bytes or values that do not satisfy the canonical-form rules."""


def _check_value(value: Any, path: str) -> None:
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        raise FormatError(f"non-integer number at {path or '$'}: {value!r}")
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check_value(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str):
                raise FormatError(f"non-string object key at {path or '$'}: {key!r}")
            _check_value(item, f"{path}.{key}")
        return
    raise FormatError(f"unencodable value at {path or '$'}: {type(value).__name__}")


def canonical_bytes(value: Any) -> bytes:
    """Encode a JSON value in canonical form.

    Sorting by Python string order equals UTF-8 byte order because UTF-8
    preserves code-point order.
    """
    _check_value(value, "")
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def decode_canonical(raw: bytes) -> Any:
    """Parse canonical bytes, rejecting anything that does not round-trip.

    The round-trip check makes "stored payloads are canonical" an invariant:
    a payload with stray whitespace, floats, or alternate escaping is
    malformed even if it parses as JSON.
    """
    try:
        value = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"not canonical JSON: {exc}") from exc
    _check_value(value, "")
    if canonical_bytes(value) != raw:
        raise FormatError("not in canonical form")
    return value


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def require_keys(obj: Any, keys: set[str], what: str) -> dict:
    """Validate that a decoded payload is an object with exactly these keys."""
    if not isinstance(obj, dict):
        raise FormatError(f"{what}: expected object, got {type(obj).__name__}")
    if set(obj) != keys:
        missing = keys - set(obj)
        extra = set(obj) - keys
        parts = []
        if missing:
            parts.append(f"missing {sorted(missing)}")
        if extra:
            parts.append(f"unexpected {sorted(extra)}")
        raise FormatError(f"{what}: {', '.join(parts)}")
    return obj
