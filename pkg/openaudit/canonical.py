"""
openaudit/canonical.py — Canonical JSON and digests.

All hashing in the kernel (event chain, state hash, registry digest,
artifact digests) goes through these helpers so that the same logical value
always yields the same bytes.
"""

import hashlib
from typing import Any

import rfc8785
from pydantic import BaseModel

from openaudit.errors import SerializationError

ZERO_HASH = "0" * 64


def _plain(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def canonical_bytes(value: Any) -> bytes:
    """
    Encode a value as canonical JSON bytes.

    Keys are sorted at every nesting level, there is no insignificant
    whitespace, and text is UTF-8. Pydantic models are dumped in JSON mode
    first.

    Raises:
        SerializationError: If the value contains something JSON cannot hold
    """
    try:
        return rfc8785.dumps(_plain(value))
    except (rfc8785.CanonicalizationError, TypeError, ValueError) as e:
        raise SerializationError(f"value is not canonically encodable: {e}") from e


def canonical_dumps(value: Any) -> str:
    """Canonical JSON as text."""
    return canonical_bytes(value).decode("utf-8")


def sha256_hex(data: bytes) -> str:
    """Lowercase hex SHA-256 of raw bytes."""
    return hashlib.sha256(data).hexdigest()


def digest(value: Any) -> str:
    """SHA-256 of the canonical encoding of a value."""
    return sha256_hex(canonical_bytes(value))
