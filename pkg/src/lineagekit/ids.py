"""Identifier value rules and store-side id generation.

Identifier values are opaque strings, unique per entity kind. The store
assigns 128-bit random identifiers rendered as 26-character base32
strings whenever a committer leaves the id blank; committers may also
supply their own values (required for cross-referencing entities inside
a single transaction).
"""

from __future__ import annotations

import base64
import secrets

# Characters with meaning in the textual reference grammar; forbidden
# inside id values so references stay unambiguous.
RESERVED_CHARS = frozenset(":[],")

GENERATED_ID_LENGTH = 26


def is_valid_id_value(value: str) -> bool:
    if not value:
        return False
    for ch in value:
        if ch in RESERVED_CHARS or ch.isspace():
            return False
    return True


def generate_id_value() -> str:
    """Return a fresh 26-character base32 id (128 random bits)."""
    raw = base64.b32encode(secrets.token_bytes(16)).decode("ascii")
    return raw.rstrip("=")
