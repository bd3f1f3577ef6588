"""Confidentiality audit: look for secret or plaintext bytes in CSP state and on the wire.

The audit recomputes the key holder's bundle from the session seed rather
than reading it out of the TEE, so no party needs a secret accessor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..he.codec import serialize_secret_key
from ..hhe import hhe_keygen
from .session import Session

WINDOW = 32
WINDOWS_PER_SECRET = 16


@dataclass(frozen=True)
class Finding:
    secret: str
    haystack: str
    offset: int


def _windows(blob: bytes, count: int = WINDOWS_PER_SECRET, width: int = WINDOW) -> list[bytes]:
    if len(blob) <= width:
        return [blob]
    starts = np.linspace(0, len(blob) - width, count).astype(int)
    return [blob[s:s + width] for s in sorted(set(starts.tolist()))]


def secret_needles(session: Session) -> dict[str, list[bytes]]:
    """Byte patterns whose presence would reveal a secret key or user data."""
    bundle = hhe_keygen(session.profile, session.keyholder_seed)
    sk = bundle.secret_key
    needles = {
        "he-secret-key-blob": _windows(serialize_secret_key(sk)),
        "he-secret-ntt": _windows(np.ascontiguousarray(sk.ntt, dtype="<u8").tobytes()),
        "he-secret-coeffs": _windows(np.ascontiguousarray(sk.small, dtype="<i8").tobytes()),
    }
    for uid, user in session.users.items():
        needles[f"sym-key-{uid}"] = [np.asarray(user.sym_key.words, dtype="<u8").tobytes()]
    for i, x in enumerate(session.plaintexts):
        needles[f"plaintext-{i}"] = [np.asarray(x, dtype="<u8").tobytes()]
    return needles


def haystacks(session: Session) -> dict[str, bytes]:
    out = {f"wire-{i}": blob for i, blob in enumerate(session.wire)}
    out.update({f"csp-state-{i}": blob for i, blob in enumerate(session.csp.state_blobs())})
    return out


def scan(session: Session, extra: dict[str, bytes] | None = None) -> list[Finding]:
    """All occurrences of any needle in any haystack (empty list means clean)."""
    hay = haystacks(session)
    if extra:
        hay.update(extra)
    found = []
    for name, patterns in secret_needles(session).items():
        for pattern in patterns:
            for hname, blob in hay.items():
                pos = blob.find(pattern)
                if pos != -1:
                    found.append(Finding(name, hname, pos))
    return found
