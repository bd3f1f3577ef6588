"""Signed, timestamped protocol envelopes.

Wire layout (little endian)::

    b"HHEM" | version u16 | sender u8 | timestamp u64 | type u16 | length u64 | payload | signature

The signature is Ed25519 over SHA-256 of everything before it, so every
header field is authenticated along with the payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterator, Mapping

from ..errors import IntegrityError, SignatureError
from .crypto import SIGNATURE_BYTES, Signer, digest, verify_signature

MAGIC = b"HHEM"
VERSION = 1
_HEAD = struct.Struct("<4sHBQHQ")
HEADER_BYTES = _HEAD.size


class MessageType(IntEnum):
    PUBLIC_KEY = 1      # HE public key, keyholder -> everyone
    EVAL_KEY = 2        # evaluation key, keyholder -> CSP
    PKE_KEY = 3         # analyst PKE public key -> TEE
    UPLOAD = 4          # m1: encrypted key + symmetric ciphertexts
    MODEL = 5           # m2: encrypted model
    RESULT_CT = 6       # encrypted linear-layer output, CSP -> keyholder
    RESULT_PKE = 7      # m3: PKE-wrapped result, TEE -> analyst


@dataclass(frozen=True)
class Envelope:
    sender: int
    timestamp: int
    msg_type: MessageType
    payload: bytes
    signature: bytes

    def signed_part(self) -> bytes:
        return _HEAD.pack(MAGIC, VERSION, self.sender, self.timestamp, int(self.msg_type),
                          len(self.payload)) + self.payload

    def digest(self) -> bytes:
        return digest(self.signed_part())

    def to_bytes(self) -> bytes:
        return self.signed_part() + self.signature


def seal(signer: Signer, sender: int, timestamp: int, msg_type: MessageType, payload: bytes) -> Envelope:
    unsigned = Envelope(sender, timestamp, MessageType(msg_type), bytes(payload), b"")
    return Envelope(sender, timestamp, unsigned.msg_type, unsigned.payload, signer.sign(unsigned.digest()))


def peek_header(blob: bytes) -> tuple[int, int, int, int]:
    """(sender, timestamp, type, payload length) without any verification."""
    if len(blob) < HEADER_BYTES:
        raise IntegrityError("envelope shorter than its header")
    magic, version, sender, ts, mtype, length = _HEAD.unpack_from(blob)
    if magic != MAGIC:
        raise IntegrityError("bad envelope magic")
    if version != VERSION:
        raise IntegrityError(f"unsupported envelope version {version}")
    return sender, ts, mtype, length


def open_envelope(blob: bytes, verify_keys: Mapping[int, bytes]) -> Envelope:
    """Parse and verify; raises IntegrityError or SignatureError."""
    sender, ts, mtype, length = peek_header(blob)
    if len(blob) != HEADER_BYTES + length + SIGNATURE_BYTES:
        raise IntegrityError("envelope length does not match its header")
    try:
        msg_type = MessageType(mtype)
    except ValueError:
        raise IntegrityError(f"unknown message type {mtype}") from None
    key = verify_keys.get(sender)
    if key is None:
        raise SignatureError(f"no verification key for sender {sender}")
    body_end = HEADER_BYTES + length
    signature = bytes(blob[body_end:])
    if not verify_signature(key, signature, digest(blob[:body_end])):
        raise SignatureError(f"bad signature on message from sender {sender}")
    return Envelope(sender, ts, msg_type, bytes(blob[HEADER_BYTES:body_end]), signature)


# -- payload fields ----------------------------------------------------------

def pack_fields(*fields: bytes) -> bytes:
    return b"".join(struct.pack("<Q", len(f)) + bytes(f) for f in fields)


def unpack_fields(payload: bytes, count: int | None = None) -> list[bytes]:
    out, off = [], 0
    view = memoryview(payload)
    while off < len(view):
        if off + 8 > len(view):
            raise IntegrityError("truncated payload field")
        (n,) = struct.unpack_from("<Q", view, off)
        off += 8
        if off + n > len(view):
            raise IntegrityError("truncated payload field")
        out.append(bytes(view[off:off + n]))
        off += n
    if count is not None and len(out) != count:
        raise IntegrityError(f"expected {count} payload fields, found {len(out)}")
    return out


# -- byte-stream transport ------------------------------------------------------
# Envelopes carry their payload length, so they frame themselves on a stream.

def _read_exact(stream: BinaryIO, n: int) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise IntegrityError(f"stream ended inside an envelope ({len(data)} of {n} bytes)")
    return data


def write_envelope(stream: BinaryIO, blob: bytes) -> None:
    _, _, _, length = peek_header(blob)
    if len(blob) != HEADER_BYTES + length + SIGNATURE_BYTES:
        raise IntegrityError("envelope length does not match its header")
    stream.write(blob)


def read_envelope(stream: BinaryIO) -> bytes | None:
    """Next envelope from ``stream`` (unverified), or None at a clean end of stream."""
    head = stream.read(HEADER_BYTES)
    if not head:
        return None
    if len(head) != HEADER_BYTES:
        raise IntegrityError("stream ended inside an envelope header")
    _, _, _, length = peek_header(head)
    return head + _read_exact(stream, length + SIGNATURE_BYTES)


def iter_envelopes(stream: BinaryIO) -> Iterator[bytes]:
    while (blob := read_envelope(stream)) is not None:
        yield blob
