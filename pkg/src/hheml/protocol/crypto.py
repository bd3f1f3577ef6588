"""Envelope primitives: Ed25519 signatures and X25519/HKDF/AES-GCM public-key encryption."""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from ..errors import IntegrityError
from ..xof import as_seed, derive_seed

SIGNATURE_BYTES = 64
PUBLIC_BYTES = 32
_PKE_INFO = b"hheml-pke-v1"
_PKE_NONCE = bytes(12)   # every message uses a fresh ephemeral key, so a fixed nonce is safe


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def _raw_public(key) -> bytes:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


class Signer:
    """Signing half of an Ed25519 pair."""

    def __init__(self, seed=None):
        self._key = Ed25519PrivateKey.from_private_bytes(derive_seed(as_seed(seed), "ed25519"))
        self.verify_key = _raw_public(self._key.public_key())

    def sign(self, data: bytes) -> bytes:
        return self._key.sign(data)


def verify_signature(verify_key: bytes, signature: bytes, data: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(verify_key).verify(signature, data)
    except (InvalidSignature, ValueError):
        return False
    return True


def _kdf(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_PKE_INFO + eph_pub + recipient_pub)
    return hkdf.derive(shared)


class PkeKeyPair:
    """X25519 key pair used for hybrid public-key encryption."""

    def __init__(self, seed=None):
        self._key = X25519PrivateKey.from_private_bytes(derive_seed(as_seed(seed), "x25519"))
        self.public_key = _raw_public(self._key.public_key())

    def decrypt(self, blob: bytes) -> bytes:
        if len(blob) < PUBLIC_BYTES + 16:
            raise IntegrityError("PKE ciphertext too short")
        eph_pub = bytes(blob[:PUBLIC_BYTES])
        try:
            shared = self._key.exchange(X25519PublicKey.from_public_bytes(eph_pub))
            key = _kdf(shared, eph_pub, self.public_key)
            return AESGCM(key).decrypt(_PKE_NONCE, bytes(blob[PUBLIC_BYTES:]), eph_pub)
        except (InvalidTag, ValueError) as exc:
            raise IntegrityError("PKE decryption failed") from exc


def pke_encrypt(recipient_public: bytes, message: bytes, seed=None) -> bytes:
    """ephemeral public key || AES-GCM(ciphertext || tag); deterministic under ``seed``."""
    eph = X25519PrivateKey.from_private_bytes(derive_seed(as_seed(seed), "pke-ephemeral"))
    eph_pub = _raw_public(eph.public_key())
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_public))
    key = _kdf(shared, eph_pub, recipient_public)
    return eph_pub + AESGCM(key).encrypt(_PKE_NONCE, message, eph_pub)
