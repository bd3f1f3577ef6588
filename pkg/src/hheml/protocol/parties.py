"""Protocol parties: users, the cloud service (CSP), the analyst and a simulated TEE.

Each party signs what it sends and verifies what it receives.  ``receive``
returns any reply messages as ``(receiver_id, blob)`` pairs so a transport
can route them.  Secret HE material lives only in the key holder (the
analyst in three-party mode, the TEE otherwise); the CSP class has no code
path that decrypts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import (IntegrityError, NotFoundError, ProtocolError,
                      ReplayError, SerializationError)
from ..he.codec import (deserialize_ciphertext, deserialize_evk, deserialize_public_key,
                        serialize_ciphertext, serialize_evk, serialize_public_key)
from ..he.evaluator import Ciphertext, Evaluator
from ..he.keys import EvaluationKey, PublicKey
from ..hhe import (EncryptedSymKey, HheProfile, LinearLayerCircuit, ModelCiphertexts,
                   Transcipherer, encrypt_model, encrypt_sym_key, hhe_dec, hhe_keygen,
                   scores_from_slots)
from ..pasta import SymKey, deserialize_sym, fresh_nonce, serialize_sym, ske_enc, ske_gen
from ..xof import derive_seed
from .crypto import PkeKeyPair, Signer, pke_encrypt
from .envelope import Envelope, MessageType, open_envelope, pack_fields, seal, unpack_fields

CSP_ID = 0
ANALYST_ID = 1
TEE_ID = 2
FIRST_USER_ID = 16
MAX_PARTY_ID = 255

_RESULT_META = struct.Struct("<IIH")
_MODEL_META = struct.Struct("<HI")

Outgoing = list[tuple[int, bytes]]


def _profile_tag(profile: HheProfile) -> bytes:
    return profile.name.encode()


class Party:
    role = "party"
    accepts: frozenset[MessageType] = frozenset()

    def __init__(self, party_id: int, profile: HheProfile, seed: bytes):
        if not 0 <= party_id <= MAX_PARTY_ID:
            raise ProtocolError(f"party id {party_id} does not fit in one byte")
        self.party_id = party_id
        self.profile = profile
        self._seed = derive_seed(seed, "party", party_id)
        self._signer = Signer(derive_seed(self._seed, "sign"))
        self._clock = 0
        self._last_seen: dict[int, int] = {}
        self.verify_keys: dict[int, bytes] = {}
        self.rejections: list[str] = []
        self.ev = Evaluator(profile.he)

    @property
    def verify_key(self) -> bytes:
        return self._signer.verify_key

    def register(self, party_id: int, verify_key: bytes) -> None:
        self.verify_keys[party_id] = verify_key

    def _seal(self, msg_type: MessageType, payload: bytes) -> bytes:
        self._clock += 1
        return seal(self._signer, self.party_id, self._clock, msg_type, payload).to_bytes()

    def _accept(self, blob: bytes) -> Envelope:
        """Verify signature, type and freshness; only then advance the sender's clock."""
        try:
            env = open_envelope(blob, self.verify_keys)
            if env.msg_type not in self.accepts:
                raise ProtocolError(f"{self.role} does not accept {env.msg_type.name}")
            if env.timestamp <= self._last_seen.get(env.sender, 0):
                raise ReplayError(f"stale timestamp {env.timestamp} from sender {env.sender}")
        except ProtocolError as exc:
            self.rejections.append(f"{type(exc).__name__}: {exc}")
            raise
        self._last_seen[env.sender] = env.timestamp
        return env

    def receive(self, blob: bytes) -> Outgoing:
        env = self._accept(blob)
        try:
            return self._handle(env) or []
        except SerializationError as exc:
            self.rejections.append(f"IntegrityError: {exc}")
            raise IntegrityError(f"unusable {env.msg_type.name} payload: {exc}") from exc

    def _handle(self, env: Envelope) -> Outgoing | None:
        raise NotImplementedError

    def _expect_sender(self, env: Envelope, sender: int) -> None:
        if env.sender != sender:
            raise ProtocolError(f"{env.msg_type.name} must come from party {sender}, not {env.sender}")

    def _read_public_key(self, env: Envelope) -> PublicKey:
        tag, blob = unpack_fields(env.payload, 2)
        if tag != _profile_tag(self.profile):
            raise ProtocolError(f"public key is for profile {tag.decode(errors='replace')}")
        return deserialize_public_key(blob, self.profile.he)


class _KeyHolder:
    """Key generation and publication shared by the analyst (three-party) and the TEE."""

    def _publish(self, pk: PublicKey, evk: EvaluationKey, recipients: Iterable[int]) -> Outgoing:
        pk_payload = pack_fields(_profile_tag(self.profile), serialize_public_key(pk))
        out = [(r, self._seal(MessageType.PUBLIC_KEY, pk_payload)) for r in recipients]
        evk_payload = pack_fields(_profile_tag(self.profile), serialize_evk(evk))
        out.append((CSP_ID, self._seal(MessageType.EVAL_KEY, evk_payload)))
        return out


def _decode_result(payload: bytes) -> tuple[int, int, int, bytes]:
    meta, body = unpack_fields(payload, 2)
    if len(meta) != _RESULT_META.size:
        raise IntegrityError("bad result header")
    user, index, out_dim = _RESULT_META.unpack(meta)
    return user, index, out_dim, body


# -- user --------------------------------------------------------------------

class User(Party):
    role = "client"
    accepts = frozenset({MessageType.PUBLIC_KEY})

    def __init__(self, party_id: int, profile: HheProfile, seed: bytes, keyholder_id: int):
        super().__init__(party_id, profile, seed)
        self.keyholder_id = keyholder_id
        self._sym_key = ske_gen(profile.cipher, derive_seed(self._seed, "sym-key"))
        self._pke = PkeKeyPair(derive_seed(self._seed, "pke"))
        self._pk: PublicKey | None = None
        self._uploads = 0

    @property
    def sym_key(self) -> SymKey:
        return self._sym_key

    def _handle(self, env: Envelope) -> None:
        self._expect_sender(env, self.keyholder_id)
        self._pk = self._read_public_key(env)

    def upload(self, samples: Sequence[np.ndarray]) -> bytes:
        """m1: the HE-encrypted symmetric key followed by one symmetric ciphertext per sample."""
        if self._pk is None:
            raise ProtocolError("no public key received yet")
        if not samples:
            raise ProtocolError("nothing to upload")
        seed = derive_seed(self._seed, "upload", self._uploads)
        self._uploads += 1
        ck = encrypt_sym_key(self.ev, self._pk, self._sym_key, self.profile, derive_seed(seed, "key"))
        syms = [serialize_sym(ske_enc(self._sym_key, fresh_nonce(derive_seed(seed, "nonce", i)),
                                      x, self.profile.cipher))
                for i, x in enumerate(samples)]
        return self._seal(MessageType.UPLOAD, pack_fields(serialize_ciphertext(ck.ct), *syms))


# -- cloud service -----------------------------------------------------------

@dataclass(frozen=True)
class StoredSample:
    key_blob: bytes
    sym_blob: bytes


class Csp(Party):
    """Stores symmetric uploads, transciphers and evaluates; never decrypts."""

    role = "csp"
    accepts = frozenset({MessageType.PUBLIC_KEY, MessageType.EVAL_KEY, MessageType.UPLOAD,
                         MessageType.MODEL})

    def __init__(self, party_id: int, profile: HheProfile, seed: bytes, keyholder_id: int,
                 model_owner_id: int = ANALYST_ID):
        super().__init__(party_id, profile, seed)
        self.keyholder_id = keyholder_id
        self.model_owner_id = model_owner_id
        self._pke = PkeKeyPair(derive_seed(self._seed, "pke"))
        self.received: list[bytes] = []
        self.store: dict[int, list[StoredSample]] = {}
        self.results: dict[tuple[int, int], bytes] = {}
        self._transcipherer: Transcipherer | None = None
        self._model: ModelCiphertexts | None = None
        self.out_dim = 0

    def receive(self, blob: bytes) -> Outgoing:
        out = super().receive(blob)
        self.received.append(blob)
        return out

    def _handle(self, env: Envelope) -> None:
        if env.msg_type == MessageType.PUBLIC_KEY:
            self._expect_sender(env, self.keyholder_id)
            self._read_public_key(env)
        elif env.msg_type == MessageType.EVAL_KEY:
            self._expect_sender(env, self.keyholder_id)
            tag, blob = unpack_fields(env.payload, 2)
            if tag != _profile_tag(self.profile):
                raise ProtocolError("evaluation key is for another profile")
            self._transcipherer = Transcipherer(self.profile, deserialize_evk(blob, self.profile.he), self.ev)
        elif env.msg_type == MessageType.UPLOAD:
            if env.sender < FIRST_USER_ID:
                raise ProtocolError("uploads must come from a user")
            fields = unpack_fields(env.payload)
            if len(fields) < 2:
                raise IntegrityError("upload carries no samples")
            deserialize_ciphertext(fields[0], self.profile.he)
            for blob in fields[1:]:
                if deserialize_sym(blob).profile != self.profile.cipher:
                    raise ProtocolError("symmetric ciphertext for another cipher profile")
            bucket = self.store.setdefault(env.sender, [])
            bucket.extend(StoredSample(fields[0], blob) for blob in fields[1:])
        else:
            self._expect_sender(env, self.model_owner_id)
            fields = unpack_fields(env.payload)
            if len(fields) < 3 or len(fields[0]) != _MODEL_META.size:
                raise IntegrityError("bad model payload")
            out_dim, in_dim = _MODEL_META.unpack(fields[0])
            blocks = -(-in_dim // self.profile.cipher.t)
            if len(fields) != 2 + blocks:
                raise IntegrityError("model block count does not match its input width")
            c_b = deserialize_ciphertext(fields[1], self.profile.he)
            c_w = [deserialize_ciphertext(f, self.profile.he) for f in fields[2:]]
            self._model = ModelCiphertexts(c_w, c_b)
            self.out_dim = out_dim

    def sample_count(self, user_id: int) -> int:
        return len(self.store.get(user_id, ()))

    def _sample(self, user_id: int, index: int) -> StoredSample:
        try:
            return self.store[user_id][index]
        except (KeyError, IndexError):
            raise NotFoundError(f"no sample {index} stored for user {user_id}") from None

    def transcipher(self, user_id: int, index: int):
        if self._transcipherer is None:
            raise ProtocolError("no evaluation key received")
        item = self._sample(user_id, index)
        ck = EncryptedSymKey(deserialize_ciphertext(item.key_blob, self.profile.he), self.profile.cipher)
        return self._transcipherer.decomp(deserialize_sym(item.sym_blob), ck)

    def eval_at_csp(self, user_id: int, index: int = 0) -> Ciphertext:
        """Transcipher the stored sample and apply the stored encrypted model."""
        if self._model is None:
            raise ProtocolError("no model received")
        inputs = self.transcipher(user_id, index)
        res = self._transcipherer.eval_linear(self._model, inputs)
        self.results[(user_id, index)] = serialize_ciphertext(res)
        return res

    def send_result(self, user_id: int, index: int = 0) -> Outgoing:
        if (user_id, index) not in self.results:
            self.eval_at_csp(user_id, index)
        meta = _RESULT_META.pack(user_id, index, self.out_dim)
        blob = self._seal(MessageType.RESULT_CT, pack_fields(meta, self.results[(user_id, index)]))
        return [(self.keyholder_id, blob)]

    @property
    def operation_counts(self) -> dict[str, int]:
        return self.ev.counter.snapshot()

    def state_blobs(self) -> list[bytes]:
        """Every byte string the CSP holds, for confidentiality audits."""
        out = list(self.received)
        for bucket in self.store.values():
            for item in bucket:
                out += [item.key_blob, item.sym_blob]
        out += list(self.results.values())
        if self._transcipherer is not None:
            out.append(serialize_evk(self._transcipherer.evk))
        if self._model is not None:
            out += [serialize_ciphertext(c) for c in self._model.c_w]
            out.append(serialize_ciphertext(self._model.c_b))
        return out


# -- analyst -----------------------------------------------------------------

def _model_payload(ev: Evaluator, pk: PublicKey, circuit: LinearLayerCircuit, profile: HheProfile,
                   seed: bytes) -> bytes:
    model = encrypt_model(ev, pk, circuit, profile, seed)
    meta = _MODEL_META.pack(circuit.out_dim, circuit.in_dim)
    return pack_fields(meta, serialize_ciphertext(model.c_b), *(serialize_ciphertext(c) for c in model.c_w))


class Analyst(Party, _KeyHolder):
    """Model owner; also the HE key holder in three-party mode."""

    role = "analyst"

    def __init__(self, party_id: int, profile: HheProfile, seed: bytes, holds_keys: bool,
                 keyholder_seed: bytes | None = None):
        super().__init__(party_id, profile, seed)
        self._pke = PkeKeyPair(derive_seed(self._seed, "pke"))
        self._bundle = hhe_keygen(profile, keyholder_seed) if holds_keys else None
        self.keyholder_id = party_id if holds_keys else TEE_ID
        self._pk: PublicKey | None = self._bundle.public_key if holds_keys else None
        self._requests = 0
        self.results: dict[tuple[int, int], np.ndarray] = {}
        types = {MessageType.RESULT_CT} if holds_keys else {MessageType.PUBLIC_KEY, MessageType.RESULT_PKE}
        self.accepts = frozenset(types)

    @property
    def pke_public_key(self) -> bytes:
        return self._pke.public_key

    def publish_keys(self, recipients: Iterable[int]) -> Outgoing:
        if self._bundle is None:
            raise ProtocolError("this analyst does not hold HE keys")
        return self._publish(self._bundle.public_key, self._bundle.evk, recipients)

    def send_pke_key(self, tee_id: int = TEE_ID) -> Outgoing:
        return [(tee_id, self._seal(MessageType.PKE_KEY, self._pke.public_key))]

    def eval_request(self, circuit: LinearLayerCircuit) -> Outgoing:
        """m2: the model encrypted under the key holder's public key."""
        if self._pk is None:
            raise ProtocolError("no key-holder public key received yet")
        seed = derive_seed(self._seed, "model", self._requests)
        self._requests += 1
        payload = _model_payload(self.ev, self._pk, circuit, self.profile, seed)
        return [(CSP_ID, self._seal(MessageType.MODEL, payload))]

    def _handle(self, env: Envelope) -> None:
        if env.msg_type == MessageType.PUBLIC_KEY:
            self._expect_sender(env, self.keyholder_id)
            self._pk = self._read_public_key(env)
            return
        if env.msg_type == MessageType.RESULT_CT:
            self._expect_sender(env, CSP_ID)
            user, index, out_dim, body = _decode_result(env.payload)
            ct = deserialize_ciphertext(body, self.profile.he)
            slots = hhe_dec(self.ev, self._bundle.secret_key, ct)
            self.results[(user, index)] = scores_from_slots(slots, out_dim, self.profile)
            return
        self._expect_sender(env, self.keyholder_id)
        user, index, out_dim, body = _decode_result(env.payload)
        scores = np.frombuffer(self._pke.decrypt(body), dtype="<u8").astype(np.int64)
        if scores.size != out_dim or np.any(scores >= self.profile.he.p):
            raise IntegrityError("decrypted result has the wrong shape")
        self.results[(user, index)] = scores


# -- trusted execution environment -------------------------------------------

class Tee(Party, _KeyHolder):
    """Holds the HE secret key, decrypts results and re-encrypts them for the analyst.

    The key bundle is kept in a private attribute with no accessor.
    """

    role = "tee"
    accepts = frozenset({MessageType.PKE_KEY, MessageType.RESULT_CT})

    def __init__(self, party_id: int, profile: HheProfile, seed: bytes, keyholder_seed: bytes,
                 analyst_id: int = ANALYST_ID):
        super().__init__(party_id, profile, seed)
        self.__bundle = hhe_keygen(profile, keyholder_seed)
        self.analyst_id = analyst_id
        self._analyst_pke: bytes | None = None
        self._sent = 0

    def publish_keys(self, recipients: Iterable[int]) -> Outgoing:
        return self._publish(self.__bundle.public_key, self.__bundle.evk, recipients)

    def _handle(self, env: Envelope) -> Outgoing | None:
        if env.msg_type == MessageType.PKE_KEY:
            self._expect_sender(env, self.analyst_id)
            if len(env.payload) != 32:
                raise IntegrityError("PKE public key must be 32 bytes")
            self._analyst_pke = env.payload
            return None
        self._expect_sender(env, CSP_ID)
        if self._analyst_pke is None:
            raise ProtocolError("analyst PKE key not received")
        user, index, out_dim, body = _decode_result(env.payload)
        ct = deserialize_ciphertext(body, self.profile.he)
        scores = scores_from_slots(hhe_dec(self.ev, self.__bundle.secret_key, ct), out_dim, self.profile)
        seed = derive_seed(self._seed, "pke-out", self._sent)
        self._sent += 1
        sealed = pke_encrypt(self._analyst_pke, np.asarray(scores, dtype="<u8").tobytes(), seed)
        meta = _RESULT_META.pack(user, index, out_dim)
        return [(self.analyst_id, self._seal(MessageType.RESULT_PKE, pack_fields(meta, sealed)))]
