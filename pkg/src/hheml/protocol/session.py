"""Protocol sessions: an in-memory deterministic bus plus the four protocol phases.

Two modes are supported.  In ``3party`` mode the analyst generates the HE
keys and decrypts results itself.  In ``tee`` mode a TEE holds the keys,
decrypts the CSP's result and forwards it to the analyst under public-key
encryption.  Every envelope that crosses the bus is recorded in the
transcript together with its size, hash and edge.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import NotFoundError, ParameterError, ProtocolError
from ..hhe import HheProfile, LinearLayerCircuit, make_profile
from ..xof import as_seed, derive_seed
from .envelope import MessageType, peek_header
from .parties import (ANALYST_ID, CSP_ID, FIRST_USER_ID, MAX_PARTY_ID, TEE_ID, Analyst, Csp,
                      Outgoing, Party, Tee, User)

MODES = ("3party", "tee")
_MODE_ALIASES = {"3party": "3party", "three-party": "3party", "tee": "tee"}
_EDGE_ORDER = ("client", "analyst", "csp", "tee")


def normalise_mode(mode: str) -> str:
    try:
        return _MODE_ALIASES[mode]
    except KeyError:
        raise ParameterError(f"unknown protocol mode {mode!r}; expected one of {MODES}") from None


def edge_name(role_a: str, role_b: str) -> str:
    a, b = sorted((role_a, role_b), key=_EDGE_ORDER.index)
    return f"{a}-{b}"


@dataclass(frozen=True)
class TranscriptEntry:
    index: int
    sender: int
    receiver: int
    msg_type: str
    timestamp: int
    size: int
    sha256: str
    edge: str
    accepted: bool


class Session:
    def __init__(self, mode: str, profile: HheProfile, seed: bytes, user_ids: Sequence[int]):
        self.mode = normalise_mode(mode)
        self.profile = profile
        self.seed = seed
        self.keyholder_seed = derive_seed(seed, "keyholder")
        if len(set(user_ids)) != len(user_ids):
            raise ProtocolError("duplicate party ids")
        for uid in user_ids:
            if not FIRST_USER_ID <= uid <= MAX_PARTY_ID:
                raise ProtocolError(f"user ids must lie in [{FIRST_USER_ID}, {MAX_PARTY_ID}]")
        three = self.mode == "3party"
        keyholder = ANALYST_ID if three else TEE_ID
        self.keyholder_id = keyholder
        self.analyst = Analyst(ANALYST_ID, profile, seed, holds_keys=three,
                               keyholder_seed=self.keyholder_seed if three else None)
        self.csp = Csp(CSP_ID, profile, seed, keyholder)
        self.tee = None if three else Tee(TEE_ID, profile, seed, self.keyholder_seed)
        self.users = {uid: User(uid, profile, seed, keyholder) for uid in user_ids}
        self.parties: dict[int, Party] = {CSP_ID: self.csp, ANALYST_ID: self.analyst, **self.users}
        if self.tee is not None:
            self.parties[TEE_ID] = self.tee
        # verification keys are distributed out of band before the first message
        for receiver in self.parties.values():
            for pid, party in self.parties.items():
                receiver.register(pid, party.verify_key)
        self.entries: list[TranscriptEntry] = []
        self.wire: list[bytes] = []
        self.plaintexts: list[np.ndarray] = []   # audit copy of uploaded samples, never sent

    @property
    def keyholder(self) -> Party:
        return self.parties[self.keyholder_id]

    def deliver(self, receiver_id: int, blob: bytes) -> None:
        """Record ``blob`` on the wire and hand it to the receiver; replies are routed in turn."""
        queue: list[tuple[int, bytes]] = [(receiver_id, blob)]
        while queue:
            rid, data = queue.pop(0)
            queue.extend(self._deliver_one(rid, data))

    def _deliver_one(self, receiver_id: int, blob: bytes) -> Outgoing:
        receiver = self.parties.get(receiver_id)
        if receiver is None:
            raise NotFoundError(f"no party {receiver_id}")
        sender, ts, mtype, _ = peek_header(blob)
        sender_party = self.parties.get(sender)
        sender_role = sender_party.role if sender_party is not None else "unknown"
        try:
            name = MessageType(mtype).name
        except ValueError:
            name = f"type-{mtype}"
        idx = len(self.entries)
        self.wire.append(blob)
        edge = edge_name(sender_role, receiver.role) if sender_party is not None else f"unknown-{receiver.role}"
        try:
            replies = receiver.receive(blob)
        except ProtocolError:
            self.entries.append(TranscriptEntry(idx, sender, receiver_id, name, ts, len(blob),
                                                hashlib.sha256(blob).hexdigest(), edge, False))
            raise
        self.entries.append(TranscriptEntry(idx, sender, receiver_id, name, ts, len(blob),
                                            hashlib.sha256(blob).hexdigest(), edge, True))
        return replies

    def send_all(self, messages: Outgoing) -> None:
        for rid, blob in messages:
            self.deliver(rid, blob)

    # -- accounting ----------------------------------------------------------

    def edge_totals(self, accepted_only: bool = False) -> dict[str, int]:
        totals: dict[str, int] = {}
        for e in self.entries:
            if accepted_only and not e.accepted:
                continue
            totals[e.edge] = totals.get(e.edge, 0) + e.size
        return totals

    def bytes_by_type(self) -> dict[str, int]:
        totals: dict[str, int] = {}
        for e in self.entries:
            totals[e.msg_type] = totals.get(e.msg_type, 0) + e.size
        return totals

    def transcript_hash(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(bytes.fromhex(e.sha256))
        return h.hexdigest()


# -- protocol phases ---------------------------------------------------------

def setup(mode: str = "3party", users: int | Iterable[int] = 1, profile: HheProfile | None = None,
          seed=None) -> Session:
    """Create the parties, generate keys at the key holder and publish pk and evk."""
    profile = profile or make_profile()
    user_ids = list(range(FIRST_USER_ID, FIRST_USER_ID + users)) if isinstance(users, int) else list(users)
    if not user_ids:
        raise ProtocolError("at least one user is required")
    session = Session(mode, profile, as_seed(seed), user_ids)
    recipients = list(session.users) + [CSP_ID]
    if session.mode == "3party":
        session.send_all(session.analyst.publish_keys(recipients))
    else:
        session.send_all(session.tee.publish_keys(recipients + [ANALYST_ID]))
        session.send_all(session.analyst.send_pke_key(TEE_ID))
    return session


def upload(session: Session, user_id: int, samples) -> list[int]:
    """m1 from one user; returns the CSP-side indices of the uploaded samples."""
    user = session.users.get(user_id)
    if user is None:
        raise NotFoundError(f"no user {user_id}")
    samples = [np.asarray(x, dtype=np.int64).ravel() for x in samples]
    start = session.csp.sample_count(user_id)
    session.deliver(CSP_ID, user.upload(samples))
    session.plaintexts.extend(samples)
    return list(range(start, start + len(samples)))


def eval_request(session: Session, circuit: LinearLayerCircuit) -> None:
    """m2: the analyst encrypts the model under the key holder's key and sends it to the CSP."""
    session.send_all(session.analyst.eval_request(circuit))


def eval_at_csp(session: Session, user_id: int, index: int = 0):
    return session.csp.eval_at_csp(user_id, index)


def classify(session: Session, user_id: int, index: int = 0) -> np.ndarray:
    """Send the CSP result towards the analyst and return the decrypted scores (residues mod p)."""
    session.send_all(session.csp.send_result(user_id, index))
    try:
        return session.analyst.results[(user_id, index)]
    except KeyError:
        raise ProtocolError("analyst did not obtain a result") from None


def classify_3party(session: Session, user_id: int, index: int = 0) -> np.ndarray:
    if session.mode != "3party":
        raise ProtocolError("session is not in three-party mode")
    return classify(session, user_id, index)


def classify_tee(session: Session, user_id: int, index: int = 0) -> np.ndarray:
    if session.mode != "tee":
        raise ProtocolError("session is not in TEE mode")
    return classify(session, user_id, index)


def transcript_export(session: Session) -> list[dict]:
    return [asdict(e) for e in session.entries]


def transcript_jsonl(session: Session) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in transcript_export(session))
