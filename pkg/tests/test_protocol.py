import inspect
import io
import struct

import numpy as np
import pytest

from hheml.errors import (IntegrityError, NoiseBudgetError, NotFoundError, ProtocolError, ReplayError,
                          SignatureError)
from hheml.he.codec import serialize_secret_key
from hheml.hhe import LinearLayerCircuit, hhe_keygen, make_profile
from hheml.protocol import (CSP_ID, FIRST_USER_ID, MessageType, Session, classify,
                            classify_3party, classify_tee, eval_request, open_envelope, scan,
                            seal, setup, transcript_export, transcript_jsonl, upload)
from hheml.protocol.crypto import PkeKeyPair, Signer, pke_encrypt
from hheml.protocol.envelope import (HEADER_BYTES, iter_envelopes, pack_fields, read_envelope, unpack_fields,
                                     write_envelope)
from hheml.protocol.parties import Csp

P = 65537
U1, U2 = FIRST_USER_ID, FIRST_USER_ID + 1


def flip(blob: bytes, pos: int) -> bytes:
    return blob[:pos] + bytes([blob[pos] ^ 0x01]) + blob[pos + 1:]


@pytest.fixture(scope="module")
def circuit():
    rng = np.random.default_rng(31)
    return LinearLayerCircuit(rng.integers(-20, 20, (2, 10)), rng.integers(-100, 100, 2))


@pytest.fixture(scope="module")
def three(circuit):
    s = setup("3party", users=[U1, U2], seed=21)
    upload(s, U1, [np.arange(10), np.arange(10, 20)])
    upload(s, U2, [np.full(10, 7)])
    eval_request(s, circuit)
    return s


@pytest.fixture(scope="module")
def tee(circuit):
    s = setup("tee", users=[U1, U2], seed=21)
    upload(s, U1, [np.arange(10), np.arange(10, 20)])
    upload(s, U2, [np.full(10, 7)])
    eval_request(s, circuit)
    return s


def oracle(circuit, x):
    return (circuit.weights @ np.asarray(x) + circuit.bias) % P


# -- primitives --------------------------------------------------------------

def test_envelope_round_trip_and_tamper():
    signer = Signer(1)
    env = seal(signer, 5, 3, MessageType.UPLOAD, b"payload bytes")
    blob = env.to_bytes()
    keys = {5: signer.verify_key}
    back = open_envelope(blob, keys)
    assert back == env
    for pos in range(len(blob)):
        with pytest.raises(ProtocolError):
            open_envelope(flip(blob, pos), keys)
    with pytest.raises(SignatureError):
        open_envelope(blob, {5: Signer(2).verify_key})
    with pytest.raises(SignatureError):
        open_envelope(blob, {})
    with pytest.raises(IntegrityError):
        open_envelope(blob[:-1], keys)


def test_byte_stream_transport(three):
    stream = io.BytesIO()
    for blob in three.wire:
        write_envelope(stream, blob)
    stream.seek(0)
    back = list(iter_envelopes(stream))
    assert back == three.wire
    keys = {pid: p.verify_key for pid, p in three.parties.items()}
    assert all(open_envelope(b, keys).sender in keys for b in back)
    cut = io.BytesIO(three.wire[0][:-1])
    with pytest.raises(IntegrityError):
        read_envelope(cut)
    with pytest.raises(IntegrityError):
        write_envelope(io.BytesIO(), three.wire[0] + b"x")


def test_payload_fields():
    assert unpack_fields(pack_fields(b"a", b"", b"xyz")) == [b"a", b"", b"xyz"]
    with pytest.raises(IntegrityError):
        unpack_fields(pack_fields(b"abc")[:-1])
    with pytest.raises(IntegrityError):
        unpack_fields(pack_fields(b"a"), 2)


def test_pke_round_trip_and_failures():
    alice, eve = PkeKeyPair(1), PkeKeyPair(2)
    ct = pke_encrypt(alice.public_key, b"scores", seed=3)
    assert ct == pke_encrypt(alice.public_key, b"scores", seed=3)
    assert alice.decrypt(ct) == b"scores"
    with pytest.raises(IntegrityError):
        eve.decrypt(ct)
    with pytest.raises(IntegrityError):
        alice.decrypt(flip(ct, len(ct) - 1))
    with pytest.raises(IntegrityError):
        alice.decrypt(ct[:10])


# -- setup -------------------------------------------------------------------

def test_setup_roles(three, tee):
    assert three.tee is None and three.analyst._bundle is not None
    assert tee.analyst._bundle is None and tee.tee is not None
    for s in (three, tee):
        assert s.csp._transcipherer is not None
        assert all(u._pk is not None for u in s.users.values())


def test_csp_has_no_decryption_path():
    names = set()
    for member in vars(Csp).values():
        func = getattr(member, "fget", member)
        if inspect.isfunction(func):
            names |= set(func.__code__.co_names)
    assert not names & {"secret_key", "hhe_dec", "decrypt", "decrypt_values", "_bundle"}


def test_setup_is_deterministic():
    profile = make_profile()
    a = setup("tee", users=1, profile=profile, seed=99)
    b = setup("tee", users=1, profile=profile, seed=99)
    assert a.transcript_hash() == b.transcript_hash()
    assert transcript_jsonl(a) == transcript_jsonl(b)


def test_duplicate_party_ids():
    with pytest.raises(ProtocolError):
        Session("3party", make_profile(), bytes(32), [U1, U1])
    with pytest.raises(ProtocolError):
        Session("3party", make_profile(), bytes(32), [3])


def test_empty_session_transcript():
    s = Session("3party", make_profile(), bytes(32), [U1])
    assert transcript_export(s) == [] and s.edge_totals() == {}


# -- upload ------------------------------------------------------------------

def test_upload_stores_and_rejects_tamper_and_replay(three):
    user = three.users[U2]
    before = three.csp.sample_count(U2)
    m1 = user.upload([np.arange(10)])
    positions = list(range(HEADER_BYTES)) + list(range(len(m1) - 64, len(m1)))
    positions += np.random.default_rng(1).integers(HEADER_BYTES, len(m1) - 64, 64).tolist()
    for pos in positions:
        with pytest.raises(ProtocolError):
            three.csp.receive(flip(m1, pos))
    assert three.csp.sample_count(U2) == before
    three.csp.receive(m1)
    assert three.csp.sample_count(U2) == before + 1
    with pytest.raises(ReplayError):
        three.csp.receive(m1)
    assert three.csp.sample_count(U2) == before + 1
    assert any("ReplayError" in r for r in three.csp.rejections)


def test_symmetric_payload_grows_linearly():
    s = setup("3party", users=1, seed=5)
    rng = np.random.default_rng(2)
    upload(s, U1, list(rng.integers(0, P, (300, 4))))
    stored = s.csp.store[U1]
    assert len(stored) == 300
    assert sum(len(item.sym_blob) for item in stored) == 300 * (32 + 4 * 8)
    assert len({item.key_blob for item in stored}) == 1


# -- eval and classify ---------------------------------------------------------

def test_three_party_results_match_oracle(three, circuit):
    assert classify_3party(three, U1, 0).tolist() == oracle(circuit, np.arange(10)).tolist()
    assert classify(three, U1, 1).tolist() == oracle(circuit, np.arange(10, 20)).tolist()
    assert classify(three, U2, 0).tolist() == oracle(circuit, np.full(10, 7)).tolist()
    with pytest.raises(ProtocolError):
        classify_tee(three, U1, 0)


def test_modes_agree(three, tee):
    for key in ((U1, 0), (U1, 1), (U2, 0)):
        assert classify_tee(tee, *key).tolist() == classify(three, *key).tolist()


def test_missing_user_data(three):
    with pytest.raises(NotFoundError):
        three.csp.eval_at_csp(U2, 57)
    with pytest.raises(NotFoundError):
        three.csp.eval_at_csp(200, 0)


def test_zero_model_returns_bias():
    s = setup("3party", users=1, seed=8)
    upload(s, U1, [np.arange(5)])
    eval_request(s, LinearLayerCircuit(np.zeros((2, 5), dtype=np.int64), [9, -2]))
    assert classify(s, U1, 0).tolist() == [9, P - 2]


def test_forged_m3_rejected(tee):
    tee.send_all(tee.csp.send_result(U2, 0))
    m3 = [b for b, e in zip(tee.wire, tee.entries) if e.msg_type == "RESULT_PKE"][-1]
    for pos in list(range(HEADER_BYTES)) + list(range(HEADER_BYTES, len(m3))):
        with pytest.raises(ProtocolError):
            tee.analyst.receive(flip(m3, pos))
    with pytest.raises(ReplayError):
        tee.analyst.receive(m3)


def test_message_type_and_sender_policy(three):
    user = three.users[U1]
    m1 = user.upload([np.arange(3)])
    with pytest.raises(ProtocolError):
        three.analyst.receive(m1)


def test_key_separation_across_sessions(three):
    other = setup("3party", users=[U1], seed=22)
    payload = pack_fields(struct.pack("<IIH", U1, 0, 2), three.csp.results[(U1, 0)])
    forged = three.csp._seal(MessageType.RESULT_CT, payload)
    other.analyst.register(CSP_ID, three.csp.verify_key)
    with pytest.raises(NoiseBudgetError):
        other.analyst.receive(forged)
    assert (U1, 0) not in other.analyst.results


# -- transcript and hygiene ---------------------------------------------------

def test_accounting_identity(three, tee):
    for s in (three, tee):
        rows = transcript_export(s)
        assert sum(s.edge_totals().values()) == sum(r["size"] for r in rows) == sum(len(b) for b in s.wire)
    assert set(three.edge_totals()) == {"client-analyst", "client-csp", "analyst-csp"}
    assert {"client-tee", "csp-tee", "analyst-tee", "analyst-csp", "client-csp"} == set(tee.edge_totals())


def test_hygiene_scan_is_clean_and_detects_planted_leak(three, tee):
    assert scan(three) == []
    assert scan(tee) == []
    sk = hhe_keygen(tee.profile, tee.keyholder_seed).secret_key
    leak = b"prefix" + serialize_secret_key(sk)
    assert scan(tee, extra={"planted": leak})
    sym = np.asarray(tee.users[U1].sym_key.words, dtype="<u8").tobytes()
    assert scan(tee, extra={"planted-sym": b"zz" + sym})
