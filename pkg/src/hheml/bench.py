"""Cost measurements: upload size (hybrid vs plain BFV) and per-phase pipeline costs.

Byte counts and operation counts are exact and deterministic under a seed;
wall times are recorded for information only.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .he.codec import serialize_ciphertext
from .he.evaluator import Evaluator, diff_counts
from .hhe import (HheKeyBundle, HheProfile, LinearLayerCircuit, Transcipherer, encrypt_model,
                  encrypt_sym_key, hhe_dec, hhe_keygen, make_profile)
from .errors import ParameterError
from .pasta import fresh_nonce, serialize_sym, ske_enc, ske_gen
from .xof import as_seed, derive_seed

REPORT_FORMAT = "hheml-report-v1"
INPUT_WIDTH = 4


@dataclass
class BenchReport:
    scenario: str
    profile: str
    seed: int
    inputs: list[int]
    operation_counts: dict[str, dict[str, int]] = field(default_factory=dict)
    timings_s: dict[str, float] = field(default_factory=dict)
    bytes: dict[str, int] = field(default_factory=dict)
    ratios: dict[str, float] = field(default_factory=dict)
    accuracy: list[dict] = field(default_factory=list)
    format: str = REPORT_FORMAT

    def to_json(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=4)
def cached_bundle(cipher: str, he: str, seed: int) -> HheKeyBundle:
    """Key bundles are slow to generate; benches with the same seed share one."""
    return hhe_keygen(make_profile(cipher, he), derive_seed(as_seed(seed), "bench-keys"))


def random_inputs(n: int, seed: int, width: int = INPUT_WIDTH, p: int = 65537) -> np.ndarray:
    if n < 1:
        raise ParameterError("n must be at least 1")
    return np.random.default_rng(seed).integers(0, p, size=(n, width))


def bench_upload(n: int, mode: str = "hhe", profile: HheProfile | None = None, seed: int = 0
                 ) -> BenchReport:
    """Upload payload for ``n`` length-4 inputs.

    ``hhe``: one encrypted symmetric key plus one symmetric ciphertext per
    input.  ``plain-bfv``: one BFV ciphertext per input.  Both modes are
    always measured so the report can state the ratio.
    """
    if mode not in ("hhe", "plain-bfv"):
        raise ParameterError(f"unknown upload mode {mode!r}")
    profile = profile or make_profile()
    bundle = cached_bundle(profile.cipher.name, profile.he.name, seed)
    ev = Evaluator(profile.he)
    xs = random_inputs(n, seed)
    root = as_seed(seed)
    rep = BenchReport(f"upload-{mode}-{n}", profile.name, seed, [n])

    t0 = time.perf_counter()
    key = ske_gen(profile.cipher, derive_seed(root, "ske"))
    syms = [serialize_sym(ske_enc(key, fresh_nonce(derive_seed(root, "nonce", i)), x, profile.cipher))
            for i, x in enumerate(xs)]
    t1 = time.perf_counter()
    ck = serialize_ciphertext(encrypt_sym_key(ev, bundle.public_key, key, profile, derive_seed(root, "ck")).ct)
    t2 = time.perf_counter()
    plain = [serialize_ciphertext(ev.encrypt_values(bundle.public_key, x, derive_seed(root, "bfv", i)))
             for i, x in enumerate(xs)]
    t3 = time.perf_counter()

    sym_bytes = sum(len(s) for s in syms)
    plain_bytes = sum(len(c) for c in plain)
    rep.bytes = {"symmetric_payload": sym_bytes, "encrypted_sym_key": len(ck),
                 "hhe_total": sym_bytes + len(ck), "plain_bfv_total": plain_bytes,
                 "plain_bfv_per_input": len(plain[0])}
    rep.ratios = {"symmetric_over_plain": sym_bytes / plain_bytes,
                  "hhe_total_over_plain": (sym_bytes + len(ck)) / plain_bytes}
    rep.timings_s = {"ske_enc": t1 - t0, "key_encrypt": t2 - t1, "plain_bfv_encrypt": t3 - t2}
    rep.operation_counts = {"ske_enc": {"words": int(xs.size), "blocks": len(syms)}}
    return rep


def bench_pipeline(n: int, profile: HheProfile | None = None, seed: int = 0, out_dim: int = 2
                   ) -> BenchReport:
    """SKE.Enc, Decomp, Eval and Dec over ``n`` length-4 inputs with a random integer model."""
    profile = profile or make_profile()
    bundle = cached_bundle(profile.cipher.name, profile.he.name, seed)
    root = as_seed(seed)
    xs = random_inputs(n, seed)
    rng = np.random.default_rng(seed + 1)
    circuit = LinearLayerCircuit(rng.integers(-8, 8, (out_dim, INPUT_WIDTH)), rng.integers(-50, 50, out_dim))
    ev = Evaluator(profile.he)
    server = Transcipherer(profile, bundle.evk, ev)
    rep = BenchReport(f"pipeline-{n}", profile.name, seed, [n])

    key = ske_gen(profile.cipher, derive_seed(root, "ske"))
    t0 = time.perf_counter()
    syms = [ske_enc(key, fresh_nonce(derive_seed(root, "nonce", i)), x, profile.cipher) for i, x in enumerate(xs)]
    t_enc = time.perf_counter() - t0
    ck = encrypt_sym_key(ev, bundle.public_key, key, profile, derive_seed(root, "ck"))
    model = encrypt_model(ev, bundle.public_key, circuit, profile, derive_seed(root, "model"))

    start = ev.counter.snapshot()
    t0 = time.perf_counter()
    inputs = [server.decomp(c, ck) for c in syms]
    t_decomp = time.perf_counter() - t0
    mid = ev.counter.snapshot()
    t0 = time.perf_counter()
    results = [server.eval_linear(model, x) for x in inputs]
    t_eval = time.perf_counter() - t0
    end = ev.counter.snapshot()
    t0 = time.perf_counter()
    decrypted = [hhe_dec(ev, bundle.secret_key, r) for r in results]
    t_dec = time.perf_counter() - t0

    expect = (circuit.weights @ xs.T + circuit.bias[:, None]) % profile.he.p
    got = np.stack([d[np.arange(out_dim) * profile.width] for d in decrypted], axis=1)
    rep.operation_counts = {"ske_enc": {"words": int(xs.size), "blocks": sum(c.block_count for c in syms)},
                            "decomp": diff_counts(mid, start), "eval": diff_counts(end, mid),
                            "dec": {"decryptions": len(results)}}
    rep.timings_s = {"ske_enc": t_enc, "decomp": t_decomp, "eval": t_eval, "dec": t_dec}
    rep.ratios = {"correct_fraction": float(np.mean(np.all(got == expect, axis=0)))}
    return rep


def linearity(reports: Sequence[BenchReport], phase: str) -> dict[str, float]:
    """Operations per input for ``phase`` across reports (identical values mean exact linearity)."""
    return {str(r.inputs[0]): sum(r.operation_counts[phase].values()) / r.inputs[0] for r in reports}


def run_protocol(mode: str, records, model, profile: HheProfile | None = None, seed: int = 0,
                 progress=None):
    """Setup, Upload, Eval and Classify over ``records`` with one user.

    Returns (session, reports by mode, BenchReport).  The encrypted report is
    produced by the protocol; float, integer and mod-p reports are computed
    in the clear for comparison.
    """
    from .ml import PredictionReport, infer_encrypted, quantize_records, run_plain_reports
    from .protocol import FIRST_USER_ID, eval_request, setup, upload

    profile = profile or make_profile("pasta3-like", "test-8192")
    samples, clipped = quantize_records(records)
    if not samples:
        raise ParameterError("no samples")
    timings = {}
    t0 = time.perf_counter()
    session = setup(mode, users=1, profile=profile, seed=seed)
    timings["setup"] = time.perf_counter() - t0
    user = FIRST_USER_ID
    t0 = time.perf_counter()
    indices = upload(session, user, [s.features for s in samples])
    timings["upload"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    eval_request(session, model.circuit())
    timings["model_upload"] = time.perf_counter() - t0
    before = session.csp.ev.counter.snapshot()
    encrypted = PredictionReport("encrypted")
    t0 = time.perf_counter()
    for k, (i, s) in enumerate(zip(indices, samples)):
        scores, cls = infer_encrypted(session, user, i, profile.he.p)
        encrypted.add(scores, cls, s.label)
        if progress is not None:
            progress(k + 1, len(samples))
    timings["eval_and_classify"] = time.perf_counter() - t0
    reports = run_plain_reports(model, records, profile.he.p)
    reports["encrypted"] = encrypted

    rep = BenchReport(f"protocol-{session.mode}", profile.name, seed, [len(samples)])
    rep.operation_counts = {"csp": diff_counts(session.csp.ev.counter.snapshot(), before),
                            "data": {"clipped_values": clipped}}
    rep.timings_s = timings
    rep.bytes = dict(sorted(session.edge_totals().items()))
    rep.accuracy = [{"inputs": len(samples),
                     **{m: 100.0 * r.accuracy for m, r in reports.items()}}]
    rep.ratios = {"encrypted_matches_modp": float(np.mean(np.array(encrypted.predicted)
                                                          == np.array(reports["modp"].predicted)))}
    return session, reports, rep
