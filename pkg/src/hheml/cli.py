"""Command-line entry point (``hheml``).

Exit codes: 0 success, 2 validation error (bad input, file or schema),
3 cryptographic or depth error.  ``HHE_PROFILE`` overrides ``--profile``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import bench
from .data import default_fixture_path, load_csv, synth_generate
from .errors import (CipherError, DataError, DepthExhaustedError, DomainError, HheError,
                     LevelError, MissingKeyError, NoiseBudgetError, NotFoundError, ParameterError,
                     ProtocolError, SerializationError)
from .he.codec import (deserialize_ciphertext, deserialize_evk, deserialize_public_key,
                       deserialize_secret_key, serialize_ciphertext, serialize_evk,
                       serialize_public_key, serialize_secret_key)
from .he.evaluator import Evaluator
from .hhe import (EncryptedSymKey, TranscipheredInput, Transcipherer, encrypt_model, hhe_dec,
                  hhe_enc, hhe_keygen, make_profile, scores_from_slots)
from .ml import (argmax_lowest, infer_modp_oracle, infer_plain, load_model, quantize_records,
                 signed_lift, PredictionReport)
from .pasta import deserialize_sym, serialize_sym
from .xof import as_seed, derive_seed
from .report import collect_reports, csv_to_reports, reports_to_csv, validate_report

log = logging.getLogger("hheml")

VALIDATION_ERRORS = (DataError, ParameterError, DomainError, SerializationError, NotFoundError,
                     FileNotFoundError, IsADirectoryError, json.JSONDecodeError)
CRYPTO_ERRORS = (DepthExhaustedError, NoiseBudgetError, LevelError, MissingKeyError, CipherError,
                 ProtocolError)

CSV_HELP = "CSV report columns: scenario,section,group,metric,value (one numeric value per row)."


# -- helpers -----------------------------------------------------------------

def _profile(args):
    he = os.environ.get("HHE_PROFILE") or args.profile
    cipher = args.cipher or getattr(args, "default_cipher", "test")
    return make_profile(cipher, he)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_report(out: Path, name: str, report: bench.BenchReport) -> Path:
    obj = report.to_json()
    validate_report(obj)
    path = out / f"{name}.report.json"
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _dataset(spec: str):
    """CSV path or ``synthetic:N[:seed]``."""
    if spec.startswith("synthetic:"):
        parts = spec.split(":")
        try:
            n = int(parts[1])
            seed = int(parts[2]) if len(parts) > 2 else 0
        except (IndexError, ValueError):
            raise DataError(f"bad synthetic dataset spec {spec!r}; use synthetic:N[:seed]") from None
        return synth_generate(n, seed)
    return load_csv(spec)


def _read_int_rows(path) -> list[np.ndarray]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append(np.array([int(v) for v in line.split(",")], dtype=np.int64))
        except ValueError:
            raise DataError(f"{path}: line {lineno}: expected comma-separated integers") from None
    if not rows:
        raise DataError(f"{path}: no input vectors")
    return rows


def _load_meta(keys: Path) -> dict:
    return json.loads((keys / "profile.json").read_text(encoding="utf-8"))


def _profile_from_keys(keys: Path):
    meta = _load_meta(keys)
    return make_profile(meta["cipher"], meta["he"])


# -- verbs -------------------------------------------------------------------

def cmd_keygen(args) -> int:
    profile = _profile(args)
    out = _out_dir(args)
    bundle = hhe_keygen(profile, args.seed)
    (out / "pk.bin").write_bytes(serialize_public_key(bundle.public_key))
    (out / "evk.bin").write_bytes(serialize_evk(bundle.evk))
    (out / "sk.bin").write_bytes(serialize_secret_key(bundle.secret_key))
    (out / "profile.json").write_text(json.dumps({"cipher": profile.cipher.name, "he": profile.he.name}))
    print(f"keys for {profile.name} written to {out}")
    return 0


def cmd_upload(args) -> int:
    keys = Path(args.keys)
    profile = _profile_from_keys(keys)
    pk = deserialize_public_key((keys / "pk.bin").read_bytes(), profile.he)
    ev = Evaluator(profile.he)
    out = _out_dir(args)
    for i, x in enumerate(_read_int_rows(args.input)):
        c, ck = hhe_enc(ev, pk, profile, x, derive_seed(as_seed(args.seed), "cli-upload", i))
        (out / f"sym-{i:04d}.bin").write_bytes(serialize_sym(c))
        (out / f"key-{i:04d}.bin").write_bytes(serialize_ciphertext(ck.ct))
    print(f"{i + 1} symmetric ciphertexts written to {out}")
    return 0


def cmd_decomp(args) -> int:
    keys = Path(args.keys)
    profile = _profile_from_keys(keys)
    server = Transcipherer(profile, deserialize_evk((keys / "evk.bin").read_bytes(), profile.he))
    data = Path(args.data)
    out = _out_dir(args)
    syms = sorted(data.glob("sym-*.bin"))
    if not syms:
        raise NotFoundError(f"no sym-*.bin files in {data}")
    for path in syms:
        tag = path.stem.split("-")[1]
        c = deserialize_sym(path.read_bytes())
        ck = EncryptedSymKey(deserialize_ciphertext((data / f"key-{tag}.bin").read_bytes(), profile.he),
                             profile.cipher)
        for block in server.decomp(c, ck):
            (out / f"x-{tag}-{block.block:03d}-{block.length:03d}.bin").write_bytes(serialize_ciphertext(block.ct))
    print(f"{len(syms)} inputs transciphered into {out}")
    return 0


def cmd_eval(args) -> int:
    keys = Path(args.keys)
    profile = _profile_from_keys(keys)
    ev = Evaluator(profile.he)
    server = Transcipherer(profile, deserialize_evk((keys / "evk.bin").read_bytes(), profile.he), ev)
    pk = deserialize_public_key((keys / "pk.bin").read_bytes(), profile.he)
    model = load_model(args.weights, profile.he.p)
    enc_model = encrypt_model(ev, pk, model.circuit(), profile, args.seed)
    groups: dict[str, list[Path]] = {}
    for path in sorted(Path(args.data).glob("x-*.bin")):
        groups.setdefault(path.stem.split("-")[1], []).append(path)
    if not groups:
        raise NotFoundError(f"no transciphered inputs in {args.data}")
    sk = deserialize_secret_key((keys / "sk.bin").read_bytes(), profile.he) if args.decrypt else None
    out = _out_dir(args)
    for tag, paths in groups.items():
        inputs = []
        for path in paths:
            _, _, block, length = path.stem.split("-")
            ct = deserialize_ciphertext(path.read_bytes(), profile.he)
            inputs.append(TranscipheredInput(ct, b"", int(block), int(length)))
        res = server.eval_linear(enc_model, inputs)
        (out / f"res-{tag}.bin").write_bytes(serialize_ciphertext(res))
        if sk is not None:
            scores = signed_lift(scores_from_slots(hhe_dec(ev, sk, res), model.out_dim, profile), profile.he.p)
            print(f"input {tag}: scores {scores.tolist()} class {argmax_lowest(scores)}")
    print(f"{len(groups)} results written to {out}")
    return 0


def cmd_run_protocol(args) -> int:
    profile = _profile(args)
    records = _dataset(args.dataset)
    model = load_model(args.weights, profile.he.p)
    out = _out_dir(args)
    session, reports, rep = bench.run_protocol(args.mode, records, model, profile, args.seed)
    from .protocol import transcript_jsonl

    (out / "transcript.jsonl").write_text(transcript_jsonl(session), encoding="utf-8")
    (out / "predictions.json").write_text(json.dumps({m: r.to_json() for m, r in reports.items()}) + "\n",
                                          encoding="utf-8")
    _write_report(out, f"protocol-{session.mode}", rep)
    for row in rep.accuracy:
        print("accuracy (%):", {k: round(v, 2) for k, v in row.items()})
    print("bytes per edge:", {k: v for k, v in rep.bytes.items()})
    return 0


def cmd_bench_upload(args) -> int:
    profile = _profile(args)
    out = _out_dir(args)
    for n in args.n:
        rep = bench.bench_upload(n, args.upload_mode, profile, args.seed)
        _write_report(out, rep.scenario, rep)
        print(f"n={n}: {rep.bytes} ratios {rep.ratios}")
    return 0


def cmd_bench_pipeline(args) -> int:
    profile = _profile(args)
    out = _out_dir(args)
    for n in args.n:
        runs = [bench.bench_pipeline(n, profile, args.seed) for _ in range(args.repeat)]
        rep = runs[0]
        rep.timings_s = {k: float(np.median([r.timings_s[k] for r in runs])) for k in rep.timings_s}
        _write_report(out, rep.scenario, rep)
        print(f"n={n}: decomp {rep.operation_counts['decomp']} median times {rep.timings_s}")
    return 0


def cmd_ecg_quantize(args) -> int:
    records = _dataset(args.input)
    samples, clipped = quantize_records(records)
    out = _out_dir(args)
    rows = [{"features": s.features.tolist(), "label": s.label} for s in samples]
    (out / "quantized.json").write_text(json.dumps({"clipped": clipped, "samples": rows}) + "\n",
                                        encoding="utf-8")
    print(f"{len(rows)} samples quantised ({clipped} values clipped)")
    return 0


def cmd_ecg_infer(args) -> int:
    records = _dataset(args.input)
    model = load_model(args.weights)
    samples, _ = quantize_records(records)
    report = PredictionReport(args.arithmetic)
    for r, s in zip(records, samples):
        if args.arithmetic == "float":
            scores, cls = infer_plain(model, r.features, "float")
        elif args.arithmetic == "integer":
            scores, cls = infer_plain(model, s.features, "integer")
        else:
            scores, cls = infer_modp_oracle(model, s.features)
        report.add(scores, cls, s.label)
    out = _out_dir(args)
    (out / f"ecg-{args.arithmetic}.json").write_text(json.dumps(report.to_json()) + "\n", encoding="utf-8")
    print(f"{args.arithmetic} accuracy: {100 * report.accuracy:.2f}% on {report.total} samples")
    return 0


def cmd_report(args) -> int:
    reports = collect_reports(args.run_dir)
    if args.format == "json":
        text = json.dumps({"format": "hheml-report-v1", "runs": reports}, indent=2, sort_keys=True) + "\n"
    else:
        text = reports_to_csv(reports)
        csv_to_reports(text)   # the emitted CSV must parse back
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# -- parser ------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("counts must be at least 1")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", default="test-8192", choices=["test-8192", "paper-16384"],
                        help="BFV parameter set (HHE_PROFILE overrides)")
    common.add_argument("--cipher", default=None, choices=["test", "pasta3-like"],
                        help="symmetric cipher profile (default: pasta3-like for run-protocol, else test)")
    common.add_argument("--seed", type=int, default=0, help="deterministic seed")
    common.add_argument("--out", default="hheml-out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (evaluation is single-threaded; kept for interface stability)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hheml", description="Hybrid homomorphic encryption toolkit",
                                     epilog=CSV_HELP)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("keygen", parents=[common], help="generate HE keys for a profile")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("upload", parents=[common], help="symmetrically encrypt integer vectors")
    p.add_argument("--keys", required=True, help="directory written by keygen")
    p.add_argument("--input", required=True, help="file with one comma-separated vector per line")
    p.set_defaults(func=cmd_upload)

    p = sub.add_parser("decomp", parents=[common], help="transcipher uploaded ciphertexts")
    p.add_argument("--keys", required=True)
    p.add_argument("--data", required=True, help="directory written by upload")
    p.set_defaults(func=cmd_decomp)

    p = sub.add_parser("eval", parents=[common], help="evaluate an encrypted linear layer")
    p.add_argument("--keys", required=True)
    p.add_argument("--data", required=True, help="directory written by decomp")
    p.add_argument("--weights", default=str(default_fixture_path()))
    p.add_argument("--decrypt", action="store_true", help="decrypt and print scores with sk.bin")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run-protocol", parents=[common], help="full protocol over an ECG dataset")
    p.add_argument("--mode", default="3party", choices=["3party", "tee"])
    p.add_argument("--dataset", default="synthetic:20", help="CSV path or synthetic:N[:seed]")
    p.add_argument("--weights", default=str(default_fixture_path()))
    p.set_defaults(func=cmd_run_protocol, default_cipher="pasta3-like")

    p = sub.add_parser("bench-upload", parents=[common], help="upload cost, hybrid vs plain BFV")
    p.add_argument("--n", type=_int_list, default=[1], help="input counts, e.g. 1,50,300")
    p.add_argument("--upload-mode", default="hhe", choices=["hhe", "plain-bfv"])
    p.set_defaults(func=cmd_bench_upload)

    p = sub.add_parser("bench-pipeline", parents=[common], help="per-phase times and operation counts")
    p.add_argument("--n", type=_int_list, default=[1, 2])
    p.add_argument("--repeat", type=int, default=5, help="timing repetitions (median reported)")
    p.set_defaults(func=cmd_bench_pipeline)

    p = sub.add_parser("ecg-quantize", parents=[common], help="quantise ECG features to 4 bits")
    p.add_argument("--input", required=True, help="CSV path or synthetic:N[:seed]")
    p.set_defaults(func=cmd_ecg_quantize)

    p = sub.add_parser("ecg-infer", parents=[common], help="plaintext ECG inference")
    p.add_argument("--input", required=True, help="CSV path or synthetic:N[:seed]")
    p.add_argument("--weights", default=str(default_fixture_path()))
    p.add_argument("--arithmetic", default="integer", choices=["float", "integer", "modp"])
    p.set_defaults(func=cmd_ecg_infer)

    p = sub.add_parser("report", help="combine run reports as JSON or CSV", epilog=CSV_HELP)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "repeat", 1) < 1:
        parser.error("--repeat must be at least 1")
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2
    except CRYPTO_ERRORS as exc:
        print(f"crypto error: {exc}", file=sys.stderr)
        return 3
    except HheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
