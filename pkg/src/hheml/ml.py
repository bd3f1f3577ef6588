"""Quantised single-layer classification: plaintext references, mod-p oracle, encrypted path.

Features are 4-bit integers ``round_half_up(15 * x)``.  The model is one
integer fully connected layer; the sigmoid and argmax run after decryption,
where they cannot change the predicted class.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import jsonschema
import numpy as np

from .data import FEATURES, EcgRecord
from .errors import DataError
from .hhe import LinearLayerCircuit

LEVELS = 15
DEFAULT_P = 65537

MODEL_SCHEMA = {
    "type": "object",
    "required": ["out_dim", "in_dim", "weights", "bias"],
    "properties": {
        "out_dim": {"type": "integer", "minimum": 1},
        "in_dim": {"type": "integer", "minimum": 1},
        "weights": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "bias": {"type": "array", "items": {"type": "integer"}},
        "scale_note": {"type": "string"},
    },
    "additionalProperties": False,
}


class WrapWarning(UserWarning):
    """A model can produce scores that wrap around mod p."""


# -- quantisation ------------------------------------------------------------

@dataclass(frozen=True)
class QuantizedSample:
    features: np.ndarray
    label: int

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.int64)
        if f.shape != (FEATURES,) or np.any(f < 0) or np.any(f > LEVELS):
            raise DataError(f"a sample needs {FEATURES} values in [0, {LEVELS}]")
        object.__setattr__(self, "features", f)


def quantize(values, index: int | None = None) -> tuple[np.ndarray, int]:
    """(round_half_up(15 * clip(x)), number of clipped values); NaN is rejected."""
    x = np.asarray(values, dtype=np.float64)
    if np.any(np.isnan(x)):
        where = "" if index is None else f" in sample {index}"
        raise DataError(f"NaN feature{where}")
    outside = int(np.count_nonzero((x < 0.0) | (x > 1.0)))
    q = np.floor(np.clip(x, 0.0, 1.0) * LEVELS + 0.5).astype(np.int64)
    return q, outside


def quantize_records(records: Sequence[EcgRecord]) -> tuple[list[QuantizedSample], int]:
    out, clipped = [], 0
    for i, r in enumerate(records):
        q, c = quantize(r.features, i)
        clipped += c
        out.append(QuantizedSample(q, r.target))
    return out, clipped


# -- model -------------------------------------------------------------------

@dataclass(frozen=True)
class IntegerFcModel:
    weights: np.ndarray
    bias: np.ndarray
    scale_note: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64)
        b = np.asarray(self.bias, dtype=np.int64).ravel()
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DataError("weights must be (out_dim, in_dim) with one bias per row")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def worst_case(self) -> np.ndarray:
        """Largest |score| per row over all inputs in [0, 15]^in_dim."""
        return np.abs(self.weights).sum(axis=1) * LEVELS + np.abs(self.bias)

    def wrapping_rows(self, p: int = DEFAULT_P) -> list[int]:
        return [int(r) for r in np.nonzero(self.worst_case() >= p // 2)[0]]

    def circuit(self) -> LinearLayerCircuit:
        return LinearLayerCircuit(self.weights, self.bias)

    def to_json(self) -> dict:
        return {"out_dim": self.out_dim, "in_dim": self.in_dim,
                "weights": self.weights.tolist(), "bias": self.bias.tolist(),
                "scale_note": self.scale_note}


def model_from_dict(obj: dict, p: int = DEFAULT_P) -> IntegerFcModel:
    try:
        jsonschema.validate(obj, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise DataError(f"invalid model file: {exc.message}") from None
    w, b = obj["weights"], obj["bias"]
    if len(w) != obj["out_dim"] or any(len(row) != obj["in_dim"] for row in w) or len(b) != obj["out_dim"]:
        raise DataError("weight/bias shapes disagree with out_dim/in_dim")
    model = IntegerFcModel(np.array(w, dtype=np.int64).reshape(obj["out_dim"], obj["in_dim"]),
                           np.array(b, dtype=np.int64), obj.get("scale_note", ""))
    rows = model.wrapping_rows(p)
    if rows:
        warnings.warn(f"rows {rows} can exceed p/2 in magnitude; scores may wrap mod p", WrapWarning,
                      stacklevel=2)
    return model


def load_model(path, p: int = DEFAULT_P) -> IntegerFcModel:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(obj, p)


def save_model(model: IntegerFcModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()) + "\n", encoding="utf-8")


# -- inference ---------------------------------------------------------------

def argmax_lowest(scores) -> int:
    """Index of the largest score; ties go to the lowest index."""
    return int(np.argmax(np.asarray(scores)))


def signed_lift(values, p: int = DEFAULT_P) -> np.ndarray:
    """Residues mod p mapped to (-p/2, p/2]."""
    v = np.asarray(values, dtype=np.int64) % p
    return np.where(v > p // 2, v - p, v)


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check_shape(model: IntegerFcModel, n: int) -> None:
    if n != model.in_dim:
        raise DataError(f"model expects {model.in_dim} features, got {n}")


def infer_plain(model: IntegerFcModel, sample, arithmetic: str = "integer") -> tuple[np.ndarray, int]:
    """Integer mode takes quantised ints; float mode takes raw [0, 1] features scaled by 15."""
    x = np.asarray(sample)
    _check_shape(model, x.size)
    if arithmetic == "integer":
        scores = model.weights @ x.astype(np.int64) + model.bias
        return scores, argmax_lowest(scores)
    if arithmetic == "float":
        scores = sigmoid(model.weights.astype(np.float64) @ (x.astype(np.float64) * LEVELS) + model.bias)
        return scores, argmax_lowest(scores)
    raise DataError(f"unknown arithmetic {arithmetic!r}")


def infer_modp_oracle(model: IntegerFcModel, sample, p: int = DEFAULT_P) -> tuple[np.ndarray, int]:
    x = np.asarray(sample, dtype=np.int64)
    _check_shape(model, x.size)
    residues = ((model.weights % p) @ (x % p) + model.bias) % p
    scores = signed_lift(residues, p)
    return scores, argmax_lowest(scores)


def infer_encrypted(session, user_id: int, index: int, p: int = DEFAULT_P) -> tuple[np.ndarray, int]:
    """Run CSP evaluation and classification for one stored sample, then lift and argmax."""
    from .protocol import classify

    scores = signed_lift(classify(session, user_id, index), p)
    return scores, argmax_lowest(scores)


# -- reports -----------------------------------------------------------------

MODES = ("float", "integer", "modp", "encrypted")


@dataclass
class PredictionReport:
    mode: str
    scores: list[list[float]] = field(default_factory=list)
    predicted: list[int] = field(default_factory=list)
    truth: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown report mode {self.mode!r}")

    def add(self, scores, predicted: int, truth: int) -> None:
        self.scores.append([float(s) if self.mode == "float" else int(s) for s in np.ravel(scores)])
        self.predicted.append(int(predicted))
        self.truth.append(int(truth))

    @property
    def total(self) -> int:
        return len(self.predicted)

    @property
    def correct(self) -> int:
        return sum(int(a == b) for a, b in zip(self.predicted, self.truth))

    @property
    def accuracy(self) -> float:
        if not self.total:
            raise DataError("empty report")
        return self.correct / self.total

    def head(self, n: int) -> "PredictionReport":
        return PredictionReport(self.mode, self.scores[:n], self.predicted[:n], self.truth[:n])

    def to_json(self) -> dict:
        return {"mode": self.mode, "correct": self.correct, "total": self.total,
                "accuracy": self.accuracy, "predicted": self.predicted, "truth": self.truth}


def evaluate_accuracy(reports: dict[str, PredictionReport], counts: Iterable[int] | None = None
                      ) -> list[dict]:
    """Accuracy (percent) per mode for the first ``n`` samples, one row per ``n``."""
    if not reports:
        raise DataError("no reports")
    first = next(iter(reports.values()))
    for rep in reports.values():
        if rep.truth != first.truth:
            raise DataError("reports cover different sample sets")
    counts = [first.total] if counts is None else list(counts)
    rows = []
    for n in counts:
        if not 1 <= n <= first.total:
            raise DataError(f"input count {n} outside [1, {first.total}]")
        row = {"inputs": n}
        for mode, rep in reports.items():
            row[mode] = 100.0 * rep.head(n).accuracy
        rows.append(row)
    return rows


def run_plain_reports(model: IntegerFcModel, records: Sequence[EcgRecord], p: int = DEFAULT_P
                      ) -> dict[str, PredictionReport]:
    """Float, integer and mod-p oracle reports for ``records``."""
    samples, _ = quantize_records(records)
    out = {m: PredictionReport(m) for m in ("float", "integer", "modp")}
    for r, s in zip(records, samples):
        for mode, (scores, cls) in (("float", infer_plain(model, r.features, "float")),
                                    ("integer", infer_plain(model, s.features, "integer")),
                                    ("modp", infer_modp_oracle(model, s.features, p))):
            out[mode].add(scores, cls, s.label)
    return out
