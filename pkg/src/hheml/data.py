"""ECG beat datasets: CSV loading, class balancing and a synthetic generator.

A record is 128 floats in [0, 1] followed by a single-letter beat label
(N, L, R, A or V).  Labels are kept as letters; the binary mapping
(N -> 0, anything else -> 1) is applied by consumers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BalanceError, DataError, ParseError

FEATURES = 128
LABELS = ("N", "L", "R", "A", "V")
NORMAL = "N"


def binary_label(label: str) -> int:
    if label not in LABELS:
        raise DataError(f"unknown beat label {label!r}")
    return 0 if label == NORMAL else 1


@dataclass(frozen=True)
class EcgRecord:
    features: np.ndarray
    label: str

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.shape != (FEATURES,):
            raise DataError(f"expected {FEATURES} features, got {f.size}")
        if self.label not in LABELS:
            raise DataError(f"unknown beat label {self.label!r}")
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    @property
    def target(self) -> int:
        return binary_label(self.label)

    def key(self) -> tuple:
        return (self.label, self.features.tobytes())


class EcgDataset(list):
    """List of records plus the number of feature values clipped into [0, 1] on load."""

    def __init__(self, records: Iterable[EcgRecord] = (), clipped: int = 0):
        super().__init__(records)
        self.clipped = clipped

    def matrix(self) -> np.ndarray:
        if not self:
            return np.zeros((0, FEATURES))
        return np.stack([r.features for r in self])

    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self], dtype=np.int64)


def load_csv(path) -> EcgDataset:
    """Parse a 129-column CSV; an optional first line starting with '#' is a header."""
    records, clipped = [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and row[0].lstrip().startswith("#"):
                continue
            if len(row) != FEATURES + 1:
                raise ParseError(f"expected {FEATURES + 1} columns, found {len(row)}", lineno)
            try:
                values = np.array([float(v) for v in row[:FEATURES]])
            except ValueError as exc:
                raise ParseError(f"bad number ({exc})", lineno) from None
            if np.any(np.isnan(values)):
                raise ParseError("NaN feature", lineno)
            label = row[FEATURES].strip()
            if label not in LABELS:
                raise ParseError(f"unknown label {label!r}", lineno)
            outside = (values < 0.0) | (values > 1.0)
            clipped += int(outside.sum())
            records.append(EcgRecord(np.clip(values, 0.0, 1.0), label))
    return EcgDataset(records, clipped)


def write_csv(records: Iterable[EcgRecord], path) -> None:
    """Write with shortest round-trip float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for r in records:
            writer.writerow([repr(float(v)) for v in r.features] + [r.label])


def balance(records: Sequence[EcgRecord], seed: int = 0) -> EcgDataset:
    """Downsample the majority binary class and shuffle, deterministically under ``seed``."""
    groups: dict[int, list[EcgRecord]] = {0: [], 1: []}
    for r in records:
        groups[r.target].append(r)
    missing = [c for c, g in groups.items() if not g]
    if missing:
        raise BalanceError(f"class {missing[0]} has no records")
    rng = np.random.default_rng(seed)
    n = min(len(g) for g in groups.values())
    chosen = []
    for c in (0, 1):
        idx = rng.choice(len(groups[c]), size=n, replace=False)
        chosen += [groups[c][i] for i in sorted(idx)]
    order = rng.permutation(len(chosen))
    return EcgDataset([chosen[i] for i in order])


def train_test_split(records: Sequence[EcgRecord], test_fraction: float, seed: int = 0
                     ) -> tuple[EcgDataset, EcgDataset]:
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test_fraction must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(records))
    cut = len(records) - int(round(len(records) * test_fraction))
    return (EcgDataset([records[i] for i in order[:cut]]),
            EcgDataset([records[i] for i in order[cut:]]))


# -- synthetic beats ---------------------------------------------------------

_GRID = np.linspace(0.0, 1.0, FEATURES)


def _bump(center: float, width: float, height: float) -> np.ndarray:
    return height * np.exp(-0.5 * ((_GRID - center) / width) ** 2)


def _beat(label: str, rng: np.random.Generator) -> np.ndarray:
    """One beat: baseline plus P, QRS and T bumps with per-class morphology changes."""
    shift = rng.normal(0.0, 0.01)
    amp = rng.normal(1.0, 0.08)
    p_wave = 0.08 * rng.normal(1.0, 0.1)
    qrs_width = 0.012
    r_height = 0.55
    t_height = 0.14
    t_center = 0.70
    if label == "L":      # broad notched QRS
        qrs_width *= 2.2
        r_height *= 0.8
    elif label == "R":    # broad QRS with a late secondary peak
        qrs_width *= 1.8
    elif label == "A":    # early beat without a clear P wave
        shift -= 0.06
        p_wave *= 0.2
    elif label == "V":    # wide complex and inverted T
        qrs_width *= 2.8
        r_height *= 1.1
        t_height = -0.12
    center = 0.40 + shift
    wave = (_bump(0.22 + shift, 0.03, p_wave)
            + _bump(center - 0.03, qrs_width, -0.10)
            + _bump(center, qrs_width, r_height)
            + _bump(center + 0.035, qrs_width, -0.12)
            + _bump(t_center + shift, 0.06, t_height))
    if label == "R":
        wave += _bump(center + 0.05, qrs_width, 0.22)
    if label == "L":
        wave -= _bump(center, qrs_width * 0.3, 0.12)
    wave = 0.3 + amp * wave + 0.05 * math.sin(rng.uniform(0, 2 * math.pi)) * _GRID
    wave += rng.normal(0.0, 0.03, FEATURES)
    return np.clip(wave, 0.0, 1.0)


def synth_generate(n: int, seed: int = 0, normal_fraction: float = 0.5) -> EcgDataset:
    """``n`` synthetic beats, about half normal, the rest spread over L/R/A/V."""
    if n < 1:
        raise DataError("n must be at least 1")
    rng = np.random.default_rng(seed)
    labels = np.where(rng.random(n) < normal_fraction, 0, rng.integers(1, len(LABELS), n))
    return EcgDataset([EcgRecord(_beat(LABELS[k], rng), LABELS[k]) for k in labels])


def default_fixture_path() -> Path:
    return Path(__file__).parent / "data" / "ecg_fc_weights.json"
