"""Run reports: schema validation, collection from a run directory, JSON/CSV conversion.

CSV layout (long form, one numeric value per row)::

    scenario,section,group,metric,value

``section`` is one of operation_counts, timings_s, bytes, ratios, accuracy
or meta; ``group`` is the phase name for operation counts, the input count
for accuracy rows and empty otherwise.
"""

from __future__ import annotations

import csv
import io
import json
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import jsonschema

from .errors import DataError, NotFoundError

SCHEMA_PATH = Path(__file__).parent / "data" / "report.schema.json"
CSV_COLUMNS = ("scenario", "section", "group", "metric", "value")
_FLAT_SECTIONS = ("timings_s", "bytes", "ratios")


@lru_cache(maxsize=1)
def report_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))


def validate_report(obj: dict) -> None:
    try:
        jsonschema.validate(obj, report_schema())
    except jsonschema.ValidationError as exc:
        raise DataError(f"report does not match schema: {exc.message}") from None


def collect_reports(run_dir) -> list[dict]:
    """Every ``*.report.json`` under ``run_dir``, sorted by file name."""
    run_dir = Path(run_dir)
    paths = sorted(run_dir.glob("*.report.json")) if run_dir.is_dir() else []
    if not paths:
        raise NotFoundError(f"no artifacts in {run_dir}")
    reports = []
    for path in paths:
        obj = json.loads(path.read_text(encoding="utf-8"))
        validate_report(obj)
        reports.append(obj)
    return reports


def reports_to_csv(reports: Iterable[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        sc = rep["scenario"]
        writer.writerow([sc, "meta", "", "profile", rep["profile"]])
        writer.writerow([sc, "meta", "", "seed", rep["seed"]])
        for i, n in enumerate(rep["inputs"]):
            writer.writerow([sc, "meta", "inputs", str(i), n])
        for phase, counts in rep["operation_counts"].items():
            for metric, value in counts.items():
                writer.writerow([sc, "operation_counts", phase, metric, value])
        for section in _FLAT_SECTIONS:
            for metric, value in rep[section].items():
                writer.writerow([sc, section, "", metric, repr(value) if isinstance(value, float) else value])
        for row in rep["accuracy"]:
            for metric, value in row.items():
                if metric != "inputs":
                    writer.writerow([sc, "accuracy", row["inputs"], metric, repr(float(value))])
    return buf.getvalue()


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def csv_to_reports(text: str) -> list[dict]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise DataError("CSV report must start with the documented header")
    out: dict[str, dict] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_COLUMNS):
            raise DataError(f"line {lineno}: expected {len(CSV_COLUMNS)} columns")
        sc, section, group, metric, value = row
        rep = out.setdefault(sc, {"scenario": sc, "profile": "", "seed": 0, "inputs": [],
                                  "operation_counts": {}, "timings_s": {}, "bytes": {}, "ratios": {},
                                  "accuracy": [], "format": "hheml-report-v1"})
        if section == "meta":
            if metric == "profile":
                rep["profile"] = value
            elif metric == "seed":
                rep["seed"] = int(value)
            else:
                rep["inputs"].append(int(value))
        elif section == "operation_counts":
            rep["operation_counts"].setdefault(group, {})[metric] = int(value)
        elif section in _FLAT_SECTIONS:
            rep[section][metric] = float(value) if section != "bytes" else int(value)
        elif section == "accuracy":
            n = int(group)
            match = next((r for r in rep["accuracy"] if r["inputs"] == n), None)
            if match is None:
                match = {"inputs": n}
                rep["accuracy"].append(match)
            match[metric] = float(value)
        else:
            raise DataError(f"line {lineno}: unknown section {section!r}")
    return list(out.values())
