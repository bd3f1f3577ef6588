import json

import pytest

from hheml import bench
from hheml.cli import main
from hheml.errors import DataError
from hheml.report import collect_reports, csv_to_reports, reports_to_csv, validate_report


def test_keygen_upload_decomp_eval_flow(tmp_path, capsys):
    keys, up, dec, res = (tmp_path / d for d in ("keys", "up", "dec", "res"))
    assert main(["keygen", "--out", str(keys), "--seed", "5"]) == 0
    (tmp_path / "in.txt").write_text("1,2,3,4\n5,6,7,8\n")
    weights = tmp_path / "w.json"
    weights.write_text(json.dumps({"out_dim": 2, "in_dim": 4, "weights": [[1, 0, 0, 0], [1, 2, 3, 4]],
                                   "bias": [0, -3]}))
    assert main(["upload", "--keys", str(keys), "--input", str(tmp_path / "in.txt"), "--out", str(up)]) == 0
    assert main(["decomp", "--keys", str(keys), "--data", str(up), "--out", str(dec)]) == 0
    capsys.readouterr()
    assert main(["eval", "--keys", str(keys), "--data", str(dec), "--weights", str(weights),
                 "--out", str(res), "--decrypt"]) == 0
    out = capsys.readouterr().out
    # plaintext oracle: [x0, x.(1,2,3,4) - 3]
    assert "scores [1, 27] class 1" in out
    assert "scores [5, 67] class 1" in out


def test_exit_codes(tmp_path, capsys):
    assert main(["report", "--run-dir", str(tmp_path / "nothing")]) == 2
    assert "no artifacts" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,N\n")
    assert main(["ecg-infer", "--input", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["ecg-infer", "--input", "synthetic:x", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["bench-upload", "--n", "1,-2"])
    with pytest.raises(SystemExit):
        main(["keygen", "--profile", "tiny"])


def test_ecg_verbs(tmp_path, capsys):
    assert main(["ecg-quantize", "--input", "synthetic:30:1", "--out", str(tmp_path)]) == 0
    q = json.loads((tmp_path / "quantized.json").read_text())
    assert len(q["samples"]) == 30
    assert all(0 <= v <= 15 for s in q["samples"] for v in s["features"])
    for mode in ("float", "integer", "modp"):
        assert main(["ecg-infer", "--input", "synthetic:30:1", "--arithmetic", mode, "--out", str(tmp_path)]) == 0
    integer = json.loads((tmp_path / "ecg-integer.json").read_text())
    modp = json.loads((tmp_path / "ecg-modp.json").read_text())
    assert integer["predicted"] == modp["predicted"]


def test_profile_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv("HHE_PROFILE", "paper-16384")
    assert main(["bench-upload", "--n", "1", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "upload-hhe-1.report.json").read_text())
    assert rep["profile"].endswith("paper-16384")


def test_bench_upload_reports_and_csv_round_trip(tmp_path, capsys):
    assert main(["bench-upload", "--n", "1,2", "--out", str(tmp_path)]) == 0
    assert main(["bench-upload", "--n", "2", "--upload-mode", "plain-bfv", "--out", str(tmp_path)]) == 0
    reports = collect_reports(tmp_path)
    assert len(reports) == 3
    one, two = (r for r in reports if r["scenario"].startswith("upload-hhe"))
    assert one["bytes"]["encrypted_sym_key"] == two["bytes"]["encrypted_sym_key"]
    back = csv_to_reports(reports_to_csv(reports))
    assert sorted(back, key=lambda r: r["scenario"]) == sorted(reports, key=lambda r: r["scenario"])
    for rep in back:
        validate_report(rep)
    capsys.readouterr()
    assert main(["report", "--run-dir", str(tmp_path), "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("scenario,section,group,metric,value")


def test_report_validation_and_bad_csv():
    rep = bench.bench_upload(1).to_json()
    validate_report(rep)
    with pytest.raises(DataError):
        validate_report({**rep, "format": "other"})
    with pytest.raises(DataError):
        csv_to_reports("a,b\n")
    with pytest.raises(DataError):
        csv_to_reports("scenario,section,group,metric,value\ns,weird,,m,1\n")


def test_bench_pipeline_counts_scale(tmp_path):
    assert main(["bench-pipeline", "--n", "1,2", "--repeat", "1", "--out", str(tmp_path)]) == 0
    one = json.loads((tmp_path / "pipeline-1.report.json").read_text())["operation_counts"]
    two = json.loads((tmp_path / "pipeline-2.report.json").read_text())["operation_counts"]
    for phase in ("decomp",):
        assert {k: 2 * v for k, v in one[phase].items()} == two[phase]
