import csv
import json
import re

import pytest

from sampledefect.cli import main, parse_factors
from sampledefect.errors import ConfigError


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    return json.loads(path.read_text())


# --- diagnose -------------------------------------------------------------------


def test_diagnose_calluna(tmp_path, capsys):
    assert run("diagnose", "--population", "builtin:calluna", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "effective sample size: 28 of 19419 (99.86% reduction)" in out
    assert "required z: 26.3" in out
    d = read_json(tmp_path / "diagnostics.json")
    assert d["n_eff_ceil"] == 28
    manifest = read_json(tmp_path / "manifest.json")
    assert manifest["command"] == "diagnose"
    assert "builtin:calluna" in manifest["inputs"]


def test_diagnose_from_csv(tmp_path, capsys):
    csv_path = tmp_path / "pop.csv"
    csv_path.write_text("id,y,sampled\na,1,1\nb,1,1\nc,0,0\nd,0,0\n")
    assert run("diagnose", "--population", csv_path, "--out", tmp_path / "o", "--quiet") == 0
    assert capsys.readouterr().out == ""
    d = read_json(tmp_path / "o" / "diagnostics.json")
    assert d["rho"] == pytest.approx(1.0)
    digest = read_json(tmp_path / "o" / "manifest.json")["inputs"][str(csv_path)]
    assert digest.startswith("sha256:")


def test_diagnose_census_exit_3(tmp_path, capsys):
    csv_path = tmp_path / "pop.csv"
    csv_path.write_text("id,y,sampled\na,1,1\nb,0,1\nc,0,1\n")
    assert run("diagnose", "--population", csv_path, "--out", tmp_path / "o") == 3
    assert "no sampling variation" in capsys.readouterr().err


def test_diagnose_missing_file_exit_2(tmp_path, capsys):
    assert run("diagnose", "--population", tmp_path / "nope.csv", "--out", tmp_path) == 2
    assert "not found" in capsys.readouterr().err


def test_diagnose_membership_override(tmp_path):
    (tmp_path / "pop.csv").write_text("id,y\na,1\nb,1\nc,0\nd,0\n")
    (tmp_path / "m.csv").write_text("id,sampled\na,1\nb,0\nc,1\nd,0\n")
    assert run("diagnose", "--population", tmp_path / "pop.csv", "--membership", tmp_path / "m.csv",
               "--out", tmp_path / "o", "--quiet") == 0
    assert read_json(tmp_path / "o" / "diagnostics.json")["rho"] == pytest.approx(0.0, abs=1e-15)
    # no sampled column and no membership file
    assert run("diagnose", "--population", tmp_path / "pop.csv", "--out", tmp_path / "p") == 2


def test_unknown_builtin_exit_2(tmp_path):
    assert run("diagnose", "--population", "builtin:moss", "--out", tmp_path) == 2


# --- coverage -------------------------------------------------------------------


def test_coverage_srs_shipped_config(tmp_path, capsys):
    assert run("coverage", "--population", "builtin:calluna", "--config", "box2_srs.json",
               "--out", tmp_path) == 0
    s = read_json(tmp_path / "coverage.json")
    assert s["replicates"] == 1000
    assert 0.90 <= s["coverage"] <= 0.98
    for name in ("replicates.csv", "histogram.csv", "manifest.json"):
        assert (tmp_path / name).is_file()
    assert "coverage" in capsys.readouterr().out


def test_coverage_biased_shipped_config(tmp_path):
    assert run("coverage", "--population", "builtin:calluna", "--config", "box2_biased.json",
               "--replicates", 100, "--out", tmp_path, "--quiet") == 0
    assert read_json(tmp_path / "coverage.json")["coverage"] <= 0.001


def test_coverage_rerun_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("coverage", "--population", "builtin:calluna", "--config", "box2_srs.json",
                   "--replicates", 50, "--seed", 99, "--out", tmp_path / name, "--quiet") == 0
    assert (tmp_path / "a" / "replicates.csv").read_bytes() == (tmp_path / "b" / "replicates.csv").read_bytes()
    with open(tmp_path / "a" / "replicates.csv", newline="") as fh:
        assert len(list(csv.DictReader(fh))) == 50
    assert read_json(tmp_path / "a" / "manifest.json")["master_seed"] == 99


def test_coverage_bad_config_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"sampler": {"kind": "srs", "n": 5}, "replicates": 0}))
    assert run("coverage", "--population", "builtin:calluna", "--config", bad, "--out", tmp_path / "o") == 2
    assert run("coverage", "--population", "builtin:calluna", "--config", tmp_path / "none.json",
               "--out", tmp_path / "o") == 2
    assert run("coverage", "--population", "builtin:calluna", "--out", tmp_path / "o") == 2


# --- mitigate -------------------------------------------------------------------


def test_mitigate_logistic(tmp_path, capsys):
    assert run("mitigate", "--population", "builtin:logistic", "--truth-from-population",
               "--out", tmp_path) == 0
    r = read_json(tmp_path / "mitigation.json")
    assert r["bias_reduction_pct"] >= 80
    assert r["model"]["converged"] is True
    assert "bias reduction" in capsys.readouterr().out


def test_mitigate_null_covariate(tmp_path):
    assert run("mitigate", "--population", "builtin:null", "--truth-from-population",
               "--out", tmp_path, "--quiet") == 0
    assert abs(read_json(tmp_path / "mitigation.json")["bias_reduction_pct"]) <= 5


def test_mitigate_separable_default_ridge(tmp_path):
    assert run("mitigate", "--population", "builtin:separable", "--out", tmp_path, "--quiet") == 0
    r = read_json(tmp_path / "mitigation.json")
    assert r["model"]["converged"] is True
    assert r["bias_reduction_pct"] is None


def test_mitigate_unconverged_exit_4(tmp_path, capsys):
    args = ("mitigate", "--population", "builtin:separable", "--ridge", 0, "--max-iter", 5, "--quiet")
    assert run(*args, "--out", tmp_path / "a") == 4
    assert "did not converge" in capsys.readouterr().err
    assert (tmp_path / "a" / "mitigation.json").is_file()
    assert run(*args, "--allow-unconverged", "--out", tmp_path / "b") == 0


def test_mitigate_without_covariates_exit_2(tmp_path):
    assert run("mitigate", "--population", "builtin:calluna", "--out", tmp_path) == 2


# --- regrid ---------------------------------------------------------------------


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_regrid_factor_one_matches_diagnose(tmp_path):
    assert run("regrid", "--population", "builtin:calluna", "--factors", "1", "--out", tmp_path / "g",
               "--quiet") == 0
    assert run("diagnose", "--population", "builtin:calluna", "--out", tmp_path / "d", "--quiet") == 0
    (row,) = _rows(tmp_path / "g" / "by_resolution.csv")
    d = read_json(tmp_path / "d" / "diagnostics.json")
    assert float(row["rho"]) == d["rho"]
    assert float(row["n_eff"]) == d["n_eff"]
    assert int(row["n"]) == d["n"]


def test_regrid_one_and_ten(tmp_path):
    assert run("regrid", "--population", "builtin:calluna", "--factors", "1,10", "--out", tmp_path,
               "--quiet") == 0
    fine, coarse = _rows(tmp_path / "by_resolution.csv")
    assert float(coarse["f"]) > float(fine["f"])


def test_regrid_bad_inputs(tmp_path):
    assert run("regrid", "--population", "builtin:calluna", "--factors", "0", "--out", tmp_path) == 2
    assert run("regrid", "--population", "builtin:calluna", "--factors", "a,b", "--out", tmp_path) == 2
    assert run("regrid", "--population", "builtin:logistic", "--out", tmp_path) == 2


def test_parse_factors():
    assert parse_factors("1, 10") == [1, 10]
    with pytest.raises(ConfigError):
        parse_factors("")


# --- report ---------------------------------------------------------------------


def test_report_diagnostics_only(tmp_path, capsys):
    run("diagnose", "--population", "builtin:calluna", "--out", tmp_path / "d", "--quiet")
    assert run("report", tmp_path / "d", "--out", tmp_path / "r.md") == 0
    text = capsys.readouterr().out
    assert re.search(r"effective sample size: \d+ of \d+ \([\d.]+% reduction\)", text)
    assert text.splitlines()[2].startswith("**effective sample size: 28 of 19419")
    assert (tmp_path / "r.md").read_text() == text


def test_report_full_pipeline(tmp_path, capsys):
    run("diagnose", "--population", "builtin:calluna", "--out", tmp_path / "d", "--quiet")
    for cfg in ("box2_srs.json", "box2_biased.json"):
        run("coverage", "--population", "builtin:calluna", "--config", cfg, "--replicates", 20,
            "--out", tmp_path / cfg, "--quiet")
    run("mitigate", "--population", "builtin:logistic", "--truth-from-population", "--out", tmp_path / "m",
        "--quiet")
    assert run("report", tmp_path) == 0
    text = capsys.readouterr().out
    assert "SRS of n=28" in text
    assert "biased sample of n=19419" in text
    assert "MSE ratio" in text
    assert "bias reduction" in text


def test_report_without_truth_gives_no_verdict(tmp_path, capsys):
    run("mitigate", "--population", "builtin:logistic", "--out", tmp_path, "--quiet")
    assert run("report", tmp_path) == 0
    assert "not stated" in capsys.readouterr().out


def test_report_empty_dir_exit_2(tmp_path):
    assert run("report", tmp_path) == 2
    assert run("report", tmp_path / "missing") == 2
    assert run("report") == 2


# --- fixture / reproduce-paper ---------------------------------------------------


def test_fixture_roundtrip(tmp_path):
    assert run("fixture", "separable", "--out", tmp_path / "s.csv", "--quiet") == 0
    assert run("mitigate", "--population", tmp_path / "s.csv", "--out", tmp_path / "o", "--quiet") == 0
    assert read_json(tmp_path / "o" / "mitigation.json")["n"] == 10


def test_reproduce_paper_small(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert run("reproduce-paper", "--out", tmp_path, "--replicates", 30) == 0
    out = capsys.readouterr().out
    assert "effective sample size: 28 of 19419 (99.86% reduction)" in out
    for rel in ("diagnostics/diagnostics.json", "coverage_srs/coverage.json", "coverage_biased/replicates.csv",
                "mse_parity.json", "regrid/by_resolution.csv", "report.md", "manifest.json"):
        assert (tmp_path / rel).is_file(), rel
    assert read_json(tmp_path / "manifest.json")["timestamp"] == "1970-01-01T00:00:00Z"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "sampledefect" in capsys.readouterr().out
