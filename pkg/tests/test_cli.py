from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from morinchi.cli import (
    EXIT_FORMAT,
    EXIT_MORIN,
    EXIT_OK,
    EXIT_REGULARITY,
    RunConfig,
    explain,
    list_scenarios,
    main,
    run,
)
from tests.conftest import scenario_path


def write_scenario(tmp_path, data, name="scenario.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_run_s2_height(tmp_path):
    code = run(RunConfig(scenario=str(scenario_path("s2-height")), out_dir=str(tmp_path)))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["identity_lhs"] == 2
    assert report["identity_rhs"] == 2
    assert report["all_ok"] is True
    assert (tmp_path / "strata.csv").exists()
    assert (tmp_path / "critical.csv").exists()
    assert (tmp_path / "curves.csv").exists()


def test_run_rejects_even_codimension(tmp_path, capsys):
    bad = write_scenario(tmp_path, {
        "name": "bad", "ambient_dim": 4, "intrinsic_dim": 3,
        "constraints": ["(+ (^ x0 2) (^ x1 2) (^ x2 2) (^ x3 2) -1)"],
        "target_dim": 1, "components": ["x0"],
    })
    assert run(RunConfig(scenario=str(bad), out_dir=str(tmp_path))) == EXIT_FORMAT
    assert "even" in capsys.readouterr().err


def test_run_rejects_unparsable_file(tmp_path):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert run(RunConfig(scenario=str(bad), out_dir=str(tmp_path))) == EXIT_FORMAT


def test_run_rejects_irregular_constraint(tmp_path, capsys):
    bad = write_scenario(tmp_path, {
        "name": "double-root", "ambient_dim": 3, "intrinsic_dim": 2,
        "constraints": ["(^ (+ (^ x0 2) (^ x1 2) (^ x2 2) -1) 2)"],
        "target_dim": 1, "components": ["x2"],
        "sample_seeds": [[1.0, 0.0, 0.0]],
    })
    assert run(RunConfig(scenario=str(bad), out_dir=str(tmp_path))) == EXIT_REGULARITY


def test_run_rejects_non_morin_map(tmp_path):
    # the even component makes the degenerate locus a crossing, not a fold
    bad = write_scenario(tmp_path, {
        "name": "non-morin", "ambient_dim": 4, "intrinsic_dim": 3,
        "constraints": ["(+ (^ x0 2) (^ x1 2) (^ x2 2) (^ x3 2) -1)"],
        "target_dim": 2,
        "components": ["x0", "(+ x1 (* 3 x1 (^ x2 2)))"],
    })
    assert run(RunConfig(scenario=str(bad), out_dir=str(tmp_path))) == EXIT_MORIN


def test_exit_codes_documented():
    from morinchi import cli
    assert (cli.EXIT_OK, cli.EXIT_GENERICITY, cli.EXIT_IDENTITY,
            cli.EXIT_FORMAT, cli.EXIT_REGULARITY, cli.EXIT_MORIN) == (0, 2, 3, 64, 65, 66)


def test_exit_identity_on_wrong_expected_chi(tmp_path):
    bad = write_scenario(tmp_path, {
        "name": "wrong-chi", "ambient_dim": 3, "intrinsic_dim": 2,
        "constraints": ["(+ (^ x0 2) (^ x1 2) (^ x2 2) -1)"],
        "target_dim": 1, "components": ["x2"],
        "chi_expected": 5,
        "sample_seeds": [[1.0, 0.0, 0.0]],
    })
    from morinchi.cli import EXIT_IDENTITY
    assert run(RunConfig(scenario=str(bad), out_dir=str(tmp_path))) == EXIT_IDENTITY
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["identity_ok"] is True          # the theorem itself holds
    assert report["chi_expected_ok"] is False     # the scenario metadata does not
    assert report["all_ok"] is False


def test_exit_genericity_when_budget_exhausted(tmp_path, monkeypatch):
    from morinchi import cli as cli_mod
    from morinchi.morse import GenericityExhausted

    def boom(S):
        raise GenericityExhausted("forced for the exit-code contract")

    monkeypatch.setattr(cli_mod, "run_pipeline", boom)
    from morinchi.cli import EXIT_GENERICITY
    code = cli_mod.run(RunConfig(scenario=str(scenario_path("s2-height")),
                                 out_dir=str(tmp_path)))
    assert code == EXIT_GENERICITY


def test_list_scenarios_table():
    table = list_scenarios()
    lines = table.splitlines()
    names = {line.split()[0] for line in lines[2:]}
    assert {"s2-height", "torus-height", "s3-proj", "s4-height",
            "s3-cusps", "s4-proj"} <= names
    for line in lines[2:]:
        assert len(line.split()) >= 4


def test_list_scenarios_with_empty_custom_dir(tmp_path):
    table = list_scenarios(str(tmp_path))
    assert "s2-height" in table


def test_explain_passing_report(tmp_path):
    run(RunConfig(scenario=str(scenario_path("s2-height")), out_dir=str(tmp_path)))
    text = explain(tmp_path / "report.json")
    assert "closed-manifold identity: 2 = 2 [ok]" in text
    assert "mod-2 congruence" in text
    assert "fold-only equality: [ok]" in text
    assert "index-parity audit: ok" in text


def test_explain_cusp_report(tmp_path):
    run(RunConfig(scenario=str(scenario_path("s3-cusps")), out_dir=str(tmp_path)))
    text = explain(tmp_path / "report.json")
    assert "closed-manifold identity: 0 = 0 [ok]" in text
    assert "fold-only equality: not applicable" in text


def test_explain_missing_report(tmp_path):
    with pytest.raises(FileNotFoundError):
        explain(tmp_path / "nope.json")


def test_reports_byte_identical_across_runs(tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert run(RunConfig(scenario=str(scenario_path("s2-height")),
                             out_dir=str(d))) == EXIT_OK
    assert (d1 / "report.json").read_bytes() == (d2 / "report.json").read_bytes()
    assert (d1 / "strata.csv").read_bytes() == (d2 / "strata.csv").read_bytes()
    assert (d1 / "critical.csv").read_bytes() == (d2 / "critical.csv").read_bytes()
    assert (d1 / "curves.csv").read_bytes() == (d2 / "curves.csv").read_bytes()


def test_csv_columns(tmp_path):
    run(RunConfig(scenario=str(scenario_path("s3-cusps")), out_dir=str(tmp_path)))
    with open(tmp_path / "strata.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["x0", "x1", "x2", "x3", "k", "sign", "residual"]
    with open(tmp_path / "critical.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["x0", "x1", "x2", "x3", "k", "index", "correct",
                      "inward_into", "eta_sign"]
    with open(tmp_path / "curves.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["curve", "node", "x0", "x1", "x2", "x3",
                       "det_kernel_hessian", "parity"]
    assert len(rows) > 100


def test_main_subcommands(tmp_path, capsys):
    assert main(["list"]) == EXIT_OK
    assert "s2-height" in capsys.readouterr().out
    code = main(["run", "--scenario", str(scenario_path("s2-height")),
                 "--out", str(tmp_path), "--seed", "3"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "chi(M) = 2" in out
    assert main(["explain", str(tmp_path / "report.json")]) == EXIT_OK
    capsys.readouterr()
    assert main(["explain", str(tmp_path / "missing.json")]) == EXIT_FORMAT


def test_seed_override_changes_covector_not_chis(tmp_path):
    reports = []
    for seed in (0, 5):
        d = tmp_path / f"seed{seed}"
        assert run(RunConfig(scenario=str(scenario_path("s3-cusps")),
                             out_dir=str(d), seed=seed)) == EXIT_OK
        reports.append(json.loads((d / "report.json").read_text()))
    assert reports[0]["identity_lhs"] == reports[1]["identity_lhs"]
    assert reports[0]["identity_rhs"] == reports[1]["identity_rhs"]
    for row0, row1 in zip(reports[0]["strata"], reports[1]["strata"]):
        assert row0["chi_morse_boundary"] == row1["chi_morse_boundary"]


def test_tolerance_override_roundtrip(tmp_path):
    code = run(RunConfig(scenario=str(scenario_path("s2-height")),
                         out_dir=str(tmp_path), tol_residual=1e-11,
                         max_resamples=8))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["tolerances"]["residual"] == 1e-11
    assert report["tolerances"]["max_resamples"] == 8


def test_bad_max_resamples_rejected():
    with pytest.raises(Exception):
        RunConfig(scenario="x.json", max_resamples=0)
