import json

import pytest

from shadowlab.cli import main


def run(tmp_path, *argv):
    return main([*argv, "--out", str(tmp_path)])


def only_dir(root):
    (d,) = [p for p in root.iterdir() if p.is_dir()]
    return d


def artifacts(run_dir):
    return {p.name: p.read_bytes() for p in sorted(run_dir.iterdir()) if p.name != "timings.json"}


def test_analyze_writes_report(tmp_path, capsys):
    code = run(tmp_path, "analyze", "--system", "north_south", "--mesh", "0.01", "--d", "0.01", "--horizon", "2000")
    assert code == 0
    d = only_dir(tmp_path)
    assert d.name.startswith("analyze-")
    assert capsys.readouterr().out.strip() == str(d)
    report = json.loads((d / "report.json").read_text())
    assert report["exit_code"] == 0
    assert report["results"]["cr_equals_minimal_closure"] is True
    assert (d / "recurrence.json").exists() and (d / "timings.json").exists()


def test_analyze_sin2_is_not_w(tmp_path):
    run(tmp_path, "analyze", "--system", "sin2_circle", "--mesh", "0.01", "--d", "0.01", "--horizon", "2000")
    report = json.loads((only_dir(tmp_path) / "report.json").read_text())
    assert report["results"]["verdict"] == "CR != closure(M)"


def test_shadow_exit_codes(tmp_path):
    args = ["shadow", "--system", "quartic_interval", "--gen", "crossing", "--eps", "0.1"]
    assert run(tmp_path / "a", *args, "--mode", "shadow") == 3
    assert (only_dir(tmp_path / "a") / "failure.json").exists()
    assert run(tmp_path / "b", *args, "--mode", "multishadow", "--budget", "3") == 0
    cert = json.loads((only_dir(tmp_path / "b") / "certificate.json").read_text())
    assert cert["N"] == 2


def test_shadow_reads_pseudo_file(tmp_path):
    assert run(tmp_path / "a", "shadow", "--system", "rotation", "--gen", "noisy:length=200", "--mode", "multishadow") == 0
    csv = only_dir(tmp_path / "a") / "pseudo.csv"
    assert run(tmp_path / "b", "shadow", "--system", "rotation", "--pseudo", str(csv), "--mode", "multishadow") == 0
    # the sequence is not a pseudotrajectory of a different system
    assert run(tmp_path / "c", "shadow", "--system", "doubling", "--pseudo", str(csv)) == 2


def test_usage_errors(tmp_path):
    assert run(tmp_path, "analyze", "--system", "tent") == 2
    assert run(tmp_path, "shadow", "--system", "rotation", "--pseudo", str(tmp_path / "missing.csv")) == 2
    assert run(tmp_path, "shadow", "--system", "rotation", "--gen", "spiral") == 2
    with pytest.raises(SystemExit) as info:
        main(["analyze"])
    assert info.value.code == 2


def test_network_commands(tmp_path):
    base = ["network", "--mesh", "0.01", "--d", "0.01", "--horizon", "2000", "--n-range", "500"]
    assert run(tmp_path / "a", *base, "--system", "rotation", "--minimize") == 0
    report = json.loads((only_dir(tmp_path / "a") / "report.json").read_text())
    assert report["results"]["size"] <= 10
    assert (only_dir(tmp_path / "a") / "radius.csv").exists()
    assert run(tmp_path / "b", *base, "--system", "sin2_circle") == 3
    fail = json.loads((only_dir(tmp_path / "b") / "failure.json").read_text())
    assert fail["kind"] == "construction-impossible"


def test_measure_command(tmp_path):
    code = run(tmp_path, "measure", "--system", "rotation", "--mesh", "0.01", "--d", "0.01", "--horizon", "2000",
               "--levels", "3", "--cesaro", "2000", "--length", "2000", "--n-range", "200")
    assert code == 0
    d = only_dir(tmp_path)
    meta = json.loads((d / "measure.json").read_text())
    assert meta["support_fraction"] == 1.0
    assert (d / "measure.csv").read_text().startswith("cell,rep,weight")
    assert len((d / "recurrent_fraction.csv").read_text().splitlines()) == 5


def test_zoo_lists_systems(capsys):
    assert main(["zoo"]) == 0
    names = [row["name"] for row in json.loads(capsys.readouterr().out)]
    assert "quartic_interval" in names and len(names) == 6


def test_runs_are_byte_identical(tmp_path):
    args = ["shadow", "--system", "doubling", "--gen", "noisy:length=500", "--mode", "subsequence",
            "--mesh", "0.01", "--d", "0.01", "--horizon", "2000", "--seed", "5"]
    run(tmp_path / "a", *args)
    run(tmp_path / "b", *args)
    a, b = only_dir(tmp_path / "a"), only_dir(tmp_path / "b")
    assert a.name == b.name
    assert artifacts(a) == artifacts(b)
