"""Command-line behaviour: outputs, exit status and determinism."""
import json
from pathlib import Path

import pytest

from dissnf.cli import EXIT_CONFIG, EXIT_OK, EXIT_REFUSED, main


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, [Path(p) for p in out.split()], err


def test_normalize_writes_dump(tmp_path, capsys):
    code, paths, _ = run(["--out", str(tmp_path), "normalize", "--system", "e19", "--order", "2"], capsys)
    assert code == EXIT_OK
    assert paths == [tmp_path / "normalize" / "e19_N2.txt"]
    text = paths[0].read_text()
    assert text.endswith("# classification: case_ii\n")


def test_output_root_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DISSNF_OUTPUT", str(tmp_path / "env"))
    code, paths, _ = run(["normalize", "--system", "A2", "-N", "1"], capsys)
    assert code == EXIT_OK and paths[0].parent == tmp_path / "env" / "normalize"


def test_runs_are_byte_identical(tmp_path, capsys):
    args = ["simulate", "--system", "e19", "--t-end", "50", "--samples", "51"]
    _, first, _ = run(["--out", str(tmp_path / "a")] + args, capsys)
    _, second, _ = run(["--out", str(tmp_path / "b")] + args, capsys)
    assert [p.name for p in first] == ["e19_lift.csv", "e19_orbit.csv", "e19_energy.csv"]
    for p, q in zip(first, second):
        assert p.read_bytes() == q.read_bytes()


def test_estimate_report(tmp_path, capsys):
    code, paths, _ = run(["--out", str(tmp_path), "estimate", "--system", "A2", "-N", "2"], capsys)
    assert code == EXIT_OK
    data = json.loads([p for p in paths if p.suffix == ".json"][0].read_text())
    assert data["case"] == "i" and data["C_2"] == 0.0 and data["T"] > 0


def test_refusal_exit_status(tmp_path, capsys):
    code, _, err = run(["--out", str(tmp_path), "normalize", "--system", "e19", "--eps", "0.5", "--mu", "0"], capsys)
    assert code == EXIT_REFUSED
    assert "refused" in err and "(C" in err


@pytest.mark.parametrize("argv", [
    ["normalize", "--system", "nope"],
    ["normalize", "--system", "e19", "--order", "0"],
    ["normalize", "--system", "e19", "--radius", "bogus=1"],
    ["simulate", "--system", "e19", "--tol", "-1"],
    ["frobnicate"],
    [],
])
def test_configuration_errors(tmp_path, capsys, argv):
    code, _, _ = run(["--out", str(tmp_path)] + argv, capsys)
    assert code == EXIT_CONFIG


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(["--out", str(tmp_path), "normalize", "--system", str(tmp_path / "none.json")], capsys)
    assert code == EXIT_CONFIG and "configuration error" in err
