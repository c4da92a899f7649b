import csv
import json

import numpy as np
import pytest

import mmslab.acceptance as acceptance
from mmslab.acceptance import CriterionResult
from mmslab.cli import main
from mmslab.core import Correspondence, glue, load_pointed
from mmslab.lipdual import LipschitzDualProblem, f_lr


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path, capsys):
    star, s, corr = tmp_path / "star.json", tmp_path / "s.json", tmp_path / "corr.json"
    assert run(capsys, "gen", "--kind", "star", "--n", 3, "--out", star)[0] == 0
    assert run(capsys, "gen", "--kind", "S", "--m", -2, "--n", 2, "--out", s)[0] == 0
    corr.write_text(json.dumps({"pairs": [[0, 0]], "slack": 0.5}))
    return star, s, corr


def test_gen_S_size(capsys):
    code, out, _ = run(capsys, "gen", "--kind", "S", "--m", -4, "--n", 4)
    obj = json.loads(out)
    assert code == 0 and obj["n"] == 512 and len(obj["weight"]) == 512
    assert obj["config"]["kind"] == "S"


def test_stdout_is_byte_identical(capsys):
    argv = ("gen", "--kind", "T", "--n", 16, "--levels", 2)
    a, b = run(capsys, *argv)[1], run(capsys, *argv)[1]
    assert a == b


def test_malformed_input_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run(capsys, "classify", "--space", bad)
    assert code == 1
    assert json.loads(err)["exit"] == 1
    bad.write_text(json.dumps({"n": 1, "dist": [[0.0]]}))
    assert run(capsys, "classify", "--space", bad)[0] == 1


def test_size_guard_exit_two(capsys):
    code, _, err = run(capsys, "gen", "--kind", "S", "--m", -6, "--n", 6, "--max-points", 100)
    assert code == 2
    assert json.loads(err)["error"] == "SizeGuard"


def test_flr_matches_library(files, capsys):
    star, _, corr = files
    code, out, _ = run(capsys, "flr", "--x", star, "--y", star, "--corr", corr, "--L", 1, "--r", 3)
    obj = json.loads(out)
    X = load_pointed(str(star))
    Z, mx, my = glue(X, X, Correspondence.make([(0, 0)], 0.5))
    m = np.zeros(Z.n)
    m[mx] += X.weight
    m[my] -= X.weight
    ref = f_lr(LipschitzDualProblem(Z.space, Z.base, 1.0, 3.0, m)).value
    assert code == 0 and obj["value"]["value"] == pytest.approx(ref)
    assert obj["value"]["provenance"] == "measured"


def test_fx_and_compare(files, capsys):
    star, s, corr = files
    code, out, _ = run(capsys, "fx", "--x", s, "--y", s, "--corr", corr)
    lo, hi = (b["value"] for b in json.loads(out)["bracket"])
    assert code == 0 and 0.0 <= lo <= hi <= 0.5
    code, out, _ = run(capsys, "compare", "--x", s, "--y", s)
    obj = json.loads(out)
    assert code == 0 and obj["upper"]["value"] <= 1e-9


def test_probe_csv(files, tmp_path, capsys):
    star, _, _ = files
    path = tmp_path / "u.csv"
    code, out, _ = run(capsys, "probe", "uniformity", "--space", star, "--radii", "1,2,4", "--csv", path)
    rows = list(csv.reader(path.open()))
    assert code == 0 and rows[0] == ["radius", "defect"] and len(rows) == 4
    assert json.loads(out)["config"]["radii"] == [1.0, 2.0, 4.0]


@pytest.mark.parametrize("probe", ["doubling", "hausdorff", "separation", "cover"])
def test_other_probes_run(files, capsys, probe):
    _, s, _ = files
    code, out, _ = run(capsys, "probe", probe, "--space", s)
    assert code == 0 and json.loads(out)["config"]["probe"] == probe


def test_pairs_and_classify(files, capsys):
    _, s, _ = files
    code, out, _ = run(capsys, "pairs", "--space", s, "--max-d", 2)
    assert code == 0
    code, out, _ = run(capsys, "classify", "--space", s)
    assert code == 0 and "verdict" in json.loads(out)


def test_accept_subset(capsys):
    code, out, err = run(capsys, "accept", "--only", "9,11")
    obj = json.loads(out)
    assert code == 0 and obj["all_passed"]
    assert [c["number"] for c in obj["criteria"]] == [9, 11]
    assert err.count("[PASS]") == 2


def test_accept_failure_exit_three(monkeypatch, capsys):
    fake = [CriterionResult(1, "fake", False, 0.1, 1.0)]
    monkeypatch.setattr(acceptance, "run_all", lambda only, workers=1: fake)
    code, _, err = run(capsys, "accept")
    assert code == 3 and "[FAIL]" in err
