"""CLI surface: exit codes, CSV schemas, determinism."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from fiowave.cli import main

BASE = """
schema_version = 1

[grid]
dim = 1
length = 62.83185307179586
points = 128

[equation]
kind = "wave"

[noise]
measure = "white"
seed = 91
paths = 40
dt = 0.03125

[coefficients]
sigma = "1"
gamma = "0"

[solver]
levels = 3
horizon = 2.0

[probe]
t = [0.5]
x = [[0.0]]
eta = [0.0, 2.0]

[output]
directory = "OUTDIR"
"""


def write_config(tmp_path, text=BASE, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text.replace("OUTDIR", str(tmp_path / "out")))
    return path


def test_simulate_writes_csv_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    csv_path = tmp_path / "out" / "moments.csv"
    rows = list(csv.reader(open(csv_path)))
    assert rows[0] == ["t", "x", "mean", "variance", "std_error", "n_paths",
                       "I0", "A1_verdict", "A3_verdict"]
    assert len(rows) == 2
    assert rows[1][7] == "finite" and rows[1][8] == "finite"
    manifest = json.load(open(tmp_path / "out" / "manifest.json"))
    assert manifest["seed"] == 91
    assert manifest["config_digest"]
    assert manifest["outputs"]


def test_simulate_deterministic_bytes(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(out_b)]) == 0
    assert (out_a / "moments.csv").read_bytes() == (out_b / "moments.csv").read_bytes()


def test_simulate_seed_override_changes_output(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(out_b),
                 "--seed", "12"]) == 0
    assert (out_a / "moments.csv").read_bytes() != (out_b / "moments.csv").read_bytes()


def test_parse_error_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("schema_version = 1\n[grid]\ndim = 1\n")  # missing length
    assert main(["simulate", "--config", str(bad)]) == 2
    worse = tmp_path / "worse.toml"
    worse.write_text("not toml ][")
    assert main(["simulate", "--config", str(worse)]) == 2


def test_bad_expression_exit_2(tmp_path):
    text = BASE.replace('kind = "wave"',
                        'kind = "second-order"\na = ["2 + frog(x1)"]')
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_admissibility_exit_3_and_override(tmp_path):
    text = BASE.replace('measure = "white"', 'measure = "riesz"\neta = 2.5')
    text = text.replace("dim = 1", "dim = 2").replace("points = 128", "points = 32")
    text = text.replace('sigma = "1"', 'sigma = "exp(-x1^2 - x2^2)"')
    text = text.replace("x = [[0.0]]", "x = [[0.0, 0.0]]")
    text = text.replace("paths = 40", "paths = 4")
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 3
    assert main(["simulate", "--config", str(cfg), "--override-admissibility",
                 "--out", str(tmp_path / "forced")]) == 0


def test_horizon_exit_4(tmp_path):
    text = BASE.replace("t = [0.5]", "t = [5.0]").replace("horizon = 2.0",
                                                          "horizon = 1.0")
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", str(cfg)]) == 4


def test_check_table(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["check", "--config", str(cfg)]) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "admissibility.csv")))
    assert rows[0] == ["measure", "nu", "eta", "value", "sup", "verdict"]
    assert all(r[5] == "finite" for r in rows[1:])
    # d = 1 Lebesgue at nu = 1: the origin value is pi
    origin = [r for r in rows[1:] if float(r[2]) == 0.0][0]
    assert float(origin[3]) == pytest.approx(np.pi, abs=1e-4)


def test_check_higher_order_enlargement(tmp_path):
    # third-order operator in d = 3: nu = 1 diverges, nu = n - 1 = 2 is
    # finite, the admissible-measure set grows with the operator order
    text = """
schema_version = 1
[grid]
dim = 3
length = 12.0
points = 8
[equation]
kind = "constant"
order = 3
coefficients = [ { alpha = [2, 0, 0], j = 1, value = -1.0 },
                 { alpha = [0, 2, 0], j = 1, value = -1.0 },
                 { alpha = [0, 0, 2], j = 1, value = -1.0 } ]
[noise]
measure = "white"
[probe]
nu = 1.0
eta = [0.0]
[output]
directory = "OUTDIR"
"""
    cfg = write_config(tmp_path, text)
    assert main(["check", "--config", str(cfg)]) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "admissibility.csv")))
    by_nu = {float(r[1]): r[5] for r in rows[1:]}
    assert by_nu[1.0] == "infinite"
    assert by_nu[2.0] == "finite"


def test_verify_unknown_suite_exit_2():
    assert main(["verify", "definitely-not-a-suite"]) == 2


def test_verify_wave_oracle_passes(capsys):
    assert main(["verify", "wave-oracle"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out


def test_verify_lemmas_weak_k2_rejected(tmp_path, capsys):
    text = BASE.replace('kind = "wave"', 'kind = "weak"\nk = 2\ncoupling = 0.1')
    cfg = write_config(tmp_path, text)
    code = main(["verify", "lemmas-weak", "--config", str(cfg)])
    err = capsys.readouterr().err
    assert code == 2
    assert "k - 2" in err and "k >= 3" in err


def test_eikonal_dump(tmp_path):
    text = BASE.replace('kind = "wave"',
                        'kind = "second-order"\na = ["2 + sin(x1)"]')
    text = text.replace("horizon = 2.0", "horizon = 0.2")
    text = text.replace("t = [0.5]", "t = [0.15]")
    cfg = write_config(tmp_path, text)
    assert main(["eikonal-dump", "--config", str(cfg)]) == 0
    rows = list(csv.reader(open(tmp_path / "out" / "phases.csv")))
    assert rows[0] == ["root", "t", "s", "x", "xi", "phi"]
    assert len(rows) > 10
