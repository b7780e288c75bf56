import csv
import json
from pathlib import Path

import pytest

from gnsharp import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    return tmp_path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# --- constants ---------------------------------------------------------------

def test_constants_text(capsys):
    assert cli.main(["constants", "--n", "3", "--p", "2", "--q", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert "theta=0.5" in out
    assert "r_dpd=4" in out
    assert "regime=DelPinoDolbeault" in out
    assert "A=0.136913678615" in out


def test_constants_json(capsys):
    assert cli.main(["constants", "--n", "3", "--p", "2", "--q", "3", "--r", "6", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert set(doc) == {"theta", "p_star", "regime", "r_dpd", "A", "config"}
    assert doc["theta"] == 1
    assert doc["regime"] == "GeneralGN"
    assert doc["config"]["r"] == 6


def test_constants_domain_error(capsys):
    assert cli.main(["constants", "--n", "3", "--p", "0.5", "--q", "1"]) == 2
    assert "p must exceed 1" in capsys.readouterr().err


def test_missing_required(capsys):
    assert cli.main(["constants", "--n", "3", "--p", "2"]) == 2
    assert "--q" in capsys.readouterr().err


# --- extremal ----------------------------------------------------------------

def test_extremal_rows(outdir):
    args = ["extremal", "--n", "3", "--p", "2", "--q", "4", "--rho", "0,1", "--out", "e.csv"]
    assert cli.main(args) == 0
    rows = read_csv(outdir / "e.csv")
    assert rows[0] == ["rho", "w", "dw"]
    assert rows[1] == ["0", "1", "0"]
    assert rows[2][0] == "1"
    assert float(rows[2][1]) == pytest.approx(3**-0.5, abs=1e-11)
    meta = json.loads((outdir / "e.csv.config.json").read_text())
    assert meta["config"]["rho"] == [0, 1]


def test_extremal_p_below_two_origin(outdir):
    assert cli.main(["extremal", "--n", "3", "--p", "1.5", "--q", "1.8", "--rho", "0", "--out", "e.csv"]) == 0
    assert read_csv(outdir / "e.csv")[1] == ["0", "1", "0"]


def test_extremal_empty_radius_list(outdir):
    assert cli.main(["extremal", "--n", "3", "--p", "2", "--q", "3", "--rho", "", "--out", "e.csv"]) == 0
    assert (outdir / "e.csv").read_text() == "rho,w,dw\n"


def test_extremal_domain_error(outdir):
    assert cli.main(["extremal", "--n", "3", "--p", "2", "--q", "1.5", "--out", "e.csv"]) == 2


def test_extremal_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    out = str(blocker / "sub" / "e.csv")
    assert cli.main(["extremal", "--n", "3", "--p", "2", "--q", "3", "--out", out]) == 3


# --- verify and moments ------------------------------------------------------

def test_verify_default(outdir):
    assert cli.main(["verify", "--n", "3", "--p", "2", "--q", "3", "--out", "v.json"]) == 0
    doc = json.loads((outdir / "v.json").read_text())
    report = doc["report"]
    assert report["passed"] is True
    assert report["gap"] <= 1e-6
    assert [r["seed"] for r in report["perturbations"]] == list(range(20))
    assert doc["config"]["perturbations"] == 20


def test_verify_loosened_tolerance(outdir):
    args = ["verify", "--n", "3", "--p", "2", "--q", "3", "--target-rel-err", "1e-3",
            "--perturbations", "2", "--out", "v.json"]
    assert cli.main(args) == 0
    report = json.loads((outdir / "v.json").read_text())["report"]
    assert report["gap_tol"] == pytest.approx(0.1)


def test_verify_out_of_range():
    assert cli.main(["verify", "--n", "3", "--p", "2", "--q", "5"]) == 2
    assert cli.main(["verify", "--n", "3", "--p", "2", "--q", "2.5", "--tail", "Bogus"]) == 2


def test_verify_violation_exit_code(outdir, monkeypatch):
    from gnsharp import quadrature

    real = quadrature.verify_extremality

    def strict(*args, **kwargs):
        kwargs["grad_tol"] = 1e-30
        return real(*args, **kwargs)

    monkeypatch.setattr(cli, "verify_extremality", strict)
    args = ["verify", "--n", "3", "--p", "2", "--q", "3", "--perturbations", "1", "--out", "v.json"]
    assert cli.main(args) == 4
    assert json.loads((outdir / "v.json").read_text())["report"]["passed"] is False


def test_moments_json(capsys):
    assert cli.main(["moments", "--n", "3", "--p", "2", "--q", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["I1"] == pytest.approx(2.46740110027, rel=1e-11)
    assert len(doc["errors"]) == 5


def test_moments_divergent():
    assert cli.main(["moments", "--n", "3", "--p", "2", "--q", "3.5"]) == 2


# --- blowup ------------------------------------------------------------------

def test_blowup_single_point(outdir, capsys):
    args = ["blowup", "--n", "5", "--p-min", "2.2", "--p-max", "2.2", "--steps", "1",
            "--q", "2.5", "--out", "b.csv"]
    assert cli.main(args) == 0
    rows = read_csv(outdir / "b.csv")
    assert rows[0] == cli.BLOWUP_HEADER
    assert len(rows) == 2
    assert float(rows[1][9]) > 0 and rows[1][10] == "true"
    assert "positive on 1/1" in capsys.readouterr().out


def test_blowup_outside_regime(outdir, capsys):
    # with q near p(n-1)/(n-p) the regime is 2 < p < (n+2)/3 = 4
    args = ["blowup", "--n", "10", "--p-min", "4.5", "--p-max", "6", "--steps", "4",
            "--q-mode", "offset", "--out", "b.csv"]
    assert cli.main(args) == 0
    rows = read_csv(outdir / "b.csv")[1:]
    assert len(rows) == 4
    assert all(row[10] == "false" for row in rows)
    assert "in-regime rows: 0" in capsys.readouterr().out


def test_blowup_divergent_rows_are_marked(outdir):
    # n = 3, p = 2, q midpoint 3: convergent; q = 3.5: divergent moments
    args = ["blowup", "--n", "3", "--p-min", "2", "--p-max", "2", "--steps", "1",
            "--q", "3.5", "--out", "b.csv"]
    assert cli.main(args) == 0
    row = read_csv(outdir / "b.csv")[1]
    assert row[9] == "NA" and "diverges" in row[11]


# --- simulate and sweep ------------------------------------------------------

def test_simulate_outputs(outdir):
    args = ["simulate", "--grid", "16", "--alpha", "20", "--out", "s"]
    assert cli.main(args) == 0
    rows = read_csv(outdir / "s.csv")
    assert rows[0] == cli.SWEEP_HEADER
    doc = json.loads((outdir / "s.json").read_text())
    assert doc["seed"] == 0 and doc["config"]["grid"] == 16
    run = doc["runs"][0]
    for key in ("alpha", "nu_alpha", "A_alpha", "B_alpha", "mu_alpha", "grad_energy",
                "penalty", "q_mass", "max_index", "concentration", "iterations", "converged"):
        assert key in run


def test_simulate_rejects_sobolev_endpoint():
    assert cli.main(["simulate", "--dim", "3", "--p", "2", "--q", "3", "--r", "6", "--grid", "8"]) == 2


def test_simulate_strict_non_convergence(outdir):
    args = ["simulate", "--grid", "16", "--alpha", "20", "--max-iter", "2", "--strict", "--out", "s"]
    assert cli.main(args) == 5
    doc = json.loads((outdir / "s.json").read_text())
    assert doc["runs"][0]["converged"] is False
    args = ["simulate", "--grid", "16", "--alpha", "20", "--max-iter", "2", "--out", "s"]
    assert cli.main(args) == 0


def test_sweep_small(outdir):
    args = ["sweep", "--grid", "16", "--alphas", "1,10,100", "--out", "w"]
    assert cli.main(args) == 0
    rows = read_csv(outdir / "w.csv")[1:]
    nus = [float(row[1]) for row in rows]
    assert nus == sorted(nus)


def test_flags_override_config(outdir, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 3\np = 2\nq = 3\njson = true\n")
    assert cli.main(["constants", "--config", str(cfg), "--q", "2.5"]) == 0


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n = 3\nwat = 1\n")
    assert cli.main(["constants", "--config", str(cfg)]) == 2


def test_config_missing_file(tmp_path):
    assert cli.main(["constants", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_fmt():
    assert cli.fmt(0.1 + 0.2) == "0.3"
    assert cli.fmt(-0.0) == "0"
    assert cli.fmt(float("nan")) == "NA"
    assert cli.fmt(1234567.891234567) == "1234567.89123"


# --- reproducibility ---------------------------------------------------------

def subcommand_of(cfg_path: Path) -> str:
    return cfg_path.stem.split("_", 1)[0]


def artifacts(root: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


FAST_CONFIGS = ["extremal_p2q4.cfg", "verify_332.cfg", "moments_n5.cfg",
                "blowup_n10.cfg", "simulate_alpha50.cfg"]


@pytest.mark.parametrize("name", FAST_CONFIGS)
def test_shipped_config_is_byte_reproducible(name, tmp_path, monkeypatch):
    path = CONFIGS / name
    runs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        out.mkdir()
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(out))
        assert cli.main([subcommand_of(path), "--config", str(path)]) == 0
        runs.append(artifacts(out))
    assert runs[0] and runs[0] == runs[1]


def test_embedded_config_reproduces(tmp_path, monkeypatch):
    # rerun from the config echoed into the artifact
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "a"))
    assert cli.main(["simulate", "--grid", "16", "--alpha", "20", "--out", "s"]) == 0
    first = artifacts(tmp_path / "a")
    echoed = json.loads(first["s.json"])["config"]
    lines = [f"{k} = {v}" for k, v in echoed.items()
             if k not in ("command", "version") and v is not None]
    cfg = tmp_path / "echo.cfg"
    cfg.write_text("\n".join(lines) + "\n")
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "b"))
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    assert artifacts(tmp_path / "b") == first
