import hashlib
import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from dsre.cli import main
from dsre.engine import read_dump

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def digests(outdir):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(pathlib.Path(outdir).glob("*.csv"))}


def test_alpha_examples(capsys):
    assert main(["alpha", str(CONFIGS / "fig1.ini")]) == 0
    out = capsys.readouterr().out
    assert "alpha_1 = 2 " in out and "alpha_2 = 4 " in out
    assert main(["alpha", str(CONFIGS / "ccc_equal.ini")]) == 0
    out = capsys.readouterr().out
    assert "alpha_1 = 1 " in out and "alpha_2 = 1 " in out


def test_alpha_nonstationary_exit_two(capsys):
    assert main(["alpha", str(CONFIGS / "nonstationary.ini")]) == 2
    assert "top-Lyapunov" in capsys.readouterr().err


def test_missing_key_exit_three(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", "[model]\nb = 0 0\nm_dist = normal\nq_law = gaussian\nsigma = 1 0 0 1\n")
    assert main(["simulate", cfg, "--outdir", str(tmp_path / "o")]) == 3
    assert "'c'" in capsys.readouterr().err
    assert main(["alpha", str(tmp_path / "missing.ini")]) == 3


def test_simulate_dump_and_determinism(tmp_path):
    cfg = str(CONFIGS / "generic.ini")
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", cfg, "--length", "1000", "--dump", "--quantile", "0.05", "--outdir", str(out)]) == 0
    raw = (a / "trajectory.bin").read_bytes()
    assert len(raw) == 32 + 1000 * 2 * 8
    assert read_dump(a / "trajectory.bin").shape == (1000, 2)
    assert digests(a) == digests(b) and len(digests(a)) == 3
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["length"] == 1000 and manifest["command"] == "simulate"
    first = (a / "exceedances.csv").read_text().splitlines()[0]
    assert first.startswith("# manifest=")


def test_simulate_insufficient_exit_four(tmp_path):
    assert main(["simulate", str(CONFIGS / "generic.ini"), "--outdir", str(tmp_path)]) == 4
    assert (tmp_path / "manifest.json").exists()


def test_simulate_nonstationary_needs_force(tmp_path):
    cfg = write(tmp_path, "ns.ini", "[model]\nb = 0\nc = 1.9\nm_dist = normal\nq_law = gaussian\nsigma = 1\nlength = 2000\n")
    assert main(["simulate", cfg, "--outdir", str(tmp_path / "o")]) == 2
    assert main(["simulate", cfg, "--force", "--quantile", "0.05", "--outdir", str(tmp_path / "o")]) == 0


def test_figures_small_run(tmp_path):
    out = tmp_path / "f"
    assert main(["figures", "4", "--length", "200000", "--quantile", "1e-3", "--outdir", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"manifest.json", "fig4_histogram.csv", "fig4_histogram.svg", "fig4_diagnostics.csv",
            "fig4_curve.csv", "fig4_exceedances.csv"} <= names
    svg = (out / "fig4_histogram.svg").read_text()
    assert svg.startswith("<?xml") and 'version="1.1"' in svg
    rows = [line.split(",") for line in (out / "fig4_diagnostics.csv").read_text().splitlines()[2:]]
    near = [float(r[2]) for r in rows if r[0] == "mass_near_prediction_0.05"]
    assert near and near[0] > 0.95


def test_figures_signed_and_workers(tmp_path):
    one, two = tmp_path / "1", tmp_path / "2"
    base = ["figures", "1", "--length", "300000", "--quantile", "1e-3", "--signed"]
    assert main(base + ["--outdir", str(one)]) == 0
    assert main(base + ["--outdir", str(two), "--workers", "2"]) == 0
    assert digests(one) == digests(two)
    hist = (one / "fig1_histogram.csv").read_text().splitlines()
    assert float(hist[2].split(",")[0]) == pytest.approx(-np.pi / 2)


def test_diagnose_fig1(tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["diagnose", "--figure", "1", "--length", "300000", "--grid", "0.9,0.99,0.999",
                 "--first-passage", "--replicas", "2000", "--outdir", str(out)]) == 0
    rep = json.loads((out / "diagnostics.json").read_text())
    assert rep["drifts"]["jensen_gap"] < 0
    cond = [r["conditional"] for r in rep["curve"]]
    assert cond[0] > cond[1] > cond[2]
    assert len(rep["first_passage"]) == 3
    assert "jensen gap" in capsys.readouterr().out


def test_diagnose_comonotone_and_independent(tmp_path):
    como = write(tmp_path, "c.ini", "[model]\nb = 0 0\nc = 0.8 0.8\nm_dist = normal\nq_law = gaussian\n"
                 "sigma = 1 1 1 1\nlength = 200000\n")
    assert main(["diagnose", como, "--grid", "0.9,0.99", "--outdir", str(tmp_path / "c")]) == 0
    rep = json.loads((tmp_path / "c" / "diagnostics.json").read_text())
    assert all(r["conditional"] > 0.99 for r in rep["curve"])
    ind = write(tmp_path, "i.ini", "[model]\nb = 0 0\nc = 0.5 0.5\nm_dist = point:1\nq_law = gaussian\n"
                "sigma = 1 0 0 1\nlength = 200000\n")
    assert main(["diagnose", ind, "--grid", "0.9,0.99", "--outdir", str(tmp_path / "i")]) == 0
    rep = json.loads((tmp_path / "i" / "diagnostics.json").read_text())
    for r in rep["curve"]:
        p = 1 - r["quantile"]
        assert abs(r["conditional"] - p) < 5 * np.sqrt(p / r["count_i"]) + 0.2 * p


def test_bad_pair_is_model_error(tmp_path):
    assert main(["diagnose", "--figure", "1", "--pair", "1,3", "--length", "0", "--outdir", str(tmp_path)]) == 2


def test_console_script_entry():
    res = subprocess.run([sys.executable, "-m", "dsre.cli", "alpha", "--figure", "3"], capture_output=True, text=True)
    assert res.returncode == 0 and "alpha_2 = 2" in res.stdout


def test_point_mass_model_without_index(tmp_path, capsys):
    cfg = write(tmp_path, "p.ini", "[model]\nb = 0 0\nc = 0.5 0.5\nm_dist = point:1\nq_law = gaussian\n"
                "sigma = 1 0 0 1\nlength = 5000\n")
    assert main(["simulate", cfg, "--quantile", "0.05", "--outdir", str(tmp_path / "o")]) == 0
    assert "unit indices" in capsys.readouterr().err
    assert main(["alpha", cfg]) == 2
