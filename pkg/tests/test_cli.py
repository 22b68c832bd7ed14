import csv
import json

import pytest

from tgv1d.cli import main, read_config
from tgv1d.signal_core import read_grid_csv


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_denoise_writes_files(tmp_path):
    out = tmp_path / "d"
    assert main(["denoise", "--data", "abs", "--n", "512", "--problem", "tgv", "--l1", "0.05", "--l2", "0.036", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["converged"] and m["n"] == 512 and "time" not in json.dumps(m)
    assert read_grid_csv(out / "solution.csv").n == 512
    assert rows(out / "sigma.csv")[0].keys() == {"x", "sigma1", "sigma2"}


def test_denoise_deterministic(tmp_path):
    args = ["denoise", "--data", "ind", "--n", "256", "--l1", "0.12", "--l2", "0.05"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("solution.csv", "sigma.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_denoise_zero_solution(tmp_path):
    assert main(["denoise", "--data", "abs", "--problem", "tv", "--l1", "0.2", "--out", str(tmp_path)]) == 0
    u = read_grid_csv(tmp_path / "solution.csv")
    assert u.l2() < 1e-9


def test_denoise_input_csv(tmp_path):
    main(["oracle", "--data", "abs", "--problem", "tv", "--l1", "0.05", "--n", "128", "--out", str(tmp_path / "o")])
    rc = main(["denoise", "--input", str(tmp_path / "o" / "oracle.csv"), "--problem", "tv2", "--l2", "0.01", "--out", str(tmp_path / "d")])
    assert rc == 0


def test_denoise_nonconvergence_exit_3(tmp_path):
    rc = main(["denoise", "--data", "abs", "--n", "256", "--l1", "0.05", "--l2", "0.036", "--method", "pdhg", "--max-iters", "3", "--tol-gap", "1e-12", "--out", str(tmp_path)])
    assert rc == 3
    assert json.loads((tmp_path / "manifest.json").read_text())["converged"] is False
    assert (tmp_path / "solution.csv").exists()


@pytest.mark.parametrize(
    "args",
    [
        ["denoise", "--data", "ind", "--n", "1022", "--l1", "0.1", "--l2", "0.05"],
        ["denoise", "--data", "abs", "--input", "x.csv", "--l1", "0.1", "--l2", "0.1"],
        ["denoise", "--data", "abs", "--l1", "0.1"],
        ["denoise", "--data", "abs", "--l1", "-1", "--l2", "0.1"],
        ["denoise", "--input", "missing.csv", "--problem", "tv", "--l1", "0.1"],
        ["oracle", "--data", "quad", "--problem", "tv", "--l1", "0.1"],
        ["compare", "missing_a.csv", "missing_b.csv"],
        ["frobnicate"],
    ],
)
def test_bad_input_exit_2(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(args) == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# solver\nmethod = pdhg\nmax_iters = 50000\n")
    assert read_config(cfg) == {"method": "pdhg", "max_iters": "50000"}
    out = tmp_path / "d"
    assert main(["denoise", "--data", "abs", "--n", "64", "--problem", "tv", "--l1", "0.05", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["method"] == "pdhg"
    cfg.write_text("bogus = 1\n")
    assert main(["denoise", "--data", "abs", "--n", "64", "--problem", "tv", "--l1", "0.05", "--config", str(cfg), "--out", str(out)]) == 2


def test_oracle_json(tmp_path, capsys):
    assert main(["oracle", "--data", "abs", "--problem", "tgv", "--l1", "0.05", "--l2", "0.036", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert doc["coefficients"]["c"] == pytest.approx(0.42)
    assert doc["region"] == "StrictTGV"
    assert read_grid_csv(tmp_path / "oracle.csv").n == 1024


def test_compare_identical_and_round_trip(tmp_path, capsys):
    main(["denoise", "--data", "abs", "--n", "128", "--problem", "tv", "--l1", "0.05", "--out", str(tmp_path)])
    capsys.readouterr()
    sol = str(tmp_path / "solution.csv")
    assert main(["compare", sol, sol, "--out", str(tmp_path / "cmp.csv")]) == 0
    table = {r["metric"]: r["value"] for r in rows(tmp_path / "cmp.csv")}
    assert float(table["l2"]) == 0.0 and float(table["linf"]) == 0.0


def test_compare_oracle_vs_denoise(tmp_path, capsys):
    main(["denoise", "--data", "abs", "--n", "1024", "--l1", "0.05", "--l2", "0.036", "--out", str(tmp_path / "d")])
    main(["oracle", "--data", "abs", "--l1", "0.05", "--l2", "0.036", "--n", "1024", "--out", str(tmp_path / "o")])
    main(["compare", str(tmp_path / "d" / "solution.csv"), str(tmp_path / "o" / "oracle.csv"), "--out", str(tmp_path / "c.csv")])
    table = {r["metric"]: float(r["value"]) for r in rows(tmp_path / "c.csv")}
    assert table["l2"] <= 5 * table["h"]


def test_certify_json(tmp_path):
    out = tmp_path / "cert.json"
    assert main(["certify", "--data", "ind", "--n", "512", "--l1", "0.12", "--l2", "0.05", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["verdict"] == "pass"
    assert {e["kind"] for e in doc["structural_events"]} >= {"Jump"}


def test_certify_given_solution_fails_for_data(tmp_path):
    main(["oracle", "--data", "abs", "--problem", "tv", "--l1", "0.01", "--n", "256", "--out", str(tmp_path)])
    out = tmp_path / "cert.json"
    main(["certify", "--data", "abs", "--n", "256", "--problem", "tv", "--l1", "0.2", "--solution", str(tmp_path / "oracle.csv"), "--out", str(out)])
    assert json.loads(out.read_text())["verdict"] == "fail"


def test_regions_files(tmp_path):
    out = tmp_path / "r"
    rc = main(["regions", "--data", "abs", "--n", "256", "--l1-from", "0.04", "--l1-to", "0.14", "--l1-steps", "3", "--l2-from", "0.02", "--l2-to", "0.09", "--l2-steps", "3", "--out", str(out)])
    assert rc == 0
    r = rows(out / "regions.csv")
    assert len(r) == 9 and set(r[0]) == {"lambda1", "lambda2", "verdict", "margin1", "margin2"}
    svg = (out / "regions.svg").read_text()
    assert svg.count('data-verdict="') == 9
    for row in r:
        assert f'data-lambda1="{row["lambda1"]}" data-lambda2="{row["lambda2"]}" data-verdict="{row["verdict"]}"' in svg
    assert len(rows(out / "regions_brute.csv")) == 9


def test_regions_single_cell(tmp_path):
    out = tmp_path / "r"
    assert main(["regions", "--data", "ind", "--n", "128", "--l1-from", "0.1", "--l1-to", "0.1", "--l1-steps", "1", "--l2-from", "0.08", "--l2-to", "0.08", "--l2-steps", "1", "--no-brute", "--out", str(out)]) == 0
    r = rows(out / "regions.csv")
    assert len(r) == 1 and r[0]["verdict"] == "EqualsTV1"


def test_sweep_transitions(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--data", "abs", "--n", "2048", "--l1", "0.05", "--l2-from", "0.02", "--l2-to", "0.05", "--steps", "30", "--out", str(out)]) == 0
    v = [r["verdict"] for r in rows(out)]
    collapsed = [a for i, a in enumerate(v) if i == 0 or a != v[i - 1]]
    assert collapsed == ["EqualsTV2", "StrictTGV", "EqualsTV1"]
