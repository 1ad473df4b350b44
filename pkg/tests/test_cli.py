import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from sparsefactor import cli
from sparsefactor.errors import NumericalError
from sparsefactor.simulation import example_model, generate


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    X = generate(example_model(), 50, 7)
    f = d / "x.csv"
    with open(f, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"v{i}" for i in range(6)])
        w.writerows(X.tolist())
    cov = d / "s.csv"
    np.savetxt(cov, np.cov(X, rowvar=False, bias=True), delimiter=",")
    return f, cov


@pytest.fixture(scope="module")
def path_json(data_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("p") / "path.json"
    rc = cli.main(["path", "--input", str(data_csv[0]), "-m", "2", "--gamma", "3",
                   "--n-rhos", "8", "--out", str(out)])
    assert rc == 0
    return out


def _json(p):
    with open(p) as fh:
        return json.load(fh)


def test_fit(data_csv, tmp_path):
    out = tmp_path / "fit.json"
    assert cli.main(["fit", "--input", str(data_csv[0]), "-m", "2", "--penalty", "mcp",
                     "--gamma", "3", "--rho", "0.1", "--out", str(out)]) == 0
    doc = _json(out)
    assert doc["p"] == 6 and doc["m"] == 2
    assert len(doc["lambda"]) == 6
    assert doc["df"] == sum(v != 0 for row in doc["lambda"] for v in row)
    zeros = [v for row in doc["lambda"] for v in row if v == 0]
    assert all(isinstance(v, int) for v in zeros)


def test_fit_from_covariance_matches_data(data_csv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    common = ["-m", "2", "--penalty", "lasso", "--rho", "0.05"]
    assert cli.main(["fit", "--input", str(data_csv[0]), *common, "--out", str(a)]) == 0
    assert cli.main(["fit", "--cov", str(data_csv[1]), "--n", "50", *common, "--out", str(b)]) == 0
    la, lb = np.array(_json(a)["lambda"], float), np.array(_json(b)["lambda"], float)
    assert np.allclose(la, lb, atol=1e-6)


def test_path_document(path_json):
    doc = _json(path_json)
    assert doc["grid"]["gamma"] == ["inf", 3.0]
    assert len(doc["cells"]) == 16
    assert doc["meta"]["N"] == 50 and doc["meta"]["p"] == 6
    assert all(v == 0 for row in doc["cells"][0]["lambda"] for v in row)
    b = doc["best"]
    assert b["index"] == b["t"] * 8 + b["k"]


def test_select_round_trip(path_json, tmp_path):
    out = tmp_path / "sel.json"
    assert cli.main(["select", "--input", str(path_json), "--out", str(out)]) == 0
    sel = _json(out)
    assert sel["index"] == _json(path_json)["best"]["index"]
    for crit in ("aic", "caic"):
        out2 = tmp_path / f"{crit}.json"
        assert cli.main(["select", "--input", str(path_json), "--criterion", crit,
                         "--out", str(out2)]) == 0
        cells = _json(path_json)["cells"]
        assert _json(out2)["cell"][crit] == min(c[crit] for c in cells)


def test_scores(path_json, data_csv, tmp_path):
    out = tmp_path / "f.csv"
    assert cli.main(["scores", "--model", str(path_json), "--input", str(data_csv[0]),
                     "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["f1", "f2"] and len(rows) == 51
    F = np.array(rows[1:], float)
    assert np.allclose(F.mean(axis=0), 0.0, atol=1e-10)


def test_long_csv_and_precision(data_csv, tmp_path):
    out, long = tmp_path / "p.json", tmp_path / "long.csv"
    assert cli.main(["path", "--input", str(data_csv[0]), "-m", "2", "--penalty", "lasso",
                     "--n-rhos", "4", "--out", str(out), "--csv", str(long)]) == 0
    rows = list(csv.DictReader(open(long)))
    assert len(rows) == 4 * 12
    nz = [r["lambda"] for r in rows if r["lambda"] != "0"]
    assert nz
    for v in nz:
        # shortest round-trip repr: the text is the exact double
        assert v == repr(float(v))


def test_rotate(data_csv, tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["rotate", "--input", str(data_csv[0]), "-m", "2", "--out", str(out)]) == 0
    T = np.array(_json(out)["T"], float)
    assert np.allclose(T.T @ T, np.eye(2), atol=1e-9)


def test_simulate_deterministic(tmp_path):
    outs = []
    for i, threads in enumerate(("1", "2")):
        out, table = tmp_path / f"s{i}.json", tmp_path / f"t{i}.csv"
        assert cli.main(["simulate", "--model", "A", "--n", "100", "--reps", "2",
                         "--gamma", "3", "--n-rhos", "8", "--threads", threads,
                         "--out", str(out), "--table", str(table)]) == 0
        outs.append((out.read_bytes(), table.read_bytes()))
    assert outs[0] == outs[1]
    header = outs[0][1].decode().splitlines()[0]
    assert header.startswith("method,criterion,mse_lambda")


def test_exit_codes(data_csv, tmp_path, monkeypatch):
    f, cov = data_csv
    assert cli.main(["fit", "--cov", str(cov), "-m", "2", "--rho", "0.1"]) == 2
    assert cli.main(["fit", "--input", str(f), "-m", "2", "--penalty", "mcp",
                     "--gamma", "0.5", "--rho", "0.1"]) == 2
    assert cli.main(["fit", "--input", str(f), "-m", "2"]) == 2
    assert cli.main(["bogus"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    assert cli.main(["fit", "--input", str(bad), "-m", "1", "--rho", "0.1"]) == 3
    assert cli.main(["select", "--input", str(tmp_path / "missing.json")]) == 3

    def boom(*a, **k):
        raise NumericalError("singular")

    monkeypatch.setattr(cli, "fit", boom)
    assert cli.main(["fit", "--input", str(f), "-m", "2", "--penalty", "lasso",
                     "--rho", "0.1"]) == 4


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sparsefactor", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout
