import json

import httpx
import pytest
import yaml
from fastapi.testclient import TestClient

from ggepi import cli
from ggepi.service import app

FAST = ["--permutations", "99"]


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def dataset(tmp_path, capsys):
    out = tmp_path / "sim"
    code, _, _ = run(["simulate", "--setting", "1", "--model", "wang", "--r2", "0.7", "--seed", "4",
                      "--output", str(out)], capsys)
    assert code == 0
    return out


def test_simulate_writes_dataset(tmp_path, capsys):
    out = tmp_path / "d"
    code, stdout, err = run(["simulate", "--setting", "1", "--seed", "7", "--output", str(out)], capsys)
    assert code == 0
    res = json.loads(stdout)
    assert (res["n"], res["n_snps"], res["n_genes"]) == (600, 36, 6)
    assert "realized R2" in err
    assert sorted(p.name for p in out.iterdir()) == ["gene_map.tsv", "genotypes.tsv", "phenotype.txt",
                                                     "truth.json"]


def test_simulate_refuses_non_empty_output(dataset, capsys):
    code, _, err = run(["simulate", "--seed", "4", "--output", str(dataset)], capsys)
    assert code == 3 and "--force" in err
    code, _, _ = run(["simulate", "--seed", "4", "--output", str(dataset), "--force"], capsys)
    assert code == 0


def test_same_seed_same_files(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["simulate", "--setting", "3", "--model", "pca", "--seed", "11", "--output",
                    str(tmp_path / name)], capsys)[0] == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_missing_gene_map_names_path(dataset, tmp_path, capsys):
    missing = tmp_path / "nope.tsv"
    code, _, err = run(["analyze", "--genotypes", str(dataset / "genotypes.tsv"), "--gene-map", str(missing),
                        "--phenotype", str(dataset / "phenotype.txt"), "--output", str(tmp_path / "o")], capsys)
    assert code == 2 and str(missing) in err


def test_bad_config_and_seed(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("bogus_key: 1\n")
    assert run(["simulate", "--config", str(cfg), "--output", str(tmp_path / "o")], capsys)[0] == 2
    assert run(["simulate", "--seed", "-1", "--output", str(tmp_path / "o")], capsys)[0] == 2
    assert run(["simulate", "--config", str(tmp_path / "missing.yaml")], capsys)[0] == 2
    assert run(["report"], capsys)[0] == 2


def test_analyze_from_data_dir(dataset, tmp_path, capsys):
    out = tmp_path / "an"
    code, stdout, _ = run(["analyze", "--data", str(dataset), "--method", "ggee", "--seed", "1",
                           "--output", str(out), *FAST], capsys)
    assert code == 0
    res = json.loads(stdout)
    assert res["n_groups"] == 21 and res["method"] == "ggee"
    rep = json.loads((out / "report.json").read_text())
    assert rep["permutations"] == 99 and rep["provenance"]["method"] == "ggee"
    assert (out / "report.tsv").read_text().startswith("group_id\t")


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"seed": 5, "simulate": {"setting": 3, "r2": 0.4, "simulation": {"n": 80}}}))
    code, stdout, _ = run(["simulate", "--config", str(cfg), "--r2", "0.6", "--output", str(tmp_path / "o")],
                          capsys)
    assert code == 0
    truth = json.loads((tmp_path / "o" / "truth.json").read_text())
    assert json.loads(stdout)["n"] == 80 and truth["r2_target"] == 0.6


def test_power_study_and_report(tmp_path, capsys):
    out = tmp_path / "ps"
    argv = ["power-study", "--settings", "1", "--models", "wang", "--r2-grid", "0.5", "--iterations", "1",
            "--method", "pca", "--seed", "2", "--output", str(out), *FAST]
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"power_study": {"simulation": {"n": 100, "G": 3, "p_g": 2},
                                                   "detect": {"grid_size": 10, "folds": 5}}}))
    code, stdout, _ = run(argv + ["--config", str(cfg)], capsys)
    assert code == 0
    res = json.loads(stdout)
    assert len(res["cells"]) == 1 and res["cells"][0]["method"] == "pca"
    assert (out / "power.csv").is_file() and (out / "config.json").is_file()
    assert run(argv + ["--config", str(cfg)], capsys)[0] == 3
    before = (out / "power.csv").read_text()
    code, stdout, _ = run(["report", "--output", str(out)], capsys)
    assert code == 0 and (out / "power.csv").read_text() == before


def test_service_endpoints(dataset, tmp_path):
    client = TestClient(app)
    assert client.get("/health").json()["status"] == "ok"
    r = client.post("/analyze", json={"genotypes": str(dataset / "genotypes.tsv"),
                                      "gene_map": str(tmp_path / "x.tsv"),
                                      "phenotype": str(dataset / "phenotype.txt"), "output": str(tmp_path / "o")})
    assert r.status_code == 422 and r.json()["detail"]["path"] == str(tmp_path / "x.tsv")
    r = client.post("/simulate", json={"output": str(dataset), "seed": 1})
    assert r.status_code == 409
    r = client.post("/simulate", json={"output": str(tmp_path / "s"), "seed": 1, "simulation": {"n": 50}})
    assert r.status_code == 200 and r.json()["n"] == 50
    assert client.post("/simulate", json={"output": "x", "nonsense": 1}).status_code == 422


def test_cli_server_mode_matches_local(dataset, tmp_path, capsys, monkeypatch):
    client = TestClient(app)

    def post(url, json=None, timeout=None):
        return client.post(httpx.URL(url).path, json=json)

    monkeypatch.setattr(httpx, "post", post)
    base = ["analyze", "--data", str(dataset), "--seed", "3", "--method", "pca", *FAST]
    assert run(base + ["--output", str(tmp_path / "local")], capsys)[0] == 0
    assert run(base + ["--output", str(tmp_path / "remote"), "--server", "http://svc"], capsys)[0] == 0
    a = (tmp_path / "local" / "report.tsv").read_text()
    b = (tmp_path / "remote" / "report.tsv").read_text()
    assert a == b
    code, _, err = run(base + ["--output", str(tmp_path / "remote"), "--server", "http://svc"], capsys)
    assert code == 3
