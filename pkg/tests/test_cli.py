import csv
import json

import numpy as np
import pytest
import yaml

from saddlescatter.cli import EXIT_NUMERIC, EXIT_OK, EXIT_PARTIAL, EXIT_SCHEMA, main

RADIAL = {"family": "gaussian", "n": 2, "E0": 1.0, "lambda": [1.0, 1.0]}


def run(tmp_path, command, cfg, name="cfg.yaml", *flags):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    out = tmp_path / f"out_{command}_{name}"
    code = main([command, "--config", str(path), "--out", str(out), *flags])
    return code, out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def no_orphans(out):
    files = {p.name for p in out.iterdir()}
    assert files == set(manifest(out)["outputs"]) | {"manifest.json"}


def test_scatter_free_model(tmp_path):
    cfg = {"model": {"family": "free", "n": 2}, "params": {"E": 1.0, "omega": [0.0, 1.0], "z": [-1.0, 0.5]}}
    code, out = run(tmp_path, "scatter", cfg)
    assert code == EXIT_OK
    rows = list(csv.DictReader((out / "scatter.csv").open()))
    assert len(rows) == 4
    for r in rows:
        assert r["status"] == "ok"
        assert float(r["theta1"]) == pytest.approx(float(r["omega1"]), abs=1e-12)
        assert float(r["zplus2"]) == pytest.approx(float(r["z2"]), abs=1e-10)
    assert manifest(out)["status"] == "ok"
    no_orphans(out)


def test_missing_lambda_is_schema_error(tmp_path):
    cfg = {"model": {"family": "gaussian", "n": 2, "E0": 1.0}, "params": {"E": 1.0, "omega": [0.0], "z": [0.5]}}
    code, out = run(tmp_path, "scatter", cfg)
    assert code == EXIT_SCHEMA
    assert not out.exists()


@pytest.mark.parametrize("cfg", [
    {"params": {}},
    {"model": RADIAL, "params": {"omega": [0.0], "z": [0.5]}},
    {"model": RADIAL, "params": "nope"},
    {"model": RADIAL, "tol_scale": -1, "params": {"E": 1.0, "omega": [0.0], "z": [0.5]}},
    {"model_file": "missing.yaml"},
])
def test_schema_errors(tmp_path, cfg):
    code, out = run(tmp_path, "scatter", cfg)
    assert code == EXIT_SCHEMA
    assert not out.exists() or not any(out.iterdir())


def test_model_file_and_determinism(tmp_path):
    (tmp_path / "model.yaml").write_text(yaml.safe_dump(RADIAL))
    cfg = {"model_file": "model.yaml", "seed": 3, "params": {"n_seeds": 8, "n_times": 6}}
    c1, o1 = run(tmp_path, "manifold", cfg, "a.yaml")
    c2, o2 = run(tmp_path, "manifold", cfg, "b.yaml")
    assert c1 == c2 == EXIT_OK
    for f in manifest(o1)["outputs"]:
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()
    m1, m2 = manifest(o1), manifest(o2)
    m1.pop("wall_time_s"), m2.pop("wall_time_s")
    assert m1 == m2


def test_flow_random_reproducible(tmp_path):
    cfg = {"model": RADIAL, "params": {"t_end": 2.0, "n_samples": 5, "random": {"count": 2, "radius": 0.3}}}
    _, o1 = run(tmp_path, "flow", cfg, "a.yaml", "--seed", "7")
    _, o2 = run(tmp_path, "flow", cfg, "b.yaml", "--seed", "7")
    _, o3 = run(tmp_path, "flow", cfg, "c.yaml", "--seed", "8")
    a = (o1 / "trajectory_0000.csv").read_bytes()
    assert a == (o2 / "trajectory_0000.csv").read_bytes()
    assert a != (o3 / "trajectory_0000.csv").read_bytes()
    no_orphans(o1)


def test_amplitude_with_oracle(tmp_path):
    cfg = {"model": RADIAL, "params": {"E": 1.5, "h": 0.1, "omega": [0.0], "theta": [0.316], "oracle": True}}
    code, out = run(tmp_path, "amplitude", cfg)
    assert code == EXIT_OK
    res = json.loads((out / "amplitude.json").read_text())[0]
    o = res["oracle"]
    assert o["relative_error"] == pytest.approx(abs(o["abs_f_semiclassical"] - o["abs_f_partial_wave"])
                                                / o["abs_f_partial_wave"])
    assert o["relative_error"] < 0.15
    assert len(res["branches"]) == 2


def test_partial_results(tmp_path):
    # theta = omega is excluded, the other direction succeeds
    cfg = {"model": {"family": "free", "n": 2}, "params": {"E": 1.0, "h": 0.1, "omega": [0.0], "theta": [0.0, 1.0]}}
    code, out = run(tmp_path, "amplitude", cfg)
    assert code == EXIT_PARTIAL
    m = manifest(out)
    assert m["status"] == "partial" and len(m["failures"]) == 1
    no_orphans(out)


def test_numerical_error(tmp_path):
    cfg = {"model": {"family": "eckart", "n": 1, "E0": 1.0, "lambda": [1.0]}, "params": {"h": 0.01, "E": [1.0], "kdx": 5.0}}
    code, out = run(tmp_path, "oracle1d", cfg)
    assert code == EXIT_NUMERIC
    assert manifest(out)["status"] == "failed"


def test_oracle1d_and_tol_scale(tmp_path):
    cfg = {"model": {"family": "eckart", "n": 1, "E0": 1.0, "lambda": [1.0]}, "params": {"h": 0.05, "E1": [0.0]}}
    code, out = run(tmp_path, "oracle1d", cfg, "cfg.yaml", "--tol-scale", "10")
    assert code == EXIT_OK and manifest(out)["tol_scale"] == 10.0
    rows = list(csv.DictReader((out / "oracle1d.csv").open()))
    assert float(rows[0]["T2"]) + float(rows[0]["R2"]) == pytest.approx(1.0, abs=1e-9)


def test_validate_model(tmp_path):
    code, out = run(tmp_path, "validate-model", {"model": RADIAL})
    assert code == EXIT_OK and json.loads((out / "validation.json").read_text())["ok"]


def test_jobs_match_serial(tmp_path):
    cfg = {"model": RADIAL, "params": {"E": 1.5, "h": 0.1, "omega": [0.0], "theta": [0.5, 2.0],
                                       "search": {"n_starts": 16}}}
    _, o1 = run(tmp_path, "amplitude", cfg, "a.yaml")
    _, o2 = run(tmp_path, "amplitude", cfg, "b.yaml", "--jobs", "2")
    assert (o1 / "amplitude.json").read_bytes() == (o2 / "amplitude.json").read_bytes()
