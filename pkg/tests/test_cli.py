import json
import os

import pytest

from pairdrift.cli import ExperimentConfig, load_config, main, run


def test_load_config_defaults(tmp_path):
    cfg = load_config(None, "simulate", seed=4, out=str(tmp_path / "o"))
    assert cfg.experiment == "simulate"
    assert cfg.seed == 4
    assert cfg.workers == 1
    assert cfg.model_params().h == 0.5


def test_load_config_file(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        'experiment = "simulate"\nseed = 9\n\n'
        "[model]\nh = 0.25\ngamma = 2.0\n\n"
        "[simulate]\nT = 1.0\ndt = 1e-3\n"
    )
    cfg = load_config(str(f), "simulate")
    assert cfg.seed == 9
    p = cfg.model_params()
    assert p.h == 0.25 and p.gamma == 2.0
    assert cfg.opts("simulate")["T"] == 1.0
    assert cfg.opts("simulate")["record_stride"] == 10  # default preserved


def test_load_config_physical_noise(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('[model]\nh = 0.25\nphysical = true\n')
    cfg = load_config(str(f), "simulate")
    p = cfg.model_params()
    assert p.kappa2 == pytest.approx(1.5)


def test_invalid_ledger_names_constraint(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        'experiment = "verify"\n\n[model]\nh = 0.5\n\n'
        "[ledger]\nC = 16.0\nr_star = 1000.0\np2 = 2.0\nq2 = 0.2\n"
        "alpha2 = 0.95\n"
    )
    with pytest.raises(Exception, match="q2 > p2/3"):
        load_config(str(f), "verify")
    rc = main(["verify", "--config", str(f), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_unknown_experiment_rejected(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('experiment = "dance"\n')
    with pytest.raises(ValueError, match="unknown experiment"):
        load_config(str(f), None)


def test_simulate_run_and_manifest(tmp_path):
    out = str(tmp_path / "run1")
    rc = main(["simulate", "--out", out, "--seed", "3"])
    assert rc == 0
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["seed"] == 3
    assert man["passed"]
    assert man["results"]["simulate"]["stopped"] == "TimeLimit"
    assert os.path.exists(os.path.join(out, "path.csv"))
    assert os.path.exists(os.path.join(out, "config.toml"))


def test_rerun_reproduces_csv_bytes(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert main(["simulate", "--out", out, "--seed", "11"]) == 0
        outs.append(open(os.path.join(out, "path.csv"), "rb").read())
    assert outs[0] == outs[1]


def test_laplace_run(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        "[model]\nh = 0.5\n\n[ledger]\nC = 16.0\nr_star = 1000.0\n\n"
        "[laplace]\nn_paths = 2000\ns_list = [0.4]\n"
        "eta0_frac = [0.0, 1.0]\n"
    )
    out = str(tmp_path / "lap")
    rc = main(["laplace", "--config", str(f), "--out", out, "--seed", "2"])
    assert rc == 0
    rows = json.load(open(os.path.join(out, "laplace.json")))["rows"]
    assert len(rows) == 2
    boundary = [r for r in rows if r["eta0"] != 0.0][0]
    assert boundary["mc"] == 1.0 and boundary["quad"] == pytest.approx(1.0)


def test_verify_run_small(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        "[model]\nh = 0.5\n\n[ledger]\nC = 16.0\nr_star = 1000.0\n\n"
        "[verify]\nsamples = 800\nsearch = false\n"
    )
    out = str(tmp_path / "ver")
    rc = main(["verify", "--config", str(f), "--out", out, "--seed", "1"])
    assert rc == 0
    rep = json.load(open(os.path.join(out, "verification.json")))
    assert all(r["passed"] for r in rep["reports"])
    txt = open(os.path.join(out, "verification.txt")).read()
    assert "PASS" in txt and "FAIL" not in txt


def test_workers_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("PAIRDRIFT_WORKERS", "3")
    cfg = load_config(None, "simulate")
    assert cfg.workers == 3


def test_ledger_toml_round_trip(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text(
        "[model]\nh = 0.5\n\n[ledger]\nC = 16.0\nr_star = 1000.0\n\n"
        "[verify]\nsamples = 800\nsearch = false\n"
    )
    out = str(tmp_path / "v1")
    assert main(["verify", "--config", str(f), "--out", out]) == 0
    emitted = os.path.join(out, "ledger.toml")
    assert os.path.exists(emitted)
    f2 = tmp_path / "c2.toml"
    f2.write_text("[model]\nh = 0.5\n\n" + open(emitted).read()
                  + "\n[verify]\nsamples = 800\nsearch = false\n")
    cfg1 = load_config(str(f), "verify")
    cfg2 = load_config(str(f2), "verify")
    lp1 = cfg1.lyapunov_params(cfg1.model_params())
    lp2 = cfg2.lyapunov_params(cfg2.model_params())
    assert lp1.ledger_hash() == lp2.ledger_hash()


def test_q1_nonzero_rejected(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("[model]\nh = 0.5\n\n[ledger]\nC = 16.0\n"
                 "r_star = 1000.0\nq1 = 0.5\n")
    with pytest.raises(Exception, match="q1 must equal 0"):
        load_config(str(f), "verify")


def test_control_run_writes_trajectory(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("[model]\nh = 0.5\n\n[control]\nn_side = 2\nR = 4.0\n"
                 "dt = 1e-4\n")
    out = str(tmp_path / "ctl")
    rc = main(["control", "--config", str(f), "--out", out])
    assert rc == 0
    assert os.path.exists(os.path.join(out, "worst_trajectory.csv"))
