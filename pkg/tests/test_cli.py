import os
import subprocess
import sys

import pytest

from repdyn import cli

SMALL = "[mdp]\ngenerator = reversible\nn_states = 12\n[train]\nrules = mc,td\nsteps = 400\nsnapshot_every = 200\nn_seeds = 3\n"


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL)
    return path


def test_convergence_output_independent_of_jobs(tmp_path, config, monkeypatch):
    monkeypatch.delenv("REPDYN_SEED", raising=False)
    outs = []
    for jobs in (1, 3):
        out = tmp_path / f"j{jobs}"
        assert cli.main(["convergence", "--config", str(config), "--jobs", str(jobs), "--out", str(out)]) == 0
        outs.append(((out / "convergence.csv").read_bytes(), (out / "convergence.svg").read_bytes()))
    assert outs[0] == outs[1]
    header, *rows = outs[0][0].decode().splitlines()
    assert header == "seed,rule,step,dist_svd,dist_inv,loss"
    assert len(rows) == 3 * 2 * 3


def test_zero_steps_reports_initial_snapshot(tmp_path, config, monkeypatch):
    monkeypatch.delenv("REPDYN_SEED", raising=False)
    out = tmp_path / "z"
    assert cli.main(["convergence", "--config", str(config), "--steps", "0", "--jobs", "1", "--out", str(out)]) == 0
    rows = (out / "convergence.csv").read_text().splitlines()[1:]
    assert len(rows) == 6 and all(r.split(",")[2] == "0" for r in rows)


def test_seed_env_and_flag(tmp_path, config, monkeypatch):
    monkeypatch.setenv("REPDYN_SEED", "5")
    out = tmp_path / "s"
    cli.main(["convergence", "--config", str(config), "--n-seeds", "1", "--jobs", "1", "--out", str(out)])
    assert (out / "convergence.csv").read_text().splitlines()[1].startswith("5,")
    cli.main(["convergence", "--config", str(config), "--n-seeds", "1", "--jobs", "1", "--out", str(out), "--seed", "8"])
    assert (out / "convergence.csv").read_text().splitlines()[1].startswith("8,")


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[x]\nd = 0\n")
    assert cli.main(["convergence", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_rotating_and_plot(tmp_path, monkeypatch):
    monkeypatch.delenv("REPDYN_SEED", raising=False)
    out = tmp_path / "rot"
    assert cli.main(["rotating", "--steps", "2000", "--out", str(out), "--jobs", "1"]) == 0
    meta = (out / "rotating_meta.csv").read_text()
    assert "no real top-2 invariant subspace" in meta
    before = (out / "rotating.svg").read_bytes()
    assert cli.main(["plot", "--out", str(out)]) == 0
    assert (out / "rotating.svg").read_bytes() == before


def test_random_cumulants_small(tmp_path, monkeypatch):
    monkeypatch.delenv("REPDYN_SEED", raising=False)
    cfg = tmp_path / "rc.ini"
    cfg.write_text("[c]\ngenerator = reversible\nn_states = 15\nd = 2\nfamilies = gaussian,indicator\n"
                   "t_grid = 5\nsteps = 500\nn_seeds = 2\nbound_seeds = 3\nstep_size = 0.08\n")
    out = tmp_path / "rc"
    assert cli.main(["random-cumulants", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    lines = (out / "cumulants.csv").read_text().splitlines()
    assert lines[0] == "rule,family,T,seed,dist,range_dist"
    assert len(lines) == 1 + 2 * 2 * 2
    assert (out / "bound.csv").read_text().splitlines()[0] == "T,p,bound,mean_sin_theta,stderr_sin_theta,n_seeds"


def test_verify_filter_and_mutation(tmp_path, monkeypatch):
    import numpy as np

    from repdyn import learning, verify

    assert cli.main(["verify", "--filter", "mdp", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify_report.txt").read_text().startswith("repdyn verify report")
    original = learning.td_flow_direction
    monkeypatch.setattr(learning, "td_flow_direction",
                        lambda phi, L, G, xi: original(phi, 2 * np.eye(len(L)) - L, G, xi))
    assert not verify.run("td_fixed_point")[0].passed
    assert cli.main(["verify", "--filter", "td_fixed_point"]) == 1


def test_numpy_fallback_matches_numba(tmp_path):
    code = ("import numpy as np\nfrom repdyn.mdp import random_reversible_mdp\nfrom repdyn.learning import train, TrainConfig\n"
            "from repdyn._accel import backend_name\n"
            "log = train(random_reversible_mdp(0, 10), np.eye(10), 3, TrainConfig(steps=500, snapshot_every=500))\n"
            "print(backend_name())\nprint(np.array2string(log.phi, precision=12))\n")
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, REPDYN_DISABLE_NUMBA=flag)
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    assert outs["1"].splitlines()[0] == "numpy"
    assert outs["0"].splitlines()[1:] == outs["1"].splitlines()[1:]
