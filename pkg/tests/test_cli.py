import csv
import json
from pathlib import Path

import pytest

import golden
from conftest import P0
from retire_dual.cli import main, parse_range
from retire_dual.errors import ParameterError

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
DATA = Path(__file__).resolve().parent / "data"


def write_cfg(tmp_path, name="cfg.json", **changes):
    cfg = dict(P0, support={"L": 1.2})
    cfg.update(changes)
    cfg = {k: v for k, v in cfg.items() if v is not None}
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_solve_feasible_golden(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", str(CONFIGS / "retirement_feasible.json"), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["regime"] == "RetirementFeasible"
    assert man["z_bar"] == pytest.approx(golden.Z_BAR, rel=1e-11)
    assert man["j"] == pytest.approx(golden.J, rel=1e-11)
    assert man["w_bar"] > 0 and man["w_bar_positive"] is True
    assert man["params"]["delta_equals_k"] is True
    assert (out / "policy.csv").read_bytes() == (DATA / "retirement_feasible_policy.csv").read_bytes()


def test_solve_delay_forever(tmp_path):
    out = tmp_path / "out"
    assert main(["solve", "--config", str(CONFIGS / "delay_forever.json"), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["regime"] == "DelayForever"
    assert man["z_bar"] is None and man["w_bar"] is None and man["j"] is None
    assert not any(r["is_threshold"] == "1" for r in rows(out / "policy.csv"))


def test_solve_embeds_config_hash(tmp_path):
    out = tmp_path / "out"
    main(["solve", "--config", str(write_cfg(tmp_path)), "--out", str(out)])
    man = json.loads((out / "manifest.json").read_text())
    first = (out / "policy.csv").read_text().splitlines()[0]
    assert first == f"# config_sha256={man['config_sha256']}"


def test_missing_sigma(tmp_path, capsys):
    code = main(["solve", "--config", str(write_cfg(tmp_path, sigma=None)), "--out", str(tmp_path)])
    assert code == 2
    assert "sigma" in capsys.readouterr().err


def test_unreadable_and_malformed_config(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_tie_delta_flag(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, delta=0.08)
    assert main(["solve", "--config", str(cfg), "--out", str(out), "--tie-delta-to-k"]) == 0
    params = json.loads((out / "manifest.json").read_text())["params"]
    assert params["delta"] == pytest.approx(params["K"], rel=1e-11)
    assert params["delta_tied_to_k"] is True


def test_sweep_regime_flip(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(write_cfg(tmp_path)), "--param", "L=0.9:1.5:0.1", "--out", str(out)]) == 0
    table = rows(out / "sweep.csv")
    assert [r["L"] for r in table] == ["0.9", "1", "1.1", "1.2", "1.3", "1.4", "1.5"]
    regimes = [r["regime"] for r in table]
    assert regimes[:2] == ["DelayForever", "KnifeEdge"]
    assert set(regimes[2:]) == {"RetirementFeasible"}


def test_sweep_two_parameters(tmp_path):
    out = tmp_path / "out"
    code = main(["sweep", "--config", str(write_cfg(tmp_path)), "--param", "L=1.1:1.3:0.1",
                 "--param", "gamma=2:4:1", "--out", str(out)])
    assert code == 0
    table = rows(out / "sweep.csv")
    assert len(table) == 9
    assert [(r["L"], r["gamma"]) for r in table][:3] == [("1.1", "2"), ("1.1", "3"), ("1.1", "4")]


def test_sweep_failed_points_reported(tmp_path):
    out = tmp_path / "out"
    code = main(["sweep", "--config", str(write_cfg(tmp_path)), "--param", "sigma=-0.1:0.1:0.1", "--out", str(out)])
    assert code == 0
    table = rows(out / "sweep.csv")
    assert [r["error"] for r in table] == ["NonPositiveVolatility", "NonPositiveVolatility", ""]


def test_sweep_deterministic_across_threads(tmp_path, monkeypatch):
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("SOLVER_THREADS", threads)
        out = tmp_path / threads
        main(["sweep", "--config", str(write_cfg(tmp_path)), "--param", "L=1.1:2.0:0.1", "--out", str(out)])
        outputs.append((out / "sweep.csv").read_bytes())
    assert outputs[0] == outputs[1]


@pytest.mark.parametrize("spec", ["L=1.5:0.9:0.1", "L=1:2:0", "L=1:2", "nonsense=1:2:1"])
def test_bad_sweep_spec(tmp_path, spec):
    assert main(["sweep", "--config", str(write_cfg(tmp_path)), "--param", spec, "--out", str(tmp_path)]) == 2


def test_parse_range():
    assert parse_range("L=0.9:1.5:0.1")[1] == [0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
    with pytest.raises(ParameterError):
        parse_range("L=2:1:0.1")


SIM = {"n_paths": 20, "horizon_years": 5, "dt": 0.0833333333333, "w0": 20.0, "output_stride": 6}


def test_simulate_byte_identical(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, simulation=dict(SIM, overlay_disaster=True))
    outs = []
    for threads in ("1", "3"):
        monkeypatch.setenv("SOLVER_THREADS", threads)
        out = tmp_path / threads
        assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "99"]) == 0
        outs.append(((out / "paths.csv").read_bytes(), (out / "summary.json").read_bytes()))
    assert outs[0] == outs[1]
    summary = json.loads(outs[0][1])
    assert {"estimate", "std_error", "target", "tail_bound", "pass"} <= set(summary)


def test_seed_flag_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, simulation=SIM)
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "paths.csv").read_bytes() != (tmp_path / "b" / "paths.csv").read_bytes()


def test_simulate_zero_paths(tmp_path):
    cfg = write_cfg(tmp_path, simulation=dict(SIM, n_paths=0))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_simulate_without_section(tmp_path):
    assert main(["simulate", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path)]) == 2


def test_simulate_starting_in_stopping_region(tmp_path):
    sim = {k: v for k, v in SIM.items() if k != "w0"}
    cfg = write_cfg(tmp_path, simulation=dict(sim, z0=golden.Z_BAR / 2))
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
    table = rows(out / "paths.csv")
    assert {r["status"] for r in table} == {"VoluntarilyRetired"}
    assert json.loads((out / "summary.json").read_text())["retired_fraction"] == 1.0


def test_verify_fault_injection(tmp_path):
    cfg = write_cfg(tmp_path, fault_injection={"a_scale": 1.01}, verify={"mc_paths": 200})
    out = tmp_path / "out"
    assert main(["verify", "--config", str(cfg), "--out", str(out)]) == 1
    rep = json.loads((out / "verification.json").read_text())
    assert rep["passed"] is False and rep["n_fail"] >= 1


def test_verify_bad_settings(tmp_path):
    cfg = write_cfg(tmp_path, verify={"bogus": 1})
    assert main(["verify", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "retire_dual", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "retire-dual" in res.stdout


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    from retire_dual import cli
    from retire_dual.errors import BracketingFailed

    def boom(p, **kw):
        raise BracketingFailed("no bracket")

    monkeypatch.setattr(cli, "solve", boom)
    assert main(["solve", "--config", str(write_cfg(tmp_path)), "--out", str(tmp_path)]) == 3
