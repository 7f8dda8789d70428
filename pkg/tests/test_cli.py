import hashlib
import json
import math
import os
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from odosim import cli
from odosim.cli import CommandConfig, ValidationError

SRC = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src"))
SCHEMA_PATH = os.path.join(SRC, "odosim", "manifest_schema.json")


def _env():
    env = dict(os.environ)
    env["PYTHONPATH"] = SRC + os.pathsep + env.get("PYTHONPATH", "")
    env.pop("ODO_THREADS", None)
    return env


def _run(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "odosim", *args],
        cwd=cwd,
        env=_env(),
        capture_output=True,
        text=True,
    )


def _write_plan(path, **overrides):
    plan = {
        "L": 8,
        "J": 1.0,
        "gamma": 1.0,
        "betaJ": 2.0,
        "init": {"kind": "neel", "theta_star_deg": 0.0, "phi_star_deg": 0.0},
        "sweeps_burnin": 20,
        "sweeps_measure": 40,
        "measure_every": 2,
        "proposal_width": 1.0,
        "adapt": True,
        "seed": 7,
        "snapshot_every": 20,
        "out_prefix": "mc",
    }
    plan.update(overrides)
    with open(path, "w") as fh:
        json.dump(plan, fh)
    return plan


def _sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# ---------------------------------------------------------------------------
# Config parsing and round trips

def test_parse_defaults():
    cfg = cli.parse_argv(["spinwave-scan", "--gamma", "1.0"])
    assert cfg.subcommand == "spinwave-scan"
    assert set(cfg.params) == set(cli._PARAM_KEYS["spinwave-scan"])
    assert cfg.params["step_deg"] == 5.0 and cfg.params["tol"] == 1e-7
    assert cfg.seed is None
    assert cfg.threads == 1
    assert cfg.out_prefix == "odo"


def test_parse_rejects_bad_values():
    with pytest.raises(ValidationError):
        cli.parse_argv(["spinwave-scan"])  # --gamma required
    with pytest.raises(ValidationError):
        cli.parse_argv(["spinwave-scan", "--gamma", "notafloat"])
    with pytest.raises(ValidationError):
        cli.parse_argv(["no-such-subcommand"])
    with pytest.raises(ValidationError):
        cli.parse_argv(["spinwave-scan", "--gamma", "1.0", "--threads", "0"])


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("ODO_THREADS", "3")
    assert cli.parse_argv(["spinwave-scan", "--gamma", "1.0"]).threads == 3
    # explicit flag wins over the environment
    cfg = cli.parse_argv(["spinwave-scan", "--gamma", "1.0", "--threads", "2"])
    assert cfg.threads == 2
    monkeypatch.setenv("ODO_THREADS", "zero")
    with pytest.raises(ValidationError):
        cli.parse_argv(["spinwave-scan", "--gamma", "1.0"])


def _random_params(name, rng):
    def num():
        return float(np.round(rng.uniform(0.1, 10.0), 6))

    def count(lo=1, hi=1000):
        return int(rng.integers(lo, hi))

    def flag():
        return bool(rng.integers(2))

    if name == "spinwave-scan":
        return {"gamma": num(), "step_deg": num(), "tol": num(), "lam": num(),
                "quad_n": count(), "plot": flag()}
    if name == "mc-run":
        return {"config": f"plan{count()}.json",
                "plan": {"L": count(4, 64), "seed": count(), "note": num()},
                "plot": flag()}
    if name == "blocks-analyze":
        return {"snapshots": [f"s{i}.bin" for i in range(count(1, 4))],
                "B": count(2, 8), "delta": num(), "kappa": num(), "s": count(),
                "plot": flag()}
    if name == "oracle-chessboard":
        return {"L": count(4, 8), "q": count(2, 5), "B": 2, "J": num(),
                "gamma": num(), "betaJ": [num() for _ in range(count(1, 4))],
                "plot": flag()}
    if name == "oracle-gaussian":
        return {"L": count(4, 32), "betaJ": num(), "lam": num(), "gamma": num(),
                "phi_star_deg": num(), "delta": num(), "n_samples": count(),
                "plot": flag()}
    if name == "oracle-harmonic":
        return {"L": count(4, 32), "J": num(), "betaJ": num(), "gamma": num(),
                "deltas": [num() for _ in range(count(1, 4))],
                "n_samples": count(), "plot": flag()}
    return {"budget": ["quick", "full"][int(rng.integers(2))]}


def test_config_json_round_trip_100_random():
    rng = np.random.default_rng(2024)
    names = list(cli._PARAM_KEYS)
    for i in range(100):
        name = names[i % len(names)]
        cfg = CommandConfig(
            subcommand=name,
            params=_random_params(name, rng),
            out_prefix=f"run{i}",
            seed=int(rng.integers(0, 2**31)) if rng.integers(2) else None,
            threads=int(rng.integers(1, 9)),
        )
        assert CommandConfig.from_json(cfg.to_json()) == cfg


def test_config_rejects_unknown_and_missing_keys():
    good = CommandConfig("verify-all", {"budget": "quick"}, "v", None, 1)
    doc = json.loads(good.to_json())
    doc["extra"] = 1
    with pytest.raises(ValidationError):
        CommandConfig.from_json(json.dumps(doc))
    doc = json.loads(good.to_json())
    del doc["threads"]
    with pytest.raises(ValidationError):
        CommandConfig.from_json(json.dumps(doc))
    with pytest.raises(ValidationError):
        CommandConfig("verify-all", {"budget": "quick", "bogus": 1}, "v", None, 1)
    with pytest.raises(ValidationError):
        CommandConfig("verify-all", {}, "v", None, 1)


# ---------------------------------------------------------------------------
# Exit codes and stderr contract

def test_missing_config_exits_1_naming_file(tmp_path):
    proc = _run(["mc-run", "--config", "missing.json"], tmp_path)
    assert proc.returncode == 1
    line = proc.stderr.strip()
    assert "\n" not in line
    assert line.startswith("error[validation]:")
    assert "missing.json" in line


def test_bad_plan_keys_exit_1(tmp_path):
    plan = _write_plan(tmp_path / "plan.json")
    plan["surprise"] = 1
    with open(tmp_path / "plan.json", "w") as fh:
        json.dump(plan, fh)
    proc = _run(["mc-run", "--config", "plan.json"], tmp_path)
    assert proc.returncode == 1
    assert proc.stderr.strip().startswith("error[validation]:")


def test_unreachable_tolerance_exits_2(tmp_path):
    proc = _run(
        ["spinwave-scan", "--gamma", "1.0", "--step-deg", "90", "--tol", "1e-16"],
        tmp_path,
    )
    assert proc.returncode == 2
    line = proc.stderr.strip()
    assert "\n" not in line
    assert line.startswith("error[numerical]:")


# ---------------------------------------------------------------------------
# End-to-end runs, manifests, determinism

def test_scan_flags_argmin_and_manifest_validates(tmp_path):
    proc = _run(
        ["spinwave-scan", "--gamma", "1.0", "--step-deg", "90", "--out-prefix", "f1"],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    rows = (tmp_path / "f1_scan.csv").read_text().strip().splitlines()
    assert rows[0] == "phi_deg,gamma,lambda,F,err_est,quad_n,is_argmin"
    flagged = {r.split(",")[0] for r in rows[1:] if r.split(",")[-1] == "1"}
    assert flagged == {"0", "180"}
    manifest = json.loads((tmp_path / "f1_manifest.json").read_text())
    with open(SCHEMA_PATH) as fh:
        jsonschema.validate(manifest, json.load(fh))
    assert manifest["subcommand"] == "spinwave-scan"
    assert manifest["seed"] is None
    assert set(manifest["outputs"]) == {"f1_scan.csv"}


def test_identical_invocations_identical_hashes(tmp_path):
    args = ["oracle-harmonic", "--L", "8", "--delta", "0.1", "--n-samples", "50",
            "--seed", "3", "--out-prefix", "h", "--plot"]
    for d in ("a", "b"):
        os.mkdir(tmp_path / d)
        proc = _run(args, tmp_path / d)
        assert proc.returncode == 0, proc.stderr
    ma = json.loads((tmp_path / "a" / "h_manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "h_manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]
    assert set(ma["outputs"]) == {"h_harmonic.csv", "h_harmonic.png"}
    for name, digest in ma["outputs"].items():
        assert _sha(tmp_path / "a" / name) == digest
        assert _sha(tmp_path / "b" / name) == digest


def test_mc_run_then_blocks_analyze(tmp_path):
    _write_plan(tmp_path / "plan.json")
    proc = _run(["mc-run", "--config", "plan.json", "--out-prefix", "run"], tmp_path)
    assert proc.returncode == 0, proc.stderr
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["params"]["plan"]["out_prefix"] == "run"
    names = set(manifest["outputs"])
    assert "run_series.csv" in names
    snaps = sorted(n for n in names if n.startswith("run_snap_"))
    assert snaps == ["run_snap_00000040.bin", "run_snap_00000060.bin"]

    before = _sha(tmp_path / snaps[0])
    proc = _run(
        ["blocks-analyze", "--snapshot", snaps[0], "--B", "2", "--delta", "0.3",
         "--kappa", "0.5", "--out-prefix", "blk"],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    assert _sha(tmp_path / snaps[0]) == before  # input never mutated
    manifest = json.loads((tmp_path / "blk_manifest.json").read_text())
    assert set(manifest["outputs"]) == {
        "blk_blocks_0000.csv",
        "blk_blocks_0000.criteria.json",
        "blk_frequencies.csv",
    }
    table = (tmp_path / "blk_blocks_0000.csv").read_text().splitlines()
    assert table[0] == "t1,t2,label,phi_witness_deg,n_feasible_i"
    assert len(table) == 1 + 16
    freq = (tmp_path / "blk_frequencies.csv").read_text().splitlines()
    assert freq[0] == "label,count,freq,stderr"
    assert len(freq) == 1 + 4


def test_chessboard_margins_nonnegative(tmp_path):
    proc = _run(
        ["oracle-chessboard", "--q", "2", "--betaJ", "0.5", "--betaJ", "2.0",
         "--out-prefix", "c"],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    rows = (tmp_path / "c_chessboard.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == 2 * 12  # 6 events x 2 placements x 2 temperatures
    assert all(float(r.split(",")[-1]) >= -1e-12 for r in rows)
    subs = (tmp_path / "c_subadditivity.csv").read_text().strip().splitlines()[1:]
    assert len(subs) == 2 * 3
    assert all(float(r.split(",")[-1]) >= -1e-12 for r in subs)


def test_gaussian_cli_reports_bracket(tmp_path):
    proc = _run(
        ["oracle-gaussian", "--L", "8", "--betaJ", "10000", "--n-samples", "500",
         "--seed", "28", "--out-prefix", "g"],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    header, row = (tmp_path / "g_gaussian.csv").read_text().strip().splitlines()
    rec = dict(zip(header.split(","), map(float, row.split(","))))
    assert rec["lower_bound"] <= rec["log_q_box"] <= rec["upper_bound"]
    assert 0.0 <= rec["box_mass"] <= 1.0


def test_verify_all_quick_passes(tmp_path):
    proc = _run(["verify-all", "--budget", "quick", "--out-prefix", "v"], tmp_path)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "all 5 criteria passed" in proc.stdout
    rows = (tmp_path / "v_verify.csv").read_text().strip().splitlines()
    assert rows[0] == "criterion,passed,seconds,detail"
    assert len(rows) == 1 + 5
    assert all(r.split(",")[1] == "1" for r in rows[1:])
