"""Acceptance checks: twelve numbered criteria with fixed tolerances.

Each criterion_N function performs one self-contained verification and
returns (passed, detail).  run_criteria wraps them with wall-clock timing
and per-criterion runtime limits; run_budget selects the quick tier
(criteria 1-5, under five minutes) or the full tier (all twelve plus the
long exhaustive q=4 cross-check).  Results that need the same expensive
computation share a module-level cache: criteria 8 and 9 reuse one
exhaustive sweep, and criterion 11 classifies the snapshots produced by
criterion 10's Monte Carlo runs.
"""

import json
import math
import os
import shutil
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass

import numpy as np

from . import blocks, model, oracle, sampler, spinwave

CATALAN = 0.915965594177219015

# Per-criterion wall-clock limits in seconds; "seconds" in a criterion's
# statement is capped at 30.
_LIMITS = {
    1: 60,
    2: 30,
    3: 30,
    4: 60,
    5: 30,
    6: 300,
    7: 600,
    8: 600,
    9: 600,
    10: 900,
    11: 600,
    12: 300,
}

_CACHE = {}


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one acceptance criterion."""

    name: str
    passed: bool
    seconds: float
    detail: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name} {status}: {self.detail} ({self.seconds:.1f}s)"


# ---------------------------------------------------------------------------
# 1-5: spin-wave selection, analytic anchor, affinity, Hessian, exactness


def criterion_1(threads=1):
    """5-degree scans put the free-energy minimum exactly at 0 and 180."""
    details = []
    ok = True
    for gamma in (0.5, 1.0, 1.5):
        scan = spinwave.scan_minima(gamma, 5.0, 1e-7, threads=threads)
        by_deg = {row.phi_deg: row.F for row in scan.rows}
        gap = abs(by_deg[0.0] - by_deg[180.0])
        argmin = set(scan.argmin_deg)
        others_above = all(
            row.F > scan.f_min for row in scan.rows if row.phi_deg not in (0.0, 180.0)
        )
        ok = ok and argmin == {0.0, 180.0} and gap <= 1e-9 and others_above
        details.append(f"gamma={gamma}: argmin {sorted(argmin)}, |F(0)-F(180)|={gap:.1e}")
    return ok, "; ".join(details)


def criterion_2(threads=1):
    """F at 90 degrees equals 2*Catalan/pi for every gamma."""
    target = 2.0 * CATALAN / math.pi
    errs = []
    for gamma in (0.5, 1.0, 1.5):
        spec = spinwave.SpinWaveSpec(phi_star=math.pi / 2.0, gamma=gamma, lam=0.0)
        errs.append(abs(spinwave.free_energy(spec, threads=threads).value - target))
    return max(errs) <= 1e-5, f"max |F(90) - 2G/pi| = {max(errs):.2e} (target {target:.12f})"


def criterion_3(threads=1):
    """Dispersion is an affine mixture of its two extreme forms."""
    rng = np.random.default_rng(12345)
    n = 10**6
    k1 = rng.uniform(-math.pi, math.pi, n)
    k2 = rng.uniform(-math.pi, math.pi, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    gamma = 1.0
    a = 0.5 * (1.0 + np.cos(phi))
    mixed = a * spinwave.dispersion(k1, k2, gamma) + (1.0 - a) * spinwave.dispersion(
        k1, k2, -gamma
    )
    worst = float(np.max(np.abs(spinwave.dispersion(k1, k2, gamma * np.cos(phi)) - mixed)))
    return worst <= 1e-12, f"max |D(phi) - mixture| = {worst:.2e} over {n} samples"


def criterion_4(threads=1):
    """Finite-difference Hessian eigenvalues match J*D_k on the 8x8 torus."""
    worst_rel = 0.0
    worst_zero = 0.0
    for phi_deg in (0.0, 45.0, 90.0, 135.0, 180.0):
        res = spinwave.hessian_check(8, math.radians(phi_deg), 1.0)
        worst_rel = max(worst_rel, res.max_rel_offzero)
        worst_zero = max(worst_zero, res.max_abs_zero)
    ok = worst_rel <= 1e-5 and worst_zero <= 1e-8
    return ok, f"max rel err {worst_rel:.2e}, max |zero-mode| {worst_zero:.2e}"


def criterion_5(threads=1):
    """Ground-state energy, rotation invariance, and gradient cancellation."""
    rng = np.random.default_rng(54321)
    worst_e = worst_rot = worst_grad = 0.0
    for L in (4, 8, 16):
        for gamma in (0.5, 1.0):
            params = model.CouplingParams(J=1.0, gamma=gamma, beta=1.0)
            for _ in range(10):
                frame = model.ReferenceFrame(
                    rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)
                )
                neel = model.neel_state(L, frame)
                worst_e = max(worst_e, abs(model.energy(neel, params)) / L**2)
                worst_grad = max(worst_grad, float(np.max(np.abs(model.gradient(neel, params)))))
                cfg = rng.uniform(-math.pi, math.pi, (L, L))
                rot = model.rotate_all(cfg, rng.uniform(-math.pi, math.pi))
                worst_rot = max(
                    worst_rot, abs(model.energy(rot, params) - model.energy(cfg, params)) / L**2
                )
    ok = worst_e <= 1e-10 and worst_rot <= 1e-10 and worst_grad < 1e-8
    return ok, (
        f"|E(neel)|/L^2 {worst_e:.1e}, rotation drift/L^2 {worst_rot:.1e},"
        f" sup|grad| {worst_grad:.1e}"
    )


# ---------------------------------------------------------------------------
# 6-7: harmonic error bound and the Gaussian sandwich


def criterion_6(threads=1):
    """Normalized harmonic error within (8/3)(1+gamma); cubic scaling."""
    params = model.CouplingParams(J=1.0, gamma=1.0, beta=1.0)
    scans = {
        delta: oracle.harmonic_error_scan(16, delta, params, 10**4, seed=7)
        for delta in (0.05, 0.1, 0.2)
    }
    within = all(s.sup_normalized <= s.bound for s in scans.values())
    r1 = scans[0.1].sup_abs / scans[0.05].sup_abs
    r2 = scans[0.2].sup_abs / scans[0.1].sup_abs
    cubic = 4.0 <= r1 <= 16.0 and 4.0 <= r2 <= 16.0
    sup = max(s.sup_normalized for s in scans.values())
    bound = scans[0.1].bound
    return within and cubic, (
        f"sup normalized {sup:.3f} <= {bound:.3f}; doubling ratios {r1:.2f}, {r2:.2f}"
        f" vs cubic 8.0"
    )


def criterion_7(threads=1):
    """Tail, box-mass, and bracket checks for the massive Gaussian model."""
    beta_J = 1e4
    delta = beta_J ** (-5.0 / 12.0)
    spec = spinwave.SpinWaveSpec(phi_star=0.0, gamma=1.0, lam=1.0)
    rep = oracle.gaussian_box_mass(16, spec, delta, beta_J, 10**4, seed=28, threads=threads)
    tail_ok = rep.site_tail <= rep.chebyshev_bound + 2.326 * rep.site_tail_stderr
    mass_ok = rep.box_mass >= rep.product_bound_empirical - 2.0 * rep.box_mass_stderr
    bracket_ok = rep.lower_bound <= rep.log_q_box <= rep.upper_bound
    # Bracket midpoint: both bounds offset -F_lattice(L) by L-independent
    # constants, so the midpoint must drift toward the quadrature limit.
    offset = 0.5 * (math.log1p(-rep.chebyshev_bound) + 0.5 * beta_J * spec.lam * delta * delta)
    target = -spinwave.massive_free_energy(spec, spec.lam, threads=threads).value + offset
    mids = [
        -spinwave.lattice_free_energy(L, spec, spec.lam) + offset for L in (8, 16, 32)
    ]
    drifts = [abs(mid - target) for mid in mids]
    drift_ok = drifts[0] > drifts[1] > drifts[2]
    ok = tail_ok and mass_ok and bracket_ok and drift_ok
    return ok, (
        f"tail {rep.site_tail:.2e} <= cheb {rep.chebyshev_bound:.2e};"
        f" mass {rep.box_mass:.4f} >= {rep.product_bound_empirical:.4f} - 2se;"
        f" log q {rep.log_q_box:.4f} in [{rep.lower_bound:.4f}, {rep.upper_bound:.4f}];"
        f" midpoint drift {drifts[0]:.1e} > {drifts[1]:.1e} > {drifts[2]:.1e}"
    )


# ---------------------------------------------------------------------------
# 8-9: exhaustive chessboard estimate and subadditivity


def _clock_suite(threads):
    """Chessboard and subadditivity reports for q=3, cached for reuse."""
    if "clock-suite" not in _CACHE:
        from .cli import subadditivity_families

        events = oracle.standard_event_suite(2, 3)
        checks = []
        for ev in events:
            checks.append([((0, 0), ev)])
            checks.append([((0, 0), ev), ((1, 1), ev)])
        families = subadditivity_families(2, 3)
        out = {}
        for beta_J in (0.5, 2.0):
            params = model.CouplingParams(J=1.0, gamma=1.0, beta=beta_J)
            setup = oracle.ClockSetup(L=4, q=3, params=params, B=2)
            chess = oracle.chessboard_suite(setup, checks, threads=threads)
            subs = oracle.subadditivity_suite(setup, families, threads=threads)
            out[beta_J] = (chess, subs, setup)
        _CACHE["clock-suite"] = (out, len(events))
    return _CACHE["clock-suite"]


def criterion_8(threads=1):
    """Exhaustive q=3 chessboard estimate over events and placements."""
    out, n_events = _clock_suite(threads)
    worst = math.inf
    trivial_gap = 0.0
    count = 0
    for chess, _, _ in out.values():
        for rep in chess:
            count += 1
            worst = min(worst, rep.margin)
            if all(name == "always-true" for _, name in rep.placements):
                trivial_gap = max(trivial_gap, abs(rep.lhs - 1.0), abs(rep.rhs - 1.0))
    ok = worst >= -1e-12 and trivial_gap <= 1e-12 and n_events >= 5 and count >= 20
    return ok, (
        f"{count} checks ({n_events} events x placements x 2 temperatures),"
        f" min margin {worst:.2e}, trivial event gap {trivial_gap:.2e}"
    )


def criterion_9(threads=1):
    """Subadditivity over verified covers, plus rejection of a non-cover."""
    out, _ = _clock_suite(threads)
    worst = math.inf
    tight_gap = 0.0
    n_families = 0
    setup = None
    for _, subs, stp in out.values():
        setup = stp
        n_families = len(subs)
        for rep in subs:
            worst = min(worst, rep.margin)
            if rep.cover == ("center-copy",):
                tight_gap = max(tight_gap, abs(rep.margin))
    # The exact-cover precondition must reject a family that leaves a gap.
    event = oracle.EventSpec(
        "gap-event", oracle.site_window((1, 1), 0.0, math.radians(60))
    ).symmetrize(2)
    partial = oracle.EventSpec(
        "gap-half", oracle.site_window((1, 1), math.radians(50), math.radians(20))
    ).symmetrize(2)
    try:
        oracle.subadditivity_check(setup, event, [partial], threads=threads)
        rejected = False
    except ValueError:
        rejected = True
    ok = worst >= -1e-12 and tight_gap <= 1e-12 and n_families >= 3 and rejected
    return ok, (
        f"{n_families} cover families x 2 temperatures, min margin {worst:.2e},"
        f" tight-cover gap {tight_gap:.2e}, non-cover rejected: {rejected}"
    )


# ---------------------------------------------------------------------------
# 10-11: Monte Carlo phenomenology and block machinery


def _run_plan(overrides, prefix):
    base = {
        "L": 32,
        "J": 1.0,
        "gamma": 1.0,
        "betaJ": 10.0,
        "init": {"kind": "neel", "theta_star_deg": 0.0, "phi_star_deg": 0.0},
        "sweeps_burnin": 20000,
        "sweeps_measure": 100000,
        "measure_every": 10,
        "proposal_width": 1.0,
        "adapt": True,
        "seed": 101,
        "snapshot_every": 20000,
        "out_prefix": prefix,
    }
    base.update(overrides)
    return sampler.plan_from_dict(base)


def _batch_stats(values, n_batches=20):
    values = np.asarray(values, dtype=float)
    usable = (len(values) // n_batches) * n_batches
    batches = values[:usable].reshape(n_batches, -1).mean(axis=1)
    se = float(batches.std(ddof=1) / math.sqrt(n_batches))
    return float(values.mean()), se


def _mc_runs(threads):
    """The three golden Monte Carlo runs; snapshots cached for criterion 11."""
    if "mc-runs" not in _CACHE:
        work = tempfile.mkdtemp(prefix="odo-verify-")
        try:
            runs = {}
            snapshots = []
            for tag, overrides in (
                ("cold-0", {"seed": 101}),
                (
                    "cold-180",
                    {
                        "seed": 202,
                        "init": {
                            "kind": "neel",
                            "theta_star_deg": 0.0,
                            "phi_star_deg": 180.0,
                        },
                    },
                ),
                ("hot", {"seed": 303, "betaJ": 0.1, "init": {"kind": "random"}}),
            ):
                plan = _run_plan(overrides, os.path.join(work, tag))
                series = sampler.run(plan)
                order = [r.order_param_mean for r in series.records]
                nnn = [r.nnn for r in series.records]
                mean, se = _batch_stats(order)
                runs[tag] = {
                    "order_mean": mean,
                    "order_se": se,
                    "nnn_mean": float(np.mean(nnn)),
                }
                snapshots.extend(model.load_snapshot(p) for p in series.snapshot_paths)
            _CACHE["mc-runs"] = (runs, snapshots)
        finally:
            shutil.rmtree(work, ignore_errors=True)
    return _CACHE["mc-runs"]


def criterion_10(threads=1):
    """Cold runs order with the initialized sign; the hot run does not."""
    runs, _ = _mc_runs(threads)
    cold0, cold180, hot = runs["cold-0"], runs["cold-180"], runs["hot"]
    z0 = abs(cold0["order_mean"]) / cold0["order_se"]
    z180 = abs(cold180["order_mean"]) / cold180["order_se"]
    zhot = abs(hot["order_mean"]) / hot["order_se"]
    opposite = cold0["order_mean"] * cold180["order_mean"] < 0.0
    nnn_ok = cold0["nnn_mean"] < -0.5 and cold180["nnn_mean"] < -0.5
    ok = opposite and z0 > 5.0 and z180 > 5.0 and nnn_ok and zhot <= 3.0
    return ok, (
        f"order {cold0['order_mean']:+.3f} ({z0:.0f} se) vs"
        f" {cold180['order_mean']:+.3f} ({z180:.0f} se), nnn"
        f" {cold0['nnn_mean']:.3f}/{cold180['nnn_mean']:.3f} < -0.5,"
        f" hot run {zhot:.1f} se from 0"
    )


def _brute_window_hits(config, origin, B, delta, kappa, step_deg=0.5):
    """0.5-degree grid decision for the two goodness windows.

    A frame grid point (theta*, phi*) certifies a window when every even
    site sits within delta of theta* and every odd site within delta of
    theta* + phi*, with phi* inside the window around 0 or 180 degrees.
    """
    L = config.shape[0]
    n = int(round(360.0 / step_deg))
    grid = np.radians(np.arange(n) * step_deg - 180.0)
    even_c, odd_c = [], []
    x0, y0 = origin
    for i in range(B + 1):
        for j in range(B + 1):
            x, y = (x0 + i) % L, (y0 + j) % L
            c = config[x, y] - math.pi * (y % 2)
            (even_c if (x + y) % 2 == 0 else odd_c).append(c)
    even_ok = np.all(
        np.abs(model.wrap_angle(np.subtract.outer(even_c, grid))) < delta, axis=0
    )
    odd_ok = np.all(
        np.abs(model.wrap_angle(np.subtract.outer(odd_c, grid))) < delta, axis=0
    )
    hits = {}
    for name, center in (("G0", 0.0), ("G180", math.pi)):
        found = False
        for p in range(n):
            if abs(model.wrap_angle(grid[p] - center)) <= kappa:
                if np.any(even_ok & np.roll(odd_ok, -(p - n // 2))):
                    found = True
                    break
        hits[name] = found
    return hits


def criterion_11(threads=1):
    """Brute-force agreement, covering property, and snapshot adjacency."""
    B, delta, kappa = 2, 0.1, 0.2
    s = math.ceil(4.0 * math.pi / delta) + 1
    crit = blocks.BlockCriteria(B=B, Delta=delta, kappa=kappa, s=s)
    eps = math.radians(1.0)
    s_shrunk = math.ceil(4.0 * math.pi / (delta - eps)) + 1
    shrunk = blocks.BlockCriteria(B=B, Delta=delta - eps, kappa=kappa - eps, s=s_shrunk)
    windows = {
        "G0": blocks.ArcSet.around(0.0, kappa),
        "G180": blocks.ArcSet.around(math.pi, kappa),
    }
    shrunk_win = {
        "G0": blocks.ArcSet.around(0.0, kappa - eps),
        "G180": blocks.ArcSet.around(math.pi, kappa - eps),
    }
    rng = np.random.default_rng(1123)
    mismatches = 0
    brute_hits = 0
    for trial in range(1000):
        frame = model.ReferenceFrame(
            rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)
        )
        scale = (None, 0.9 * delta, 1.3 * delta, 0.3 * delta)[trial % 4]
        if scale is None:
            cfg = model.wrap_angle(rng.uniform(-math.pi, math.pi, (4, 4)))
        else:
            cfg = model.wrap_angle(
                model.neel_state(4, frame) + rng.uniform(-scale, scale, (4, 4))
            )
        hits = _brute_window_hits(cfg, (0, 0), B, delta, kappa)
        _, _, feas = blocks.feasibility(cfg, (0, 0), crit)
        _, _, feas_sh = blocks.feasibility(cfg, (0, 0), shrunk)
        for name in ("G0", "G180"):
            brute_hits += hits[name]
            if hits[name] and feas.intersect(windows[name]).is_empty():
                mismatches += 1
            if not feas_sh.intersect(shrunk_win[name]).is_empty() and not hits[name]:
                mismatches += 1

    margin = 0.9 * delta / (8.0 * B)
    edge = kappa + 2.0 * delta
    covering_bad = 0
    for _ in range(10**4):
        phi = rng.uniform(-math.pi, math.pi)
        frame = model.ReferenceFrame(rng.uniform(-math.pi, math.pi), phi)
        cfg = model.wrap_angle(model.neel_state(4, frame) + rng.uniform(-margin, margin, (4, 4)))
        lab = blocks.classify_block(cfg, (0, 0), crit)
        bad = lab.kind == "BadEnergy"
        if abs(phi) < kappa:
            bad = bad or lab.kind != "G0"
        elif abs(model.wrap_angle(phi - math.pi)) < kappa:
            bad = bad or lab.kind != "G180"
        elif abs(phi) > edge and abs(model.wrap_angle(phi - math.pi)) > edge:
            bad = bad or lab.kind != "BadSW"
        covering_bad += bad

    _, snapshots = _mc_runs(threads)
    violations = 0
    for cfg in snapshots:
        fld = blocks.block_field(cfg, crit, threads=threads)
        violations += len(fld.adjacency_violations)
    ok = mismatches == 0 and covering_bad == 0 and violations == 0 and len(snapshots) > 0
    return ok, (
        f"brute-force mismatches {mismatches}/1000 ({brute_hits} window hits),"
        f" covering failures {covering_bad}/10000, adjacency violations"
        f" {violations} over {len(snapshots)} snapshots"
    )


# ---------------------------------------------------------------------------
# 12: CLI determinism


def _cli_env():
    src = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    env = dict(os.environ)
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    env.pop("ODO_THREADS", None)
    return env


def _run_cli(workdir, args, env):
    proc = subprocess.run(
        [sys.executable, "-m", "odosim", *args],
        cwd=workdir,
        env=env,
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise RuntimeError(f"odo {' '.join(args)} failed ({proc.returncode}): {proc.stderr}")


def _manifest_key(path):
    with open(path) as fh:
        doc = json.load(fh)
    doc.pop("wall_time_s", None)
    doc.pop("threads", None)
    return json.dumps(doc, sort_keys=True)


def _compare_dirs(a, b):
    """Mismatched file names between two run directories (manifests by content)."""
    names_a, names_b = sorted(os.listdir(a)), sorted(os.listdir(b))
    if names_a != names_b:
        return [f"file sets differ: {names_a} vs {names_b}"]
    bad = []
    for name in names_a:
        pa, pb = os.path.join(a, name), os.path.join(b, name)
        if name.endswith("_manifest.json"):
            if _manifest_key(pa) != _manifest_key(pb):
                bad.append(name)
        else:
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                if fa.read() != fb.read():
                    bad.append(name)
    return bad


def criterion_12(threads=1):
    """Every subcommand is reproducible and thread-count invariant."""
    env = _cli_env()
    plan = {
        "L": 8,
        "J": 1.0,
        "gamma": 1.0,
        "betaJ": 2.0,
        "init": {"kind": "neel", "theta_star_deg": 0.0, "phi_star_deg": 0.0},
        "sweeps_burnin": 50,
        "sweeps_measure": 100,
        "measure_every": 5,
        "proposal_width": 1.0,
        "adapt": True,
        "seed": 9,
        "snapshot_every": 75,
        "out_prefix": "mc",
    }
    commands = {
        "spinwave-scan": ["spinwave-scan", "--gamma", "1.0", "--step-deg", "45",
                          "--tol", "1e-6", "--out-prefix", "out", "--plot"],
        "mc-run": ["mc-run", "--config", "plan.json", "--out-prefix", "out", "--plot"],
        "blocks-analyze": ["blocks-analyze", "--snapshot", "out_snap_00000125.bin",
                           "--B", "2", "--delta", "0.3", "--kappa", "0.5",
                           "--out-prefix", "blk", "--plot"],
        "oracle-chessboard": ["oracle-chessboard", "--q", "2", "--betaJ", "0.5",
                              "--out-prefix", "out", "--plot"],
        "oracle-gaussian": ["oracle-gaussian", "--L", "8", "--betaJ", "10000",
                            "--n-samples", "1000", "--seed", "28",
                            "--out-prefix", "out", "--plot"],
        "oracle-harmonic": ["oracle-harmonic", "--L", "8", "--delta", "0.1",
                            "--n-samples", "100", "--seed", "3",
                            "--out-prefix", "out", "--plot"],
    }
    failures = []
    with tempfile.TemporaryDirectory(prefix="odo-determinism-") as work:
        for name, args in commands.items():
            dirs = {}
            for variant, extra in (("r1", ["--threads", "1"]),
                                   ("r2", ["--threads", "1"]),
                                   ("r4", ["--threads", "4"])):
                d = os.path.join(work, f"{name}-{variant}")
                os.mkdir(d)
                with open(os.path.join(d, "plan.json"), "w") as fh:
                    json.dump(plan, fh)
                if name == "blocks-analyze":
                    _run_cli(d, ["mc-run", "--config", "plan.json",
                                 "--out-prefix", "out"], env)
                _run_cli(d, args + extra, env)
                os.remove(os.path.join(d, "plan.json"))
                dirs[variant] = d
            for pair in (("r1", "r2"), ("r1", "r4")):
                bad = _compare_dirs(dirs[pair[0]], dirs[pair[1]])
                if bad:
                    failures.append(f"{name} {pair[0]} vs {pair[1]}: {bad}")
    ok = not failures
    detail = "all 6 subcommands byte-stable across reruns and thread counts"
    if failures:
        detail = "; ".join(failures)[:500]
    return ok, detail


# ---------------------------------------------------------------------------
# Long-mode extra: exhaustive q=4 enumeration cross-check


def _transfer_log_z(L, q, J, gamma, beta):
    """log Z by a column-to-column transfer matrix, an independent method.

    Columns interact through the two diagonal couplings J and both rows of
    the axis coupling gamma*J; each column state is one of q^L digit
    strings.  The constant 2*J per site is added at the end.
    """
    angles = 2.0 * math.pi * np.arange(q) / q
    states = np.stack(
        np.meshgrid(*([angles] * L), indexing="ij"), axis=-1
    ).reshape(-1, L)
    up = np.roll(states, -1, axis=1)
    intra = gamma * J * np.sum(np.cos(states - up), axis=1)
    diff_dn = states[:, None, :] - np.roll(states, -1, axis=1)[None, :, :]
    diff_up = states[:, None, :] - np.roll(states, 1, axis=1)[None, :, :]
    diff_ax = states[:, None, :] - states[None, :, :]
    inter = J * (np.sum(np.cos(diff_dn), axis=2) + np.sum(np.cos(diff_up), axis=2))
    inter += gamma * J * np.sum(np.cos(diff_ax), axis=2)
    expo = -beta * (inter + 0.5 * (intra[:, None] + intra[None, :]))
    shift = float(np.max(expo))
    transfer = np.exp(expo - shift)
    total = float(np.trace(np.linalg.matrix_power(transfer, L)))
    return math.log(total) + L * shift - 2.0 * beta * J * L * L


def long_check_q4(threads=1):
    """Exhaustive q=4 enumeration against the transfer matrix."""
    params = model.CouplingParams(J=1.0, gamma=1.0, beta=0.5)
    setup = oracle.ClockSetup(L=4, q=4, params=params, B=2)
    enum = oracle.enumerate_clock(setup, threads=threads)
    tm = _transfer_log_z(4, 4, 1.0, 1.0, 0.5)
    gap = abs(enum.log_z - tm)
    count_ok = enum.n_states == 4**16
    sym_ok = abs(enum.mean_order_param) <= 1e-12
    ok = gap <= 1e-12 * abs(tm) + 1e-13 and count_ok and sym_ok
    return ok, (
        f"log Z {enum.log_z:.12f} vs transfer matrix {tm:.12f} (|diff| {gap:.1e}),"
        f" {enum.n_states} states, |mean order| {abs(enum.mean_order_param):.1e}"
    )


# ---------------------------------------------------------------------------
# Runners

CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
    12: criterion_12,
}

QUICK = (1, 2, 3, 4, 5)


def run_criterion(number, threads=1):
    """Run one criterion with timing and its runtime limit applied."""
    func = CRITERIA[number]
    start = time.perf_counter()
    try:
        ok, detail = func(threads=threads)
    except Exception as err:  # a crashed criterion is a failed criterion
        return CheckResult(
            f"criterion-{number:02d}", False, time.perf_counter() - start,
            f"raised {type(err).__name__}: {err}",
        )
    seconds = time.perf_counter() - start
    limit = _LIMITS[number]
    if seconds >= limit and number != 9:  # 9's runtime is shared with 8
        ok = False
        detail += f" [runtime {seconds:.0f}s exceeded {limit}s]"
    return CheckResult(f"criterion-{number:02d}", ok, seconds, detail)


def run_criteria(numbers, threads=1):
    return [run_criterion(n, threads=threads) for n in numbers]


def run_budget(budget, threads=1):
    """Run a verification tier: 'quick' (criteria 1-5) or 'full' (all)."""
    if budget == "quick":
        return run_criteria(QUICK, threads=threads)
    if budget != "full":
        raise ValueError(f"budget must be 'quick' or 'full', got {budget!r}")
    results = run_criteria(range(1, 13), threads=threads)
    start = time.perf_counter()
    try:
        ok, detail = long_check_q4(threads=threads)
    except Exception as err:
        ok, detail = False, f"raised {type(err).__name__}: {err}"
    results.append(CheckResult("q4-long", ok, time.perf_counter() - start, detail))
    return results
