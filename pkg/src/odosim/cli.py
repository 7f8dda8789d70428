"""Command-line entry point: scans, runs, block analysis, verification.

    odo <subcommand> [flags]

Subcommands: spinwave-scan, mc-run, blocks-analyze, oracle-chessboard,
oracle-gaussian, oracle-harmonic, verify-all.  Outputs are CSV tables with
fixed column orders plus optional figures (--plot); every successful run
also writes <out_prefix>_manifest.json (schema odo-manifest-v1, shipped as
manifest_schema.json) with the resolved configuration, the seed, the wall
time, and a sha256 hash per output file.

Exit codes: 0 success; 1 validation failure, reported as a single
"error[validation]: ..." line on stderr; 2 numerical failure, reported as
"error[numerical]: ...".  Worker threads come from --threads, falling back
to the ODO_THREADS environment variable, then to 1; results never depend
on the thread count.
"""

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass

from . import __version__, blocks, model, oracle, plots, sampler, spinwave

MANIFEST_SCHEMA = "odo-manifest-v1"

SUBCOMMANDS = (
    "spinwave-scan",
    "mc-run",
    "blocks-analyze",
    "oracle-chessboard",
    "oracle-gaussian",
    "oracle-harmonic",
    "verify-all",
)

_PARAM_KEYS = {
    "spinwave-scan": ("gamma", "step_deg", "tol", "lam", "quad_n", "plot"),
    "mc-run": ("config", "plan", "plot"),
    "blocks-analyze": ("snapshots", "B", "delta", "kappa", "s", "plot"),
    "oracle-chessboard": ("L", "q", "B", "J", "gamma", "betaJ", "plot"),
    "oracle-gaussian": (
        "L",
        "betaJ",
        "lam",
        "gamma",
        "phi_star_deg",
        "delta",
        "n_samples",
        "plot",
    ),
    "oracle-harmonic": ("L", "J", "betaJ", "gamma", "deltas", "n_samples", "plot"),
    "verify-all": ("budget",),
}


class ValidationError(ValueError):
    """Bad arguments or bad input files; maps to exit code 1."""


@dataclass(frozen=True)
class CommandConfig:
    """One fully resolved invocation.

    params is the per-subcommand record with a fixed key set; seed is None
    for the subcommands that consume no randomness.
    """

    subcommand: str
    params: dict
    out_prefix: str
    seed: int | None
    threads: int

    def __post_init__(self):
        if self.subcommand not in _PARAM_KEYS:
            raise ValidationError(f"unknown subcommand {self.subcommand!r}")
        expected = set(_PARAM_KEYS[self.subcommand])
        got = set(self.params)
        if got != expected:
            raise ValidationError(
                f"{self.subcommand}: parameter keys {sorted(got)} do not match"
                f" {sorted(expected)}"
            )
        if not isinstance(self.out_prefix, str) or not self.out_prefix:
            raise ValidationError("out_prefix must be a nonempty string")
        if self.seed is not None and not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer or null")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ValidationError("threads must be a positive integer")

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        keys = {"subcommand", "params", "out_prefix", "seed", "threads"}
        if not isinstance(data, dict) or set(data) != keys:
            raise ValidationError(f"config object must have exactly the keys {sorted(keys)}")
        return cls(**data)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _add_common(parser, default_prefix="odo"):
    parser.add_argument("--out-prefix", default=default_prefix, help="path prefix for all outputs")
    parser.add_argument(
        "--threads",
        type=int,
        default=None,
        help="worker threads (default: ODO_THREADS or 1); never changes results",
    )


def _add_plot(parser):
    parser.add_argument("--plot", action="store_true", help="render a figure next to the CSV")


def build_parser():
    parser = _Parser(prog="odo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("spinwave-scan", help="free-energy scan over phi*")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--step-deg", type=float, default=5.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="spectral mass")
    p.add_argument("--quad-n", type=int, default=128, help="starting quadrature grid side")
    _add_common(p)
    _add_plot(p)

    p = sub.add_parser("mc-run", help="Metropolis run from a JSON plan")
    p.add_argument("--config", required=True, help="JSON run plan")
    p.add_argument(
        "--out-prefix",
        default=None,
        help="overrides the plan's out_prefix (default: plan value, else 'odo')",
    )
    p.add_argument("--threads", type=int, default=None, help="accepted for uniformity; a chain is sequential")
    _add_plot(p)

    p = sub.add_parser("blocks-analyze", help="classify blocks of saved configurations")
    p.add_argument("--snapshot", action="append", required=True, help="snapshot file (.bin or .csv); repeatable")
    p.add_argument("--B", type=int, default=4, help="block scale")
    p.add_argument("--delta", type=float, default=0.1, help="deviation threshold")
    p.add_argument("--kappa", type=float, default=0.2, help="goodness window around 0 and 180 degrees")
    p.add_argument("--s", type=int, default=None, help="reference angles (default: ceil(4 pi / delta) + 1)")
    _add_common(p)
    _add_plot(p)

    p = sub.add_parser("oracle-chessboard", help="exhaustive chessboard and subadditivity checks")
    p.add_argument("--q", type=int, required=True, help="clock states per spin (2..4)")
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--B", type=int, default=2)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--betaJ", type=float, action="append", required=True, help="repeatable")
    _add_common(p)
    _add_plot(p)

    p = sub.add_parser("oracle-gaussian", help="Gaussian box mass and mode variances")
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--betaJ", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--phi-star-deg", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=None, help="box halfwidth (default: (betaJ)^(-5/12))")
    p.add_argument("--n-samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=1)
    _add_common(p)
    _add_plot(p)

    p = sub.add_parser("oracle-harmonic", help="harmonic approximation error scan")
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--betaJ", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta", type=float, action="append", required=True, help="deviation bound; repeatable")
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    _add_common(p)
    _add_plot(p)

    p = sub.add_parser("verify-all", help="run the acceptance criteria")
    p.add_argument("--budget", choices=("quick", "full"), default="quick")
    _add_common(p)

    return parser


def _resolve_threads(value):
    if value is None:
        raw = os.environ.get("ODO_THREADS", "1")
        try:
            value = int(raw)
        except ValueError:
            raise ValidationError(f"ODO_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ValidationError(f"threads must be >= 1, got {value}")
    return value


def parse_argv(argv):
    """Parse argv into a fully resolved CommandConfig."""
    args = build_parser().parse_args(argv)
    threads = _resolve_threads(args.threads)
    name = args.subcommand

    if name == "spinwave-scan":
        params = {
            "gamma": args.gamma,
            "step_deg": args.step_deg,
            "tol": args.tol,
            "lam": args.lam,
            "quad_n": args.quad_n,
            "plot": args.plot,
        }
        return CommandConfig(name, params, args.out_prefix, None, threads)

    if name == "mc-run":
        try:
            plan = sampler.load_plan(args.config)
        except OSError as err:
            raise ValidationError(f"mc-run: cannot read config: {err}")
        except ValueError as err:
            raise ValidationError(f"mc-run: {err}")
        prefix = args.out_prefix or plan.out_prefix or "odo"
        plan = dataclasses.replace(plan, out_prefix=prefix)
        params = {"config": args.config, "plan": plan.to_dict(), "plot": args.plot}
        return CommandConfig(name, params, prefix, plan.seed, threads)

    if name == "blocks-analyze":
        s = args.s if args.s is not None else math.ceil(4.0 * math.pi / args.delta) + 1
        params = {
            "snapshots": list(args.snapshot),
            "B": args.B,
            "delta": args.delta,
            "kappa": args.kappa,
            "s": s,
            "plot": args.plot,
        }
        return CommandConfig(name, params, args.out_prefix, None, threads)

    if name == "oracle-chessboard":
        params = {
            "L": args.L,
            "q": args.q,
            "B": args.B,
            "J": args.J,
            "gamma": args.gamma,
            "betaJ": list(args.betaJ),
            "plot": args.plot,
        }
        return CommandConfig(name, params, args.out_prefix, None, threads)

    if name == "oracle-gaussian":
        delta = args.delta if args.delta is not None else args.betaJ ** (-5.0 / 12.0)
        params = {
            "L": args.L,
            "betaJ": args.betaJ,
            "lam": args.lam,
            "gamma": args.gamma,
            "phi_star_deg": args.phi_star_deg,
            "delta": delta,
            "n_samples": args.n_samples,
            "plot": args.plot,
        }
        return CommandConfig(name, params, args.out_prefix, args.seed, threads)

    if name == "oracle-harmonic":
        params = {
            "L": args.L,
            "J": args.J,
            "betaJ": args.betaJ,
            "gamma": args.gamma,
            "deltas": list(args.delta),
            "n_samples": args.n_samples,
            "plot": args.plot,
        }
        return CommandConfig(name, params, args.out_prefix, args.seed, threads)

    params = {"budget": args.budget}
    return CommandConfig(name, params, args.out_prefix, None, threads)


# ---------------------------------------------------------------------------
# Handlers: each returns (output paths, extra exit code)


def _cmd_spinwave_scan(cfg):
    p = cfg.params
    scan = spinwave.scan_minima(
        p["gamma"], p["step_deg"], p["tol"], lam=p["lam"], quad_n=p["quad_n"], threads=cfg.threads
    )
    csv_path = f"{cfg.out_prefix}_scan.csv"
    spinwave.write_scan_csv(csv_path, scan)
    outputs = [csv_path]
    if p["plot"]:
        outputs.append(plots.scan_figure(scan, f"{cfg.out_prefix}_scan.png"))
    return outputs, 0


def _cmd_mc_run(cfg):
    plan = sampler.plan_from_dict(cfg.params["plan"])
    series = sampler.run(plan)
    csv_path = f"{cfg.out_prefix}_series.csv"
    sampler.write_series_csv(csv_path, series)
    outputs = [csv_path, *series.snapshot_paths]
    if cfg.params["plot"]:
        outputs.append(plots.series_figure(series, f"{cfg.out_prefix}_series.png"))
    return outputs, 0


def _load_snapshot(path):
    if not os.path.exists(path):
        raise ValidationError(f"blocks-analyze: snapshot {path} does not exist")
    if path.endswith(".csv"):
        return model.load_config_csv(path)
    return model.load_snapshot(path)


def _cmd_blocks_analyze(cfg):
    p = cfg.params
    criteria = blocks.BlockCriteria(B=p["B"], Delta=p["delta"], kappa=p["kappa"], s=p["s"])
    configs = [_load_snapshot(path) for path in p["snapshots"]]
    outputs = []
    fields = []
    for index, config in enumerate(configs):
        fld = blocks.block_field(config, criteria, threads=cfg.threads)
        fields.append(fld)
        csv_path = f"{cfg.out_prefix}_blocks_{index:04d}.csv"
        sidecar = blocks.write_block_csv(csv_path, fld)
        outputs.extend([csv_path, sidecar])
    freq_path = f"{cfg.out_prefix}_frequencies.csv"
    rows = blocks.event_frequencies(configs, criteria, threads=cfg.threads)
    with open(freq_path, "w") as fh:
        fh.write("label,count,freq,stderr\n")
        for row in rows:
            fh.write(f"{row.label},{row.count},{row.freq:.17g},{row.stderr:.17g}\n")
    outputs.append(freq_path)
    if p["plot"]:
        outputs.append(plots.block_figure(fields[0], f"{cfg.out_prefix}_blocks.png"))
    return outputs, 0


def _chessboard_checks(events, t_range):
    checks = []
    for ev in events:
        checks.append([((0, 0), ev)])
        checks.append([((0, 0), ev), ((t_range - 1, t_range - 1), ev)])
    return checks


def subadditivity_families(B, q):
    """Three cover families over the standard block events.

    A duplicate of the centered window (tight cover), two overlapping
    windows covering it, and the partition of the full event by the clock
    value at the block center.
    """
    deg = math.radians
    center = oracle.site_window((B // 2, B // 2), 0.0, deg(60))
    half = math.pi / q + deg(1)
    families = [
        (
            oracle.EventSpec("center-window", center).symmetrize(B),
            [oracle.EventSpec("center-copy", center).symmetrize(B)],
        ),
        (
            oracle.EventSpec("center-window", center).symmetrize(B),
            [
                oracle.EventSpec(
                    "center-left", oracle.site_window((B // 2, B // 2), -deg(40), deg(50))
                ).symmetrize(B),
                oracle.EventSpec(
                    "center-right", oracle.site_window((B // 2, B // 2), deg(40), deg(50))
                ).symmetrize(B),
            ],
        ),
        (
            oracle.EventSpec("everything", oracle.always_true(), symmetrized=True),
            [
                oracle.EventSpec(
                    f"clock-{k}",
                    oracle.site_window((B // 2, B // 2), 2.0 * math.pi * k / q, half),
                ).symmetrize(B)
                for k in range(q)
            ],
        ),
    ]
    return families


def _cmd_oracle_chessboard(cfg):
    p = cfg.params
    events = oracle.standard_event_suite(p["B"], p["q"])
    t_range = p["L"] // p["B"]
    checks = _chessboard_checks(events, t_range)
    families = subadditivity_families(p["B"], p["q"])
    chess_rows = []
    sub_rows = []
    all_reports = []
    for beta_J in p["betaJ"]:
        params = model.CouplingParams(J=p["J"], gamma=p["gamma"], beta=beta_J / p["J"])
        setup = oracle.ClockSetup(L=p["L"], q=p["q"], params=params, B=p["B"])
        reports = oracle.chessboard_suite(setup, checks, threads=cfg.threads)
        all_reports.extend(reports)
        for rep in reports:
            placed = ";".join(f"{t1}:{t2}" for (t1, t2), _ in rep.placements)
            names = "+".join(sorted({name for _, name in rep.placements}))
            chess_rows.append(
                f"{rep.beta_J:.17g},{names},{placed},{len(rep.placements)},"
                f"{rep.lhs:.17g},{rep.rhs:.17g},{rep.margin:.17g}"
            )
        for rep in oracle.subadditivity_suite(setup, families, threads=cfg.threads):
            cover = "+".join(rep.cover)
            sub_rows.append(
                f"{rep.beta_J:.17g},{rep.event},{cover},{rep.exponent:.17g},"
                f"{rep.lhs:.17g},{rep.rhs:.17g},{rep.margin:.17g}"
            )
    chess_path = f"{cfg.out_prefix}_chessboard.csv"
    with open(chess_path, "w") as fh:
        fh.write("beta_J,event,placements,n_placements,lhs,rhs,margin\n")
        fh.write("\n".join(chess_rows) + "\n")
    sub_path = f"{cfg.out_prefix}_subadditivity.csv"
    with open(sub_path, "w") as fh:
        fh.write("beta_J,event,cover,exponent,lhs,rhs,margin\n")
        fh.write("\n".join(sub_rows) + "\n")
    outputs = [chess_path, sub_path]
    if p["plot"]:
        outputs.append(plots.chessboard_figure(all_reports, f"{cfg.out_prefix}_chessboard.png"))
    return outputs, 0


_GAUSS_COLUMNS = (
    "L,beta_J,lambda,delta,phi_star_deg,gamma,n_samples,seed,box_mass,box_mass_stderr,"
    "site_tail,site_tail_stderr,log_q_massive,log_q_box,log_q_box_stderr,chebyshev_bound,"
    "product_bound_empirical,product_bound_chebyshev,lower_bound,upper_bound,mode_max_z"
)


def _cmd_oracle_gaussian(cfg):
    p = cfg.params
    spec = spinwave.SpinWaveSpec(
        phi_star=math.radians(p["phi_star_deg"]), gamma=p["gamma"], lam=p["lam"]
    )
    box = oracle.gaussian_box_mass(
        p["L"], spec, p["delta"], p["betaJ"], p["n_samples"], cfg.seed, threads=cfg.threads
    )
    modes = oracle.gaussian_mode_variances(
        p["L"], spec, p["betaJ"], p["n_samples"], cfg.seed, threads=cfg.threads
    )
    csv_path = f"{cfg.out_prefix}_gaussian.csv"
    values = (
        f"{box.L},{box.beta_J:.17g},{box.lam:.17g},{box.delta:.17g},{p['phi_star_deg']:.17g},"
        f"{box.gamma:.17g},{box.n_samples},{box.seed},{box.box_mass:.17g},"
        f"{box.box_mass_stderr:.17g},{box.site_tail:.17g},{box.site_tail_stderr:.17g},"
        f"{box.log_q_massive:.17g},{box.log_q_box:.17g},{box.log_q_box_stderr:.17g},"
        f"{box.chebyshev_bound:.17g},{box.product_bound_empirical:.17g},"
        f"{box.product_bound_chebyshev:.17g},{box.lower_bound:.17g},{box.upper_bound:.17g},"
        f"{modes.max_z:.17g}"
    )
    with open(csv_path, "w") as fh:
        fh.write(_GAUSS_COLUMNS + "\n" + values + "\n")
    outputs = [csv_path]
    if p["plot"]:
        outputs.append(plots.gaussian_figure(box, f"{cfg.out_prefix}_gaussian.png"))
    return outputs, 0


def _cmd_oracle_harmonic(cfg):
    p = cfg.params
    params = model.CouplingParams(J=p["J"], gamma=p["gamma"], beta=p["betaJ"] / p["J"])
    scans = [
        oracle.harmonic_error_scan(p["L"], delta, params, p["n_samples"], cfg.seed)
        for delta in p["deltas"]
    ]
    csv_path = f"{cfg.out_prefix}_harmonic.csv"
    with open(csv_path, "w") as fh:
        fh.write("L,delta,n_samples,seed,sup_abs,sup_normalized,bound\n")
        for scan in scans:
            fh.write(
                f"{scan.L},{scan.delta:.17g},{scan.n_samples},{scan.seed},"
                f"{scan.sup_abs:.17g},{scan.sup_normalized:.17g},{scan.bound:.17g}\n"
            )
    outputs = [csv_path]
    if p["plot"]:
        outputs.append(plots.harmonic_figure(scans, f"{cfg.out_prefix}_harmonic.png"))
    return outputs, 0


def _cmd_verify_all(cfg):
    from . import verify

    results = verify.run_budget(cfg.params["budget"], threads=cfg.threads)
    for res in results:
        print(res.line())
    csv_path = f"{cfg.out_prefix}_verify.csv"
    with open(csv_path, "w") as fh:
        fh.write("criterion,passed,seconds,detail\n")
        for res in results:
            detail = res.detail.replace(",", ";")
            fh.write(f"{res.name},{int(res.passed)},{res.seconds:.2f},{detail}\n")
    failed = [res for res in results if not res.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} criteria FAILED")
    else:
        print(f"all {len(results)} criteria passed")
    return [csv_path], (2 if failed else 0)


_HANDLERS = {
    "spinwave-scan": _cmd_spinwave_scan,
    "mc-run": _cmd_mc_run,
    "blocks-analyze": _cmd_blocks_analyze,
    "oracle-chessboard": _cmd_oracle_chessboard,
    "oracle-gaussian": _cmd_oracle_gaussian,
    "oracle-harmonic": _cmd_oracle_harmonic,
    "verify-all": _cmd_verify_all,
}


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def emit_manifest(cfg, outputs, wall_time_s):
    """Write <out_prefix>_manifest.json for a completed run."""
    base = os.path.dirname(cfg.out_prefix) or "."
    doc = {
        "schema": MANIFEST_SCHEMA,
        "tool": "odo",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "params": cfg.params,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "wall_time_s": wall_time_s,
        "outputs": {os.path.relpath(path, base): _sha256(path) for path in outputs},
    }
    path = f"{cfg.out_prefix}_manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def dispatch(argv=None):
    """Run one subcommand; returns the exit code."""
    try:
        cfg = parse_argv(argv)
    except ValidationError as err:
        print(f"error[validation]: {err}", file=sys.stderr)
        return 1
    start = time.perf_counter()
    try:
        outputs, code = _HANDLERS[cfg.subcommand](cfg)
    except (ValidationError, ValueError, OSError) as err:
        print(f"error[validation]: {err}", file=sys.stderr)
        return 1
    except (spinwave.QuadratureError, RuntimeError, ArithmeticError) as err:
        print(f"error[numerical]: {err}", file=sys.stderr)
        return 2
    manifest = emit_manifest(cfg, outputs, time.perf_counter() - start)
    for path in [*outputs, manifest]:
        print(f"wrote {path}")
    return code


def main():
    sys.exit(dispatch())
