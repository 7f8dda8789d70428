"""Seeded Metropolis sampling of the torus Gibbs measure.

Single-site Metropolis with wrapped uniform proposals theta -> theta +
U(-w, w) and acceptance min(1, exp(-beta dE)).  Sites are visited color
by color over the four parity classes (x mod 2, y mod 2), in the fixed
order (0,0), (0,1), (1,0), (1,1); no two sites of one class interact,
so the vectorized class update is identical to a sequential site-by-site
pass in that order.

Randomness is counter-based: sweep t draws its proposal and acceptance
arrays, in a fixed full-lattice layout, from an independent Philox
stream keyed by (seed, t).  The numbers a given site consumes therefore
do not depend on how the traversal is implemented, and runs with equal
seeds are bit-identical.  Stream 0 is reserved for random initial
configurations.

Proposal width adaptation (targeting acceptance 0.4-0.6) runs during
burn-in only; the measurement phase is a fixed-width reversible chain.
A sweep-level energy accumulator is checked against a full recompute
every 1000 sweeps and must agree to 1e-8.
"""

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import model

_COLOR_ORDER = ((0, 0), (0, 1), (1, 0), (1, 1))
_ADAPT_INTERVAL = 100
_RESYNC_INTERVAL = 1000
_DRIFT_TOL = 1e-8
_MIN_WIDTH = 1e-3

SERIES_HEADER = (
    "sweep,energy_per_site,nn_x,nn_y,nnn,order_param,"
    "theta_star_est,phi_star_est,acc_rate"
)

PLAN_KEYS = (
    "L",
    "J",
    "gamma",
    "betaJ",
    "init",
    "sweeps_burnin",
    "sweeps_measure",
    "measure_every",
    "proposal_width",
    "adapt",
    "seed",
    "snapshot_every",
    "out_prefix",
)

INIT_KINDS = ("neel", "random", "snapshot")


def sweep_rng(seed, sweep_index):
    """Philox generator for one sweep, keyed by (seed, sweep_index)."""
    key = np.array([seed, sweep_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def acceptance_probability(delta_e, beta):
    """Metropolis rule min(1, exp(-beta * delta_e))."""
    x = -beta * delta_e
    return 1.0 if x >= 0.0 else math.exp(x)


def _sweep(theta, params, width, rng):
    """One pass over all sites; mutates theta in place.

    Returns (accepted_count, accepted_energy_delta_sum).
    """
    L = theta.shape[0]
    deltas = rng.uniform(-width, width, size=(L, L))
    us = rng.uniform(0.0, 1.0, size=(L, L))
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    j_diag = params.J
    j_nn = params.J * params.gamma
    accepted = 0
    delta_sum = 0.0
    for cx, cy in _COLOR_ORDER:
        nb_c_diag = (
            np.roll(cos_t, (-1, -1), axis=(0, 1))
            + np.roll(cos_t, (-1, 1), axis=(0, 1))
            + np.roll(cos_t, (1, -1), axis=(0, 1))
            + np.roll(cos_t, (1, 1), axis=(0, 1))
        )
        nb_s_diag = (
            np.roll(sin_t, (-1, -1), axis=(0, 1))
            + np.roll(sin_t, (-1, 1), axis=(0, 1))
            + np.roll(sin_t, (1, -1), axis=(0, 1))
            + np.roll(sin_t, (1, 1), axis=(0, 1))
        )
        nb_c_nn = (
            np.roll(cos_t, -1, axis=0)
            + np.roll(cos_t, 1, axis=0)
            + np.roll(cos_t, -1, axis=1)
            + np.roll(cos_t, 1, axis=1)
        )
        nb_s_nn = (
            np.roll(sin_t, -1, axis=0)
            + np.roll(sin_t, 1, axis=0)
            + np.roll(sin_t, -1, axis=1)
            + np.roll(sin_t, 1, axis=1)
        )
        sl = (slice(cx, None, 2), slice(cy, None, 2))
        old = theta[sl]
        co, so = cos_t[sl], sin_t[sl]
        new = model.wrap_angle(old + deltas[sl])
        cn, sn = np.cos(new), np.sin(new)
        d_e = j_diag * ((cn - co) * nb_c_diag[sl] + (sn - so) * nb_s_diag[sl]) + j_nn * (
            (cn - co) * nb_c_nn[sl] + (sn - so) * nb_s_nn[sl]
        )
        acc = us[sl] < np.exp(np.minimum(-params.beta * d_e, 0.0))
        theta[sl] = np.where(acc, new, old)
        cos_t[sl] = np.where(acc, cn, co)
        sin_t[sl] = np.where(acc, sn, so)
        accepted += int(np.count_nonzero(acc))
        delta_sum += float(np.sum(d_e[acc]))
    return accepted, delta_sum


def sweep(config, params, width, rng):
    """One Metropolis pass in the fixed color-major site order.

    Args:
      config: (L, L) float64 angle array, updated in place.
      params: CouplingParams (beta may be 0, in which case every
        proposal is accepted).
      width: proposal half-width in (0, pi].
      rng: numpy Generator; one full sweep consumes exactly two (L, L)
        uniform draws in a fixed layout.

    Returns:
      (config, accepted_count).
    """
    if not 0.0 < width <= math.pi:
        raise ValueError(f"proposal width must lie in (0, pi], got {width}")
    config = model._as_config(config)
    accepted, _ = _sweep(config, params, width, rng)
    return config, accepted


def _validate_init(init):
    if not isinstance(init, dict) or "kind" not in init:
        raise ValueError("init must be an object with a 'kind' key")
    kind = init["kind"]
    if kind == "neel":
        want = {"kind", "theta_star_deg", "phi_star_deg"}
    elif kind == "random":
        want = {"kind"}
    elif kind == "snapshot":
        want = {"kind", "path"}
    else:
        raise ValueError(f"init kind must be one of {INIT_KINDS}, got {kind!r}")
    if set(init) != want:
        raise ValueError(f"init keys for kind {kind!r} must be exactly {sorted(want)}")
    if kind == "neel":
        for key in ("theta_star_deg", "phi_star_deg"):
            if not isinstance(init[key], (int, float)) or isinstance(init[key], bool):
                raise ValueError(f"init.{key} must be a number")
    if kind == "snapshot" and not isinstance(init["path"], str):
        raise ValueError("init.path must be a string")


def _require_int(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return value


@dataclass(frozen=True)
class RunPlan:
    """Everything needed to reproduce one chain, mirroring the JSON plan."""

    L: int
    J: float
    gamma: float
    betaJ: float
    init: dict
    sweeps_burnin: int
    sweeps_measure: int
    measure_every: int
    proposal_width: float
    adapt: bool
    seed: int
    snapshot_every: int = None
    out_prefix: str = None

    def __post_init__(self):
        model.check_lattice(self.L)
        if self.J <= 0:
            raise ValueError("J must be positive")
        if self.betaJ < 0:
            raise ValueError("betaJ must be nonnegative")
        _validate_init(self.init)
        _require_int(self.sweeps_burnin, "sweeps_burnin")
        _require_int(self.sweeps_measure, "sweeps_measure")
        _require_int(self.measure_every, "measure_every", minimum=1)
        if not 0.0 < self.proposal_width <= math.pi:
            raise ValueError("proposal_width must lie in (0, pi]")
        if not isinstance(self.adapt, bool):
            raise ValueError("adapt must be a boolean")
        _require_int(self.seed, "seed")
        if self.seed >= 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.snapshot_every is not None:
            _require_int(self.snapshot_every, "snapshot_every", minimum=1)
            if self.out_prefix is None:
                raise ValueError("snapshot_every requires out_prefix")
        if self.out_prefix is not None and not isinstance(self.out_prefix, str):
            raise ValueError("out_prefix must be a string")

    @property
    def params(self):
        return model.CouplingParams(J=self.J, gamma=self.gamma, beta=self.betaJ / self.J)

    def to_dict(self):
        return {key: getattr(self, key) for key in PLAN_KEYS}


def plan_from_dict(data):
    """Build a RunPlan from a parsed JSON object; key set must match exactly."""
    if not isinstance(data, dict):
        raise ValueError("plan must be a JSON object")
    unknown = sorted(set(data) - set(PLAN_KEYS))
    if unknown:
        raise ValueError(f"unknown plan keys: {unknown}")
    missing = sorted(set(PLAN_KEYS) - set(data))
    if missing:
        raise ValueError(f"missing plan keys: {missing}")
    return RunPlan(**{key: data[key] for key in PLAN_KEYS})


def load_plan(path):
    """Read and validate a JSON run plan."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: not valid JSON: {err}") from err
    return plan_from_dict(data)


def _initial_config(plan):
    kind = plan.init["kind"]
    if kind == "neel":
        frame = model.ReferenceFrame(
            math.radians(plan.init["theta_star_deg"]),
            math.radians(plan.init["phi_star_deg"]),
        )
        return model.neel_state(plan.L, frame)
    if kind == "random":
        rng = sweep_rng(plan.seed, 0)
        return model.wrap_angle(rng.uniform(-math.pi, math.pi, size=(plan.L, plan.L)))
    config = model.load_snapshot(plan.init["path"])
    if config.shape[0] != plan.L:
        raise ValueError(
            f"snapshot side {config.shape[0]} does not match plan L={plan.L}"
        )
    return config


@dataclass(frozen=True)
class FrameEstimate:
    """Circular-mean frame fit with per-sublattice resultant lengths."""

    frame: model.ReferenceFrame
    resultant_even: float
    resultant_odd: float
    degenerate: bool


def estimate_frame(config):
    """Estimate (theta*, phi*) from parity-class circular means.

    theta* is the circular mean over the (even, even) class; phi* is the
    circular mean over (odd, even) minus theta*.  When either resultant
    length falls below 0.2 the estimate is flagged degenerate.

    Args:
      config: (L, L) angle array.

    Returns:
      FrameEstimate with a canonicalized frame.
    """
    theta = model._as_config(config)
    z_even = complex(np.exp(1j * theta[0::2, 0::2]).mean())
    z_odd = complex(np.exp(1j * theta[1::2, 0::2]).mean())
    r_even, r_odd = abs(z_even), abs(z_odd)
    theta_star = math.atan2(z_even.imag, z_even.real)
    phi_star = math.atan2(z_odd.imag, z_odd.real) - theta_star
    frame = model.ReferenceFrame(theta_star, phi_star).canonical()
    return FrameEstimate(frame, r_even, r_odd, min(r_even, r_odd) < 0.2)


@dataclass(frozen=True)
class TimeSeries:
    """Measurement rows plus run metadata.

    sweeps are global indices (burn-in included) and strictly increase;
    acc_rates are per-measurement-interval acceptance fractions.
    """

    plan: RunPlan
    sweeps: tuple
    records: tuple
    acc_rates: tuple
    final_acc_rate: float
    final_width: float
    final_config: np.ndarray
    snapshot_paths: tuple


def _resync_energy(theta, params, accumulated):
    recomputed = model.energy(theta, params)
    if abs(accumulated - recomputed) > _DRIFT_TOL:
        raise RuntimeError(
            "energy accumulator drifted: "
            f"{accumulated!r} vs recomputed {recomputed!r}"
        )
    return recomputed


def run(plan):
    """Execute a RunPlan: burn-in, then measured sweeps.

    Burn-in optionally adapts the proposal width every 100 sweeps toward
    acceptance 0.4-0.6; the width is frozen for the measurement phase.
    Observables are recorded every measure_every measurement sweeps, and
    snapshots written every snapshot_every when requested.

    Args:
      plan: RunPlan.

    Returns:
      TimeSeries.
    """
    theta = _initial_config(plan)
    params = plan.params
    width = plan.proposal_width
    n_sites = plan.L * plan.L
    energy = model.energy(theta, params)
    global_sweep = 0

    window_accepted = 0
    for t in range(1, plan.sweeps_burnin + 1):
        global_sweep += 1
        accepted, delta = _sweep(theta, params, width, sweep_rng(plan.seed, global_sweep))
        energy += delta
        window_accepted += accepted
        if plan.adapt and t % _ADAPT_INTERVAL == 0:
            rate = window_accepted / (_ADAPT_INTERVAL * n_sites)
            if rate < 0.4:
                width = max(0.8 * width, _MIN_WIDTH)
            elif rate > 0.6:
                width = min(1.25 * width, math.pi)
            window_accepted = 0
        if global_sweep % _RESYNC_INTERVAL == 0:
            energy = _resync_energy(theta, params, energy)

    sweeps, records, rates, snapshots = [], [], [], []
    total_accepted = 0
    interval_accepted = 0
    for t in range(1, plan.sweeps_measure + 1):
        global_sweep += 1
        accepted, delta = _sweep(theta, params, width, sweep_rng(plan.seed, global_sweep))
        energy += delta
        total_accepted += accepted
        interval_accepted += accepted
        if global_sweep % _RESYNC_INTERVAL == 0:
            energy = _resync_energy(theta, params, energy)
        if t % plan.measure_every == 0:
            est = estimate_frame(theta)
            record = model.measure(theta, params)
            if est.degenerate:
                record = replace(record, theta_star_est=math.nan, phi_star_est=math.nan)
            else:
                record = replace(
                    record,
                    theta_star_est=est.frame.theta_star,
                    phi_star_est=est.frame.phi_star,
                )
            sweeps.append(global_sweep)
            records.append(record)
            rates.append(interval_accepted / (plan.measure_every * n_sites))
            interval_accepted = 0
        if plan.snapshot_every is not None and t % plan.snapshot_every == 0:
            path = f"{plan.out_prefix}_snap_{global_sweep:08d}.bin"
            try:
                model.save_snapshot(path, theta)
            except OSError as err:
                raise RuntimeError(
                    f"snapshot write failed at sweep {global_sweep}: {err}"
                ) from err
            snapshots.append(path)

    final_rate = (
        total_accepted / (plan.sweeps_measure * n_sites) if plan.sweeps_measure else 0.0
    )
    return TimeSeries(
        plan=plan,
        sweeps=tuple(sweeps),
        records=tuple(records),
        acc_rates=tuple(rates),
        final_acc_rate=final_rate,
        final_width=width,
        final_config=theta,
        snapshot_paths=tuple(snapshots),
    )


def write_series_csv(path, series):
    """Write the measurement rows as CSV (%.17g floats, NaN spelled nan)."""
    lines = [SERIES_HEADER]
    for sweep_index, record, rate in zip(series.sweeps, series.records, series.acc_rates):
        lines.append(
            "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g"
            % (
                sweep_index,
                record.energy_per_site,
                record.nn_x,
                record.nn_y,
                record.nnn,
                record.order_param_mean,
                record.theta_star_est,
                record.phi_star_est,
                rate,
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
