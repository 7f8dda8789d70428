"""Report figures rendered to files next to the delimited outputs.

Every function takes a result object from one of the computation modules
plus a target path, draws with the Agg backend, and returns the path.
The PNG metadata is pinned so identical inputs give identical bytes.
"""

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import blocks

_META = {"Software": "odo"}
_DPI = 130


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_META)
    plt.close(fig)
    return path


def scan_figure(scan, path):
    """Free energy over the phi* grid with the argmin set marked."""
    degs = [row.phi_deg for row in scan.rows]
    vals = [row.F for row in scan.rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(degs, vals, lw=1.2, color="tab:blue")
    ax.plot(
        [row.phi_deg for row in scan.rows if row.is_argmin],
        [row.F for row in scan.rows if row.is_argmin],
        "o",
        ms=5,
        color="tab:red",
        label="argmin",
    )
    ax.set_xlabel("phi* (degrees)")
    ax.set_ylabel("F(phi*)")
    ax.set_title(
        f"spin-wave free energy, gamma={scan.rows[0].gamma:g},"
        f" lambda={scan.rows[0].lam:g}"
    )
    ax.grid(alpha=0.3)
    ax.legend()
    return _save(fig, path)


def series_figure(series, path):
    """Order-parameter and energy traces of one Monte Carlo run."""
    sweeps = list(series.sweeps)
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.4, 5.2), sharex=True)
    top.plot(sweeps, [r.order_param_mean for r in series.records], lw=0.7, color="tab:blue")
    top.axhline(0.0, color="black", lw=0.6)
    top.set_ylabel("mean order parameter")
    top.grid(alpha=0.3)
    bottom.plot(sweeps, [r.energy_per_site for r in series.records], lw=0.7, color="tab:orange")
    bottom.set_ylabel("energy per site")
    bottom.set_xlabel("sweep")
    bottom.grid(alpha=0.3)
    plan = series.plan
    top.set_title(
        f"L={plan.L}, betaJ={plan.betaJ:g}, gamma={plan.gamma:g}, seed={plan.seed}"
    )
    return _save(fig, path)


def block_figure(fld, path):
    """Label grid of one block field."""
    order = list(blocks.LABELS)
    T = len(fld.labels)
    grid = np.array(
        [[order.index(fld.labels[t1][t2].kind) for t2 in range(T)] for t1 in range(T)]
    )
    colors = ["tab:blue", "tab:red", "black", "tab:gray"]
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    image = ax.imshow(
        grid.T,
        origin="lower",
        cmap=matplotlib.colors.ListedColormap(colors),
        vmin=-0.5,
        vmax=len(order) - 0.5,
        interpolation="nearest",
    )
    bar = fig.colorbar(image, ax=ax, ticks=range(len(order)))
    bar.ax.set_yticklabels(order)
    ax.set_xlabel("t1")
    ax.set_ylabel("t2")
    counts = ", ".join(f"{lab}={fld.counts[lab]}" for lab in order if fld.counts[lab])
    ax.set_title(f"block labels (B={fld.criteria.B}): {counts}")
    return _save(fig, path)


def chessboard_figure(reports, path):
    """Exact probability against the disseminated bound, one bar pair each."""
    idx = np.arange(len(reports))
    lhs = [rep.lhs for rep in reports]
    rhs = [rep.rhs for rep in reports]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.bar(idx - 0.2, lhs, width=0.4, label="P(intersection)", color="tab:blue")
    ax.bar(idx + 0.2, rhs, width=0.4, label="product bound", color="tab:orange")
    ax.set_yscale("log")
    ax.set_xticks(idx)
    ax.set_xticklabels(
        [f"{rep.beta_J:g}:{len(rep.placements)}x{rep.placements[0][1]}" for rep in reports],
        rotation=60,
        ha="right",
        fontsize=7,
    )
    ax.set_ylabel("probability")
    rep = reports[0]
    ax.set_title(f"chessboard estimates, q={rep.q}, L={rep.L}, B={rep.B}")
    ax.legend()
    ax.grid(alpha=0.3, axis="y")
    return _save(fig, path)


def gaussian_figure(report, path):
    """Bracket and reweighted estimate of the box-constrained weight."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.axhspan(report.lower_bound, report.upper_bound, color="tab:blue", alpha=0.2, label="bracket")
    ax.axhline(report.log_q_massive, color="tab:gray", lw=1.0, ls="--", label="massive weight")
    ax.errorbar(
        [0.0],
        [report.log_q_box],
        yerr=[2.0 * report.log_q_box_stderr],
        fmt="o",
        color="tab:red",
        capsize=4,
        label="box estimate (2 se)",
    )
    ax.set_xlim(-1.0, 1.0)
    ax.set_xticks([])
    ax.set_ylabel("per-site log weight")
    ax.set_title(
        f"L={report.L}, betaJ={report.beta_J:g}, Delta={report.delta:.4g},"
        f" lambda={report.lam:g}"
    )
    ax.legend(fontsize=8)
    return _save(fig, path)


def harmonic_figure(scans, path):
    """Worst harmonic-approximation error against the cubic reference."""
    deltas = [scan.delta for scan in scans]
    sups = [scan.sup_abs for scan in scans]
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.loglog(deltas, sups, "o-", color="tab:blue", label="sup error")
    guide = [sups[0] * (d / deltas[0]) ** 3 for d in deltas]
    ax.loglog(deltas, guide, "--", color="tab:gray", label="Delta^3 reference")
    ax.set_xlabel("Delta")
    ax.set_ylabel("sup |beta H - quadratic|")
    ax.set_title(f"harmonic error, L={scans[0].L}, n={scans[0].n_samples} per point")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    return _save(fig, path)
