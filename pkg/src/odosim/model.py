"""Lattice geometry, Hamiltonian, ground states, and observables.

Spins are angles theta_r on an L x L torus (L a multiple of 4), stored as an
(L, L) float64 array indexed [x, y] with periodic wraparound on both axes.
The energy of a configuration is

    H(theta) = J * sum_r [ 2 + cos(theta_r - theta_{r+ex+ey})
                             + cos(theta_r - theta_{r+ex-ey}) ]
             + J*gamma * sum_r [ cos(theta_r - theta_{r+ex})
                               + cos(theta_r - theta_{r+ey}) ]

with J > 0.  The "+2" per site is chosen so that every Neel pair state has
energy exactly zero; dropping it shifts all energies by 2*J*L**2.

A Neel pair state is labeled by a frame (theta*, phi*): the even sublattice
(x+y even) alternates between theta* and theta*+pi in checkerboard fashion,
the odd sublattice between theta*+phi* and theta*+phi*+pi.  Concretely the
site offset is

    offset(x, y) = theta* + phi* * ((x+y) mod 2) + pi * (y mod 2)

and deviation variables are defined by theta_r = offset(r) + dev_r.  Both
diagonal neighbors of any site sit on the opposite checkerboard of the same
sublattice, so diagonal bonds are exactly antialigned in any frame; the two
nearest-neighbor bonds at a site cancel pairwise, which is why the energy is
independent of both frame angles.

All angles are kept in the canonical range (-pi, pi].  Energy sums use
math.fsum over a fixed row-major traversal, so repeated evaluations are
bitwise identical.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

MAGIC = b"ODO1"


def wrap_angle(theta):
    """Reduce angles to the canonical range (-pi, pi].

    Works elementwise on scalars or arrays; pi maps to pi, -pi maps to pi.
    """
    return math.pi - np.mod(math.pi - np.asarray(theta), TWO_PI)


@dataclass(frozen=True)
class CouplingParams:
    """Model couplings and inverse temperature.

    Attributes:
        J: diagonal (next-nearest neighbor) coupling, > 0.
        gamma: nearest-neighbor to diagonal coupling ratio.  Raw energy
            evaluation accepts any real gamma; spin-wave operations require
            0 < gamma < 2.
        beta: inverse temperature, >= 0.
    """

    J: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"J must be positive, got {self.J}")
        if self.beta < 0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")


@dataclass(frozen=True)
class ReferenceFrame:
    """Ground-state label: global angle theta* and relative angle phi*."""

    theta_star: float = 0.0
    phi_star: float = 0.0

    def canonical(self):
        return ReferenceFrame(
            float(wrap_angle(self.theta_star)), float(wrap_angle(self.phi_star))
        )


@dataclass
class ObservableRecord:
    """Per-configuration measurements.

    nn_x, nn_y, nnn are bond-averaged dot products S_r . S_r' for r' one
    step in x, one step in y, and the two diagonals pooled together.
    order_param_mean is the lattice mean of
    n_r = (S_{r+ex} - S_{r+ey}) . S_r, which is +2 in the phi*=0 ground
    state, -2 at phi*=180 degrees, and 0 at phi*=90 degrees.
    """

    energy_per_site: float
    nn_x: float
    nn_y: float
    nnn: float
    order_param_mean: float
    theta_star_est: float = field(default=math.nan)
    phi_star_est: float = field(default=math.nan)


def check_lattice(L):
    """Validate a torus side length (positive multiple of 4)."""
    if L <= 0 or L % 4 != 0:
        raise ValueError(f"torus side must be a positive multiple of 4, got {L}")
    return L


def _as_config(theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise ValueError(f"configuration must be a square (L, L) array, got {theta.shape}")
    check_lattice(theta.shape[0])
    return theta


def frame_offsets(L, frame):
    """Return the (L, L) array of per-site frame offset angles, canonical."""
    check_lattice(L)
    x = np.arange(L)[:, None]
    y = np.arange(L)[None, :]
    off = frame.theta_star + frame.phi_star * ((x + y) % 2) + math.pi * (y % 2)
    return wrap_angle(off)


def neel_state(L, frame=ReferenceFrame()):
    """Construct the Neel pair ground state for the given frame.

    Args:
        L: torus side, multiple of 4.
        frame: ReferenceFrame(theta*, phi*).

    Returns:
        (L, L) angle array in canonical range; energy(...) of the result is
        zero for any couplings.
    """
    return frame_offsets(L, frame)


def deviations(theta, frame):
    """Deviation field dev_r = theta_r - offset_r, wrapped to (-pi, pi]."""
    theta = _as_config(theta)
    return wrap_angle(theta - frame_offsets(theta.shape[0], frame))


def compose(frame, dev):
    """Inverse of deviations: rebuild the configuration offset_r + dev_r."""
    dev = _as_config(dev)
    return wrap_angle(dev + frame_offsets(dev.shape[0], frame))


def rotate_all(theta, alpha):
    """Rotate every spin by alpha (a global O(2) symmetry of the energy)."""
    return wrap_angle(_as_config(theta) + alpha)


def _bond_differences(theta):
    """Angle differences to the +ex+ey, +ex-ey, +ex, +ey neighbors."""
    d1 = theta - np.roll(theta, (-1, -1), axis=(0, 1))
    d2 = theta - np.roll(theta, (-1, 1), axis=(0, 1))
    dx = theta - np.roll(theta, -1, axis=0)
    dy = theta - np.roll(theta, -1, axis=1)
    return d1, d2, dx, dy


def energy(theta, params):
    """Total energy H(theta), extensive, in the units of J.

    Each bond is counted once (every site owns its +ex+ey, +ex-ey, +ex, +ey
    bonds).  The per-site contributions are accumulated with math.fsum in
    row-major order, so the result is exactly rounded and reproducible.
    """
    theta = _as_config(theta)
    d1, d2, dx, dy = _bond_differences(theta)
    per_site = params.J * (2.0 + np.cos(d1) + np.cos(d2)) + (
        params.J * params.gamma
    ) * (np.cos(dx) + np.cos(dy))
    return math.fsum(per_site.ravel(order="C"))


def energy_delta(theta, site, new_angle, params):
    """Energy change from replacing the spin at `site` with `new_angle`.

    Computed from the 8 incident bonds only; the per-site constants cancel.
    """
    theta = _as_config(theta)
    L = theta.shape[0]
    x, y = site
    old = theta[x % L, y % L]
    terms = []
    for dx_, dy_, coupling in (
        (1, 1, params.J),
        (1, -1, params.J),
        (-1, 1, params.J),
        (-1, -1, params.J),
        (1, 0, params.J * params.gamma),
        (-1, 0, params.J * params.gamma),
        (0, 1, params.J * params.gamma),
        (0, -1, params.J * params.gamma),
    ):
        nb = theta[(x + dx_) % L, (y + dy_) % L]
        terms.append(coupling * (math.cos(new_angle - nb) - math.cos(old - nb)))
    return math.fsum(terms)


def gradient(theta, params):
    """Gradient dH/dtheta_r as an (L, L) array.

    Every Neel pair state is a critical point: the diagonal terms vanish
    because sin(pi) = 0 and the two nearest-neighbor terms cancel pairwise.
    """
    theta = _as_config(theta)
    g = np.zeros_like(theta)
    for shift, coupling in (
        ((-1, -1), params.J),
        ((-1, 1), params.J),
        ((1, -1), params.J),
        ((1, 1), params.J),
    ):
        g -= coupling * np.sin(theta - np.roll(theta, shift, axis=(0, 1)))
    for axis in (0, 1):
        for step in (-1, 1):
            g -= (params.J * params.gamma) * np.sin(
                theta - np.roll(theta, step, axis=axis)
            )
    return g


def order_parameter_field(theta):
    """Per-site order parameter n_r = (S_{r+ex} - S_{r+ey}) . S_r and its mean.

    Returns:
        (field, mean): (L, L) array with entries in [-2, 2] and its lattice
        average.  The sign convention makes the phi*=0 (x-aligned) state
        positive.
    """
    theta = _as_config(theta)
    n = np.cos(np.roll(theta, -1, axis=0) - theta) - np.cos(
        np.roll(theta, -1, axis=1) - theta
    )
    return n, float(np.mean(n))


def pair_correlations(theta):
    """Bond-averaged dot products (nn_x, nn_y, nnn).

    nnn pools both diagonal directions; all three lie in [-1, 1].
    """
    theta = _as_config(theta)
    d1, d2, dx, dy = _bond_differences(theta)
    nn_x = float(np.mean(np.cos(dx)))
    nn_y = float(np.mean(np.cos(dy)))
    nnn = float(0.5 * (np.mean(np.cos(d1)) + np.mean(np.cos(d2))))
    return nn_x, nn_y, nnn


def measure(theta, params):
    """Full ObservableRecord for a configuration (frame estimates left NaN)."""
    theta = _as_config(theta)
    L = theta.shape[0]
    nn_x, nn_y, nnn = pair_correlations(theta)
    _, n_mean = order_parameter_field(theta)
    return ObservableRecord(
        energy_per_site=energy(theta, params) / (L * L),
        nn_x=nn_x,
        nn_y=nn_y,
        nnn=nnn,
        order_param_mean=n_mean,
    )


def save_config_csv(path, theta):
    """Write a configuration as CSV with columns x, y, theta (row-major)."""
    theta = _as_config(theta)
    L = theta.shape[0]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("x,y,theta\n")
        for x in range(L):
            for y in range(L):
                fh.write(f"{x},{y},{theta[x, y]:.17g}\n")


def load_config_csv(path):
    """Read a configuration written by save_config_csv."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "x,y,theta":
            raise ValueError(f"{path}: expected header 'x,y,theta', got {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    n = len(rows)
    L = int(round(math.sqrt(n)))
    if L * L != n:
        raise ValueError(f"{path}: {n} rows do not form a square lattice")
    check_lattice(L)
    theta = np.empty((L, L))
    for sx, sy, sth in rows:
        theta[int(sx), int(sy)] = float(sth)
    return wrap_angle(theta)


def save_snapshot(path, theta):
    """Write the compact binary snapshot: b"ODO1", uint32 L, L*L float64.

    All fields little-endian; angles row-major in [x, y] order.
    """
    theta = _as_config(theta)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", theta.shape[0]))
        fh.write(np.ascontiguousarray(theta, dtype="<f8").tobytes())


def load_snapshot(path):
    """Read a binary snapshot written by save_snapshot."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (L,) = struct.unpack("<I", fh.read(4))
        check_lattice(L)
        payload = fh.read(8 * L * L)
        if len(payload) != 8 * L * L:
            raise ValueError(f"{path}: truncated snapshot (L={L})")
        theta = np.frombuffer(payload, dtype="<f8").reshape(L, L)
    return wrap_angle(theta.astype(np.float64))
