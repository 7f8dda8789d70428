import math

import numpy as np
import pytest

from odosim import model
from odosim.model import CouplingParams, ReferenceFrame


# ---------------------------------------------------------------------------
# Independent oracles: naive double-loop bond enumeration, written before the
# implementation and kept deliberately dumb.

def _oracle_energy(theta, J, gamma):
    L = theta.shape[0]
    total = 0.0
    for x in range(L):
        for y in range(L):
            t = theta[x, y]
            total += J * (
                2.0
                + math.cos(t - theta[(x + 1) % L, (y + 1) % L])
                + math.cos(t - theta[(x + 1) % L, (y - 1) % L])
            )
            total += J * gamma * (
                math.cos(t - theta[(x + 1) % L, y])
                + math.cos(t - theta[x, (y + 1) % L])
            )
    return total


def _oracle_correlations(theta):
    L = theta.shape[0]
    sx = sy = sd = 0.0
    for x in range(L):
        for y in range(L):
            t = theta[x, y]
            sx += math.cos(theta[(x + 1) % L, y] - t)
            sy += math.cos(theta[x, (y + 1) % L] - t)
            sd += math.cos(theta[(x + 1) % L, (y + 1) % L] - t)
            sd += math.cos(theta[(x + 1) % L, (y - 1) % L] - t)
    n = L * L
    return sx / n, sy / n, sd / (2 * n)


def _random_config(rng, L):
    return model.wrap_angle(rng.uniform(-math.pi, math.pi, size=(L, L)))


# ---------------------------------------------------------------------------
# wrap_angle and validation

def test_wrap_angle_canonical_range():
    vals = np.array([-math.pi, math.pi, 0.0, 3 * math.pi, -3 * math.pi, 7.0, -7.0])
    w = model.wrap_angle(vals)
    assert np.all(w > -math.pi) and np.all(w <= math.pi)
    assert w[0] == math.pi and w[1] == math.pi
    assert np.allclose(model.wrap_angle(w), w, atol=0)


def test_check_lattice_rejects_bad_sides():
    for L in (0, -4, 2, 6, 9):
        with pytest.raises(ValueError):
            model.check_lattice(L)
    assert model.check_lattice(8) == 8


def test_coupling_params_validation():
    with pytest.raises(ValueError):
        CouplingParams(J=0.0)
    with pytest.raises(ValueError):
        CouplingParams(beta=-1.0)


# ---------------------------------------------------------------------------
# Ground states and energy

def test_neel_energy_zero_over_frame_grid():
    L = 8
    params = CouplingParams(J=1.0, gamma=1.0, beta=1.0)
    for theta_star in np.linspace(-math.pi, math.pi, 8, endpoint=False):
        for phi_star in (0.0, 0.5, math.pi / 2, 2.5):
            st = model.neel_state(L, ReferenceFrame(theta_star, phi_star))
            assert abs(model.energy(st, params)) <= 1e-10 * L * L


def test_uniform_config_energy():
    theta = np.zeros((4, 4))
    e = model.energy(theta, CouplingParams(J=1.0, gamma=1.0, beta=1.0))
    assert abs(e - 96.0) < 1e-12


def test_energy_matches_bond_oracle():
    rng = np.random.default_rng(7)
    for gamma in (0.7, 1.0, -0.3):
        theta = _random_config(rng, 4)
        got = model.energy(theta, CouplingParams(J=1.0, gamma=gamma, beta=1.0))
        assert abs(got - _oracle_energy(theta, 1.0, gamma)) < 1e-10


def test_energy_rotation_invariance():
    rng = np.random.default_rng(11)
    L = 8
    params = CouplingParams(J=1.3, gamma=0.8, beta=1.0)
    theta = _random_config(rng, L)
    e0 = model.energy(theta, params)
    for alpha in (0.3, -2.0, math.pi):
        e1 = model.energy(model.rotate_all(theta, alpha), params)
        assert abs(e1 - e0) <= 1e-10 * L * L


def test_energy_delta_identity():
    rng = np.random.default_rng(3)
    theta = _random_config(rng, 4)
    params = CouplingParams()
    assert model.energy_delta(theta, (2, 3), theta[2, 3], params) == 0.0


def test_energy_delta_uniform_flip():
    theta = np.zeros((4, 4))
    params = CouplingParams(J=1.0, gamma=0.0, beta=1.0)
    d = model.energy_delta(theta, (1, 2), math.pi, params)
    assert abs(d - (-8.0)) < 1e-12


def test_energy_delta_matches_full_recompute():
    rng = np.random.default_rng(19)
    params = CouplingParams(J=1.0, gamma=0.7, beta=1.0)
    L = 4
    theta = _random_config(rng, L)
    e = model.energy(theta, params)
    for _ in range(10_000):
        x, y = rng.integers(0, L, size=2)
        new = rng.uniform(-math.pi, math.pi)
        d = model.energy_delta(theta, (x, y), new, params)
        theta2 = theta.copy()
        theta2[x, y] = new
        e2 = model.energy(theta2, params)
        assert abs((e2 - e) - d) < 1e-10
        theta, e = theta2, e2


def test_neel_state_sublattice_angles():
    # theta*=30deg, phi*=80deg: even sublattice in {30, 210}, odd in {110, 290}
    L = 8
    st = model.neel_state(L, ReferenceFrame(math.radians(30), math.radians(80)))
    x = np.arange(L)[:, None]
    y = np.arange(L)[None, :]
    even = (x + y) % 2 == 0
    even_vals = np.sort(np.unique(np.round(np.degrees(st[even]), 9)))
    odd_vals = np.sort(np.unique(np.round(np.degrees(st[~even]), 9)))
    assert np.allclose(even_vals, [-150.0, 30.0])  # -150 is 210 wrapped
    assert np.allclose(odd_vals, [-70.0, 110.0])   # -70 is 290 wrapped


def test_neel_state_axis_alignment():
    st = model.neel_state(8, ReferenceFrame(0.0, 0.0))
    dx = model.wrap_angle(np.roll(st, -1, axis=0) - st)
    dy = model.wrap_angle(np.roll(st, -1, axis=1) - st)
    assert np.allclose(dx, 0.0, atol=1e-12)
    assert np.allclose(np.abs(dy), math.pi, atol=1e-12)


def test_deviations_of_own_frame_vanish():
    f = ReferenceFrame(1.1, -0.4)
    st = model.neel_state(8, f)
    assert np.allclose(model.deviations(st, f), 0.0, atol=1e-12)


def test_deviation_roundtrip():
    rng = np.random.default_rng(5)
    f = ReferenceFrame(0.3, 2.1)
    dev = rng.uniform(-3.0, 3.0, size=(8, 8))
    back = model.deviations(model.compose(f, dev), f)
    assert np.max(np.abs(model.wrap_angle(back - dev))) < 1e-12


def test_deviations_hand_case():
    # Config built at phi*=80deg, extracted in a phi*=90deg frame: the even
    # sublattice is untouched, the odd sublattice reads -10 degrees.
    st = model.neel_state(8, ReferenceFrame(0.0, math.radians(80)))
    dev = model.deviations(st, ReferenceFrame(0.0, math.radians(90)))
    x = np.arange(8)[:, None]
    y = np.arange(8)[None, :]
    even = (x + y) % 2 == 0
    assert np.allclose(dev[even], 0.0, atol=1e-12)
    assert np.allclose(np.degrees(dev[~even]), -10.0, atol=1e-9)


# ---------------------------------------------------------------------------
# Observables

def test_order_parameter_ground_states():
    for phi_deg, expect in ((0.0, 2.0), (180.0, -2.0), (90.0, 0.0)):
        st = model.neel_state(8, ReferenceFrame(0.7, math.radians(phi_deg)))
        field, mean = model.order_parameter_field(st)
        assert np.allclose(field, expect, atol=1e-12)
        assert abs(mean - expect) < 1e-12


def test_order_parameter_sign_odd_in_cos_phi():
    vals = []
    for phi_deg in (0.0, 90.0, 180.0):
        st = model.neel_state(8, ReferenceFrame(0.0, math.radians(phi_deg)))
        vals.append(model.order_parameter_field(st)[1])
    assert np.allclose(vals, [2.0, 0.0, -2.0], atol=1e-12)


def test_lattice_rotation_swaps_alignment():
    # Rotating the lattice by 90 degrees maps the phi*=0 state onto a
    # phi*=180 state and negates the order parameter.
    L = 8
    st = model.neel_state(L, ReferenceFrame(0.0, 0.0))
    xs = np.arange(L)
    rot = st[xs[None, :], (-xs[:, None]) % L]  # theta'(x, y) = theta(y, -x)
    target = model.neel_state(L, ReferenceFrame(0.0, math.pi))
    assert np.allclose(model.wrap_angle(rot - target), 0.0, atol=1e-12)
    assert abs(model.order_parameter_field(rot)[1] + 2.0) < 1e-12


def test_pair_correlations_neel():
    st = model.neel_state(8, ReferenceFrame(0.4, 0.0))
    nn_x, nn_y, nnn = model.pair_correlations(st)
    assert abs(nn_x - 1.0) < 1e-12
    assert abs(nn_y + 1.0) < 1e-12
    assert abs(nnn + 1.0) < 1e-12
    st90 = model.neel_state(8, ReferenceFrame(0.0, math.pi / 2))
    assert abs(model.pair_correlations(st90)[2] + 1.0) < 1e-12


def test_pair_correlations_match_oracle():
    rng = np.random.default_rng(23)
    theta = _random_config(rng, 4)
    got = model.pair_correlations(theta)
    want = _oracle_correlations(theta)
    for g, w in zip(got, want):
        assert abs(g - w) < 1e-12


def test_measure_record_fields():
    st = model.neel_state(8, ReferenceFrame(0.0, 0.0))
    rec = model.measure(st, CouplingParams(J=2.0, gamma=1.0, beta=1.0))
    assert abs(rec.energy_per_site) < 1e-12
    assert abs(rec.order_param_mean - 2.0) < 1e-12
    assert abs(rec.nn_x - 1.0) < 1e-12 and abs(rec.nnn + 1.0) < 1e-12
    assert math.isnan(rec.theta_star_est)


# ---------------------------------------------------------------------------
# Gradient

def test_gradient_zero_at_neel_states():
    params = CouplingParams(J=1.0, gamma=1.0, beta=1.0)
    for phi in (0.0, 0.7, math.pi / 2, math.pi):
        st = model.neel_state(8, ReferenceFrame(0.2, phi))
        assert np.max(np.abs(model.gradient(st, params))) < 1e-8


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(31)
    params = CouplingParams(J=1.0, gamma=0.9, beta=1.0)
    theta = _random_config(rng, 4)
    g = model.gradient(theta, params)
    h = 1e-6
    for _ in range(20):
        x, y = rng.integers(0, 4, size=2)
        tp = theta.copy()
        tp[x, y] += h
        tm = theta.copy()
        tm[x, y] -= h
        fd = (model.energy(tp, params) - model.energy(tm, params)) / (2 * h)
        assert abs(fd - g[x, y]) < 1e-6


# ---------------------------------------------------------------------------
# Serialization

def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(41)
    theta = _random_config(rng, 4)
    path = tmp_path / "cfg.csv"
    model.save_config_csv(path, theta)
    back = model.load_config_csv(path)
    assert np.array_equal(back, theta)


def test_snapshot_roundtrip(tmp_path):
    rng = np.random.default_rng(43)
    theta = _random_config(rng, 8)
    path = tmp_path / "cfg.bin"
    model.save_snapshot(path, theta)
    back = model.load_snapshot(path)
    assert np.array_equal(back, theta)


def test_snapshot_rejects_corruption(tmp_path):
    theta = model.neel_state(4, ReferenceFrame())
    good = tmp_path / "good.bin"
    model.save_snapshot(good, theta)
    raw = good.read_bytes()
    bad_magic = tmp_path / "bad_magic.bin"
    bad_magic.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ValueError):
        model.load_snapshot(bad_magic)
    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        model.load_snapshot(truncated)


def test_energy_bitwise_reproducible():
    rng = np.random.default_rng(47)
    theta = _random_config(rng, 8)
    params = CouplingParams(J=1.0, gamma=1.0, beta=1.0)
    assert model.energy(theta, params) == model.energy(theta.copy(), params)
