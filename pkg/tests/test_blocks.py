import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from odosim import blocks, model
from odosim.blocks import ArcSet, BlockCriteria

TWO_PI = 2.0 * math.pi


def _criteria(B=2, delta=0.1, kappa=0.2):
    return BlockCriteria(B=B, Delta=delta, kappa=kappa, s=math.ceil(4 * math.pi / delta) + 1)


def _close(a, b, tol=1e-12):
    pa, pb = a.pieces, b.pieces
    if len(pa) != len(pb):
        return False
    return all(
        abs(x[0] - y[0]) <= tol and abs(x[1] - y[1]) <= tol for x, y in zip(pa, pb)
    )


# ---------------------------------------------------------------------------
# Arc algebra

def test_interval_examples():
    d = math.radians
    a = ArcSet.interval(d(10), d(30)).intersect(ArcSet.interval(d(20), d(40)))
    assert _close(a, ArcSet.interval(d(20), d(30)))
    # wraparound: [170, -170] cut at pi into two pieces
    w = ArcSet.interval(d(170), d(190)).intersect(ArcSet.interval(d(175), d(185)))
    assert _close(w, ArcSet.interval(d(175), d(185)))
    assert w.contains(d(179)) and w.contains(d(-179)) and not w.contains(d(170))


def test_full_and_empty():
    assert ArcSet.full().measure == pytest.approx(TWO_PI)
    assert ArcSet.empty().is_empty()
    assert ArcSet.full().contains(math.pi) and ArcSet.full().contains(-math.pi)
    assert ArcSet.interval(0.0, 7.0).is_full()
    assert ArcSet.interval(1.0, 1.0).is_empty()


def test_touching_open_arcs_do_not_intersect():
    a = ArcSet.interval(0.0, 1.0)
    b = ArcSet.interval(1.0, 2.0)
    assert a.intersect(b).is_empty()
    assert a.union(b).measure == pytest.approx(2.0)


angles = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)
widths = st.floats(min_value=1e-3, max_value=TWO_PI - 1e-3)


@st.composite
def arc_sets(draw):
    out = ArcSet.empty()
    for _ in range(draw(st.integers(1, 3))):
        out = out.union(ArcSet.around(draw(angles), draw(widths) / 2.0))
    return out


@given(arc_sets(), arc_sets())
@settings(deadline=None)
def test_intersect_commutative(a, b):
    assert a.intersect(b) == b.intersect(a)


@given(arc_sets(), arc_sets(), arc_sets())
@settings(deadline=None)
def test_intersect_associative(a, b, c):
    assert a.intersect(b).intersect(c) == a.intersect(b.intersect(c))


@given(arc_sets())
@settings(deadline=None)
def test_full_is_identity(a):
    assert ArcSet.full().intersect(a) == a


@given(arc_sets(), arc_sets())
@settings(deadline=None)
def test_intersection_measure(a, b):
    m = a.intersect(b).measure
    assert m <= min(a.measure, b.measure) + 1e-12


@given(arc_sets())
@settings(deadline=None)
def test_complement_partitions_circle(a):
    comp = a.complement()
    assert a.intersect(comp).is_empty()
    assert abs(a.measure + comp.measure - TWO_PI) < 1e-9


@given(arc_sets(), arc_sets())
@settings(deadline=None)
def test_minkowski_difference_membership(a, b):
    diff = a.minkowski_diff(b)
    for lo1, hi1 in a.pieces:
        for lo2, hi2 in b.pieces:
            x = 0.5 * (lo1 + hi1) - 0.5 * (lo2 + hi2)
            assert diff.contains(x, tol=1e-9)


def test_minkowski_known_interval():
    a = ArcSet.interval(0.2, 0.4)
    b = ArcSet.interval(-0.1, 0.1)
    d = a.minkowski_diff(b)
    assert _close(d, ArcSet.interval(0.1, 0.5), tol=1e-12)


# ---------------------------------------------------------------------------
# Criteria and schedule

def test_criteria_validation():
    with pytest.raises(ValueError):
        BlockCriteria(B=1, Delta=0.1, kappa=0.2, s=200)
    with pytest.raises(ValueError):
        BlockCriteria(B=2, Delta=0.0, kappa=0.2, s=200)
    with pytest.raises(ValueError):
        BlockCriteria(B=2, Delta=0.3, kappa=0.2, s=200)
    with pytest.raises(ValueError):
        BlockCriteria(B=2, Delta=0.1, kappa=0.2, s=100)  # s Delta < 4 pi


def test_default_schedule_values():
    sch = blocks.default_schedule(math.exp(4.0))
    assert sch.Delta == pytest.approx(math.exp(-5.0 / 3.0), rel=1e-12)
    assert sch.B == 4
    sch = blocks.default_schedule(1e4)
    assert sch.Delta == pytest.approx(0.021544346900318832, rel=1e-12)
    assert sch.B == 10
    assert sch.betaJ_delta2 == pytest.approx(4.6415888336127775, rel=1e-10)
    assert sch.betaJ_delta3 == pytest.approx(0.1, rel=1e-10)


def test_default_schedule_covers():
    rng = np.random.default_rng(7)
    for beta_J in np.exp(rng.uniform(0.1, 18.0, size=100)):
        sch = blocks.default_schedule(float(beta_J))
        assert sch.s * sch.Delta > 4.0 * math.pi
        assert sch.B >= 2 and sch.B % 2 == 0


def test_default_schedule_rejects_high_temperature():
    with pytest.raises(ValueError):
        blocks.default_schedule(1.0)


# ---------------------------------------------------------------------------
# Classification

def test_neel_phi0_is_g0():
    crit = _criteria()
    theta_star = 0.7
    cfg = model.neel_state(8, model.ReferenceFrame(theta_star, 0.0))
    lab = blocks.classify_block(cfg, (0, 0), crit)
    assert lab.kind == "G0"
    assert lab.theta_star_arcs.contains(theta_star)
    assert lab.theta_star_arcs.measure == pytest.approx(2 * crit.Delta, abs=1e-12)
    assert abs(lab.phi_witness) <= crit.kappa


def test_neel_phi180_is_g180():
    cfg = model.neel_state(8, model.ReferenceFrame(0.3, math.pi))
    lab = blocks.classify_block(cfg, (2, 4), _criteria())
    assert lab.kind == "G180"
    assert abs(model.wrap_angle(lab.phi_witness - math.pi)) <= 0.2


def test_neel_phi90_is_badsw():
    crit = _criteria()
    cfg = model.neel_state(8, model.ReferenceFrame(0.0, math.pi / 2))
    lab = blocks.classify_block(cfg, (0, 0), crit)
    assert lab.kind == "BadSW"
    assert lab.witness_bond is None
    assert len(lab.feasible_sw) >= 1
    refs = blocks.reference_angles(crit.s)
    best = min(
        abs(model.wrap_angle(refs[i - 1] - math.pi / 2)) for i in lab.feasible_sw
    )
    assert best <= TWO_PI / crit.s


def test_perturbed_spin_is_badenergy():
    crit = _criteria(B=4)
    cfg = model.neel_state(8, model.ReferenceFrame(0.0, 0.0))
    cfg[2, 2] = model.wrap_angle(cfg[2, 2] + 2 * crit.Delta)
    lab = blocks.classify_block(cfg, (0, 0), crit)
    assert lab.kind == "BadEnergy"
    p, q, gap = lab.witness_bond
    assert (2, 2) in (p, q)
    assert gap == pytest.approx(2 * crit.Delta, abs=1e-12)
    assert gap >= crit.Delta / (2 * crit.B)


def test_classify_rejects_off_grid_origin():
    cfg = model.neel_state(8)
    with pytest.raises(ValueError):
        blocks.classify_block(cfg, (1, 0), _criteria())


def _near_neel(L, frame, dev_scale, rng):
    cfg = model.neel_state(L, frame)
    return model.wrap_angle(cfg + rng.uniform(-dev_scale, dev_scale, size=(L, L)))


def test_covering_on_synthetic_blocks():
    crit = _criteria()
    rng = np.random.default_rng(11)
    margin = 0.9 * crit.Delta / (8.0 * crit.B)
    edge = crit.kappa + 2 * crit.Delta
    for _ in range(2000):
        phi = rng.uniform(-math.pi, math.pi)
        frame = model.ReferenceFrame(rng.uniform(-math.pi, math.pi), phi)
        cfg = _near_neel(4, frame, margin, rng)
        lab = blocks.classify_block(cfg, (0, 0), crit)
        assert lab.kind != "BadEnergy"
        if lab.kind == "BadSW":
            assert len(lab.feasible_sw) >= 1
        if abs(phi) < crit.kappa:
            assert lab.kind == "G0"
        elif abs(model.wrap_angle(phi - math.pi)) < crit.kappa:
            assert lab.kind == "G180"
        elif abs(phi) > edge and abs(model.wrap_angle(phi - math.pi)) > edge:
            assert lab.kind == "BadSW"


@pytest.mark.parametrize("delta,kappa", [(0.05, 0.15), (0.1, 0.2), (0.1, 0.3), (0.05, 0.3)])
def test_g0_g180_mutually_exclusive(delta, kappa):
    # kappa + 2 Delta < pi/2 forbids a block feasible for both windows.
    assert kappa + 2 * delta < math.pi / 2
    crit = _criteria(delta=delta, kappa=kappa)
    rng = np.random.default_rng(13)
    for _ in range(300):
        phi = rng.choice(
            [kappa, -kappa, kappa + 2 * delta, math.pi - kappa, rng.uniform(-math.pi, math.pi)]
        )
        frame = model.ReferenceFrame(rng.uniform(-math.pi, math.pi), phi)
        cfg = _near_neel(4, frame, 0.99 * delta, rng)
        _, _, feas = blocks.feasibility(cfg, (0, 0), crit)
        hit0 = not feas.intersect(ArcSet.around(0.0, kappa)).is_empty()
        hit180 = not feas.intersect(ArcSet.around(math.pi, kappa)).is_empty()
        assert not (hit0 and hit180)


def test_classification_rotation_invariant():
    crit = _criteria()
    rng = np.random.default_rng(17)
    for alpha in (0.3, -2.0, math.pi):
        for _ in range(50):
            frame = model.ReferenceFrame(
                rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)
            )
            cfg = _near_neel(4, frame, 0.5 * crit.Delta, rng)
            a = blocks.classify_block(cfg, (0, 0), crit)
            b = blocks.classify_block(model.rotate_all(cfg, alpha), (0, 0), crit)
            assert a.kind == b.kind
            assert a.feasible_sw == b.feasible_sw


# ---------------------------------------------------------------------------
# Brute-force grid oracle for the existential decision

def _brute_window_hits(config, origin, B, delta, kappa, step_deg=0.5):
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
                shifted = np.roll(odd_ok, -(p - n // 2))
                if np.any(even_ok & shifted):
                    found = True
                    break
        hits[name] = found
    return hits


def test_brute_force_equivalence():
    delta, kappa, B = 0.1, 0.2, 2
    eps = math.radians(1.0)
    crit = _criteria(B=B, delta=delta, kappa=kappa)
    shrunk = _criteria(B=B, delta=delta - eps, kappa=kappa - eps)
    rng = np.random.default_rng(19)
    windows = {"G0": ArcSet.around(0.0, kappa), "G180": ArcSet.around(math.pi, kappa)}
    shrunk_win = {
        "G0": ArcSet.around(0.0, kappa - eps),
        "G180": ArcSet.around(math.pi, kappa - eps),
    }
    for trial in range(300):
        kind = trial % 4
        frame = model.ReferenceFrame(
            rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)
        )
        if kind == 0:
            cfg = model.wrap_angle(rng.uniform(-math.pi, math.pi, size=(4, 4)))
        elif kind == 1:
            cfg = _near_neel(4, frame, 0.9 * delta, rng)
        elif kind == 2:
            cfg = _near_neel(4, frame, 1.3 * delta, rng)
        else:
            cfg = _near_neel(4, frame, 0.3 * delta, rng)
        hits = _brute_window_hits(cfg, (0, 0), B, delta, kappa)
        _, _, feas = blocks.feasibility(cfg, (0, 0), crit)
        _, _, feas_sh = blocks.feasibility(cfg, (0, 0), shrunk)
        for name in ("G0", "G180"):
            if hits[name]:
                assert not feas.intersect(windows[name]).is_empty()
            if not feas_sh.intersect(shrunk_win[name]).is_empty():
                assert hits[name]


# ---------------------------------------------------------------------------
# Block fields

def test_block_field_neel_all_good():
    crit = _criteria()
    fld = blocks.block_field(model.neel_state(8, model.ReferenceFrame(1.0, 0.0)), crit)
    assert fld.counts == {"G0": 16, "G180": 0, "BadEnergy": 0, "BadSW": 0}
    assert fld.adjacency_violations == ()
    assert fld.n_blocks == 16


def _two_phase(L, theta_star=0.0):
    left = model.neel_state(L, model.ReferenceFrame(theta_star, 0.0))
    right = model.neel_state(L, model.ReferenceFrame(theta_star, math.pi))
    cfg = left.copy()
    cfg[L // 2 :, :] = right[L // 2 :, :]
    return cfg


def test_block_field_two_phase_seam():
    crit = _criteria()
    fld = blocks.block_field(_two_phase(16), crit)
    assert fld.adjacency_violations == ()
    assert fld.counts["G0"] == 24
    assert fld.counts["G180"] == 24
    assert fld.counts["BadEnergy"] == 16
    for t1 in (3, 7):
        for t2 in range(8):
            assert fld.labels[t1][t2].kind == "BadEnergy"
            assert fld.labels[t1][t2].witness_bond is not None


def test_block_field_threads_deterministic():
    cfg = _two_phase(16)
    crit = _criteria()
    a = blocks.block_field(cfg, crit, threads=1)
    b = blocks.block_field(cfg, crit, threads=3)
    kinds = lambda f: [[lab.kind for lab in row] for row in f.labels]
    assert kinds(a) == kinds(b)
    assert a.adjacency_violations == b.adjacency_violations


def test_block_field_rejects_mismatched_torus():
    cfg = model.neel_state(8)
    with pytest.raises(ValueError):
        blocks.block_field(cfg, _criteria(B=8))  # L/B = 1, odd
    with pytest.raises(ValueError):
        blocks.block_field(cfg, _criteria(B=3))  # 8 % 3 != 0


# ---------------------------------------------------------------------------
# Frequencies and output format

def test_event_frequencies_pure():
    crit = _criteria()
    snaps = [model.neel_state(8, model.ReferenceFrame(0.1, 0.0))] * 3
    rows = blocks.event_frequencies(snaps, crit)
    table = {r.label: r for r in rows}
    assert table["G0"].freq == 1.0 and table["G0"].stderr == 0.0
    assert table["G180"].count == 0


def test_event_frequencies_two_phase_ensemble():
    crit = _criteria()
    snaps = [
        model.neel_state(8, model.ReferenceFrame(0.0, 0.0)),
        model.neel_state(8, model.ReferenceFrame(0.0, math.pi)),
    ]
    table = {r.label: r for r in blocks.event_frequencies(snaps, crit)}
    assert table["G0"].freq == 0.5
    assert table["G180"].freq == 0.5
    assert table["G0"].stderr == pytest.approx(math.sqrt(0.25 / 32))


def test_event_frequencies_rejects_empty():
    with pytest.raises(ValueError):
        blocks.event_frequencies([], _criteria())


def test_write_block_csv(tmp_path):
    crit = _criteria()
    fld = blocks.block_field(_two_phase(16), crit)
    path = tmp_path / "field.csv"
    sidecar = blocks.write_block_csv(path, fld)
    lines = path.read_text().splitlines()
    assert lines[0] == "t1,t2,label,phi_witness_deg,n_feasible_i"
    assert len(lines) == 1 + 64
    bad = [ln for ln in lines[1:] if "BadEnergy" in ln]
    assert len(bad) == 16 and all("nan" in ln for ln in bad)
    meta = json.loads(open(sidecar).read())
    assert meta["B"] == 2 and meta["s"] == crit.s
    assert meta["adjacency_violations"] == 0
    assert meta["counts"]["G0"] == 24
