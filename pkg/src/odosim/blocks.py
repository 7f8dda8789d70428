"""Good and bad block classification for torus spin configurations.

A block with origin on the B-grid is the (B+1) x (B+1) patch of sites
whose corners sit at multiples of B; neighboring blocks share a boundary
line of sites.  A block is good when there exist frame angles
(theta*, phi*), with phi* within kappa of 0 (label G0) or of pi (label
G180), such that every site of the patch satisfies |theta_r - o_r| < Delta
for the offsets o_r = theta* + phi* ((x+y) mod 2) + pi (y mod 2).
Otherwise the block is bad: BadEnergy when some next-nearest pair in the
patch has angles further than Delta/(2B) from antialignment, else BadSW
together with the set of reference angles phi*_i = 2 pi i / s that still
admit a feasible theta*.

The existential quantifier over (theta*, phi*) is decided exactly with
circular interval arithmetic, never by sampling.  Each even-sublattice
site constrains theta* to an open arc of width 2 Delta, each odd site
constrains psi* = theta* + phi* likewise; the feasible phi* set is the
Minkowski difference of the odd and even arc intersections.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from . import model

TWO_PI = 2.0 * math.pi

LABELS = ("G0", "G180", "BadEnergy", "BadSW")


def _wrap_half_open(x):
    return (x + math.pi) % TWO_PI - math.pi


class ArcSet:
    """Union of open circular arcs, stored as disjoint pieces cut at pi.

    Pieces are (lo, hi) with -pi <= lo < hi <= pi, sorted.  Degenerate
    single points are dropped and touching pieces are merged, so every
    decision made with this class depends only on sets of positive
    measure; that matches the strict inequalities it is used to decide.
    """

    __slots__ = ("_pieces",)

    def __init__(self, pieces=()):
        cleaned = sorted((lo, hi) for lo, hi in pieces if hi > lo)
        merged = []
        for lo, hi in cleaned:
            if merged and lo <= merged[-1][1]:
                if hi > merged[-1][1]:
                    merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        self._pieces = tuple(merged)

    @classmethod
    def empty(cls):
        return cls(())

    @classmethod
    def full(cls):
        return cls(((-math.pi, math.pi),))

    @classmethod
    def interval(cls, lo, hi):
        """Open arc running counterclockwise from lo to hi."""
        width = hi - lo
        if width <= 0.0:
            return cls.empty()
        if width >= TWO_PI:
            return cls.full()
        lo = _wrap_half_open(lo)
        hi = lo + width
        if hi <= math.pi:
            return cls(((lo, hi),))
        return cls(((lo, math.pi), (-math.pi, hi - TWO_PI)))

    @classmethod
    def around(cls, center, halfwidth):
        return cls.interval(center - halfwidth, center + halfwidth)

    @property
    def pieces(self):
        return self._pieces

    @property
    def measure(self):
        return math.fsum(hi - lo for lo, hi in self._pieces)

    def is_empty(self):
        return not self._pieces

    def is_full(self):
        return self._pieces == ((-math.pi, math.pi),)

    def __eq__(self, other):
        if not isinstance(other, ArcSet):
            return NotImplemented
        return self._pieces == other._pieces

    def __hash__(self):
        return hash(self._pieces)

    def __repr__(self):
        inner = ", ".join("(%.6g, %.6g)" % p for p in self._pieces)
        return "ArcSet(%s)" % inner

    def contains(self, x, tol=0.0):
        y = _wrap_half_open(x)
        for lo, hi in self._pieces:
            if lo - tol < y < hi + tol:
                return True
        # the representation cut at pi: that point is interior when the
        # pieces reach it from both sides
        p = self._pieces
        if p and y == -math.pi and p[0][0] == -math.pi and p[-1][1] == math.pi:
            return True
        return False

    def intersect(self, other):
        out = []
        for a1, b1 in self._pieces:
            for a2, b2 in other._pieces:
                lo, hi = max(a1, a2), min(b1, b2)
                if hi > lo:
                    out.append((lo, hi))
        return ArcSet(out)

    def union(self, other):
        return ArcSet(self._pieces + other._pieces)

    def complement(self):
        if not self._pieces:
            return ArcSet.full()
        out = []
        prev = -math.pi
        for lo, hi in self._pieces:
            if lo > prev:
                out.append((prev, lo))
            prev = hi
        if prev < math.pi:
            out.append((prev, math.pi))
        return ArcSet(out)

    def minkowski_diff(self, other):
        """Set of circular differences {a - b : a in self, b in other}."""
        pieces = []
        for a1, b1 in self._pieces:
            for a2, b2 in other._pieces:
                width = (b1 - a1) + (b2 - a2)
                if width >= TWO_PI:
                    return ArcSet.full()
                lo = _wrap_half_open(a1 - b2)
                hi = lo + width
                if hi <= math.pi:
                    pieces.append((lo, hi))
                else:
                    pieces.append((lo, math.pi))
                    pieces.append((-math.pi, hi - TWO_PI))
        return ArcSet(pieces)

    def sample(self):
        """Midpoint of the widest piece, or None when empty."""
        if not self._pieces:
            return None
        lo, hi = max(self._pieces, key=lambda p: p[1] - p[0])
        return 0.5 * (lo + hi)


def arc_intersect(a, b):
    """Exact intersection of two arc sets; commutative and associative."""
    return a.intersect(b)


def reference_angles(s):
    """The s uniformly spaced angles 2 pi i / s, i = 1..s, wrapped."""
    return tuple(model.wrap_angle(TWO_PI * i / s) for i in range(1, s + 1))


@dataclass(frozen=True)
class BlockCriteria:
    """Block scale B, deviation threshold Delta, goodness window kappa,
    and the number s of reference angles used to split the bad event.

    A block is the (B+1) x (B+1) patch of sites with corner on the
    B-grid; on a torus the side L must be an even multiple of B.
    """

    B: int
    Delta: float
    kappa: float
    s: int

    def __post_init__(self):
        if int(self.B) != self.B or self.B < 2:
            raise ValueError("block scale B must be an integer >= 2")
        if not 0.0 < self.Delta < 1.0:
            raise ValueError("Delta must lie in (0, 1)")
        if not self.Delta < self.kappa < 1.0:
            raise ValueError("kappa must lie in (Delta, 1)")
        if self.s * self.Delta <= 4.0 * math.pi:
            raise ValueError("covering requires s * Delta > 4 pi")


@dataclass(frozen=True)
class BlockLabel:
    """Classification of one block.

    kind is one of G0, G180, BadEnergy, BadSW.  Good labels carry the
    feasible theta* arcs and the feasible phi* arcs already intersected
    with the kappa window.  BadEnergy carries the violating next-nearest
    pair as ((x, y), (x2, y2), gap) with gap the distance of the bond
    angle from pi.  BadSW carries every feasible reference index (1-based).
    """

    kind: str
    theta_star_arcs: ArcSet
    phi_star_arcs: ArcSet
    phi_witness: float
    witness_bond: tuple
    feasible_sw: tuple


def feasibility(config, origin, criteria):
    """Arc sets (A_even, A_odd, feasible phi*) for one block.

    A_even collects the theta* constraints from even-sublattice sites,
    A_odd the psi* = theta* + phi* constraints from odd sites; the
    feasible phi* set is A_odd minus A_even in the Minkowski sense.
    """
    config = model._as_config(config)
    L = config.shape[0]
    x0, y0 = origin
    if x0 % criteria.B or y0 % criteria.B:
        raise ValueError("block origin must lie on the B-grid")
    even = ArcSet.full()
    odd = ArcSet.full()
    for i in range(criteria.B + 1):
        for j in range(criteria.B + 1):
            x, y = (x0 + i) % L, (y0 + j) % L
            arc = ArcSet.around(config[x, y] - math.pi * (y % 2), criteria.Delta)
            if (x + y) % 2 == 0:
                even = even.intersect(arc)
            else:
                odd = odd.intersect(arc)
    return even, odd, odd.minkowski_diff(even)


def _energy_witness(config, origin, criteria):
    L = config.shape[0]
    x0, y0 = origin
    thr = criteria.Delta / (2.0 * criteria.B)
    for i in range(criteria.B):
        for j in range(criteria.B):
            a = ((x0 + i) % L, (y0 + j) % L)
            b = ((x0 + i + 1) % L, (y0 + j + 1) % L)
            c = ((x0 + i) % L, (y0 + j + 1) % L)
            d = ((x0 + i + 1) % L, (y0 + j) % L)
            for p, q in ((a, b), (c, d)):
                gap = abs(model.wrap_angle(config[p] - config[q] - math.pi))
                if gap >= thr:
                    return (p, q, gap)
    return None


def classify_block(config, origin, criteria):
    """Label one block G0, G180, BadEnergy, or BadSW.

    Goodness is decided first (G0 before G180), then the energy
    catastrophe at threshold Delta/(2B) over the next-nearest pairs of
    the patch, and what remains is BadSW with its feasible index set,
    guaranteed nonempty by the covering property when s Delta > 4 pi.

    Args:
      config: (L, L) angle array.
      origin: (x0, y0) with both coordinates multiples of B.
      criteria: BlockCriteria.

    Returns:
      BlockLabel.
    """
    config = model._as_config(config)
    even, odd, feas_phi = feasibility(config, origin, criteria)
    for kind, center in (("G0", 0.0), ("G180", math.pi)):
        hit = feas_phi.intersect(ArcSet.around(center, criteria.kappa))
        if not hit.is_empty():
            return BlockLabel(kind, even, hit, hit.sample(), None, ())
    bond = _energy_witness(config, origin, criteria)
    if bond is not None:
        return BlockLabel("BadEnergy", even, feas_phi, math.nan, bond, ())
    refs = reference_angles(criteria.s)
    feasible = tuple(
        i for i, phi in enumerate(refs, start=1) if feas_phi.contains(phi)
    )
    witness = refs[feasible[0] - 1] if feasible else math.nan
    return BlockLabel("BadSW", even, feas_phi, witness, None, feasible)


@dataclass(frozen=True)
class BlockField:
    """Labels for every block translate plus the adjacency report."""

    criteria: BlockCriteria
    labels: tuple
    adjacency_violations: tuple
    counts: dict

    @property
    def n_blocks(self):
        return len(self.labels) ** 2


def block_field(config, criteria, threads=1):
    """Classify all translates and report G0/G180 adjacencies.

    Blocks are translated by B in each direction; block (t1, t2) and its
    four torus neighbors share a boundary line of sites.  Any adjacent
    pair labeled G0 next to G180 is reported; on well-behaved input this
    report is empty.

    Args:
      config: (L, L) angle array, L an even multiple of criteria.B.
      criteria: BlockCriteria.
      threads: classify blocks in a thread pool when > 1 (the labels and
        their order do not depend on it).

    Returns:
      BlockField.
    """
    config = model._as_config(config)
    L = config.shape[0]
    if L % criteria.B or (L // criteria.B) % 2:
        raise ValueError("torus side must be an even multiple of B")
    T = L // criteria.B
    origins = [(t1 * criteria.B, t2 * criteria.B) for t1 in range(T) for t2 in range(T)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            flat = list(pool.map(lambda o: classify_block(config, o, criteria), origins))
    else:
        flat = [classify_block(config, o, criteria) for o in origins]
    grid = tuple(tuple(flat[t1 * T + t2] for t2 in range(T)) for t1 in range(T))
    violations = []
    for t1 in range(T):
        for t2 in range(T):
            kind = grid[t1][t2].kind
            for u1, u2 in (((t1 + 1) % T, t2), (t1, (t2 + 1) % T)):
                if {kind, grid[u1][u2].kind} == {"G0", "G180"}:
                    violations.append(((t1, t2), (u1, u2)))
    counts = {lab: 0 for lab in LABELS}
    for row in grid:
        for label in row:
            counts[label.kind] += 1
    return BlockField(criteria, grid, tuple(violations), counts)


@dataclass(frozen=True)
class Schedule:
    """Running scales tied to the inverse temperature."""

    Delta: float
    B: int
    s: int
    beta_J: float
    betaJ_delta2: float
    betaJ_delta3: float


def default_schedule(beta_J):
    """Delta = (beta J)^(-5/12), B the nearest even integer to log(beta J)
    (at least 2), s = ceil(4 pi / Delta) + 1, plus the sanity ratios
    beta J Delta^2 (large) and beta J Delta^3 (small) that the regime
    relies on.

    Args:
      beta_J: dimensionless inverse temperature, must exceed 1.

    Returns:
      Schedule.
    """
    if beta_J <= 1.0:
        raise ValueError("schedule requires beta_J > 1")
    delta = beta_J ** (-5.0 / 12.0)
    b = max(2, 2 * round(math.log(beta_J) / 2.0))
    s = math.ceil(4.0 * math.pi / delta) + 1
    return Schedule(delta, b, s, beta_J, beta_J * delta**2, beta_J * delta**3)


@dataclass(frozen=True)
class FrequencyRow:
    label: str
    count: int
    freq: float
    stderr: float


def event_frequencies(snapshots, criteria, threads=1):
    """Empirical label frequencies over the blocks of many snapshots.

    Args:
      snapshots: iterable of (L, L) angle arrays, uniform criteria.
      criteria: BlockCriteria.
      threads: forwarded to block_field.

    Returns:
      Tuple of FrequencyRow, one per label in LABELS order, with
      binomial standard errors.
    """
    counts = {lab: 0 for lab in LABELS}
    total = 0
    for snap in snapshots:
        fld = block_field(snap, criteria, threads=threads)
        for lab in LABELS:
            counts[lab] += fld.counts[lab]
        total += fld.n_blocks
    if total == 0:
        raise ValueError("need at least one snapshot")
    rows = []
    for lab in LABELS:
        p = counts[lab] / total
        rows.append(FrequencyRow(lab, counts[lab], p, math.sqrt(p * (1.0 - p) / total)))
    return tuple(rows)


def write_block_csv(path, fld):
    """Block-field table and a JSON sidecar echoing the criteria.

    The table has one row per block: t1, t2, label, phi_witness_deg,
    n_feasible_i.  The sidecar lands next to the table with the suffix
    .criteria.json and repeats the criteria, the label counts, and the
    number of adjacency violations.
    """
    path = os.fspath(path)
    lines = ["t1,t2,label,phi_witness_deg,n_feasible_i"]
    T = len(fld.labels)
    for t1 in range(T):
        for t2 in range(T):
            lab = fld.labels[t1][t2]
            lines.append(
                "%d,%d,%s,%.6f,%d"
                % (t1, t2, lab.kind, math.degrees(lab.phi_witness), len(lab.feasible_sw))
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = os.path.splitext(path)[0] + ".criteria.json"
    payload = {
        "B": fld.criteria.B,
        "Delta": fld.criteria.Delta,
        "kappa": fld.criteria.kappa,
        "s": fld.criteria.s,
        "counts": fld.counts,
        "adjacency_violations": len(fld.adjacency_violations),
    }
    with open(sidecar, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar
