"""Ground-truth engines: exhaustive clock enumeration and Gaussian sampling.

Two families of checks live here.  The first discretizes each spin to q
clock states (angles 2*pi*j/q, uniform a priori weights) and enumerates
all q^(L*L) torus configurations, which makes partition functions,
event-constrained partition functions, and the reflection-positivity
consequences (the chessboard estimate and subadditivity of constrained
weights) exactly computable at desk scale.  The second draws the massive
Gaussian spin-wave field mode by mode and checks the box-mass and
reweighting bounds that connect the box-constrained Gaussian weight to
the finite-lattice free energy, plus the cubic error bound of the
harmonic approximation to the full torus energy.

At q <= 4 every pairwise cosine is a multiple of 1/2, so twice the sum of
cosines over a bond family is an exact integer and each configuration
collapses onto an integer cell (2*sum cos over diagonal bonds, over x
bonds, over y bonds).  Enumeration accumulates exact int64 cell counts;
Boltzmann weights at any beta are applied per cell afterwards with
compensated summation in a fixed cell order.  Results are therefore
independent of chunking, worker count, and accumulation order.

States are visited in reflected Gray-code order and the integer bond sums
are recomputed two ways per chunk, directly and by incremental single-site
updates along the Gray walk; any disagreement aborts the enumeration.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import model, spinwave

# 4^16 = 4,294,967,296 states is the largest supported exhaustive sweep.
STATE_BUDGET = 4_300_000_000
_CHUNK = 1 << 19

# 2*cos(2*pi*d/q) is an exact integer for q in {2, 3, 4}.
_COS2 = {
    2: np.array([2, -2], dtype=np.int64),
    3: np.array([2, -1, -1], dtype=np.int64),
    4: np.array([2, 0, -2, 0], dtype=np.int64),
}
# Same tables indexed by raw digit difference d in -3..3 (offset by +3),
# which avoids a modulo pass in the hot enumeration loops.
_COS2_DIFF = {
    q: np.array([t[d % q] for d in range(-3, 4)], dtype=np.int64)
    for q, t in _COS2.items()
}


@dataclass(frozen=True)
class ClockSetup:
    """Exhaustive-enumeration problem statement.

    Attributes:
        L: torus side, multiple of 4.
        q: clock states per spin, 2..4 (integer 2*cos tables exist).
        params: couplings and inverse temperature.
        B: block scale; divides L with L/B even.
    """

    L: int
    q: int
    params: model.CouplingParams
    B: int = 2

    def __post_init__(self):
        model.check_lattice(self.L)
        if self.q not in _COS2:
            raise ValueError(f"q must be one of {sorted(_COS2)}, got {self.q}")
        if self.B < 1 or self.L % self.B != 0 or (self.L // self.B) % 2 != 0:
            raise ValueError(
                f"B must divide L with L/B even, got B={self.B}, L={self.L}"
            )

    @property
    def n_states(self):
        return self.q ** (self.L * self.L)


def _check_budget(setup):
    n = setup.n_states
    if n > STATE_BUDGET:
        raise ValueError(
            f"exhaustive enumeration refused: {setup.q}**{setup.L * setup.L}"
            f" = {float(n):.3e} states exceeds the budget {STATE_BUDGET:.2e}"
        )


def _gray_digits(start, stop, q, n_digits):
    """Clock digits of reflected Gray-code states for an index range.

    Digit p of plain base-q index n reflects to q-1-digit whenever the sum
    of the Gray digits above p is odd (for q=2 this telescopes to the
    familiar n xor n>>1); consecutive indices then differ in exactly one
    digit by one step.

    Returns the digits transposed, shape (n_digits, stop - start), so each
    site's digit row is contiguous.
    """
    idx = np.arange(start, stop, dtype=np.int64)
    plain = np.empty((n_digits, idx.size), dtype=np.int8)
    rem = idx
    for p in range(n_digits):
        plain[p] = rem % q
        rem = rem // q
    out = np.empty_like(plain)
    suffix = np.zeros(idx.size, dtype=np.int64)
    for p in range(n_digits - 1, -1, -1):
        out[p] = np.where(suffix % 2 == 0, plain[p], q - 1 - plain[p])
        suffix += out[p]
    return out


def _gray_change_positions(indices, q, n_digits):
    """Digit changed by the step into Gray state n: trailing zeros of n base q."""
    pos = np.zeros(indices.size, dtype=np.int64)
    rem = np.asarray(indices, dtype=np.int64).copy()
    for _ in range(n_digits - 1):
        m = (rem % q == 0) & (rem > 0)
        if not m.any():
            break
        pos[m] += 1
        rem[m] //= q
    return pos


def _site_tables(L):
    """Flat-index bond partner and neighbor tables, site (x, y) -> x*L + y."""
    x = np.arange(L)[:, None]
    y = np.arange(L)[None, :]

    def flat(ax, ay):
        return ((ax % L) * L + (ay % L)).ravel()

    here = flat(x, y)
    bonds = {
        "d": (
            np.concatenate([here, here]),
            np.concatenate([flat(x + 1, y + 1), flat(x + 1, y - 1)]),
        ),
        "x": (here, flat(x + 1, y)),
        "y": (here, flat(x, y + 1)),
    }
    neighbors = {
        "d": np.stack(
            [flat(x + 1, y + 1), flat(x - 1, y - 1), flat(x + 1, y - 1), flat(x - 1, y + 1)],
            axis=1,
        ),
        "x": np.stack([flat(x + 1, y), flat(x - 1, y)], axis=1),
        "y": np.stack([flat(x, y + 1), flat(x, y - 1)], axis=1),
    }
    return bonds, neighbors


def _direct_sums(digits, q, bonds):
    """Integer bond sums 2*sum(cos) per state for each bond family.

    digits has shape (n_sites, n_states_chunk); site rows are contiguous.
    """
    table = _COS2_DIFF[q]
    out = {}
    for fam, (a, b) in bonds.items():
        acc = np.zeros(digits.shape[1], dtype=np.int64)
        for i in range(a.size):
            acc += table[(digits[a[i]] - digits[b[i]]) + 3]
        out[fam] = acc
    return out


def _incremental_sums(digits, start, q, neighbors, first):
    """Bond sums along the chunk via single-site Gray updates from state 0."""
    m = digits.shape[1]
    table = _COS2_DIFF[q]
    pos = _gray_change_positions(
        np.arange(start + 1, start + m), q, digits.shape[0]
    )
    steps = np.arange(m - 1)
    old = digits[pos, steps]
    new = digits[pos, steps + 1]
    out = {}
    for fam, nb in neighbors.items():
        nbd = digits[nb[pos], steps[:, None]]
        delta = table[(new[:, None] - nbd) + 3].sum(axis=1)
        delta -= table[(old[:, None] - nbd) + 3].sum(axis=1)
        sums = np.empty(m, dtype=np.int64)
        sums[0] = first[fam]
        np.cumsum(delta, out=sums[1:])
        sums[1:] += first[fam]
        out[fam] = sums
    return out


def _cell_geometry(L):
    """Cell-key geometry: offsets and strides for (S_diag, S_x, S_y)."""
    nd = 8 * L * L + 1
    nx = 4 * L * L + 1
    return nd, nx, nd * nx * nx


def _cell_key(sums, L):
    nd, nx, _ = _cell_geometry(L)
    key = (sums["d"] + 4 * L * L) * nx + (sums["x"] + 2 * L * L)
    return key * nx + (sums["y"] + 2 * L * L)


def _cell_energies(L, params):
    """Energy of every cell in key order: J*(2L^2 + Sd/2 + gamma*(Sx+Sy)/2)."""
    nd, nx, _ = _cell_geometry(L)
    sd = (np.arange(nd) - 4 * L * L)[:, None, None]
    sx = (np.arange(nx) - 2 * L * L)[None, :, None]
    sy = (np.arange(nx) - 2 * L * L)[None, None, :]
    e = params.J * (2.0 * L * L + 0.5 * sd + 0.5 * params.gamma * (sx + sy))
    return e.ravel()


def _cell_axes(L):
    """Per-cell (Sd, Sx, Sy) integer values in key order."""
    nd, nx, _ = _cell_geometry(L)
    sd = np.repeat(np.arange(nd) - 4 * L * L, nx * nx)
    sx = np.tile(np.repeat(np.arange(nx) - 2 * L * L, nx), nd)
    sy = np.tile(np.arange(nx) - 2 * L * L, nd * nx)
    return sd, sx, sy


# ---------------------------------------------------------------------------
# Events


def always_true():
    return {"op": "true"}


def always_false():
    return {"op": "false"}


def site_window(site, center, halfwidth):
    """Predicate |wrap(theta[site] - center)| < halfwidth, site in block coords."""
    return {
        "op": "site_window",
        "site": [int(site[0]), int(site[1])],
        "center": float(center),
        "halfwidth": float(halfwidth),
    }


def bond_near(site_a, site_b, target, halfwidth):
    """Predicate |wrap(theta[a] - theta[b] - target)| < halfwidth."""
    return {
        "op": "bond_near",
        "site_a": [int(site_a[0]), int(site_a[1])],
        "site_b": [int(site_b[0]), int(site_b[1])],
        "target": float(target),
        "halfwidth": float(halfwidth),
    }


def all_of(*trees):
    return {"op": "and", "args": list(trees)}


def any_of(*trees):
    return {"op": "or", "args": list(trees)}


def negate(tree):
    return {"op": "not", "arg": tree}


def _validate_tree(tree):
    if not isinstance(tree, dict) or "op" not in tree:
        raise ValueError(f"event node must be a dict with an 'op' key, got {tree!r}")
    op = tree["op"]
    if op in ("true", "false"):
        return
    if op == "site_window":
        (i, j) = tree["site"]
        if not (isinstance(i, int) and isinstance(j, int) and i >= 0 and j >= 0):
            raise ValueError(f"site must be a pair of nonnegative ints, got {tree['site']}")
        if not tree["halfwidth"] > 0:
            raise ValueError("halfwidth must be positive")
        return
    if op == "bond_near":
        for key in ("site_a", "site_b"):
            (i, j) = tree[key]
            if not (isinstance(i, int) and isinstance(j, int) and i >= 0 and j >= 0):
                raise ValueError(f"{key} must be a pair of nonnegative ints")
        if not tree["halfwidth"] > 0:
            raise ValueError("halfwidth must be positive")
        return
    if op == "not":
        _validate_tree(tree["arg"])
        return
    if op in ("and", "or"):
        if not tree["args"]:
            raise ValueError(f"'{op}' needs at least one argument")
        for sub in tree["args"]:
            _validate_tree(sub)
        return
    raise ValueError(f"unknown event op {op!r}")


def _transform_tree(tree, f):
    op = tree["op"]
    if op == "site_window":
        i, j = tree["site"]
        return dict(tree, site=list(f(i, j)))
    if op == "bond_near":
        return dict(
            tree,
            site_a=list(f(*tree["site_a"])),
            site_b=list(f(*tree["site_b"])),
        )
    if op == "not":
        return dict(tree, arg=_transform_tree(tree["arg"], f))
    if op in ("and", "or"):
        return dict(tree, args=[_transform_tree(sub, f) for sub in tree["args"]])
    return dict(tree)


def _eval_tree(tree, theta):
    """Evaluate a tree on block angles, shape (..., B+1, B+1) -> bool (...)."""
    op = tree["op"]
    if op == "true":
        return np.ones(theta.shape[:-2], dtype=bool)
    if op == "false":
        return np.zeros(theta.shape[:-2], dtype=bool)
    if op == "site_window":
        i, j = tree["site"]
        d = model.wrap_angle(theta[..., i, j] - tree["center"])
        return np.abs(d) < tree["halfwidth"]
    if op == "bond_near":
        ia, ja = tree["site_a"]
        ib, jb = tree["site_b"]
        d = model.wrap_angle(theta[..., ia, ja] - theta[..., ib, jb] - tree["target"])
        return np.abs(d) < tree["halfwidth"]
    if op == "not":
        return ~_eval_tree(tree["arg"], theta)
    parts = [_eval_tree(sub, theta) for sub in tree["args"]]
    out = parts[0]
    for p in parts[1:]:
        out = (out & p) if op == "and" else (out | p)
    return out


@dataclass(frozen=True)
class EventSpec:
    """Named block event: a predicate over the (B+1) x (B+1) block angles.

    The tree is a JSON-serializable expression over site windows, bond
    windows, and boolean connectives.  symmetrized marks invariance under
    the two axis reflections through the block center, which the
    constrained-partition operations require; symmetrize() enforces it by
    conjunction over the reflection orbit.
    """

    name: str
    tree: dict
    symmetrized: bool = False

    def __post_init__(self):
        _validate_tree(self.tree)

    def symmetrize(self, B):
        """Conjunction over the orbit of the two axis reflections."""
        orbit = [
            lambda i, j: (i, j),
            lambda i, j: (B - i, j),
            lambda i, j: (i, B - j),
            lambda i, j: (B - i, B - j),
        ]
        seen = {}
        for f in orbit:
            t = _transform_tree(self.tree, f)
            seen.setdefault(repr(sorted(_flatten(t))), t)
        trees = list(seen.values())
        tree = trees[0] if len(trees) == 1 else all_of(*trees)
        return EventSpec(self.name, tree, symmetrized=True)

    def evaluate(self, theta_block):
        """Evaluate on one (B+1, B+1) block of angles; returns bool."""
        theta = np.asarray(theta_block, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise ValueError(f"block must be square, got shape {theta.shape}")
        return bool(_eval_tree(self.tree, theta))

    def to_json(self):
        return json.dumps(
            {"name": self.name, "symmetrized": self.symmetrized, "tree": self.tree},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(data["name"], data["tree"], bool(data["symmetrized"]))


def _flatten(tree):
    """Canonical (path, value) pairs for structural deduplication."""
    items = []

    def walk(node, path):
        for k in sorted(node):
            v = node[k]
            if isinstance(v, dict):
                walk(v, path + (k,))
            elif isinstance(v, list) and v and isinstance(v[0], dict):
                for n, sub in enumerate(v):
                    walk(sub, path + (k, n))
            else:
                items.append((path + (k,), repr(v)))

    walk(tree, ())
    return items


def standard_event_suite(B, q):
    """Reflection-symmetric block events used by the verification battery.

    Windows are sized for coarse clock lattices: at q = 3 the closest clock
    approach to an angle difference of pi is 2*pi/3, so both the aligned /
    anti-aligned windows and the bad-bond window use halfwidth 75 degrees
    (a tighter bad-bond threshold would be satisfied by every q = 3 state).
    """
    deg = math.pi / 180.0
    x_bonds = [((i, j), (i + 1, j)) for i in range(B) for j in range(B + 1)]
    y_bonds = [((i, j), (i, j + 1)) for i in range(B + 1) for j in range(B)]
    d_bonds = [((i, j), (i + 1, j + 1)) for i in range(B) for j in range(B)]
    d_bonds += [((i, j + 1), (i + 1, j)) for i in range(B) for j in range(B)]

    def axis_phase(phi):
        trees = [bond_near(a, b, phi, 75 * deg) for a, b in x_bonds]
        trees += [bond_near(a, b, math.pi - phi, 75 * deg) for a, b in y_bonds]
        return all_of(*trees)

    bad_bond = any_of(*[negate(bond_near(a, b, math.pi, 75 * deg)) for a, b in d_bonds])
    events = [
        EventSpec("always-true", always_true(), symmetrized=True),
        EventSpec("clock-g0", axis_phase(0.0)).symmetrize(B),
        EventSpec("clock-g180", axis_phase(math.pi)).symmetrize(B),
        EventSpec("center-window", site_window((B // 2, B // 2), 0.0, 60 * deg)).symmetrize(B),
        EventSpec("corner-window", all_of(
            site_window((0, 0), 0.0, 60 * deg), site_window((B, B), 0.0, 60 * deg)
        )).symmetrize(B),
        EventSpec("bad-diagonal-bond", bad_bond).symmetrize(B),
    ]
    return events


# ---------------------------------------------------------------------------
# Enumeration core


def _window_table(q, center, halfwidth):
    """Which of the q clock values fall inside the open window."""
    return np.array(
        [
            abs(model.wrap_angle(2.0 * math.pi * v / q - center)) < halfwidth
            for v in range(q)
        ]
    )


def _compile_tree(tree, origin, setup):
    """Compile a tree at a block origin into a digit-chunk predicate.

    Window membership over the q clock values is precomputed per site and
    per bond difference, so chunk evaluation is pure table lookup.  The
    compiled predicate takes (digits, cache) with digits of shape
    (n_sites, chunk); the cache dict is shared across all masks of one
    chunk, so identical subtrees, wrapped-around bonds, and repeated sites
    are each evaluated once.
    """
    L, q, B = setup.L, setup.q, setup.B
    ox, oy = origin[0] * B, origin[1] * B

    def col(i, j):
        if not (0 <= i <= B and 0 <= j <= B):
            raise ValueError(f"block site ({i}, {j}) outside 0..{B}")
        return ((ox + i) % L) * L + ((oy + j) % L)

    def cached(key, compute):
        def fn(digits, cache):
            hit = cache.get(key)
            if hit is None:
                hit = compute(digits, cache)
                cache[key] = hit
            return hit

        # id()-based keys stay unique only while the tree node is alive
        fn._keep = tree
        return fn

    op = tree["op"]
    if op == "true":
        return lambda d, cache: np.ones(d.shape[1], dtype=bool)
    if op == "false":
        return lambda d, cache: np.zeros(d.shape[1], dtype=bool)
    if op == "site_window":
        c = col(*tree["site"])
        ok = _window_table(q, tree["center"], tree["halfwidth"])
        return cached(
            ("w", c, tree["center"], tree["halfwidth"]),
            lambda d, cache: ok[d[c]],
        )
    if op == "bond_near":
        ca = col(*tree["site_a"])
        cb = col(*tree["site_b"])
        ok = _window_table(q, tree["target"], tree["halfwidth"])

        def diff(d, cache):
            key = ("diff", ca, cb)
            hit = cache.get(key)
            if hit is None:
                hit = (d[ca] - d[cb]) % q
                cache[key] = hit
            return hit

        return cached(
            ("b", ca, cb, tree["target"], tree["halfwidth"]),
            lambda d, cache: ok[diff(d, cache)],
        )
    if op == "not":
        sub = _compile_tree(tree["arg"], origin, setup)
        return cached(
            ("n", id(tree), ox, oy), lambda d, cache: ~sub(d, cache)
        )
    subs = [_compile_tree(s, origin, setup) for s in tree["args"]]

    def combine(d, cache):
        out = subs[0](d, cache)
        fresh = False
        for s in subs[1:]:
            nxt = s(d, cache)
            # cached arrays are shared; only mutate copies made here
            if fresh:
                if op == "and":
                    out &= nxt
                else:
                    out |= nxt
            else:
                out = (out & nxt) if op == "and" else (out | nxt)
                fresh = True
        return out

    return cached((op[0], id(tree), ox, oy), combine)


def _compile_placements(placements, setup):
    """AND of trees at origins; placements is a list of (origin, tree)."""
    fns = [_compile_tree(tree, origin, setup) for origin, tree in placements]

    def mask(d, cache):
        out = fns[0](d, cache)
        fresh = False
        for f in fns[1:]:
            nxt = f(d, cache)
            if fresh:
                out &= nxt
            else:
                out = out & nxt
                fresh = True
        return out

    return mask


def _all_translates(setup):
    t = setup.L // setup.B
    return [(t1, t2) for t1 in range(t) for t2 in range(t)]


def _enumerate_cells(setup, masks, threads=1):
    """Cell-count histograms for the full sweep and for each mask.

    Args:
        setup: ClockSetup within the state budget.
        masks: dict name -> chunk predicate (digits -> bool per state).
        threads: worker threads over fixed chunk ranges.

    Returns:
        (total_counts, {name: counts}) int64 arrays over the cell grid.
    """
    _check_budget(setup)
    L, q = setup.L, setup.q
    n_sites = L * L
    n_states = setup.n_states
    bonds, neighbors = _site_tables(L)
    _, _, ncells = _cell_geometry(L)
    names = list(masks)
    chunks = [
        (s, min(s + _CHUNK, n_states)) for s in range(0, n_states, _CHUNK)
    ]

    def process(rng):
        start, stop = rng
        digits = _gray_digits(start, stop, q, n_sites)
        sums = _direct_sums(digits, q, bonds)
        if stop - start > 1:
            first = {fam: int(sums[fam][0]) for fam in sums}
            inc = _incremental_sums(digits, start, q, neighbors, first)
            for fam in sums:
                if not np.array_equal(inc[fam], sums[fam]):
                    raise RuntimeError(
                        "incremental Gray-code bond sums diverged from direct"
                        f" recomputation in chunk [{start}, {stop})"
                    )
        key = _cell_key(sums, L)
        cache = {}
        out = [np.bincount(key, minlength=ncells)]
        for name in names:
            sel = key[masks[name](digits, cache)]
            out.append(np.bincount(sel, minlength=ncells))
        return out

    total = np.zeros(ncells, dtype=np.int64)
    per_mask = {name: np.zeros(ncells, dtype=np.int64) for name in names}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(process, chunks)
            for res in results:
                total += res[0]
                for name, arr in zip(names, res[1:]):
                    per_mask[name] += arr
    else:
        for rng in chunks:
            res = process(rng)
            total += res[0]
            for name, arr in zip(names, res[1:]):
                per_mask[name] += arr
    return total, per_mask


class _CellWeights:
    """Boltzmann weights on the nonzero cells, shifted for overflow safety."""

    def __init__(self, total_counts, L, params):
        self.nz = np.flatnonzero(total_counts)
        energies = _cell_energies(L, params)
        self.energies = energies[self.nz]
        self.shift = float(np.max(-params.beta * self.energies))
        self.boltz = np.exp(-params.beta * self.energies - self.shift)
        self.counts = total_counts[self.nz].astype(np.float64)
        self.z_shifted = math.fsum(self.counts * self.boltz)
        self.log_z = self.shift + math.log(self.z_shifted)

    def masked_shifted(self, counts):
        return math.fsum(counts[self.nz].astype(np.float64) * self.boltz)

    def mean(self, cell_values):
        w = self.counts * self.boltz
        return math.fsum(w * cell_values[self.nz]) / self.z_shifted


@dataclass(frozen=True)
class ClockEnumeration:
    """Exact Gibbs summary of one exhaustive sweep."""

    setup: ClockSetup
    n_states: int
    log_z: float
    z: float
    energy_levels: np.ndarray = field(repr=False)
    energy_counts: np.ndarray = field(repr=False)
    mean_energy: float
    mean_order_param: float
    corr_nn_x: float
    corr_nn_y: float
    corr_nnn: float


def enumerate_clock(setup, threads=1):
    """Enumerate all clock states exactly.

    Args:
        setup: ClockSetup; refused (ValueError) above the state budget.
        threads: worker threads; the result is worker-count independent.

    Returns:
        ClockEnumeration with the partition function at setup.params.beta,
        the exact energy histogram, and bond-averaged correlators.
    """
    total, _ = _enumerate_cells(setup, {}, threads)
    return _summarize(setup, total)


def _summarize(setup, total):
    L = setup.L
    w = _CellWeights(total, L, setup.params)
    sd, sx, sy = _cell_axes(L)
    levels, inverse = np.unique(w.energies, return_inverse=True)
    counts = np.bincount(inverse, weights=total[w.nz].astype(np.float64))
    # exp(shift) * z_shifted keeps Z exact at beta = 0 (shift is 0.0 there)
    try:
        z = math.exp(w.shift) * w.z_shifted
    except OverflowError:
        z = math.inf
    return ClockEnumeration(
        setup=setup,
        n_states=setup.n_states,
        log_z=w.log_z,
        z=z,
        energy_levels=levels,
        energy_counts=counts.astype(np.int64),
        mean_energy=w.mean(_cell_energies(L, setup.params)),
        mean_order_param=w.mean((sx - sy) / (2.0 * L * L)),
        corr_nn_x=w.mean(sx / (2.0 * L * L)),
        corr_nn_y=w.mean(sy / (2.0 * L * L)),
        corr_nnn=w.mean(sd / (4.0 * L * L)),
    )


def _require_symmetrized(events):
    for ev in events:
        if not ev.symmetrized:
            raise ValueError(
                f"event {ev.name!r} is not symmetrized; call symmetrize(B) first"
            )


def constrained_partition(setup, event, threads=1):
    """Partition function restricted to the event holding in every B-translate.

    Args:
        setup: ClockSetup.
        event: symmetrized EventSpec over the (B+1) x (B+1) block.
        threads: worker threads.

    Returns:
        The constrained partition sum Z(A) at setup.params.beta (0.0 when no
        state satisfies the disseminated constraint).
    """
    _require_symmetrized([event])
    mask = _compile_placements(
        [(origin, event.tree) for origin in _all_translates(setup)], setup
    )
    total, per = _enumerate_cells(setup, {"A": mask}, threads)
    w = _CellWeights(total, setup.L, setup.params)
    z_sh = w.masked_shifted(per["A"])
    try:
        return math.exp(w.shift) * z_sh
    except OverflowError:
        return math.inf if z_sh > 0 else 0.0


@dataclass(frozen=True)
class ChessboardReport:
    """One chessboard-estimate comparison.

    lhs is the exact probability of the intersection of the placed events;
    rhs is the product of disseminated weights (Z(A_j)/Z)^((B/L)^2).
    """

    beta_J: float
    gamma: float
    L: int
    q: int
    B: int
    placements: tuple
    lhs: float
    rhs: float
    margin: float
    z_ratios: dict


def chessboard_check(setup, placements, threads=1):
    """Check one chessboard estimate by exhaustive enumeration.

    Args:
        setup: ClockSetup.
        placements: list of ((t1, t2), EventSpec) with distinct block
            origins in 0..L/B-1 and symmetrized events.
        threads: worker threads.

    Returns:
        ChessboardReport; raises RuntimeError if lhs > rhs + 1e-12.
    """
    return chessboard_suite(setup, [placements], threads)[0]


def chessboard_suite(setup, checks, threads=1):
    """Run several chessboard checks from a single enumeration sweep.

    Args:
        setup: ClockSetup.
        checks: list of placement lists (see chessboard_check).
        threads: worker threads.

    Returns:
        One ChessboardReport per entry of checks, in order.
    """
    t_range = setup.L // setup.B
    events = {}
    masks = {}
    for placements in checks:
        if not placements:
            raise ValueError("a chessboard check needs at least one placement")
        origins = [tuple(origin) for origin, _ in placements]
        if len(set(origins)) != len(origins):
            raise ValueError(f"block origins must be distinct, got {origins}")
        for origin, ev in placements:
            if not (0 <= origin[0] < t_range and 0 <= origin[1] < t_range):
                raise ValueError(f"origin {origin} outside 0..{t_range - 1}")
            _require_symmetrized([ev])
            prior = events.setdefault(ev.name, ev)
            if prior.tree != ev.tree:
                raise ValueError(f"two different events share the name {ev.name!r}")
    for name, ev in events.items():
        masks["Z::" + name] = _compile_placements(
            [(origin, ev.tree) for origin in _all_translates(setup)], setup
        )
    for i, placements in enumerate(checks):
        masks[f"lhs::{i}"] = _compile_placements(
            [(tuple(origin), ev.tree) for origin, ev in placements], setup
        )

    total, per = _enumerate_cells(setup, masks, threads)
    w = _CellWeights(total, setup.L, setup.params)
    ratios = {
        name: w.masked_shifted(per["Z::" + name]) / w.z_shifted for name in events
    }
    exponent = (setup.B / setup.L) ** 2
    reports = []
    for i, placements in enumerate(checks):
        lhs = w.masked_shifted(per[f"lhs::{i}"]) / w.z_shifted
        rhs = 1.0
        for _, ev in placements:
            rhs *= ratios[ev.name] ** exponent
        margin = rhs - lhs
        if margin < -1e-12:
            raise RuntimeError(
                f"chessboard estimate violated: lhs={lhs!r} > rhs={rhs!r} for"
                f" placements {[(o, e.name) for o, e in placements]}"
            )
        reports.append(
            ChessboardReport(
                beta_J=setup.params.beta * setup.params.J,
                gamma=setup.params.gamma,
                L=setup.L,
                q=setup.q,
                B=setup.B,
                placements=tuple((tuple(o), e.name) for o, e in placements),
                lhs=lhs,
                rhs=rhs,
                margin=margin,
                z_ratios={e.name: ratios[e.name] for _, e in placements},
            )
        )
    return reports


@dataclass(frozen=True)
class SubadditivityReport:
    """Constrained-weight subadditivity over a verified cover."""

    beta_J: float
    event: str
    cover: tuple
    exponent: float
    lhs: float
    rhs: float
    margin: float


def _verify_cover(event, cover, B, q):
    """Exhaustively confirm event -> union(cover) on the block state space."""
    n_sites = (B + 1) * (B + 1)
    n = q**n_sites
    if n > 20_000_000:
        raise ValueError(f"block state space too large to verify cover ({n} states)")
    idx = np.arange(n, dtype=np.int64)
    digits = np.empty((n, n_sites), dtype=np.int8)
    rem = idx
    for p in range(n_sites):
        digits[:, p] = rem % q
        rem = rem // q
    theta = (2.0 * math.pi / q) * digits.reshape(n, B + 1, B + 1)
    inside = _eval_tree(event.tree, theta)
    covered = np.zeros(n, dtype=bool)
    for ev in cover:
        covered |= _eval_tree(ev.tree, theta)
    bad = inside & ~covered
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        angles = np.degrees(theta[i]).round(1).tolist()
        raise ValueError(
            f"cover does not contain event {event.name!r}: witness block"
            f" angles (degrees) {angles}"
        )


def subadditivity_check(setup, event, cover, threads=1):
    """Check subadditivity of disseminated constrained weights over a cover.

    Verifies event -> union(cover) exhaustively on the block state space,
    then asserts Z(A)^((B/L)^2) <= sum_k Z(A_k)^((B/L)^2) + 1e-12.

    Args:
        setup: ClockSetup.
        event: symmetrized EventSpec to be covered.
        cover: list of symmetrized EventSpec.
        threads: worker threads.

    Returns:
        SubadditivityReport; raises RuntimeError on violation.
    """
    return subadditivity_suite(setup, [(event, list(cover))], threads)[0]


def subadditivity_suite(setup, cases, threads=1):
    """Run several subadditivity checks from a single enumeration sweep.

    Args:
        setup: ClockSetup.
        cases: list of (event, cover) pairs (see subadditivity_check); the
            names within one case must be distinct, and a name reused
            across cases must denote the same tree.
        threads: worker threads.

    Returns:
        One SubadditivityReport per case, in order.
    """
    unique = {}
    for event, cover in cases:
        _require_symmetrized([event] + list(cover))
        _verify_cover(event, cover, setup.B, setup.q)
        names = [event.name] + [ev.name for ev in cover]
        if len(set(names)) != len(names):
            raise ValueError(f"event and cover names must be distinct, got {names}")
        for ev in [event] + list(cover):
            prior = unique.setdefault(ev.name, ev)
            if prior.tree != ev.tree:
                raise ValueError(f"two different events share the name {ev.name!r}")
    masks = {
        ev.name: _compile_placements(
            [(origin, ev.tree) for origin in _all_translates(setup)], setup
        )
        for ev in unique.values()
    }
    total, per = _enumerate_cells(setup, masks, threads)
    w = _CellWeights(total, setup.L, setup.params)
    exponent = (setup.B / setup.L) ** 2

    def powered(name):
        z_sh = w.masked_shifted(per[name])
        if z_sh == 0.0:
            return 0.0
        return math.exp(exponent * (w.shift + math.log(z_sh)))

    reports = []
    for event, cover in cases:
        lhs = powered(event.name)
        rhs = math.fsum(powered(ev.name) for ev in cover)
        margin = rhs - lhs
        if margin < -1e-12:
            raise RuntimeError(
                f"subadditivity violated: lhs={lhs!r} > rhs={rhs!r} for event"
                f" {event.name!r} over {[ev.name for ev in cover]}"
            )
        reports.append(
            SubadditivityReport(
                beta_J=setup.params.beta * setup.params.J,
                event=event.name,
                cover=tuple(ev.name for ev in cover),
                exponent=exponent,
                lhs=lhs,
                rhs=rhs,
                margin=margin,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Gaussian field checks

_GAUSS_SHARD = 256


def _mode_scale(L, spec, beta_J, lam):
    k = 2.0 * math.pi * np.arange(L) / L
    d = spinwave.dispersion(k[:, None], k[None, :], spec.g)
    return np.sqrt(1.0 / (beta_J * (lam + d)))


def _field_block(L, seed, start, stop, scale):
    """Real fields for replicas [start, stop), one keyed stream per replica."""
    w = np.empty((stop - start, L, L))
    for i in range(start, stop):
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, i], dtype=np.uint64))
        )
        w[i - start] = rng.standard_normal((L, L))
    modes = np.fft.fft2(w, axes=(1, 2)) * scale[None, :, :]
    return np.fft.ifft2(modes, axes=(1, 2)).real, modes


@dataclass(frozen=True)
class GaussianBoxReport:
    """Sampled box mass and reweighted box-constrained Gaussian weight.

    All *_bound fields are arithmetic consequences of the inputs; the
    estimate fields carry sampling error.  log_q_massive is the exact
    per-site log of the massive Gaussian normalization, relative to the
    reference measure with per-mode weight sqrt(beta*J / (2*pi)).
    """

    L: int
    beta_J: float
    lam: float
    delta: float
    phi_star: float
    gamma: float
    n_samples: int
    seed: int
    box_mass: float
    box_mass_stderr: float
    site_tail: float
    site_tail_stderr: float
    log_q_massive: float
    log_q_box: float
    log_q_box_stderr: float
    chebyshev_bound: float
    product_bound_empirical: float
    product_bound_chebyshev: float
    lower_bound: float
    upper_bound: float


def gaussian_box_mass(L, spec, Delta, beta_J, n_samples, seed, threads=1):
    """Sample the massive Gaussian field and bound the box-constrained weight.

    Draws the field by independent Fourier modes with per-mode variance
    1/(beta*J*(lam + D_k)), estimates the probability that every site
    deviation stays inside (-Delta, Delta), the per-site tail, and the
    box-constrained massless weight via importance reweighting by
    exp(+(beta*J*lam/2) * sum theta^2) on the box support.

    Args:
        L: torus side, multiple of 4.
        spec: SpinWaveSpec; spec.lam must be positive.
        Delta: box halfwidth, > 0.
        beta_J: inverse temperature times coupling, with beta_J*Delta^2*lam > 1.
        n_samples: replicas, >= 2.
        seed: base seed; replica i uses the counter key (seed, i).
        threads: worker threads over fixed replica shards.

    Returns:
        GaussianBoxReport.  The reweighted estimate of the per-site log of
        the box-constrained weight must land between lower_bound and
        upper_bound whenever the sampling is sound.
    """
    model.check_lattice(L)
    lam = spec.lam
    if not lam > 0:
        raise ValueError(f"the box-mass check requires lam > 0, got {lam}")
    if not Delta > 0:
        raise ValueError(f"Delta must be positive, got {Delta}")
    if not beta_J * Delta * Delta * lam > 1:
        raise ValueError(
            "hypothesis violated: need beta_J * Delta^2 * lam > 1, got"
            f" {beta_J * Delta * Delta * lam}"
        )
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    scale = _mode_scale(L, spec, beta_J, lam)
    shards = [
        (s, min(s + _GAUSS_SHARD, n_samples))
        for s in range(0, n_samples, _GAUSS_SHARD)
    ]

    def process(shard):
        start, stop = shard
        theta, _ = _field_block(L, seed, start, stop, scale)
        absmax = np.max(np.abs(theta), axis=(1, 2))
        in_box = absmax < Delta
        sumsq = np.sum(theta * theta, axis=(1, 2))
        frac_out = np.mean(np.abs(theta) >= Delta, axis=(1, 2))
        return in_box, sumsq, frac_out

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(process, shards))
    else:
        parts = [process(s) for s in shards]
    in_box = np.concatenate([p[0] for p in parts])
    sumsq = np.concatenate([p[1] for p in parts])
    frac_out = np.concatenate([p[2] for p in parts])

    n = float(n_samples)
    box_mass = float(np.count_nonzero(in_box)) / n
    box_se = math.sqrt(box_mass * (1.0 - box_mass) / n)
    site_tail = math.fsum(frac_out) / n
    tail_var = math.fsum((frac_out - site_tail) ** 2) / (n - 1.0)
    tail_se = math.sqrt(tail_var / n)

    # Importance weights exp((beta_J*lam/2)*sumsq) on the box support, applied
    # through a common shift so extreme parameters cannot overflow.
    log_w = 0.5 * beta_J * lam * sumsq[in_box]
    log_q_massive = -spinwave.lattice_free_energy(L, spec, lam)
    if log_w.size == 0:
        log_q_box = -math.inf
        log_q_box_se = math.inf
    else:
        top = float(np.max(log_w))
        mean_sh = math.fsum(np.exp(log_w - top)) / n
        mean2_sh = math.fsum(np.exp(2.0 * (log_w - top))) / n
        var_w = max(mean2_sh - mean_sh * mean_sh, 0.0)
        log_q_box = log_q_massive + (top + math.log(mean_sh)) / (L * L)
        log_q_box_se = math.sqrt(var_w / n) / (mean_sh * L * L)

    cheb = 1.0 / (beta_J * Delta * Delta * lam)
    report = GaussianBoxReport(
        L=L,
        beta_J=beta_J,
        lam=lam,
        delta=Delta,
        phi_star=spec.phi_star,
        gamma=spec.gamma,
        n_samples=n_samples,
        seed=seed,
        box_mass=box_mass,
        box_mass_stderr=box_se,
        site_tail=site_tail,
        site_tail_stderr=tail_se,
        log_q_massive=log_q_massive,
        log_q_box=log_q_box,
        log_q_box_stderr=log_q_box_se,
        chebyshev_bound=cheb,
        product_bound_empirical=(1.0 - site_tail) ** (L * L),
        product_bound_chebyshev=max(0.0, 1.0 - cheb) ** (L * L),
        lower_bound=log_q_massive + math.log1p(-cheb),
        upper_bound=log_q_massive + 0.5 * beta_J * lam * Delta * Delta,
    )
    for p in (report.box_mass, report.site_tail):
        if not 0.0 <= p <= 1.0:
            raise RuntimeError(f"probability estimate escaped [0, 1]: {p}")
    return report


@dataclass(frozen=True)
class ModeVarianceReport:
    """Empirical per-mode variances against 1/(beta*J*(lam + D_k))."""

    L: int
    n_samples: int
    seed: int
    target: np.ndarray = field(repr=False)
    empirical: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    max_z: float


def gaussian_mode_variances(L, spec, beta_J, n_samples, seed, threads=1):
    """Estimate per-mode variances of the sampled field.

    The per-mode variance is E|fft2(theta)_k|^2 / L^2; self-conjugate modes
    (both components in {0, L/2}) are real and carry twice the estimator
    variance of the complex modes.

    Returns:
        ModeVarianceReport with the worst z-score over all modes.
    """
    model.check_lattice(L)
    if not spec.lam > 0:
        raise ValueError(f"mode-variance check requires lam > 0, got {spec.lam}")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    scale = _mode_scale(L, spec, beta_J, spec.lam)
    shards = [
        (s, min(s + _GAUSS_SHARD, n_samples))
        for s in range(0, n_samples, _GAUSS_SHARD)
    ]

    def process(shard):
        start, stop = shard
        _, modes = _field_block(L, seed, start, stop, scale)
        return np.sum(modes.real**2 + modes.imag**2, axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(process, shards))
    else:
        parts = [process(s) for s in shards]
    stacked = np.stack(parts)
    sums = np.apply_along_axis(math.fsum, 0, stacked.reshape(len(parts), -1))
    empirical = sums.reshape(L, L) / (n_samples * L * L)
    target = scale * scale
    half = np.isin(np.arange(L), [0, L // 2])
    self_conj = half[:, None] & half[None, :]
    stderr = target * np.where(self_conj, math.sqrt(2.0), 1.0) / math.sqrt(n_samples)
    max_z = float(np.max(np.abs(empirical - target) / stderr))
    return ModeVarianceReport(
        L=L,
        n_samples=n_samples,
        seed=seed,
        target=target,
        empirical=empirical,
        stderr=stderr,
        max_z=max_z,
    )


# ---------------------------------------------------------------------------
# Harmonic approximation error


@dataclass(frozen=True)
class HarmonicScan:
    """Observed supremum of the harmonic approximation error.

    sup_normalized is sup |beta*H(frame + dev) - I(dev)| / (beta*J*Delta^3*L^2)
    over random frames and i.i.d. deviations bounded by Delta; bound is the
    per-bond cubic Taylor constant (8/3)*(1 + gamma).
    """

    L: int
    delta: float
    n_samples: int
    seed: int
    sup_abs: float
    sup_normalized: float
    bound: float


def harmonic_error_scan(L, Delta, params, n_samples, seed):
    """Measure the worst harmonic-approximation error over random states.

    Args:
        L: torus side, multiple of 4.
        Delta: deviation bound, 0 < Delta < pi/2.
        params: couplings; beta*J scales both sides.
        n_samples: random (frame, deviation) draws.
        seed: counter-based stream key.

    Returns:
        HarmonicScan; raises RuntimeError if the normalized supremum
        exceeds (8/3)*(1 + gamma).
    """
    model.check_lattice(L)
    if not 0 < Delta < math.pi / 2:
        raise ValueError(f"Delta must lie in (0, pi/2), got {Delta}")
    if n_samples < 1:
        raise ValueError(f"need at least one sample, got {n_samples}")
    beta_J = params.beta * params.J
    if not beta_J > 0:
        raise ValueError(f"beta*J must be positive, got {beta_J}")
    rng = np.random.Generator(
        np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
    )
    sup = 0.0
    for _ in range(n_samples):
        frame = model.ReferenceFrame(
            theta_star=rng.uniform(0.0, 2.0 * math.pi),
            phi_star=rng.uniform(0.0, 2.0 * math.pi),
        )
        dev = rng.uniform(-Delta, Delta, size=(L, L))
        theta = model.frame_offsets(L, frame) + dev
        exact = params.beta * model.energy(theta, params)
        quad = spinwave.quadratic_form(dev, frame.phi_star, params.gamma, beta_J)
        sup = max(sup, abs(exact - quad))
    norm = sup / (beta_J * Delta**3 * L * L)
    bound = (8.0 / 3.0) * (1.0 + params.gamma)
    if norm > bound:
        raise RuntimeError(
            f"harmonic error {norm} exceeded the cubic bound {bound}"
        )
    return HarmonicScan(
        L=L,
        delta=Delta,
        n_samples=n_samples,
        seed=seed,
        sup_abs=sup,
        sup_normalized=norm,
        bound=bound,
    )
