"""Finitely supported symmetric probability measures and their convolutions."""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import groups
from .groups import ConfigError, IDENTITY, ResourceError


@dataclass(frozen=True)
class FiniteMeasure:
    """A finitely supported probability measure on a free product.

    ``masses`` maps elements (normal forms) to masses.  Construction checks
    symmetry (mu(x) = mu(x^-1)), normalization, and admissibility (the
    support generates the group; for symmetric measures it is enough that
    repeated products of support elements reach every standard generator).
    """

    spec: groups.GroupSpec
    masses: tuple  # sorted tuple of (element, mass)

    @staticmethod
    def from_dict(spec, d, check_admissible=True):
        items = [(x, float(m)) for x, m in d.items() if m != 0.0]
        for x, m in items:
            if m < 0:
                raise ConfigError("measure masses must be nonnegative")
        total = sum(m for _, m in items)
        if abs(total - 1.0) > 1e-12:
            raise ConfigError(f"measure mass {total} is not 1")
        lookup = dict(items)
        for x, m in items:
            xi = groups.inverse(spec, x)
            if abs(lookup.get(xi, 0.0) - m) > 1e-13:
                raise ConfigError("measure is not symmetric")
        mu = FiniteMeasure(spec, tuple(sorted(items, key=lambda t: groups.sort_key(t[0]))))
        if check_admissible and not mu.is_admissible():
            raise ConfigError("measure support does not generate the group")
        return mu

    def mass(self, x):
        for y, m in self.masses:
            if y == x:
                return m
        return 0.0

    @property
    def support(self):
        return [x for x, _ in self.masses]

    @property
    def lazy_mass(self):
        return self.mass(IDENTITY)

    @property
    def max_jump(self):
        return max((groups.length(self.spec, x) for x, _ in self.masses), default=0)

    @property
    def min_mass(self):
        return min(m for _, m in self.masses)

    def moving_items(self):
        """Support elements other than the identity, with masses."""
        return [(x, m) for x, m in self.masses if x != IDENTITY]

    def is_admissible(self):
        spec = self.spec
        targets = set(groups.letters(spec))
        reached = {IDENTITY}
        frontier = [IDENTITY]
        sup = [x for x, _ in self.masses]
        # symmetric support: semigroup closure = subgroup; a few rounds of
        # products must reach every standard generator
        for _ in range(2 * self.max_jump + 2):
            nxt = []
            for x in frontier:
                for g in sup:
                    y = groups.multiply(spec, x, g)
                    if y not in reached:
                        reached.add(y)
                        nxt.append(y)
            targets -= reached
            if not targets:
                return True
            frontier = nxt
        return not targets

    def is_letter_uniform(self):
        """True when the non-lazy part is uniform on the standard letters:
        exactly the walks whose tree convolutions collapse to the distance
        chain."""
        lets = set(groups.letters(self.spec))
        moving = self.moving_items()
        if {x for x, _ in moving} != lets:
            return False
        vals = {m for _, m in moving}
        return len(vals) == 1

    def exact_masses(self):
        """Masses as Fractions (exact mode; floats are taken at face value)."""
        return {x: Fraction(m).limit_denominator(10**12) for x, m in self.masses}


def make_measure(spec, kind="srw", alpha=0.0, weights=None, letter_masses=None,
                 radius=1):
    """Construct the standard measure families.

    Parameters
    ----------
    kind : str
        ``"srw"`` uniform on the standard letters; ``"lazy_srw"`` adds mass
        ``alpha`` at the identity; ``"adapted"`` mixes per-factor SRWs with
        ``weights`` (one per factor, summing to 1); ``"letters"`` takes
        explicit ``letter_masses`` in canonical letter order;
        ``"product_lazy"`` is the coordinate product of 1-d lazy(alpha) walks
        on a single Z^d factor (support is the full {-1,0,1}^d box);
        ``"ball"`` is uniform on the ball of radius ``radius`` (identity
        included, so the measure is automatically lazy and symmetric).
    """
    lets = groups.letters(spec)
    if kind == "srw":
        d = {g: 1.0 / len(lets) for g in lets}
    elif kind == "lazy_srw":
        if not 0.0 < alpha < 1.0:
            raise ConfigError("lazy_srw needs 0 < alpha < 1")
        d = {g: (1.0 - alpha) / len(lets) for g in lets}
        d[IDENTITY] = alpha
    elif kind == "adapted":
        if weights is None or len(weights) != len(spec.factors):
            raise ConfigError("adapted needs one weight per factor")
        if abs(sum(weights) - 1.0) > 1e-12 or any(w <= 0 for w in weights):
            raise ConfigError("adapted weights must be positive and sum to 1")
        d = {}
        for fi, f in enumerate(spec.factors):
            per = weights[fi] / f.n_letters
            for g in lets:
                if g[0][0] == fi:
                    d[g] = per
        if alpha:
            if not 0.0 < alpha < 1.0:
                raise ConfigError("laziness must be in (0,1)")
            d = {g: m * (1.0 - alpha) for g, m in d.items()}
            d[IDENTITY] = alpha
    elif kind == "letters":
        if letter_masses is None or len(letter_masses) != len(lets):
            raise ConfigError("letters kind needs one mass per canonical letter")
        d = {g: float(m) for g, m in zip(lets, letter_masses) if m != 0.0}
        if alpha:
            d[IDENTITY] = alpha
    elif kind == "product_lazy":
        if len(spec.factors) != 1 or spec.factors[0].kind != "Z":
            raise ConfigError("product_lazy needs a single Z^d factor")
        if not 0.0 < alpha < 1.0:
            raise ConfigError("product_lazy needs 0 < alpha < 1")
        dd = spec.factors[0].rank
        q = {0: alpha, 1: (1.0 - alpha) / 2.0, -1: (1.0 - alpha) / 2.0}
        d = {}
        for flat in range(3**dd):
            c = []
            t = flat
            for _ in range(dd):
                c.append(t % 3 - 1)
                t //= 3
            mass = 1.0
            for v in c:
                mass *= q[v]
            payload = tuple(c)
            x = IDENTITY if all(v == 0 for v in payload) else ((0, payload),)
            d[x] = d.get(x, 0.0) + mass
        return FiniteMeasure.from_dict(spec, d)
    elif kind == "ball":
        if radius < 1:
            raise ConfigError("ball kind needs radius >= 1")
        els = groups.ball_elements(spec, radius)
        d = {g: 1.0 / len(els) for g in els}
    else:
        raise ConfigError(f"unknown measure kind {kind!r}")
    return FiniteMeasure.from_dict(spec, d)


def is_product_measure(mu):
    """Detect an exact coordinate-product structure on a single Z^d factor.

    Returns the list of 1-d marginals (each a dict offset -> mass) when the
    measure factorizes exactly, else None.  Convolution powers of product
    measures factor coordinatewise, which downstream local-limit runs exploit.
    """
    spec = mu.spec
    if len(spec.factors) != 1 or spec.factors[0].kind != "Z":
        return None
    d = spec.factors[0].rank
    if d == 1:
        return [{(x[0][1][0] if x else 0): m for x, m in mu.masses}]
    marg = [dict() for _ in range(d)]
    for x, m in mu.masses:
        c = x[0][1] if x else (0,) * d
        for ax in range(d):
            marg[ax][c[ax]] = marg[ax].get(c[ax], 0.0) + m
    # check the outer product reproduces the measure exactly
    for x, m in mu.masses:
        c = x[0][1] if x else (0,) * d
        prod = 1.0
        for ax in range(d):
            prod *= marg[ax][c[ax]]
        if abs(prod - m) > 1e-13:
            return None
    support = {x[0][1] if x else (0,) * d for x, _ in mu.masses}
    expect = 1
    for ax in range(d):
        expect *= len(marg[ax])
    if len(support) != expect:
        return None
    return marg


# ---------------------------------------------------------------------------
# convolution tables


@dataclass
class ConvolutionTable:
    """Rows ``mu^{*n}`` restricted to a window.

    ``rows[n]`` is the window-restricted n-fold convolution (an undercount of
    the true one once paths can exit).  ``exit_flow[n]`` is the exact mass
    that stepped outside the window at step n, so ``mass_defect(n) = 1 -
    rows[n].sum()`` equals the cumulated exits.  Row ``n`` is exact at window
    entries ``x`` with ``n <= 2*W + 1 - |x|`` (an exit-and-return path needs
    at least ``(W+1) + (W+1-|x|)`` steps); rows with ``cumulative_exit == 0``
    are exact everywhere.
    """

    window: object
    rows: list
    exit_flow: list

    def mass_defect(self, n):
        return float(sum(self.exit_flow[: n + 1]))

    def row(self, n):
        return self.rows[n]

    def value(self, n, x):
        i = self.window.index_of(x)
        return 0.0 if i < 0 else float(self.rows[n][i])


def support_moves(window, mu):
    """Window move tables for each non-identity support element of ``mu``.

    Letter tables are composed along a letter decomposition, with -1
    propagating, so one table per support element results.  Returns
    ``(moves (m, size) int32, masses (m,), lazy_mass)``.
    """
    spec = mu.spec
    if isinstance(window, int):
        window = groups.ball(spec, window)
    lets = groups.letters(spec)
    letter_tables = window.move_tables()
    cache = {}
    rows = []
    masses = []
    for x, m in mu.moving_items():
        word = tuple(groups._tree_letters_of(spec, x)) if spec.is_tree else None
        if word is None:
            # generic: decompose into letters by greedy normal-form walk
            word = []
            cur = x
            while cur != IDENTITY:
                for li, g in enumerate(lets):
                    nxt = groups.multiply(spec, g, cur)
                    if groups.length(spec, nxt) < groups.length(spec, cur):
                        # g^-1 is the leading letter of cur
                        word.append(lets.index(groups.inverse(spec, g)))
                        cur = nxt
                        break
            word = tuple(word)
        if word not in cache:
            t = None
            for l in word:
                lt = letter_tables[l]
                if t is None:
                    t = lt.copy()
                else:
                    valid = t >= 0
                    nt = np.full_like(t, -1)
                    nt[valid] = lt[t[valid]]
                    t = nt
            cache[word] = t
        rows.append(cache[word])
        masses.append(m)
    moves = np.ascontiguousarray(np.stack(rows)) if rows else np.zeros((0, window.size), np.int32)
    return moves, np.array(masses), mu.lazy_mass


def convolution_powers(mu, n_max, window, r_weight=None):
    """Window-restricted convolution powers of ``mu`` up to ``n_max``.

    With ``r_weight`` set, rows are ``r^n mu^{*n}`` (used by Green series).
    """
    from .kernels import conv_step

    if isinstance(window, int):
        window = groups.ball(mu.spec, window)
    moves, masses, lazy = support_moves(window, mu)
    rows = [np.zeros(window.size)]
    e_idx = window.index_of(IDENTITY)
    rows[0][e_idx] = 1.0
    exits = [0.0]
    scale = 1.0 if r_weight is None else float(r_weight)
    cur = rows[0]
    for _ in range(n_max):
        cur, ex = conv_step(cur, moves, masses * scale, lazy * scale)
        rows.append(cur)
        exits.append(ex)
    return ConvolutionTable(window, rows, exits)


def convolution_powers_exact(mu, n_max):
    """Exact-rational convolution powers as dicts element -> Fraction.

    Cross-check mode for small n (cost grows like support^n); masses are
    rationalized via limit_denominator, which is exact for the standard
    measure families (dyadic or small-denominator masses).
    """
    if n_max > 12:
        raise ResourceError("exact convolution mode is limited to n_max <= 12")
    spec = mu.spec
    base = mu.exact_masses()
    rows = [{IDENTITY: Fraction(1)}]
    for _ in range(n_max):
        prev = rows[-1]
        nxt = {}
        for x, px in prev.items():
            for g, pg in base.items():
                y = groups.multiply(spec, x, g)
                nxt[y] = nxt.get(y, Fraction(0)) + px * pg
        rows.append(nxt)
    return rows


def sample_path(mu, n_steps, seed, start=IDENTITY):
    """Sample a walk trajectory; reproducible for a fixed seed.

    Returns the list of visited elements (length ``n_steps + 1``).
    """
    rng = np.random.default_rng(seed)
    items = list(mu.masses)
    probs = np.array([m for _, m in items])
    probs = probs / probs.sum()
    steps = rng.choice(len(items), size=n_steps, p=probs)
    path = [start]
    cur = start
    for si in steps:
        cur = groups.multiply(mu.spec, cur, items[si][0])
        path.append(cur)
    return path
