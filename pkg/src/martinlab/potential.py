"""Weighted Green functions and spectral analysis for finitely supported
symmetric walks.

Every quantity is returned as a bracket [lower, upper].  Lower ends are
exact partial sums of the defining series (window undercounts included
in the reported defect).  Upper ends add a geometric tail bound: for
r < 1 the ratio r is certified outright (return coefficients of a
probability measure never exceed 1); for r >= 1 the ratio uses the
extrapolated decay-rate estimate and the bracket carries
``certified=False``.  "Certified" throughout means rigorous at the
level of ordinary floating-point arithmetic, not interval arithmetic.

Engines, chosen automatically:

- radial: free products whose Cayley graph is a tree carrying a
  letter-uniform measure; convolution powers depend on distance only,
  so a birth-death recursion over spheres is exact out to thousands of
  steps.
- lattice: single Z^d factor; box-window convolution with exact exit
  accounting, plus a coordinate-product fast path for product measures.
- dense: everything else; ball-window convolution or a conjugate-
  gradient solve of (I - rP) with exit-flow accounting.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import groups, measures
from .groups import ConfigError, NumericalError, ResourceError
from .kernels import cg_green_row, conv_step, lanczos_extreme, lattice_conv_step, radial_step

DEFAULT_EPS_LADDER = (1e-1, 1e-2, 1e-3)


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class GreenEstimate:
    """Bracket for a Green-type series value."""

    lower: float
    upper: float
    r: float
    n_truncation: int
    tail_bound_method: str
    certified: bool = True
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not (self.lower <= self.upper or math.isnan(self.upper)):
            raise NumericalError(f"inverted bracket [{self.lower}, {self.upper}]")

    @property
    def width(self):
        return self.upper - self.lower

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    def overlaps(self, other):
        return self.lower <= other.upper and other.lower <= self.upper


@dataclass(frozen=True)
class SpectralRadiusEstimate:
    """Bracket for the radius of convergence R of the Green series.

    ``upper`` is certified: it is the reciprocal of a genuine Rayleigh
    quotient of the step operator (which can only underestimate the
    operator norm).  ``lower`` is the reciprocal of a Richardson
    extrapolation of the same certified quantities and is an estimate,
    not a bound; the subadditive evidence sequence is reported so the
    monotone (but slower) bounds remain available.
    """

    lower: float
    upper: float
    evidence: tuple  # ((2n, mu^{*2n}(e)^{1/2n}), ...)
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def rho_lower(self):
        """Certified lower bound on the decay rate rho = 1/R."""
        return 1.0 / self.upper

    @property
    def rho_upper_estimate(self):
        """Extrapolated (uncertified) upper estimate of rho."""
        return 1.0 / self.lower


# ---------------------------------------------------------------------------
# exact return/point series engines


def _radial_params(mu):
    """(s, lazy) for a letter-uniform measure on a tree Cayley graph."""
    s = mu.spec.n_letters
    return s, mu.lazy_mass


def _is_radial(mu):
    return mu.spec.is_tree and mu.is_letter_uniform()


def radial_profile(mu, n_max, k_max=None):
    """Exact sphere-mass rows M_n(k) for a radial walk, n <= n_max.

    Returns (per_point, returns): ``per_point[n, k] = mu^{*n}(x)`` for any
    |x| = k <= k_max, and ``returns[n] = mu^{*n}(e)``.  The window extends
    past n_max so no mass ever reaches the boundary: every row is exact.
    """
    s, lazy = _radial_params(mu)
    W = n_max + 2
    if k_max is None:
        k_max = n_max
    k_max = min(k_max, n_max)
    up = (1.0 - lazy) * (s - 1.0) / s
    down = (1.0 - lazy) / s
    vals = np.zeros(W + 1)
    vals[0] = 1.0
    # sphere sizes s(s-1)^{k-1}; divide masses out to get per-point values
    log_sphere = np.zeros(k_max + 1)
    if k_max >= 1:
        log_sphere[1:] = math.log(s) + np.arange(k_max) * math.log(s - 1.0)
    inv_sphere = np.exp(-log_sphere)
    per_point = np.zeros((n_max + 1, k_max + 1))
    returns = np.zeros(n_max + 1)
    per_point[0, 0] = 1.0
    returns[0] = 1.0
    for n in range(1, n_max + 1):
        vals, exit_mass = radial_step(vals, up, down, lazy)
        if exit_mass != 0.0:
            raise NumericalError("radial window leaked; horizon sizing bug")
        per_point[n] = vals[: k_max + 1] * inv_sphere
        returns[n] = vals[0]
    return per_point, returns


def _lattice_box(mu, n_max, budget=4 * 10**7):
    """Box half-width for a Z^d window: exact horizon if affordable."""
    axes = mu.spec.factors[0].rank
    jump = mu.max_jump
    want = n_max * jump + 1
    cap = int(budget ** (1.0 / axes) - 1) // 2
    return min(want, max(cap, 4 * jump))


def lattice_series(mu, n_max, targets, window=None):
    """Per-step masses at ``targets`` (coordinate tuples) on a Z^d box.

    Returns (vals (n_max+1, len(targets)), cum_exit (n_max+1,)): windowed
    row values plus the exact cumulated exit mass, so
    ``true value - windowed value`` lies in [0, cum_exit[n]] for each row.
    """
    marg = measures.is_product_measure(mu)
    d = mu.spec.factors[0].rank
    if marg is not None:
        # coordinates evolve independently: exact per-axis convolution
        W1 = n_max * max(max(abs(o) for o in m) for m in marg) + 2
        rows_ax = []
        for ax in range(d):
            row = np.zeros((n_max + 1, 2 * W1 + 1))
            row[0, W1] = 1.0
            offs = sorted(marg[ax].items())
            cur = row[0]
            for n in range(1, n_max + 1):
                nxt = np.zeros_like(cur)
                for o, m in offs:
                    if o == 0:
                        nxt += m * cur
                    elif o > 0:
                        nxt[o:] += m * cur[:-o]
                    else:
                        nxt[:o] += m * cur[-o:]
                row[n] = nxt
                cur = nxt
            rows_ax.append(row)
        vals = np.ones((n_max + 1, len(targets)))
        for j, t in enumerate(targets):
            for ax in range(d):
                vals[:, j] *= rows_ax[ax][:, W1 + t[ax]]
        return vals, np.zeros(n_max + 1)
    W = window if window is not None else _lattice_box(mu, n_max)
    box = groups.LatticeBall(mu.spec, W)
    offs = []
    mss = []
    lazy = 0.0
    for x, m in mu.masses:
        if x == groups.IDENTITY:
            lazy = m
        else:
            offs.append(x[0][1])
            mss.append(m)
    offs = np.array(offs, dtype=np.int64).reshape(len(offs), d)
    mss = np.array(mss)
    cur = np.zeros((2 * W + 1,) * d)
    cur[(W,) * d] = 1.0
    idxs = [tuple(W + c for c in t) for t in targets]
    vals = np.zeros((n_max + 1, len(targets)))
    vals[0] = [cur[i] for i in idxs]
    cum_exit = np.zeros(n_max + 1)
    leaked = 0.0
    for n in range(1, n_max + 1):
        cur, ex = lattice_conv_step(cur, offs, mss, lazy)
        leaked += ex
        cum_exit[n] = leaked
        vals[n] = [cur[i] for i in idxs]
    return vals, cum_exit


def dense_series(mu, n_max, targets, window_radius):
    """Per-step masses at ``targets`` (group elements) through a ball window.

    Same contract as lattice_series; works for any group family.
    """
    win = groups.ball(mu.spec, window_radius)
    moves, masses, lazy = measures.support_moves(win, mu)
    cur = np.zeros(win.size)
    cur[win.index_of(groups.IDENTITY)] = 1.0
    idxs = [win.index_of(t) for t in targets]
    if any(i < 0 for i in idxs):
        raise ConfigError("target outside the window ball")
    vals = np.zeros((n_max + 1, len(targets)))
    vals[0] = cur[idxs]
    cum_exit = np.zeros(n_max + 1)
    leaked = 0.0
    for n in range(1, n_max + 1):
        cur, ex = conv_step(cur, moves, masses, lazy)
        leaked += ex
        cum_exit[n] = leaked
        vals[n] = cur[idxs]
    return vals, cum_exit


_profile_cache = {}


def _cached_radial(mu, n_max, k_max):
    key = (mu, n_max, k_max)
    hit = _profile_cache.get(key)
    if hit is None:
        hit = radial_profile(mu, n_max, k_max)
        if len(_profile_cache) > 8:
            _profile_cache.clear()
        _profile_cache[key] = hit
    return hit


def point_series(mu, x, y, n_max):
    """(vals, cum_exit) for the single target x^{-1}y, engine-dispatched."""
    target = groups.multiply(mu.spec, groups.inverse(mu.spec, x), y)
    k = groups.length(mu.spec, target)
    if _is_radial(mu):
        per_point, _ = _cached_radial(mu, n_max, k_max=k)
        return per_point[:, k], np.zeros(n_max + 1)
    if len(mu.spec.factors) == 1 and mu.spec.factors[0].kind == "Z":
        coord = target[0][1] if target else (0,) * mu.spec.factors[0].rank
        vals, cum = lattice_series(mu, n_max, [coord])
        return vals[:, 0], cum
    radius = min(_dense_radius(mu), max(4, n_max * mu.max_jump + 1))
    vals, cum = dense_series(mu, n_max, [target], radius)
    return vals[:, 0], cum


def _dense_radius(mu, budget=4 * 10**6):
    """Largest ball radius within the element budget for this group."""
    spec = mu.spec
    r = 1
    while True:
        try:
            size = _ball_size_estimate(spec, r + 1)
        except OverflowError:
            return r
        if size > budget:
            return r
        r += 1


def _ball_size_estimate(spec, radius):
    if spec.is_tree:
        s = spec.n_letters
        return 1 + s * ((s - 1) ** radius - 1) // (s - 2) if s > 2 else 2 * radius + 1
    # crude upper estimate: letters^radius growth capped
    return spec.n_letters**radius


# ---------------------------------------------------------------------------
# tail bounds and bracket assembly


def _tail_geometric(r, n_trunc, rho_hi):
    """sum_{n > n_trunc} (r rho)^n, with coefficients bounded by rho^n."""
    q = r * rho_hi
    if q >= 1.0:
        return math.inf
    return q ** (n_trunc + 1) / (1.0 - q)


def _rho_bound_for(mu, r):
    """(rho_hi, method, certified) used by tail bounds at weight r."""
    if r < 1.0:
        return 1.0, "geometric(rho<=1)", True
    est = spectral_radius(mu)
    return est.rho_upper_estimate, "geometric(rho-extrapolated)", False


def _assemble(mu, r, vals, cum_exit, n_max, extra_meta=None):
    n = np.arange(len(vals))
    weights = np.power(float(r), n)
    partial_lo = float(np.dot(weights, vals))
    defect = float(np.dot(weights, cum_exit))
    rho_hi, method, certified = _rho_bound_for(mu, r)
    tail = _tail_geometric(r, n_max, rho_hi)
    upper = partial_lo + defect + tail
    meta = {"window_defect": defect, "rho_hi": rho_hi}
    if extra_meta:
        meta.update(extra_meta)
    return GreenEstimate(
        lower=partial_lo,
        upper=upper,
        r=float(r),
        n_truncation=n_max,
        tail_bound_method=method if math.isfinite(upper) else "none(divergent-weight)",
        certified=certified and math.isfinite(upper),
        meta=meta,
    )


def default_n_max(mu, r, x=None, y=None, width_target=1e-10):
    """Truncation that brings the geometric tail under width_target."""
    rho_hi, _, _ = _rho_bound_for(mu, r)
    q = r * rho_hi
    if q >= 1.0:
        return 4000
    n = int(math.log(width_target * (1.0 - q)) / math.log(q)) + 1
    if x is not None and y is not None:
        n = max(n, (groups.distance(mu.spec, x, y) + 1) // max(1, mu.max_jump))
    return max(8, min(n, 100000))


def green(mu, r, x=groups.IDENTITY, y=groups.IDENTITY, n_max=None):
    """Bracket for G_r(x,y) = sum_n r^n mu^{*n}(x^{-1}y).

    The lower end is the exact partial sum up to n_max (window undercount
    is pushed into the upper end through the exit-flow defect).
    """
    if r <= 0:
        raise ConfigError("weight r must be positive")
    if n_max is None:
        n_max = default_n_max(mu, r, x, y)
    dist = groups.distance(mu.spec, x, y)
    if n_max * mu.max_jump < dist:
        raise ConfigError("n_max too small to reach y from x")
    vals, cum_exit = point_series(mu, x, y, n_max)
    return _assemble(mu, r, vals, cum_exit, n_max)


def martin_kernel(mu, r, x, y, n_max=None):
    """Bracket for K_r(x,y) = G_r(x,y) / G_r(e,y); exactly 1 at x = e."""
    if x == groups.IDENTITY:
        return GreenEstimate(1.0, 1.0, float(r), 0, "exact(definition)", True)
    num = green(mu, r, x, y, n_max)
    den = green(mu, r, groups.IDENTITY, y, n_max)
    lower = num.lower / den.upper
    upper = num.upper / den.lower if den.lower > 0 else math.inf
    return GreenEstimate(
        lower,
        upper,
        float(r),
        num.n_truncation,
        f"quotient({num.tail_bound_method})",
        num.certified and den.certified,
        meta={"numerator": num, "denominator": den},
    )


# ---------------------------------------------------------------------------
# restricted Green functions


def green_restricted(mu, r, x, y, allowed, n_max=None, method="solve"):
    """Bracket for the Green series over paths whose intermediate points
    stay in ``allowed`` (a finite collection of elements; x, y free).

    method "solve": exact absorbing-chain linear solve on allowed (value
    is exact up to solver residual, folded into the bracket).
    method "series": truncated masked power sums with a geometric tail.
    """
    spec = mu.spec
    allowed = list(dict.fromkeys(allowed))
    direct = 1.0 if x == y else 0.0
    step = r * mu.mass(groups.multiply(spec, groups.inverse(spec, x), y))
    if not allowed:
        val = direct + step
        return GreenEstimate(val, val, float(r), 1, "exact(empty-interior)", True)
    index = {g: i for i, g in enumerate(allowed)}
    m = len(allowed)
    # boundary injection/extraction vectors
    u = np.zeros(m)
    v = np.zeros(m)
    for g, i in index.items():
        u[i] = r * mu.mass(groups.multiply(spec, groups.inverse(spec, x), g))
        v[i] = r * mu.mass(groups.multiply(spec, groups.inverse(spec, g), y))
    if method == "solve":
        interior = _restricted_solve(mu, r, allowed, index, u)
        val = direct + step + float(np.dot(interior, v))
        res = 1e-11 * (1.0 + abs(val))
        return GreenEstimate(
            val - res, val + res, float(r), -1, "linear-solve", True,
            meta={"interior_size": m},
        )
    if method != "series":
        raise ConfigError(f"unknown restricted-Green method {method!r}")
    if n_max is None:
        n_max = default_n_max(mu, r)
    P_rows = _restricted_moves(mu, allowed, index)
    cur = u.copy()
    total = direct + step
    increments = []
    for _ in range(2, n_max + 1):
        increments.append(float(np.dot(cur, v)))
        nxt = np.zeros(m)
        for (js, ks), mass in P_rows:
            np.add.at(nxt, ks, r * mass * cur[js])
        cur = nxt
    increments.append(float(np.dot(cur, v)))
    total += sum(increments)
    # tail ratio: operator norm of rP_allowed is at most r for r < 1
    if r < 1.0:
        tail = float(np.sum(np.abs(cur))) * r * r / (1.0 - r)
        certified = True
        methodname = "series+geometric(rho<=1)"
    else:
        lat = [i for i in increments[-6:] if i > 0]
        q = 0.0
        for aa, bb in zip(lat, lat[1:]):
            q = max(q, bb / aa)
        if q < 1.0:
            last = increments[-1] if increments else 0.0
            tail = last * q / (1.0 - q)
            certified = False
            methodname = "series+ratio-extrapolated"
        else:
            tail = math.inf
            certified = False
            methodname = "series(no tail bound)"
    return GreenEstimate(total, total + tail, float(r), n_max, methodname, certified)


def _restricted_moves(mu, allowed, index):
    """Sparse step structure on the allowed set: [( (from_idx, to_idx), mass )]."""
    spec = mu.spec
    rows = []
    for g, mass in mu.moving_items():
        js = []
        ks = []
        for z, i in index.items():
            w = groups.multiply(spec, z, g)
            k = index.get(w)
            if k is not None:
                js.append(i)
                ks.append(k)
        if js:
            rows.append(((np.array(js), np.array(ks)), mass))
    return rows


def _restricted_solve(mu, r, allowed, index, rhs):
    """Solve (I - rP_A)^T w = rhs on the allowed set.

    Dense for small sets, conjugate gradient on masked move tables when the
    allowed set lives inside an enumerated ball (detected by size).
    """
    m = len(allowed)
    if m <= 3000:
        P = np.zeros((m, m))
        for (js, ks), mass in _restricted_moves(mu, allowed, index):
            np.add.at(P, (ks, js), mass)
        try:
            return np.linalg.solve(np.eye(m) - r * P, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"restricted solve singular at r={r}") from exc
    return _restricted_cg(mu, r, allowed, index, rhs)


def _restricted_cg(mu, r, allowed, index, rhs):
    spec = mu.spec
    radius = max(groups.length(spec, g) for g in allowed) + 1
    win = groups.ball(spec, radius)
    moves, masses, lazy = measures.support_moves(win, mu)
    keep = np.full(win.size, -1, dtype=np.int64)
    for g, i in index.items():
        keep[win.index_of(g)] = i
    sub_moves = np.full((moves.shape[0], len(allowed)), -1, dtype=np.int32)
    src = np.array([win.index_of(g) for g in allowed])
    for l in range(moves.shape[0]):
        tgt = moves[l][src]
        ok = tgt >= 0
        mapped = np.where(ok, keep[np.where(ok, tgt, 0)], -1)
        sub_moves[l] = mapped.astype(np.int32)
    try:
        sol, _, _ = cg_green_row(sub_moves, masses, r, rhs, lazy_mass=lazy)
    except FloatingPointError as exc:
        raise NumericalError(f"restricted solve diverged at r={r}: {exc}") from exc
    return sol


# ---------------------------------------------------------------------------
# window-restricted Green rows (batch route)


_WINDOW_CACHE = {}


def green_window(mu, r, targets, radius, tol=1e-12):
    """Window-restricted Green values G_W(e, t) for many targets at once.

    One conjugate-gradient solve of (I - rP_W) x = delta_e on ball(radius)
    yields the whole row; each value is a lower bound of G_r(e, t) that is
    nondecreasing in the radius (more interior paths), so two radii give a
    convergence diagnostic.  This is the workhorse for ratio scans where
    per-target series brackets would be swamped by window exit flow.
    """
    key = (mu, float(r), radius)
    hit = _WINDOW_CACHE.get(key)
    if hit is None:
        win = groups.ball(mu.spec, radius)
        moves, masses, lazy = measures.support_moves(win, mu)
        rhs = np.zeros(win.size)
        rhs[win.index_of(groups.IDENTITY)] = 1.0
        try:
            row, n_iter, residual = cg_green_row(moves, masses, r, rhs, tol=tol,
                                                 lazy_mass=lazy)
        except FloatingPointError as exc:
            raise NumericalError(f"window solve failed at r={r}: {exc}") from exc
        hit = (win, row, {"iterations": n_iter, "residual": residual})
        if len(_WINDOW_CACHE) > 3:
            _WINDOW_CACHE.clear()
        _WINDOW_CACHE[key] = hit
    win, row, info = hit
    out = {}
    for t in targets:
        i = win.index_of(t)
        if i < 0:
            raise ConfigError("target outside the window ball")
        out[t] = float(row[i])
    return out, dict(info)


# ---------------------------------------------------------------------------
# spectral radius


def _return_series(mu, n_max):
    """Exact mu^{*n}(e) for n <= n_exact (reports n_exact)."""
    if _is_radial(mu):
        _, returns = _cached_radial(mu, n_max, k_max=0)
        return returns, n_max
    if len(mu.spec.factors) == 1 and mu.spec.factors[0].kind == "Z":
        d = mu.spec.factors[0].rank
        vals, cum = lattice_series(mu, n_max, [(0,) * d])
        exact_to = n_max
        nz = np.nonzero(cum > 0)[0]
        if nz.size:
            exact_to = int(nz[0]) - 1
        return vals[: exact_to + 1, 0], exact_to
    radius = _dense_radius(mu)
    n_fit = min(n_max, max(4, (2 * radius) // max(1, mu.max_jump)))
    vals, cum = dense_series(mu, n_fit, [groups.IDENTITY], radius)
    exact_to = n_fit
    nz = np.nonzero(cum > 0)[0]
    if nz.size:
        exact_to = int(nz[0]) - 1
    return vals[: exact_to + 1, 0], exact_to


def _radial_rayleigh(mu, n_points=20000):
    """Certified lower bound on rho for radial walks: top eigenvalue of the
    sphere-weighted birth-death chain, i.e. the Rayleigh supremum over
    radial l^2 vectors supported in a huge ball."""
    from scipy.linalg import eigh_tridiagonal

    s, lazy = _radial_params(mu)
    diag = np.full(n_points + 1, lazy)
    off = np.full(n_points, (1.0 - lazy) * math.sqrt(s - 1.0) / s)
    off[0] = (1.0 - lazy) / math.sqrt(s)
    w = eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                         select_range=(n_points, n_points))
    return float(w[0])


def _window_ritz(mu, radius, n_iter=80):
    win = groups.ball(mu.spec, radius)
    moves, masses, lazy = measures.support_moves(win, mu)
    return lanczos_extreme(moves, masses, win.size, n_iter, lazy)


_SPECTRAL_CACHE = {}


def spectral_radius(mu, n_max=60):
    """Bracket for R with evidence series (2n, mu^{*2n}(e)^{1/2n}).

    upper: 1 / (best certified Rayleigh bound on rho) — Rayleigh quotients
    only ever undershoot the operator norm, so this end is safe.
    lower: 1 / (Richardson extrapolation of window Rayleigh values and
    return ratios), clipped to [certified rho, 1]; an estimate, flagged.
    """
    key = (mu, n_max)
    hit = _SPECTRAL_CACHE.get(key)
    if hit is not None:
        return hit
    returns, n_exact = _return_series(mu, n_max)
    evens = [(n, returns[n]) for n in range(2, n_exact + 1, 2) if returns[n] > 0]
    evidence = tuple((n, v ** (1.0 / n)) for n, v in evens)
    rho_lo = max((root for _, root in evidence), default=0.0)
    # return-ratio lower bounds (moment monotonicity): a_{2n+2}/a_{2n} <= rho^2
    ratios = [b / a for (_, a), (_, b) in zip(evens, evens[1:])]
    if ratios:
        rho_lo = max(rho_lo, math.sqrt(max(ratios)))
    meta = {"n_exact": n_exact, "subadditive_upper": 1.0 / rho_lo if rho_lo else math.inf}
    # certified Rayleigh strengthening
    ritz_pair = None
    if _is_radial(mu):
        rho_ray = _radial_rayleigh(mu)
        meta["rayleigh"] = ("radial-chain", rho_ray)
        rho_lo = max(rho_lo, rho_ray)
        W = min(12, _dense_radius(mu))
        ritz_pair = (W, _window_ritz(mu, W)), (W - 2, _window_ritz(mu, W - 2))
    else:
        W = _ritz_radius(mu)
        if W >= 3:
            hi = _window_ritz(mu, W)
            lo = _window_ritz(mu, W - 2)
            meta["rayleigh"] = (f"window-ritz(W={W})", hi)
            rho_lo = max(rho_lo, hi)
            ritz_pair = (W, hi), (W - 2, lo)
    # extrapolated upper estimate for rho
    cands = []
    if ritz_pair is not None:
        (w1, s1), (w2, s2) = ritz_pair
        if s1 > s2:
            coef = (1.0 / w2**2) / (1.0 / w2**2 - 1.0 / w1**2)
            cands.append(s1 + coef * (s1 - s2))
    if len(ratios) >= 3:
        e1 = [ratios[i] + (i + 1) * (ratios[i] - ratios[i - 1]) for i in range(1, len(ratios))]
        cands.append(math.sqrt(max(1e-300, max(e1[-3:]))))
    rho_hi = max(cands) if cands else 1.0
    rho_hi = min(1.0, max(rho_hi, rho_lo * (1.0 + 1e-12)))
    est = SpectralRadiusEstimate(
        lower=1.0 / rho_hi, upper=1.0 / rho_lo if rho_lo > 0 else math.inf,
        evidence=evidence, meta=meta,
    )
    if len(_SPECTRAL_CACHE) > 16:
        _SPECTRAL_CACHE.clear()
    _SPECTRAL_CACHE[key] = est
    return est


def _ritz_radius(mu, budget=3 * 10**5):
    spec = mu.spec
    r = 2
    while _ball_size_estimate(spec, r + 1) <= budget:
        r += 1
    return r


# ---------------------------------------------------------------------------
# Green derivative identity


@dataclass(frozen=True)
class DerivativePair:
    """Both sides of d/dr (r G_r(g,g')) = sum_z G_r(g,z) G_r(z,g')."""

    finite_difference: GreenEstimate
    double_sum: GreenEstimate

    @property
    def overlap(self):
        return self.finite_difference.overlaps(self.double_sum)

    @property
    def gap(self):
        a, b = self.finite_difference, self.double_sum
        return max(a.lower - b.upper, b.lower - a.upper, 0.0)


def green_derivative(mu, r, g=groups.IDENTITY, gp=groups.IDENTITY,
                     ball_radius=None, n_max=None, fd_step=None):
    """Certified brackets for both sides of the Green-derivative identity.

    Raises NumericalError when the brackets fail to overlap (internal
    consistency failure: the identity holds exactly in exact arithmetic).
    """
    est = spectral_radius(mu)
    if r >= est.lower:
        raise ConfigError(f"r={r} not strictly below the decay-certified range {est.lower}")
    if n_max is None:
        n_max = default_n_max(mu, r, g, gp, width_target=1e-11)
    if fd_step is None:
        fd_step = min(1e-3, 0.05 * r, 0.2 * (est.lower - r))
    h = fd_step
    g_plus = green(mu, r + h, g, gp, n_max)
    g_minus = green(mu, r - h, g, gp, n_max)
    rho_hi, _, certified = _rho_bound_for(mu, r + h)
    q = (r + h) * rho_hi
    if q < 1.0:
        # |third derivative of rG| <= 6 rho^2 / (1 - r rho)^4 termwise
        disc = (h * h / 6.0) * 6.0 * rho_hi**2 / (1.0 - q) ** 4
    else:
        disc = math.inf
        certified = False
    fd_lo = ((r + h) * g_plus.lower - (r - h) * g_minus.upper) / (2 * h) - disc
    fd_hi = ((r + h) * g_plus.upper - (r - h) * g_minus.lower) / (2 * h) + disc
    fd = GreenEstimate(fd_lo, fd_hi, float(r), n_max,
                       "central-difference+curvature-bound",
                       certified and g_plus.certified and g_minus.certified,
                       meta={"h": h, "discretization_bound": disc})
    ds = _double_green_sum(mu, r, g, gp, ball_radius, n_max)
    pair = DerivativePair(fd, ds)
    if not pair.overlap:
        raise NumericalError(
            f"Green-derivative identity violated: fd=[{fd.lower},{fd.upper}] "
            f"sum=[{ds.lower},{ds.upper}] gap={pair.gap}")
    return pair


def _double_green_sum(mu, r, g, gp, ball_radius, n_max):
    """Ball-truncated sum_z G_r(g,z) G_r(z,g') with a certified tail.

    Tail: z outside ball(B) forces n >= (B-|g|)/J and m >= (B-|g'|)/J in the
    double series; symmetry collapses the z-sum to return-type coefficients
    (sum_z mu^{*n}(g^{-1}z) mu^{*m}(z^{-1}g') = mu^{*(n+m)}(g^{-1}g')), so the
    tail is sum_{s >= S} (s+1) r^s mu^{*s}(g^{-1}g'), evaluated exactly to the
    return horizon and geometrically beyond.
    """
    spec = mu.spec
    if ball_radius is None:
        ball_radius = min(_dense_radius(mu), max(6, 2 * mu.max_jump + 4))
    elements = groups.ball_elements(spec, ball_radius)
    total_lo = 0.0
    total_hi = 0.0
    if _is_radial(mu):
        kg = groups.length(spec, g)
        kp = groups.length(spec, gp)
        k_max = ball_radius + max(kg, kp)
        per_point, _ = _cached_radial(mu, n_max, k_max=k_max)
        w = np.power(float(r), np.arange(n_max + 1))
        gamma = w @ per_point  # gamma[k] = partial Green at distance k
        tail_pt = np.zeros(k_max + 1)
        rho_hi, _, certified = _rho_bound_for(mu, r)
        q = r * rho_hi
        for k in range(k_max + 1):
            tail_pt[k] = q ** max(n_max + 1, k) / (1.0 - q) if q < 1 else math.inf
        for z in elements:
            d1 = groups.distance(spec, g, z)
            d2 = groups.distance(spec, z, gp)
            total_lo += gamma[d1] * gamma[d2]
            total_hi += (gamma[d1] + tail_pt[d1]) * (gamma[d2] + tail_pt[d2])
    else:
        certified = True
        inv = groups.inverse
        mul = groups.multiply
        targets1 = [mul(spec, inv(spec, g), z) for z in elements]
        targets2 = [mul(spec, inv(spec, z), gp) for z in elements]
        uniq = list(dict.fromkeys(targets1 + targets2))
        if len(mu.spec.factors) == 1 and mu.spec.factors[0].kind == "Z":
            coords = [t[0][1] if t else (0,) * mu.spec.factors[0].rank for t in uniq]
            vals, cum = lattice_series(mu, n_max, coords)
        else:
            rad = max(groups.length(spec, t) for t in uniq) + 1
            vals, cum = dense_series(mu, n_max, uniq, min(rad, _dense_radius(mu)))
        pos = {t: j for j, t in enumerate(uniq)}
        w = np.power(float(r), np.arange(n_max + 1))
        gam = w @ vals
        defect = float(np.dot(w, cum))
        rho_hi, _, cert2 = _rho_bound_for(mu, r)
        certified = certified and cert2
        q = r * rho_hi
        tail = q ** (n_max + 1) / (1.0 - q) if q < 1 else math.inf
        for z, t1, t2 in zip(elements, targets1, targets2):
            a = gam[pos[t1]]
            b = gam[pos[t2]]
            total_lo += a * b
            total_hi += (a + defect + tail) * (b + defect + tail)
    # tail over z outside the ball, via the return-series identity
    J = mu.max_jump
    bg = groups.length(spec, g)
    bp = groups.length(spec, gp)
    S = max(0, (ball_radius + 1 - bg) // J) + max(0, (ball_radius + 1 - bp) // J)
    tgt_vals, tgt_cum = point_series(mu, g, gp, n_max)
    rho_hi, _, cert3 = _rho_bound_for(mu, r)
    q = r * rho_hi
    out_tail = 0.0
    for sidx in range(S, n_max + 1):
        out_tail += (sidx + 1) * r**sidx * (tgt_vals[sidx] + tgt_cum[sidx])
    if q < 1.0:
        # remaining s > n_max: (s+1) q^s sums to q^{N+1}((N+2) - (N+1)q)/(1-q)^2
        N = n_max
        out_tail += q ** (N + 1) * ((N + 2) - (N + 1) * q) / (1.0 - q) ** 2
    else:
        out_tail = math.inf
    certified = certified and cert3 and math.isfinite(out_tail)
    return GreenEstimate(
        total_lo, total_hi + out_tail, float(r), n_max,
        "ball-sum+return-series-tail", certified,
        meta={"ball_radius": ball_radius, "outside_tail": out_tail},
    )


# ---------------------------------------------------------------------------
# parabolic and sphere Green sums


def parabolic_green_sum(mu, r, factor, eta, k_max=12, n_max=None):
    """Cumulative sums of G_r(e,g) G_r(g,e) over the eta-neighborhood of a
    factor subgroup, by ball radius k; returns (ks, cumulative brackets,
    increment ratios)."""
    spec = mu.spec
    if n_max is None:
        n_max = default_n_max(mu, r)
    c = groups.coset_of(spec, groups.IDENTITY, factor)
    members = []
    for g in groups.ball_elements(spec, k_max):
        if groups.coset_distance(spec, g, c) <= eta:
            members.append(g)
    ests = {g: green(mu, r, groups.IDENTITY, g, n_max) for g in
            sorted(members, key=lambda g: (groups.length(spec, g), groups.sort_key(g)))}
    ks = list(range(k_max + 1))
    lows, highs = [], []
    lo = hi = 0.0
    by_len = {}
    for g, est in ests.items():
        by_len.setdefault(groups.length(spec, g), []).append(est)
    for k in ks:
        for est in by_len.get(k, []):
            lo += est.lower**2
            hi += est.upper**2
        lows.append(lo)
        highs.append(hi)
    incr = [lows[k] - lows[k - 1] for k in range(1, k_max + 1)]
    ratios = [b / a if a > 0 else math.nan for a, b in zip(incr, incr[1:])]
    return ks, list(zip(lows, highs)), ratios


def sphere_green_sum(mu, r, k, n_max=None):
    """Bracket for u_k(r) = sum_{|x|=k} G_r(e,x)^2."""
    spec = mu.spec
    if n_max is None:
        n_max = default_n_max(mu, r)
    if _is_radial(mu):
        per_point, _ = _cached_radial(mu, n_max, k_max=k)
        w = np.power(float(r), np.arange(n_max + 1))
        gamma = float(w @ per_point[:, k])
        rho_hi, method, certified = _rho_bound_for(mu, r)
        q = r * rho_hi
        tail = q ** max(n_max + 1, k) / (1.0 - q) if q < 1 else math.inf
        s = spec.n_letters
        size = 1 if k == 0 else s * (s - 1) ** (k - 1)
        return GreenEstimate(size * gamma**2, size * (gamma + tail) ** 2,
                             float(r), n_max, method, certified,
                             meta={"sphere_size": size, "per_point": gamma})
    lo = hi = 0.0
    certified = True
    for g in groups.ball_elements(spec, k):
        if groups.length(spec, g) != k:
            continue
        est = green(mu, r, groups.IDENTITY, g, n_max)
        lo += est.lower**2
        hi += est.upper**2
        certified = certified and est.certified
    return GreenEstimate(lo, hi, float(r), n_max, "elementwise", certified)


# ---------------------------------------------------------------------------
# evaluation near R: epsilon ladders


def r_ladder(R_lower, eps_ladder=DEFAULT_EPS_LADDER):
    """Evaluation weights r = R_lower (1 - eps) approaching R from below."""
    return tuple(R_lower * (1.0 - e) for e in eps_ladder)


def richardson_limit(eps_values, values):
    """Linear-in-eps extrapolation to eps = 0 from the last two rungs."""
    (e1, v1), (e2, v2) = list(zip(eps_values, values))[-2:]
    if e1 == e2:
        return v2
    return v2 + (v2 - v1) * e2 / (e1 - e2)
