"""Empirical deviation inequalities for Green functions: weak and strong
Ancona ratios and super-exponential ball-avoidance decay.

All quantities are interval quotients of Green brackets from
``potential``; summaries always use the conservative bracket ends.  The
scan driver anchors configurations on geodesics through the identity and
selects comparison points among Floyd transition points, so rows target
exactly the hypothesis class of the inequalities being probed.
"""

import math
from dataclasses import dataclass, field

from . import floyd, groups, potential
from .groups import ConfigError
from .potential import GreenEstimate


def _quotient(num_lo, num_hi, den_lo, den_hi):
    if den_lo <= 0:
        return num_lo / den_hi if den_hi > 0 else 0.0, math.inf
    return num_lo / den_hi, num_hi / den_lo


def weak_ancona_ratio(mu, r, x, y, z, n_max=None):
    """Bracket for G_r(x,z) / (G_r(x,y) G_r(y,z)).

    The submultiplicative half G(x,y)G(y,z) <= C G(x,z) holds for every
    triple (split any path at its last visit to a neighborhood of y), so
    the ratio is bounded below by 1/C universally; the content of the
    inequality is the upper half on Floyd-separated configurations.
    """
    gxz = potential.green(mu, r, x, z, n_max)
    gxy = potential.green(mu, r, x, y, n_max)
    gyz = potential.green(mu, r, y, z, n_max)
    lo, hi = _quotient(gxz.lower, gxz.upper, gxy.lower * gyz.lower, gxy.upper * gyz.upper)
    return GreenEstimate(
        lo, hi, float(r), gxz.n_truncation, f"quotient({gxz.tail_bound_method})",
        gxz.certified and gxy.certified and gyz.certified,
        meta={"G_xz": gxz, "G_xy": gxy, "G_yz": gyz},
    )


def universal_ratio_floor(mu, r, n_max=None):
    """1 / G_r(e,e) upper end: every weak-Ancona ratio is >= this value.

    Paths x -> y -> z concatenate into paths x -> z that revisit y; the
    overcount per pair is at most G_r(e,e) by translation invariance.
    """
    gee = potential.green(mu, r, n_max=n_max)
    return 1.0 / gee.upper


def _defect_interval(lo, hi):
    """|t - 1| over a ratio interval [lo, hi]."""
    if lo <= 1.0 <= hi:
        return 0.0, max(hi - 1.0, 1.0 - lo)
    return min(abs(lo - 1.0), abs(hi - 1.0)), max(abs(lo - 1.0), abs(hi - 1.0))


def strong_ancona_defect(mu, r, x, y, xp, yp, n_max=None, method="series",
                         window=None):
    """Bracket for |G(x,y) G(x',y') / (G(x,y') G(x',y)) - 1|.

    method "series" combines four certified Green brackets; near R their
    widths can swamp a small defect, so method "window" instead evaluates
    the cross-ratio on window-restricted Green rows at two radii (W and
    W-2) and brackets by their spread -- a convergence-stability interval,
    flagged uncertified.
    """
    if x == xp or y == yp:
        return GreenEstimate(0.0, 0.0, float(r), 0, "exact(degenerate-pair)", True)
    if method == "window":
        return _window_defect(mu, r, x, y, xp, yp, window)
    gxy = potential.green(mu, r, x, y, n_max)
    gxpyp = potential.green(mu, r, xp, yp, n_max)
    gxyp = potential.green(mu, r, x, yp, n_max)
    gxpy = potential.green(mu, r, xp, y, n_max)
    lo, hi = _quotient(gxy.lower * gxpyp.lower, gxy.upper * gxpyp.upper,
                       gxyp.lower * gxpy.lower, gxyp.upper * gxpy.upper)
    d_lo, d_hi = _defect_interval(lo, hi)
    cert = gxy.certified and gxpyp.certified and gxyp.certified and gxpy.certified
    return GreenEstimate(d_lo, d_hi, float(r), gxy.n_truncation,
                         "interval-defect", cert,
                         meta={"ratio": (lo, hi)})


def _window_defect(mu, r, x, y, xp, yp, window):
    spec = mu.spec
    inv = groups.inverse
    mul = groups.multiply
    targets = [mul(spec, inv(spec, a), b)
               for a, b in ((x, y), (xp, yp), (x, yp), (xp, y))]
    maxlen = max(groups.length(spec, t) for t in targets)
    if window is None:
        window = maxlen + 1
    if window < maxlen:
        raise ConfigError("window too small for the configuration")
    second = window - 2 if window - 2 >= maxlen else window - 1
    if second == window:
        raise ConfigError("no smaller stability window fits the configuration")
    ratios = []
    for W in (window, second):
        vals, _ = potential.green_window(mu, r, targets, W)
        t1, t2, t3, t4 = (vals[t] for t in targets)
        ratios.append((t1 * t2) / (t3 * t4))
    lo, hi = min(ratios), max(ratios)
    d_lo, d_hi = _defect_interval(lo, hi)
    return GreenEstimate(d_lo, d_hi, float(r), -1, "window-stability", False,
                         meta={"ratio_by_window": tuple(ratios), "window": window})


def avoidance_decay(mu, r, x, y, z, eta_list, window=None, n_max=None):
    """eta -> bracket for G(x, y; B_eta(z)^c intersected with the window),
    with a window-doubling diagnostic attached per point.

    The restricted sum runs over paths staying inside window \\ B_eta(z);
    enlarging the window only adds paths, so the value converges to the
    full complement-restricted Green from below.  The diagnostic records
    the window-(W) and window-(W+2) values so stalled convergence is
    visible; the curve itself must be nonincreasing in eta.
    """
    spec = mu.spec
    if window is None:
        window = max(groups.length(spec, x), groups.length(spec, y),
                     groups.length(spec, z) + max(eta_list)) + 3
    out = []
    for eta in eta_list:
        vals = []
        for W in (window, window + 2):
            allowed = [g for g in groups.ball_elements(spec, W)
                       if groups.distance(spec, g, z) > eta]
            vals.append(potential.green_restricted(mu, r, x, y, allowed))
        base, widened = vals
        est = GreenEstimate(
            base.lower, base.upper, float(r), base.n_truncation,
            base.tail_bound_method, base.certified,
            meta={"window": window,
                  "window_doubling": (base.mid, widened.mid)},
        )
        out.append((eta, est))
    return out


# ---------------------------------------------------------------------------
# scan driver


@dataclass
class AnconaScanReport:
    """Row-wise record of an inequality scan with conservative summaries."""

    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, config_id, kind, r, param, est):
        self.rows.append({
            "config": config_id, "kind": kind, "r": r, "param": param,
            "lower": est.lower, "upper": est.upper, "certified": est.certified,
        })

    def finalize(self):
        ratios = [row for row in self.rows if row["kind"] == "weak"]
        if ratios:
            self.summary["ratio_max_upper"] = max(row["upper"] for row in ratios)
            self.summary["ratio_min_lower"] = min(row["lower"] for row in ratios)
            self.summary["C_bound"] = max(
                self.summary["ratio_max_upper"],
                1.0 / max(self.summary["ratio_min_lower"], 1e-300))
        defects = [(row["param"], row["upper"]) for row in self.rows
                   if row["kind"] == "strong" and row["upper"] > 0]
        if len(defects) >= 2:
            self.summary["defect_slope"] = _fit_slope(
                [n for n, _ in defects], [math.log(d) for _, d in defects])
        self.summary["n_rows"] = len(self.rows)
        self.summary["all_certified"] = all(row["certified"] for row in self.rows)
        return self

    def to_csv_lines(self):
        lines = ["config,kind,r,param,lower,upper,certified"]
        for row in self.rows:
            lines.append(
                f"{row['config']},{row['kind']},{row['r']!r},{row['param']!r},"
                f"{row['lower']!r},{row['upper']!r},{int(row['certified'])}")
        return lines


def _fit_slope(xs, ys):
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    num = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    den = sum((a - mx) ** 2 for a in xs)
    return num / den if den else 0.0


def _alternating_word(spec, length, start=0, sign=1):
    """Geodesic word cycling through factors: a b a b ... (length letters)."""
    w = groups.IDENTITY
    path = [w]
    nfac = len(spec.factors)
    for i in range(length):
        fi = (start + i) % nfac
        f = spec.factors[fi]
        payload = tuple(sign if t == 0 else 0 for t in range(f.rank)) \
            if f.kind == "Z" else (sign,)
        w = groups.multiply(spec, w, ((fi, payload),))
        path.append(w)
    return w, path


def midpoint_transition_configs(spec, lengths, delta=0.1, a=2.0, picks=5):
    """(config_id, x, y, z) rows: geodesics [x, z] through e with y chosen
    among the Floyd transition points nearest the midpoint."""
    nfac = len(spec.factors)
    if nfac < 2:
        raise ConfigError(
            "scan configurations pivot at the basepoint and need a free "
            "product with at least two factors")
    # transition detection rebases the Floyd metric at every path point,
    # so the work ball must cover the full path diameter 2 max(lengths)
    cfg = floyd.FloydConfig(spec, a, groups.IDENTITY, 2 * max(lengths) + 2)
    out = []
    for L in lengths:
        xe, _ = _alternating_word(spec, L, start=0, sign=-1)
        x = groups.inverse(spec, xe)
        # the x arm ends on factor (L-1) % nfac; starting the z arm on
        # factor L % nfac keeps the concatenation reduced for every L,
        # so [x, z] really is a geodesic of length 2L through e
        z, _ = _alternating_word(spec, L, start=L % nfac, sign=1)
        path = groups.geodesic(spec, x, z)
        tset = floyd.floyd_transition_set(path, delta, cfg)
        if not tset:
            continue
        mid = len(path) // 2
        chosen = sorted(tset, key=lambda i: (abs(i - mid), i))[:picks]
        for rank, i in enumerate(chosen):
            out.append((f"L{L}.t{rank}", x, path[i], z))
    return out


def _axes(spec):
    """Two independent generator directions: first gens of the first two
    factors, or the two gens of a rank->=2 first factor."""
    if len(spec.factors) >= 2:
        return ((0, _unit(spec.factors[0], 0, 1)),), ((1, _unit(spec.factors[1], 0, 1)),)
    f = spec.factors[0]
    if f.rank < 2:
        raise ConfigError("need two independent directions for H-configurations")
    return ((0, _unit(f, 0, 1)),), ((0, _unit(f, 1, 1)),)


def _unit(factor, j, sign):
    if factor.kind == "Z":
        return tuple(sign if t == j else 0 for t in range(factor.rank))
    return (sign * (j + 1),)


def _power(spec, letter, k):
    w = groups.IDENTITY
    step = letter if k >= 0 else groups.inverse(spec, letter)
    for _ in range(abs(k)):
        w = groups.multiply(spec, w, step)
    return w


def prefix_fellow_travel_configs(spec, n_values, arm=2):
    """H-shaped pairs sharing a geodesic segment of length n.

    The shared segment alternates two generator axes from e to w_n; x and
    x' hang off the e-end (one on the unused axis, one extending the
    segment axis backward), y and y' hang off the far end on the axis not
    used by the segment's last letter.  All four geodesics [x,y], [x',y'],
    [x,y'], [x',y] then share the middle segment, so the configurations'
    fellow-travel time grows linearly with n.
    """
    ax0, ax1 = _axes(spec)
    out = []
    for n in n_values:
        seg = groups.IDENTITY
        for i in range(n):
            seg = groups.multiply(spec, seg, ax0 if i % 2 == 0 else ax1)
        last_axis = ax0 if (n - 1) % 2 == 0 else ax1
        far_axis = ax1 if last_axis == ax0 else ax0
        x = _power(spec, ax1, -arm)
        xp = _power(spec, ax0, -arm)
        y = groups.multiply(spec, seg, _power(spec, far_axis, arm))
        yp = groups.multiply(spec, seg, _power(spec, far_axis, -arm))
        out.append((f"n{n}", x, y, xp, yp, n))
    return out


DEFAULT_SCAN = {
    "group": "Z * Z",
    "measure": {"kind": "adapted", "weights": [0.5, 0.5]},
    "r_factors": (0.5, 0.9, 0.99),
    "lengths": (3, 4, 5, 6, 7, 8),
    "defect_n": (2, 3, 4, 5, 6, 7, 8),
    "delta": 0.1,
    "floyd_a": 2.0,
}


def relative_ancona_scan(config=None):
    """Full-factorial weak/strong scan; deterministic row order."""
    from . import measures

    cfg = dict(DEFAULT_SCAN)
    if config:
        cfg.update(config)
    spec = groups.GroupSpec.parse(cfg["group"])
    mblock = cfg["measure"]
    mu = measures.make_measure(spec, **mblock)
    est = potential.spectral_radius(mu)
    report = AnconaScanReport()
    configs = midpoint_transition_configs(
        spec, cfg["lengths"], cfg["delta"], cfg["floyd_a"])
    for factor in cfg["r_factors"]:
        r = factor * est.lower
        for cid, x, y, z in configs:
            ratio = weak_ancona_ratio(mu, r, x, y, z)
            report.add(f"{cid}", "weak", r, factor, ratio)
    for factor in cfg["r_factors"]:
        r = factor * est.lower
        for cid, x, y, xp, yp, n in prefix_fellow_travel_configs(spec, cfg["defect_n"]):
            defect = strong_ancona_defect(mu, r, x, y, xp, yp)
            report.add(cid, "strong", r, n, defect)
    return report.finalize()
