"""Floyd metrics, transition-point detection, and fellow-travel counting.

The Floyd metric rescales Cayley-graph edge lengths by f(n) = a^{-n} where
n is the distance from the edge to a basepoint o (convention: min over the
edge's two endpoints).  Distances are computed at base e and translated,
so equivariance delta^f_{go}(gx, gy) = delta^f_o(x, y) holds bit-exactly.

The underlying graph is always the letter Cayley graph of the free
product with its standard generators, regardless of the measure used in
the potential-theory modules.
"""

import heapq
import math
from dataclasses import dataclass

from . import groups
from .groups import ConfigError


@dataclass(frozen=True)
class FloydConfig:
    """Floyd rescaling f(n) = a^{-n} at ``basepoint`` within ``radius``."""

    spec: groups.GroupSpec
    a: float = 2.0
    basepoint: tuple = groups.IDENTITY
    radius: int = 8

    def __post_init__(self):
        if not self.a > 1.0:
            raise ConfigError(f"Floyd base must satisfy a > 1, got {self.a}")
        if self.radius < 1:
            raise ConfigError("work ball radius must be >= 1")

    def f(self, n):
        return self.a ** (-n)


@dataclass(frozen=True)
class FloydValue:
    """Work-ball shortest-path value with an exactness certificate.

    ``value`` is a monotone upper bound for the true infimum delta^f_o(x,y);
    it is exact whenever ``value <= crossing_bound``, the certified minimum
    cost of any path that leaves the work ball (such a path must cross every
    sphere between each endpoint's radius and the ball boundary).
    """

    value: float
    exact: bool
    crossing_bound: float

    def __float__(self):
        return self.value


def _geo_sum(a, lo, hi):
    """sum_{j=lo}^{hi-1} a^{-j} (0 when hi <= lo)."""
    if hi <= lo:
        return 0.0
    return (a ** (-lo) - a ** (-hi)) / (1.0 - 1.0 / a)


def _tree_floyd(spec, a, x, y):
    """Closed form on trees: the unique simple path is forced edgewise."""
    lx = groups.length(spec, x)
    ly = groups.length(spec, y)
    meet = (lx + ly - groups.distance(spec, x, y)) // 2
    return _geo_sum(a, meet, lx) + _geo_sum(a, meet, ly)


def floyd_distance(cfg, x, y):
    """delta^f_o(x, y) over the work-ball subgraph, with certificate.

    Edge (u, v) costs f(min(|u|, |v|)) from the translated basepoint.
    Raises ConfigError when an endpoint lies outside the work ball.
    """
    spec = cfg.spec
    o_inv = groups.inverse(spec, cfg.basepoint)
    xt = groups.multiply(spec, o_inv, x)
    yt = groups.multiply(spec, o_inv, y)
    lx = groups.length(spec, xt)
    ly = groups.length(spec, yt)
    if lx > cfg.radius or ly > cfg.radius:
        raise ConfigError("endpoint outside the Floyd work ball")
    W = cfg.radius
    crossing = _geo_sum(cfg.a, lx, W + 1) + _geo_sum(cfg.a, ly, W + 1)
    if xt == yt:
        return FloydValue(0.0, True, crossing)
    if spec.is_tree:
        val = _tree_floyd(spec, cfg.a, xt, yt)
        return FloydValue(val, True, crossing)
    val = _dijkstra(spec, cfg.a, W, xt, yt)
    return FloydValue(val, val <= crossing, crossing)


def _dijkstra(spec, a, radius, src, dst):
    dist = {src: 0.0}
    # deterministic tie-breaks: heap keyed by (value, normal-form key)
    heap = [(0.0, groups.sort_key(src), src)]
    done = set()
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dst:
            return d
        done.add(u)
        lu = groups.length(spec, u)
        for v in groups.neighbors(spec, u):
            lv = groups.length(spec, v)
            if lv > radius or v in done:
                continue
            nd = d + a ** (-min(lu, lv))
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, groups.sort_key(v), v))
    return math.inf


def visibility_bound_check(cfg, x, y):
    """(lhs, rhs) for the visibility inequality
    delta^f_e(x,y) <= 4 d a^{-d} + 2 a^{-d} / (1 - a^{-1}),
    d = dist(basepoint, canonical geodesic [x, y])."""
    spec = cfg.spec
    o_inv = groups.inverse(spec, cfg.basepoint)
    xt = groups.multiply(spec, o_inv, x)
    yt = groups.multiply(spec, o_inv, y)
    path = groups.geodesic(spec, xt, yt)
    d = min(groups.length(spec, p) for p in path)
    rhs = 4.0 * d * cfg.a ** (-d) + 2.0 * cfg.a ** (-d) / (1.0 - 1.0 / cfg.a)
    lhs = floyd_distance(cfg, x, y).value
    return lhs, rhs


# ---------------------------------------------------------------------------
# transition points


def _candidate_cosets(spec, point, eps):
    """Peripheral cosets whose eps-neighborhood can contain ``point``."""
    cands = []
    seen = set()
    for w in groups.ball_elements(spec, eps):
        g = groups.multiply(spec, point, w)
        for fi in range(len(spec.factors)):
            c = groups.coset_of(spec, g, fi)
            if c not in seen:
                seen.add(c)
                cands.append(c)
    return cands


def is_transition_point(alpha, index, eps, eta, spec):
    """True iff alpha[index] is an (eps, eta)-transition point: no single
    peripheral coset's eps-neighborhood contains the eta-interval of alpha
    around alpha[index] (interval clipped at the path's endpoints)."""
    if not 0 <= index < len(alpha):
        raise ConfigError("index outside the path")
    lo = max(0, index - eta)
    hi = min(len(alpha) - 1, index + eta)
    segment = alpha[lo : hi + 1]
    for c in _candidate_cosets(spec, alpha[index], eps):
        if all(groups.coset_distance(spec, p, c) <= eps for p in segment):
            return False
    return True


def floyd_transition_set(alpha, delta, cfg):
    """Indices i with delta^f_{alpha[i]}(alpha[j], alpha[k]) >= delta for
    every aligned pair j < i < k; exact by exhaustion."""
    spec = cfg.spec
    out = set()
    n = len(alpha)
    for i in range(n):
        base_cfg = FloydConfig(spec, cfg.a, alpha[i], cfg.radius)
        ok = True
        for j in range(i):
            for k in range(i + 1, n):
                if floyd_distance(base_cfg, alpha[j], alpha[k]).value < delta:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            out.add(i)
    return out


def fellow_travel_count(x, y, xp, yp, delta, cfg, candidate_radius=None):
    """Number of witnesses z in the candidate ball with both
    delta^f_z(x,y) >= delta and delta^f_z(x',y') >= delta.

    A lower bound for the true fellow-travel time of the two pairs.
    """
    spec = cfg.spec
    if candidate_radius is None:
        candidate_radius = cfg.radius
    count = 0
    for z in groups.ball_elements(spec, candidate_radius):
        zc = FloydConfig(spec, cfg.a, z, cfg.radius + candidate_radius)
        if floyd_distance(zc, x, y).value >= delta and \
                floyd_distance(zc, xp, yp).value >= delta:
            count += 1
    return count
