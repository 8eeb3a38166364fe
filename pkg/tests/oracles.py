"""Independent reference values for the test suite.

Everything here comes from closed forms (generating functions), exact
rational dynamic programming, or brute-force graph search.  None of it
shares a numerical path with the library: the library counts weighted
paths through window convolutions and linear solves, while this module
uses first-passage identities and explicit small-case enumeration.
Library code must never import this module.

Notation used throughout: for a symmetric step distribution the Green
function is G_r(x, y) = sum_n r^n mu^{*n}(x^{-1} y), F_r(x, y) is the
first-passage (paths hitting y only at the end) generating function,
and on trees G_r(x, y) = F(first edge) * ... * F(last edge) * G_r(e, e)
because nearest-neighbour paths must cross every geodesic vertex.
"""

import heapq
import math
from fractions import Fraction

from martinlab import groups


# ---------------------------------------------------------------------------
# 1-d lattice walks (SRW on Z, laziness mixtures)


def z_srw_green(r):
    """G_r(0,0) for SRW on Z: sum r^{2n} C(2n,n) 4^{-n} = (1-r^2)^{-1/2}."""
    return 1.0 / math.sqrt(1.0 - r * r)


def z_srw_first_passage(r):
    """F_r(0,1) for SRW on Z: (1 - sqrt(1-r^2)) / r."""
    return (1.0 - math.sqrt(1.0 - r * r)) / r


def z_srw_green_xy(r, k):
    """G_r(0,k) = G_r(0,0) * F^{|k|}."""
    return z_srw_green(r) * z_srw_first_passage(r) ** abs(k)


def z_srw_rG_derivative(r):
    """d/dr [ r * G_r(0,0) ] = (1-r^2)^{-3/2} for SRW on Z."""
    return (1.0 - r * r) ** -1.5


def z_srw_return(n):
    """mu^{*n}(0) for SRW on Z, exact Fraction (0 for odd n)."""
    if n % 2:
        return Fraction(0)
    return Fraction(math.comb(n, n // 2), 2**n)


def lazy_z_return(alpha, n):
    """mu^{*n}(0) for the lazy walk alpha*delta_0 + (1-alpha)*SRW, exact."""
    a = Fraction(alpha).limit_denominator(10**12)
    total = Fraction(0)
    for k in range(n + 1):
        total += math.comb(n, k) * a ** (n - k) * (1 - a) ** k * z_srw_return(k)
    return total


def lazy_z_green(r, alpha):
    """G_r(0,0) for the lazy walk on Z, via the resummation
    G^{lazy}_r = (1 - alpha r)^{-1} G^{srw}_s with s = r(1-alpha)/(1-alpha r)."""
    s = r * (1.0 - alpha) / (1.0 - alpha * r)
    return z_srw_green(s) / (1.0 - alpha * r)


def zd_product_lazy_return(d, alpha, n):
    """Diagonal return of the coordinate-product lazy walk on Z^d."""
    return float(lazy_z_return(alpha, n)) ** 1 if d == 1 else float(lazy_z_return(alpha, n) ** d)


def zd_axis_srw_powers(d, n_max):
    """Exact convolution powers of the axis SRW on Z^d (mass 1/(2d) per
    +-e_i), as dicts coordinate-tuple -> Fraction.  Cost (2n)^d; small n."""
    step = {}
    for ax in range(d):
        for sgn in (1, -1):
            c = [0] * d
            c[ax] = sgn
            step[tuple(c)] = Fraction(1, 2 * d)
    rows = [{(0,) * d: Fraction(1)}]
    for _ in range(n_max):
        nxt = {}
        for x, m in rows[-1].items():
            for s, ms in step.items():
                y = tuple(a + b for a, b in zip(x, s))
                nxt[y] = nxt.get(y, Fraction(0)) + m * ms
        rows.append(nxt)
    return rows


# ---------------------------------------------------------------------------
# homogeneous trees (free products of rank-one factors, letter-uniform walk)


def tree_first_passage(r, s):
    """F_r across one edge of the s-regular tree, uniform NN walk:
    F = r/s + r (s-1)/s F^2, taking the branch with F(0+) = 0."""
    disc = max(0.0, s * s - 4.0 * (s - 1.0) * r * r)
    return (s - math.sqrt(disc)) / (2.0 * (s - 1.0) * r)


def tree_green(r, s):
    """G_r(e,e) on the s-regular tree: 1 / (1 - r F)."""
    return 1.0 / (1.0 - r * tree_first_passage(r, s))


def tree_green_xy(r, s, k):
    """G_r(e,x) at distance k: G * F^k."""
    return tree_green(r, s) * tree_first_passage(r, s) ** k


def tree_spectral_radius(s):
    """R = s / (2 sqrt(s-1)) for the uniform NN walk on the s-regular tree."""
    return s / (2.0 * math.sqrt(s - 1.0))


def tree_return(s, n):
    """mu^{*n}(e) on the s-regular tree, exact Fraction via the distance
    birth-death chain (up (s-1)/s, down 1/s, reflection at 0)."""
    up = Fraction(s - 1, s)
    down = Fraction(1, s)
    vals = {0: Fraction(1)}
    for _ in range(n):
        nxt = {}
        for k, m in vals.items():
            if k == 0:
                nxt[1] = nxt.get(1, Fraction(0)) + m
            else:
                nxt[k + 1] = nxt.get(k + 1, Fraction(0)) + m * up
                tgt = k - 1
                nxt[tgt] = nxt.get(tgt, Fraction(0)) + m * down
        vals = nxt
    return vals.get(0, Fraction(0))


def tree_sphere_size(s, k):
    return 1 if k == 0 else s * (s - 1) ** (k - 1)


def tree_point_prob(s, n, k):
    """mu^{*n}(x) for |x| = k: radial mass / sphere size, exact Fraction."""
    up = Fraction(s - 1, s)
    down = Fraction(1, s)
    vals = {0: Fraction(1)}
    for _ in range(n):
        nxt = {}
        for j, m in vals.items():
            if j == 0:
                nxt[1] = nxt.get(1, Fraction(0)) + m
            else:
                nxt[j + 1] = nxt.get(j + 1, Fraction(0)) + m * up
                nxt[j - 1] = nxt.get(j - 1, Fraction(0)) + m * down
        vals = nxt
    return vals.get(k, Fraction(0)) / tree_sphere_size(s, k)


def biased_tree_first_passage(r, letter_masses, inv_pairs, tol=1e-15):
    """Per-letter first-passage F_l on a tree Cayley graph with symmetric
    per-letter masses m_l (NN support only).

    F_l = r m_l + r F_l * sum_{l' != l} m_{l'} F_{l'^{-1}}, solved by the
    monotone fixed point from 0 (the minimal, probabilistic solution).
    ``inv_pairs`` maps letter index -> inverse letter index.
    """
    m = list(letter_masses)
    n = len(m)
    F = [0.0] * n
    for _ in range(100000):
        nxt = []
        for l in range(n):
            excl = sum(m[lp] * F[inv_pairs[lp]] for lp in range(n) if lp != l)
            nxt.append(r * m[l] + r * F[l] * excl)
        delta = max(abs(a - b) for a, b in zip(F, nxt))
        F = nxt
        if delta < tol:
            return F
    raise RuntimeError("biased tree first-passage iteration did not converge")


def biased_tree_green(r, letter_masses, inv_pairs):
    """G_r(e,e) = 1 / (1 - r sum_l m_l F_{l^{-1}})."""
    F = biased_tree_first_passage(r, letter_masses, inv_pairs)
    ret = sum(letter_masses[l] * F[inv_pairs[l]] for l in range(len(F)))
    return 1.0 / (1.0 - r * ret)


def biased_tree_green_word(r, letter_masses, inv_pairs, word):
    """G_r(e,x) for x given as a letter-index word along its geodesic."""
    F = biased_tree_first_passage(r, letter_masses, inv_pairs)
    g = biased_tree_green(r, letter_masses, inv_pairs)
    for l in word:
        g *= F[l]
    return g


# ---------------------------------------------------------------------------
# brute-force path counting (pure python dicts; independent of the
# library's move-table machinery)


def brute_convolution(spec, mu_dict, n_max):
    """Convolution powers as dicts element -> Fraction/float."""
    rows = [{groups.IDENTITY: 1.0}]
    for _ in range(n_max):
        nxt = {}
        for x, m in rows[-1].items():
            for s, ms in mu_dict.items():
                y = groups.multiply(spec, x, s)
                nxt[y] = nxt.get(y, 0.0) + m * ms
        rows.append(nxt)
    return rows


def brute_green_partial(spec, mu_dict, r, x, y, n_max):
    """Partial sum sum_{n<=n_max} r^n mu^{*n}(x^{-1}y) by dict DP."""
    target = groups.multiply(spec, groups.inverse(spec, x), y)
    rows = brute_convolution(spec, mu_dict, n_max)
    return sum(r**n * rows[n].get(target, 0.0) for n in range(n_max + 1))


def brute_restricted_green(spec, mu_dict, r, x, y, allowed, n_max):
    """Partial sum of the Green series over paths whose intermediate
    points all lie in ``allowed`` (x, y themselves unconstrained)."""
    allowed = set(allowed)
    total = 1.0 if x == y else 0.0
    # n = 1 term
    step_xy = mu_dict.get(groups.multiply(spec, groups.inverse(spec, x), y), 0.0)
    total += r * step_xy
    # walk vectors over allowed interior points
    cur = {}
    for s, ms in mu_dict.items():
        z = groups.multiply(spec, x, s)
        if z in allowed:
            cur[z] = cur.get(z, 0.0) + r * ms
    for _ in range(2, n_max + 1):
        # close current interior states to y
        for z, m in cur.items():
            total += m * r * mu_dict.get(groups.multiply(spec, groups.inverse(spec, z), y), 0.0)
        nxt = {}
        for z, m in cur.items():
            for s, ms in mu_dict.items():
                w = groups.multiply(spec, z, s)
                if w in allowed:
                    nxt[w] = nxt.get(w, 0.0) + m * r * ms
        cur = nxt
    return total


def brute_floyd_distance(spec, elements, a, o, x, y):
    """Dijkstra over the letter graph on ``elements`` with edge cost
    a^{-min(d(o,u), d(o,v))}; the plain-graph oracle for Floyd metrics."""
    elements = set(elements)
    dist_o = {g: groups.distance(spec, o, g) for g in elements}
    lets = groups.letters(spec)
    best = {x: 0.0}
    heap = [(0.0, groups.sort_key(x), x)]
    while heap:
        d, _, u = heapq.heappop(heap)
        if u == y:
            return d
        if d > best.get(u, math.inf):
            continue
        for l in lets:
            v = groups.multiply(spec, u, l)
            if v not in elements:
                continue
            cost = a ** (-min(dist_o[u], dist_o[v]))
            nd = d + cost
            if nd < best.get(v, math.inf) - 1e-18:
                best[v] = nd
                heapq.heappush(heap, (nd, groups.sort_key(v), v))
    return math.inf


def brute_coset_project(spec, g, c, radius):
    """Nearest point of the coset by scanning the ball around g."""
    best = None
    best_d = None
    for h in groups.ball_elements(spec, radius):
        cand = groups.multiply(spec, g, h)
        if groups.coset_of(spec, cand, c.factor) == c:
            d = groups.length(spec, h)
            key = (d, groups.sort_key(cand))
            if best is None or key < (best_d, groups.sort_key(best)):
                best, best_d = cand, d
    return best, best_d


# ---------------------------------------------------------------------------
# 1-d parabolic kernels (single-factor Z cases)


def z_level_set_u(r):
    """For the kernel p = r * SRW on Z: lambda(u) = r cosh(u); the positive
    solution of lambda(u) = 1 is arccosh(1/r)."""
    return math.acosh(1.0 / r)
