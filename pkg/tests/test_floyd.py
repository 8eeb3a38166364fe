"""Floyd metrics: axioms, graph-search oracle, certificates, transitions."""

import itertools
import math

import pytest

from martinlab import floyd, groups
from martinlab.floyd import FloydConfig
from martinlab.groups import IDENTITY, ConfigError

import oracles

F2 = groups.GroupSpec.parse("F_2")
ZZ = groups.GroupSpec.parse("Z * Z")
MIXED = groups.GroupSpec.parse("Z^2 * Z")


def _word(spec, text):
    return groups.str_to_word(spec, text)


def test_config_validation():
    with pytest.raises(ConfigError):
        FloydConfig(F2, a=1.0)
    with pytest.raises(ConfigError):
        FloydConfig(F2, a=2.0, radius=0)
    cfg = FloydConfig(F2, a=2.0)
    assert cfg.f(3) == pytest.approx(0.125)


def test_endpoint_outside_work_ball_rejected():
    cfg = FloydConfig(F2, a=2.0, radius=2)
    with pytest.raises(ConfigError):
        floyd.floyd_distance(cfg, IDENTITY, _word(F2, "a1^3"))


def test_metric_axioms_exhaustive_on_tree_ball():
    cfg = FloydConfig(F2, a=2.0, radius=6)
    pts = groups.ball_elements(F2, 2)
    d = {}
    for x, y in itertools.product(pts, pts):
        d[x, y] = floyd.floyd_distance(cfg, x, y).value
    for x, y in itertools.product(pts, pts):
        assert d[x, y] == d[y, x]
        if x == y:
            assert d[x, y] == 0.0
        else:
            assert d[x, y] > 0.0
    for x, y, z in itertools.product(pts, pts, pts):
        assert d[x, z] <= d[x, y] + d[y, z] + 1e-12


@pytest.mark.parametrize("spec,pairs", [
    (F2, [("e", "a1"), ("a1^2", "a2^-1*a1"), ("a1*a2*a1", "a2^2"),
          ("a1^3", "a1^2*a2"), ("a2^-2", "a1^2")]),
    (ZZ, [("a^3", "a^2*b"), ("b^-2", "a*b"), ("a*b*a", "a*b^2")]),
])
def test_tree_closed_form_matches_graph_search(spec, pairs):
    # the forced-edge formula on trees vs Dijkstra over the plain ball graph
    cfg = FloydConfig(spec, a=2.0, radius=5)
    elements = groups.ball_elements(spec, 5)
    for sx, sy in pairs:
        x, y = _word(spec, sx), _word(spec, sy)
        got = floyd.floyd_distance(cfg, x, y)
        want = oracles.brute_floyd_distance(spec, elements, 2.0, IDENTITY, x, y)
        assert got.value == pytest.approx(want, rel=1e-12)
        assert got.exact


def test_lattice_graph_matches_graph_search():
    cfg = FloydConfig(MIXED, a=2.0, radius=3)
    elements = groups.ball_elements(MIXED, 3)
    pairs = [("a1", "a2"), ("a1^2", "a2^-1"), ("b", "a1*a2"),
             ("a1*b", "a2*b"), ("a1^3", "a1^-1")]
    for sx, sy in pairs:
        x, y = _word(MIXED, sx), _word(MIXED, sy)
        got = floyd.floyd_distance(cfg, x, y)
        want = oracles.brute_floyd_distance(MIXED, elements, 2.0, IDENTITY, x, y)
        assert got.value == pytest.approx(want, rel=1e-12)


def test_exactness_certificate_on_lattice_ring():
    # antipodal lattice points at radius 2 with work ball 2: the cheapest
    # in-ball path costs 3.0 but leaving the ball is only charged 0.5, so
    # the value cannot be certified exact
    cfg = FloydConfig(MIXED, a=2.0, radius=2)
    x, y = _word(MIXED, "a1^2"), _word(MIXED, "a1^-2")
    got = floyd.floyd_distance(cfg, x, y)
    assert got.value == pytest.approx(3.0)
    assert got.crossing_bound == pytest.approx(0.5)
    assert not got.exact
    assert float(got) == got.value


def test_translation_equivariance_is_bit_exact():
    base = FloydConfig(ZZ, a=2.0, radius=6)
    for sg in ("a^2", "b^-1*a", "a*b"):
        g = _word(ZZ, sg)
        moved = FloydConfig(ZZ, a=2.0, basepoint=g, radius=6)
        for sx, sy in (("a", "b"), ("a^2", "a*b"), ("e", "b^2")):
            x, y = _word(ZZ, sx), _word(ZZ, sy)
            gx = groups.multiply(ZZ, g, x)
            gy = groups.multiply(ZZ, g, y)
            assert floyd.floyd_distance(moved, gx, gy).value == \
                floyd.floyd_distance(base, x, y).value


def test_deep_points_shrink_geometrically():
    # fixed-width pairs at depth n have Floyd size ~ a^{-n}
    cfg = FloydConfig(ZZ, a=2.0, radius=10)
    vals = []
    for n in range(1, 7):
        x = _word(ZZ, f"a^{n}")
        y = groups.multiply(ZZ, x, _word(ZZ, "b"))
        vals.append(floyd.floyd_distance(cfg, x, y).value)
    for v, w in zip(vals, vals[1:]):
        assert w == pytest.approx(v / 2.0, rel=1e-12)


def test_visibility_bound_holds():
    cfg = FloydConfig(F2, a=2.0, radius=6)
    pairs = [("a1^3", "a2^3"), ("a1^2*a2", "a1^2*a2^-1"),
             ("a1^-2", "a2*a1^2"), ("a1^4", "a1^2*a2^2")]
    for sx, sy in pairs:
        lhs, rhs = floyd.visibility_bound_check(cfg, _word(F2, sx), _word(F2, sy))
        assert lhs <= rhs + 1e-12


def test_visibility_bound_tight_scale():
    # geodesics passing at distance d from the basepoint give rhs ~ d a^{-d}
    cfg = FloydConfig(F2, a=2.0, radius=8)
    x, y = _word(F2, "a1^2*a2^2"), _word(F2, "a1^2*a2^-2")
    lhs, rhs = floyd.visibility_bound_check(cfg, x, y)
    d = 2
    assert rhs == pytest.approx(4 * d * 2.0 ** (-d) + 2 * 2.0 ** (-d) / 0.5)
    assert lhs <= rhs


# ---------------------------------------------------------------------------
# transition points


def _a_run_path(n_a, n_b):
    path = [IDENTITY]
    for _ in range(n_a):
        path.append(groups.multiply(ZZ, path[-1], _word(ZZ, "a")))
    for _ in range(n_b):
        path.append(groups.multiply(ZZ, path[-1], _word(ZZ, "b")))
    return path


def test_corner_is_transition_point_run_interior_is_not():
    alpha = _a_run_path(4, 2)  # e, a, .., a^4, a^4 b, a^4 b^2
    # interior of the a-run: the whole interval sits in the coset <a>
    assert not floyd.is_transition_point(alpha, 2, eps=0, eta=2, spec=ZZ)
    # clipped left end behaves the same way
    assert not floyd.is_transition_point(alpha, 0, eps=0, eta=2, spec=ZZ)
    # the corner a^4 has letters from both factors within eta
    assert floyd.is_transition_point(alpha, 4, eps=0, eta=2, spec=ZZ)
    assert floyd.is_transition_point(alpha, 4, eps=0, eta=1, spec=ZZ)
    # widening eps to 1 absorbs the corner into a single coset neighborhood
    assert not floyd.is_transition_point(alpha, 5, eps=1, eta=1, spec=ZZ)
    with pytest.raises(ConfigError):
        floyd.is_transition_point(alpha, len(alpha), eps=0, eta=1, spec=ZZ)


def test_floyd_transition_set_small_path():
    alpha = [IDENTITY, _word(ZZ, "a"), _word(ZZ, "a*b")]
    cfg = FloydConfig(ZZ, a=2.0, radius=6)
    # delta below the hand-computed middle value 2.0 keeps index 1
    assert floyd.floyd_transition_set(alpha, 1.5, cfg) == {0, 1, 2}
    # raising delta above it drops the middle; endpoints stay by vacuity
    assert floyd.floyd_transition_set(alpha, 2.5, cfg) == {0, 2}


def test_fellow_travel_count():
    cfg = FloydConfig(F2, a=2.0, radius=6)
    x, y = _word(F2, "a1^-2"), _word(F2, "a1^2")
    n = floyd.fellow_travel_count(x, y, x, y, delta=2.0, cfg=cfg,
                                  candidate_radius=1)
    assert n >= 1
    # deep disjoint pairs admit no common witness at this delta
    p1 = (_word(F2, "a1^3"), _word(F2, "a1^3*a2"))
    p2 = (_word(F2, "a1^-3"), _word(F2, "a1^-3*a2"))
    n2 = floyd.fellow_travel_count(*p1, *p2, delta=1.9, cfg=cfg,
                                   candidate_radius=1)
    assert n2 == 0
