"""Deviation inequalities: weak/strong Ancona ratios, avoidance decay."""

import pytest

from martinlab import ancona, groups, measures
from martinlab.groups import IDENTITY

import oracles

Z = groups.GroupSpec.parse("Z")
F2 = groups.GroupSpec.parse("F_2")
ZZ = groups.GroupSpec.parse("Z * Z")
MIXED = groups.GroupSpec.parse("Z^2 * Z")


def _word(spec, text):
    return groups.str_to_word(spec, text)


# ---------------------------------------------------------------------------
# weak ratios


def test_weak_ratio_tree_geodesic_closed_form():
    # y on the geodesic [x, z]: every path crosses y, so the last-visit
    # split is exact and the ratio equals 1 / G_r(y, y)
    mu = measures.make_measure(F2, kind="srw")
    r = 0.8
    ratio = ancona.weak_ancona_ratio(
        mu, r, _word(F2, "a1^-2"), IDENTITY, _word(F2, "a2^2"))
    want = 1.0 / oracles.tree_green(r, 4)
    assert ratio.lower <= want <= ratio.upper
    assert ratio.width < 1e-6
    assert ratio.certified


def test_weak_ratio_universal_floor():
    mu = measures.make_measure(F2, kind="srw")
    r = 0.8
    floor = ancona.universal_ratio_floor(mu, r)
    # on-geodesic configurations sit exactly at the floor
    on_geo = ancona.weak_ancona_ratio(
        mu, r, _word(F2, "a1^-2"), IDENTITY, _word(F2, "a2^2"))
    assert on_geo.upper >= floor
    assert on_geo.lower <= floor + 1e-6
    # off-geodesic y blows the ratio up but never below the floor
    off_geo = ancona.weak_ancona_ratio(
        mu, r, IDENTITY, _word(F2, "a2^3"), _word(F2, "a1"))
    assert off_geo.lower >= floor
    assert off_geo.lower > 100.0


# ---------------------------------------------------------------------------
# strong (cross-ratio) defects


def test_strong_defect_tree_rigidity_radial():
    # all four geodesics share the middle segment: on a tree the common
    # point factorizations cancel and the cross-ratio is exactly 1
    mu = measures.make_measure(F2, kind="srw")
    (cid, x, y, xp, yp, n), = ancona.prefix_fellow_travel_configs(F2, [3])
    d = ancona.strong_ancona_defect(mu, 0.8, x, y, xp, yp)
    assert d.lower == 0.0
    assert d.upper < 1e-5
    assert d.certified


def test_strong_defect_tree_rigidity_biased_window_route():
    # the biased walk is not radial, yet per-letter first-passage products
    # still cancel in the cross-ratio; the window route sees exactly 1
    mu = measures.make_measure(ZZ, kind="adapted", weights=[0.7, 0.3])
    for n in (3, 5):
        (cid, x, y, xp, yp, _), = ancona.prefix_fellow_travel_configs(ZZ, [n])
        d = ancona.strong_ancona_defect(mu, 0.8, x, y, xp, yp, method="window")
        assert d.lower == 0.0
        assert d.upper == 0.0
        assert d.meta["ratio_by_window"] == (1.0, 1.0)
        assert not d.certified  # stability interval, not a proof


def test_strong_defect_series_route_is_conservative():
    # deep biased configurations exceed the dense engine's exact range:
    # the series interval must stay valid (contain defect 0) even when
    # it is too wide to be informative
    mu = measures.make_measure(ZZ, kind="adapted", weights=[0.7, 0.3])
    (cid, x, y, xp, yp, n), = ancona.prefix_fellow_travel_configs(ZZ, [3])
    d = ancona.strong_ancona_defect(mu, 0.8, x, y, xp, yp)
    assert d.lower == 0.0
    assert d.upper > 0.0


def test_strong_defect_degenerate_pair():
    mu = measures.make_measure(F2, kind="srw")
    x = _word(F2, "a1")
    d = ancona.strong_ancona_defect(mu, 0.8, x, _word(F2, "a2"), x, IDENTITY)
    assert d.lower == d.upper == 0.0
    assert d.certified
    assert d.tail_bound_method == "exact(degenerate-pair)"


# ---------------------------------------------------------------------------
# ball-avoidance decay


def test_avoidance_cut_vertex_is_exact_zero():
    # removing the origin disconnects the two ends of Z: the restricted
    # value is zero up to solver residual
    mu = measures.make_measure(Z, kind="srw")
    out = ancona.avoidance_decay(mu, 0.6, _word(Z, "a^-2"), _word(Z, "a^2"),
                                 IDENTITY, [0, 1])
    for eta, est in out:
        assert abs(est.mid) < 1e-9


def test_avoidance_decay_is_monotone_on_lattice():
    # the Z^2 factor lets paths detour around the removed ball, with mass
    # dropping steeply in eta
    mu = measures.make_measure(MIXED, kind="srw")
    out = ancona.avoidance_decay(mu, 0.6, _word(MIXED, "a1^-2"),
                                 _word(MIXED, "a1^2"), IDENTITY, [0, 1, 2],
                                 window=5)
    vals = [est.mid for _, est in out]
    assert vals[0] > vals[1] > 1e-9
    assert vals[1] > vals[2] - 1e-12
    assert vals[0] > 10.0 * vals[1]
    for _, est in out:
        assert "window_doubling" in est.meta


# ---------------------------------------------------------------------------
# scan driver


def test_scan_configs_target_transition_midpoints():
    rows = ancona.midpoint_transition_configs(ZZ, [4], delta=0.1, a=2.0)
    assert rows
    for cid, x, y, z in rows:
        path = groups.geodesic(ZZ, x, z)
        assert y in path
        assert x != z


def test_prefix_fellow_travel_share_segment():
    (cid, x, y, xp, yp, n), = ancona.prefix_fellow_travel_configs(F2, [4])
    assert n == 4
    # all four geodesics contain the shared segment's far endpoint
    seg_end = groups.geodesic(F2, IDENTITY, y)[n]
    for a, b in ((x, y), (xp, yp), (x, yp), (xp, y)):
        assert seg_end in groups.geodesic(F2, a, b)


def test_relative_ancona_scan_deterministic_and_summarized():
    cfg = {"r_factors": (0.5, 0.7), "lengths": (3, 4), "defect_n": (2, 3)}
    rep1 = ancona.relative_ancona_scan(cfg)
    rep2 = ancona.relative_ancona_scan(cfg)
    assert rep1.rows == rep2.rows
    assert rep1.summary["n_rows"] == len(rep1.rows) > 0
    assert rep1.summary["all_certified"]
    assert rep1.summary["C_bound"] >= 1.0
    assert rep1.summary["ratio_min_lower"] > 0.0
    lines = rep1.to_csv_lines()
    assert lines[0] == "config,kind,r,param,lower,upper,certified"
    assert len(lines) == len(rep1.rows) + 1
    kinds = {row["kind"] for row in rep1.rows}
    assert kinds == {"weak", "strong"}
