"""Step distributions, convolution powers, and sampling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from martinlab import groups, measures
from martinlab.groups import ConfigError, IDENTITY

import oracles

ZZ = groups.GroupSpec.parse("Z * Z")
F2 = groups.GroupSpec.parse("F_2")


def test_srw_is_letter_uniform():
    mu = measures.make_measure(F2, kind="srw")
    assert mu.is_letter_uniform()
    assert mu.mass(groups.str_to_word(F2, "a1")) == pytest.approx(0.25)
    assert mu.lazy_mass == 0.0
    assert mu.max_jump == 1


def test_lazy_srw_identity_mass():
    mu = measures.make_measure(ZZ, kind="lazy_srw", alpha=0.3)
    assert mu.lazy_mass == pytest.approx(0.3)
    total = sum(m for _, m in mu.masses)
    assert total == pytest.approx(1.0)


def test_adapted_weights_split_by_factor():
    mu = measures.make_measure(ZZ, kind="adapted", weights=[0.7, 0.3])
    a = groups.str_to_word(ZZ, "a")
    b = groups.str_to_word(ZZ, "b")
    assert mu.mass(a) == pytest.approx(0.35)
    assert mu.mass(b) == pytest.approx(0.15)


def test_product_lazy_is_product():
    spec = groups.GroupSpec.parse("Z^3")
    mu = measures.make_measure(spec, kind="product_lazy", alpha=0.5)
    assert measures.is_product_measure(mu)
    assert len(mu.masses) == 27
    srw = measures.make_measure(spec, kind="lazy_srw", alpha=0.5)
    assert not measures.is_product_measure(srw)


def test_from_dict_validation():
    a = groups.str_to_word(ZZ, "a")
    ai = groups.inverse(ZZ, a)
    with pytest.raises(ConfigError):
        measures.FiniteMeasure.from_dict(ZZ, {a: 0.6, ai: 0.4})  # asymmetric
    with pytest.raises(ConfigError):
        measures.FiniteMeasure.from_dict(ZZ, {a: 0.5, ai: 0.6})  # mass != 1
    with pytest.raises(ConfigError):
        # support inside <a>: does not generate the free product
        measures.FiniteMeasure.from_dict(ZZ, {a: 0.5, ai: 0.5})


def test_convolution_against_exact():
    mu = measures.make_measure(ZZ, kind="adapted", weights=[0.5, 0.5])
    table = measures.convolution_powers(mu, 4, window=6)
    exact = measures.convolution_powers_exact(mu, 4)
    for n in range(5):
        assert table.mass_defect(n) == 0.0
        for x, frac in exact[n].items():
            assert table.value(n, x) == pytest.approx(float(frac), abs=1e-14)


def test_convolution_against_brute():
    mu = measures.make_measure(F2, kind="srw")
    mu_dict = dict(mu.masses)
    brute = oracles.brute_convolution(F2, mu_dict, 4)
    table = measures.convolution_powers(mu, 4, window=6)
    for n in range(5):
        for x, m in brute[n].items():
            assert table.value(n, x) == pytest.approx(m, abs=1e-14)


def test_return_probabilities_match_tree_oracle():
    mu = measures.make_measure(F2, kind="srw")
    table = measures.convolution_powers(mu, 8, window=10)
    for n in range(9):
        want = oracles.tree_return(4, n)
        assert table.value(n, IDENTITY) == pytest.approx(want, abs=1e-13)


def test_window_exit_flow_accounting():
    mu = measures.make_measure(F2, kind="srw")
    table = measures.convolution_powers(mu, 6, window=3)
    for n in range(7):
        row_sum = float(table.row(n).sum())
        assert row_sum + table.mass_defect(n) == pytest.approx(1.0, abs=1e-12)
    assert table.mass_defect(6) > 0  # paths do leave a radius-3 window


def test_chapman_kolmogorov():
    mu = measures.make_measure(ZZ, kind="adapted", weights=[0.5, 0.5])
    exact = measures.convolution_powers_exact(mu, 4)
    x = groups.str_to_word(ZZ, "a*b")
    total = sum(
        float(exact[2].get(y, 0))
        * float(exact[2].get(groups.multiply(ZZ, groups.inverse(ZZ, y), x), 0))
        for y in exact[2])
    assert total == pytest.approx(float(exact[4].get(x, 0)), abs=1e-14)


def test_support_moves_shapes():
    mu = measures.make_measure(ZZ, kind="lazy_srw", alpha=0.2)
    ball = groups.ball(ZZ, 4)
    moves, masses, lazy = measures.support_moves(ball, mu)
    assert moves.shape == (4, ball.size) and moves.dtype == np.int32
    assert masses.shape == (4,)
    assert lazy == pytest.approx(0.2)
    e = ball.index_of(IDENTITY)
    a = ball.index_of(groups.str_to_word(ZZ, "a"))
    assert a in set(int(moves[l][e]) for l in range(4))


def test_sample_path_reproducible():
    mu = measures.make_measure(F2, kind="srw")
    p1 = measures.sample_path(mu, 50, seed=11)
    p2 = measures.sample_path(mu, 50, seed=11)
    p3 = measures.sample_path(mu, 50, seed=12)
    assert p1 == p2
    assert p1 != p3
    assert len(p1) == 51
    support = set(mu.support)
    for u, v in zip(p1, p1[1:]):
        step = groups.multiply(F2, groups.inverse(F2, u), v)
        assert step in support


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=9), st.integers(min_value=1, max_value=9))
def test_symmetry_propagates_to_powers(w1, w2):
    total = 2.0 * (w1 + w2)
    a = groups.str_to_word(ZZ, "a")
    b = groups.str_to_word(ZZ, "b")
    mu = measures.FiniteMeasure.from_dict(ZZ, {
        a: w1 / total, groups.inverse(ZZ, a): w1 / total,
        b: w2 / total, groups.inverse(ZZ, b): w2 / total})
    exact = measures.convolution_powers_exact(mu, 3)
    for n in range(4):
        for x, m in exact[n].items():
            assert exact[n].get(groups.inverse(ZZ, x), 0) == m
