"""First-return kernels, transforms, spectral verdicts.

The free-product cut-point structure gives exact oracle values for the
kernel entries: every excursion out of the neighborhood re-enters at its
exit vertex, so off-diagonal lattice offsets carry exactly the one-step
mass r mu and all excursion mass sits at offset zero.
"""

import math

import numpy as np
import pytest

from martinlab import groups, measures, parabolic, potential
from martinlab.groups import ConfigError, NumericalError

import oracles

Z = groups.GroupSpec.parse("Z")
ZZ = groups.GroupSpec.parse("Z * Z")


@pytest.fixture(scope="module")
def mu_zz():
    return measures.make_measure(ZZ, kind="srw")


@pytest.fixture(scope="module")
def kern(mu_zz):
    return parabolic.first_return_kernel(mu_zz, 0, 0, 0.9)


@pytest.fixture(scope="module")
def kern_eta1(mu_zz):
    return parabolic.first_return_kernel(mu_zz, 0, 1, 0.9)


@pytest.fixture(scope="module")
def kern_z():
    mu = measures.make_measure(Z, kind="srw")
    return parabolic.first_return_kernel(mu, 0, 0, 0.5)


# ---------------------------------------------------------------------------
# kernel structure


def test_single_factor_kernel_is_exact_step(kern_z):
    # the neighborhood is the whole group: p = r mu with no excursions
    assert kern_z.meta["route"] == "exact-single-factor"
    assert kern_z.certified
    assert kern_z.mass(0, 0, (1,)) == 0.5 * 0.5
    assert kern_z.mass(0, 0, (-1,)) == 0.5 * 0.5
    assert kern_z.mass(0, 0, (0,)) == 0.0
    assert kern_z.defect.max() == 0.0


def test_cut_point_structure_eta0(kern):
    # off-diagonal offsets are the direct steps, bit-exact
    assert kern.mass(0, 0, (1,)) == pytest.approx(0.9 * 0.25, abs=1e-12)
    assert kern.mass(0, 0, (-1,)) == pytest.approx(0.9 * 0.25, abs=1e-12)
    # excursions all return to their exit vertex: strictly positive mass
    # at offset zero and nothing beyond |z| = 1
    assert kern.mass(0, 0, (0,)) > 0.05
    flat = kern.flat()[0, 0]
    far = np.abs(kern.offsets[:, 0]) > 1
    assert float(np.abs(flat[far]).sum()) == 0.0
    assert kern.defect.max() < 1e-6 * kern.row_mass(0)


def test_cut_point_structure_eta1(kern_eta1):
    K = kern_eta1
    assert [groups.word_to_str(ZZ, s) for s in K.sheets] == ["e", "b^-1", "b"]
    step = 0.9 * 0.25
    # identity sheet: all four neighbors stay inside N_1, no excursions
    assert K.mass(0, 0, (1,)) == pytest.approx(step, abs=1e-12)
    assert K.mass(0, 1, (0,)) == pytest.approx(step, abs=1e-12)
    assert K.mass(0, 2, (0,)) == pytest.approx(step, abs=1e-12)
    assert K.mass(0, 0, (0,)) == 0.0
    assert K.escape_defect[0] == 0.0
    # depth-1 sheet: one direct step back down, excursions stay diagonal
    assert K.mass(1, 0, (0,)) == pytest.approx(step, abs=1e-12)
    assert K.mass(1, 1, (0,)) > 0.05
    assert K.mass(1, 2, (0,)) == 0.0
    assert K.mass(1, 0, (1,)) == 0.0
    assert K.mass(1, 1, (1,)) == 0.0


def test_kernel_monotone_in_r(mu_zz):
    lo = parabolic.first_return_kernel(mu_zz, 0, 0, 0.5)
    hi = parabolic.first_return_kernel(mu_zz, 0, 0, 0.9)
    assert hi.mass(0, 0, (0,)) > lo.mass(0, 0, (0,))
    assert hi.mass(0, 0, (1,)) > lo.mass(0, 0, (1,))


def test_kernel_certified_when_geometric_bound_fits(mu_zz):
    K = parabolic.first_return_kernel(mu_zz, 0, 0, 0.3)
    assert K.certified
    assert K.meta["escape_continuation"] == "geometric(1/(1-r))"
    # at higher weights the one-way leak exceeds the budget and the kernel
    # honestly downgrades to the measured extrapolation
    K9 = parabolic.first_return_kernel(mu_zz, 0, 0, 0.9)
    assert not K9.certified
    assert K9.meta["escape_continuation"] == "doubling-extrapolation(measured)"


def test_kernel_validation(mu_zz):
    with pytest.raises(ConfigError):
        parabolic.first_return_kernel(mu_zz, 5, 0, 0.5)
    with pytest.raises(ConfigError):
        parabolic.first_return_kernel(mu_zz, 0, -1, 0.5)
    with pytest.raises(ConfigError):
        parabolic.first_return_kernel(mu_zz, 0, 0, 0.0)
    fmix = groups.GroupSpec.parse("F_2 * Z")
    mu = measures.make_measure(fmix, kind="srw")
    with pytest.raises(ConfigError):
        parabolic.first_return_kernel(mu, 0, 0, 0.5)  # free factor


def test_kernel_rejects_weight_above_radius(mu_zz):
    with pytest.raises(ConfigError):
        parabolic.first_return_kernel(mu_zz, 0, 0, 1.3)


# ---------------------------------------------------------------------------
# transforms and eigendata


def test_f_matrix_single_factor_closed_form(kern_z):
    # F(u) = r cosh(u) for the simple walk on Z
    for u in (0.0, 0.5, 2.0):
        F = parabolic.F_matrix(kern_z, [u])
        assert F.shape == (1, 1)
        assert F[0, 0] == pytest.approx(0.5 * math.cosh(u), rel=1e-14)


def test_f_matrix_symmetry(kern_eta1):
    # mu symmetric: p_{j,k}(z) = p_{k,j}(-z), so F(-u) = F(u)^T
    u = np.array([0.4])
    F = parabolic.F_matrix(kern_eta1, u)
    Fm = parabolic.F_matrix(kern_eta1, -u)
    assert np.allclose(F, Fm.T, atol=1e-12)


def test_f_matrix_domain_guard(kern):
    with pytest.raises(ConfigError):
        parabolic.F_matrix(kern, [0.4, 0.4])  # wrong dimension


def test_dominant_eig_invariants(kern_eta1):
    F = parabolic.F_matrix(kern_eta1, np.zeros(1))
    trip = parabolic.dominant_eig(F)
    assert trip.right[0] == 1.0
    assert float(trip.left @ trip.right) == pytest.approx(1.0, abs=1e-10)
    assert trip.residual <= 1e-10 * float(np.abs(F).max())
    # Perron value dominates the row sums' geometric mean and stays below max
    rows = F.sum(axis=1)
    assert rows.min() - 1e-12 <= trip.value <= rows.max() + 1e-12


def test_lambda_min_at_origin_by_symmetry(kern):
    mr = parabolic.lambda_min(kern)
    assert abs(mr.u[0]) < 1e-6
    assert mr.grad_norm < 1e-8
    assert mr.hessian_pd
    assert not mr.boundary_flagged
    # min lambda = total first-return mass, strictly below 1 at r < R
    assert mr.value == pytest.approx(kern.row_mass(0), abs=1e-10)
    assert mr.value < 1.0


def test_level_set_matches_first_passage(kern):
    # on {lambda = 1} with outward normal +1, e^u equals the reciprocal
    # first-passage decay of the factor walk
    mr = parabolic.lambda_min(kern)
    lp = parabolic.level_set_point(kern, (1.0,), min_result=mr)
    assert lp.value == pytest.approx(1.0, abs=1e-9)
    assert lp.normal[0] == pytest.approx(1.0, abs=1e-8)
    want = 1.0 / oracles.tree_first_passage(0.9, 4)
    assert math.exp(lp.u[0]) == pytest.approx(want, rel=1e-6)


def test_harmonicity_residual(kern_eta1):
    # at u on the level set the Perron vector is exactly harmonic
    lp = parabolic.level_set_point(kern_eta1, (1.0,))
    res = parabolic.harmonicity_residual(kern_eta1, lp.u, right=lp.triple.right)
    assert res < 1e-9
    # at u = 0 the residual equals |lambda - 1| scaled by the eigenvector
    trip0 = parabolic.lambda_at(kern_eta1, np.zeros(1), order=0)
    res0 = parabolic.harmonicity_residual(kern_eta1, np.zeros(1),
                                          right=trip0.right)
    assert res0 == pytest.approx(abs(trip0.value - 1.0) *
                                 float(np.abs(trip0.right).max()), rel=1e-6)


def test_parabolic_martin_kernel_multiplicative(kern):
    lp = parabolic.level_set_point(kern, (1.0,))
    k1 = parabolic.parabolic_martin_kernel(kern, (1,), u=lp.u, triple=lp.triple)
    k2 = parabolic.parabolic_martin_kernel(kern, (2,), u=lp.u, triple=lp.triple)
    k0 = parabolic.parabolic_martin_kernel(kern, (0,), u=lp.u, triple=lp.triple)
    assert k0 == pytest.approx(1.0)
    assert k2 == pytest.approx(k1 * k1, rel=1e-10)
    with pytest.raises(ConfigError):
        parabolic.parabolic_martin_kernel(kern, (1,), u=np.zeros(1))


# ---------------------------------------------------------------------------
# exponential moments


def test_exponential_moment_finite_support(kern):
    rep = parabolic.exponential_moment(kern, 0.5)
    assert rep.finite_looking
    assert float(rep.lower[0, 0]) <= float(rep.upper[0, 0])
    # the kernel genuinely has finite support, so every rate looks finite
    assert rep.largest_finite_M == 16.0
    rep2 = parabolic.exponential_moment(kern, 2.0)
    assert float(rep2.lower[0, 0]) > float(rep.lower[0, 0])
    with pytest.raises(ConfigError):
        parabolic.exponential_moment(kern, -0.1)


def test_exponential_moment_single_factor_closed_form(kern_z):
    # both steps +-1 carry weight e^{M |z|} = e^M: the moment is r e^M
    rep = parabolic.exponential_moment(kern_z, 1.0)
    assert float(rep.lower[0, 0]) == pytest.approx(0.5 * math.e, rel=1e-14)
    assert float(rep.upper[0, 0]) == pytest.approx(0.5 * math.e, rel=1e-12)


# ---------------------------------------------------------------------------
# induced Green functions


def test_induced_green_equals_full_green(kern):
    # visits to the neighborhood decompose full paths bijectively, so the
    # induced Green at t = 1 recovers the full Green function
    for k in range(4):
        got = parabolic.induced_green(kern, (k,), 0, t=1.0)
        want = oracles.tree_green_xy(0.9, 4, k)
        tol = max(1e-4, 20.0 * float(kern.defect.max()) / kern.row_mass(0))
        assert got.value == pytest.approx(want, rel=tol)
        assert got.tail_bound < 1e-9 * want


def test_induced_green_diverges_above_critical_t(kern):
    lam0 = parabolic.lambda_at(kern, np.zeros(1), order=0).value
    with pytest.raises(NumericalError):
        parabolic.induced_green(kern, (0,), 0, t=1.05 / lam0)


def test_factor_green_fit_recovers_tree_family(kern):
    fit = parabolic.factor_green_fit(kern, points=5)
    assert fit.max_deviation < 1e-6
    assert 0.0 < fit.xi < 1.0
    # xi and rho1 satisfy the one-parameter family relation
    assert fit.rho1 == pytest.approx(2 * fit.xi / (1 + fit.xi**2), rel=1e-12)
    assert fit.xi == pytest.approx(oracles.tree_first_passage(0.9, 4),
                                   rel=1e-4)


# ---------------------------------------------------------------------------
# degenerescence verdicts and the rank gate


def test_degenerescence_free_product_is_non_degenerate(mu_zz):
    v = parabolic.is_spectrally_degenerate(mu_zz, 0)
    assert v.verdict == "non-degenerate"
    assert v.extrapolated < 1.0 - v.tolerance
    assert v.factor_rank == 1
    assert len(v.ladder) >= 3
    for eps, r, lam, defect in v.ladder:
        assert 0.0 < lam < 1.0
        assert defect < 1e-2


def test_degenerescence_single_factor_amenable_note():
    mu = measures.make_measure(Z, kind="srw")
    v = parabolic.is_spectrally_degenerate(mu, 0)
    assert v.verdict == "inconclusive"
    assert "amenable" in v.note


def test_rank_gate_regimes():
    g2 = parabolic.rank_gate(2)
    assert g2.series_converges is False
    assert not g2.degenerescence_admissible
    g4 = parabolic.rank_gate(4)
    assert g4.series_converges is None
    assert g4.boundary_case
    g5 = parabolic.rank_gate(5)
    assert g5.series_converges is True
    assert g5.degenerescence_admissible
    # a fitted exponent overrides the nominal rank
    gf = parabolic.rank_gate(5, fitted_exponent=-1.2)
    assert gf.series_converges is False
    assert gf.expected_exponent == -2.5
    with pytest.raises(ConfigError):
        parabolic.rank_gate(0)


def test_rank_gate_boundary_tolerance():
    assert parabolic.rank_gate(4, fitted_exponent=-2.1).boundary_case
    assert parabolic.rank_gate(4, fitted_exponent=-2.2).degenerescence_admissible
    assert parabolic.rank_gate(4, fitted_exponent=-1.8).series_converges is False
