from fractions import Fraction

import numpy as np
import pytest

from thinobstacle.frequency import (ContactPointError, check_monotone, estimate_frequency, frequency_curve,
                                    h_mu, h_ratio_bounds, is_contact_point, monneau_max)
from thinobstacle.geometry import GridFunction, build_grid
from thinobstacle.profiles import Profile

L32 = Fraction(3, 2)


@pytest.fixture(scope="module")
def grid513():
    return build_grid(2, 513)


def _profile(grid, lam):
    return GridFunction.from_function(grid, Profile(lam))


@pytest.mark.parametrize("lam", [Fraction(1), L32, Fraction(2), Fraction(7, 2)])
def test_frequency_of_homogeneous_profile(grid513, lam):
    f = _profile(grid513, lam)
    curve = frequency_curve(f, np.zeros(2), grid513.dyadic_radii(0.5, 8.0))
    assert np.allclose(curve.phi, float(lam), rtol=2e-2)


@pytest.mark.parametrize("lam", [Fraction(1), L32, Fraction(2)])
def test_h_mu_at_mu_equal_lambda_is_one(grid513, lam):
    f = _profile(grid513, lam)
    for r in (0.1, 0.25, 0.5):
        assert h_mu(f, np.zeros(2), r, float(lam)) == pytest.approx(1.0, rel=2e-2)


def test_truncated_frequency_of_zero_is_gamma():
    g = build_grid(2, 65)
    curve = frequency_curve(GridFunction(g, np.zeros(g.shape)), np.zeros(2), [0.5, 0.75, 1.0], gammas=(2,))
    assert np.all(curve.phi_gamma[2.0] == 2.0)
    assert np.all(np.isnan(curve.phi))


def test_curve_columns_and_rows():
    g = build_grid(2, 129)
    f = _profile(g, L32)
    curve = frequency_curve(f, np.zeros(2), [0.25, 0.5], mus=(1.0,), gammas=(2,))
    assert curve.columns() == ["r", "H0", "D", "phi", "H_mu=1", "phi_gamma=2", "g_gamma=2"]
    assert len(curve.rows()) == 2 and len(curve.rows()[0]) == 7
    with pytest.raises(ValueError):
        frequency_curve(f, np.zeros(2), [0.5, 0.25])


def test_monneau_max_location(grid513):
    f = _profile(grid513, L32)
    r = 0.2
    lo, s_lo = monneau_max(f, np.zeros(2), 1.0, r)
    assert s_lo == pytest.approx(2.0)
    assert lo == pytest.approx((2 * r) ** (2 * (1.5 - 1.0)), rel=2e-2)
    hi, s_hi = monneau_max(f, np.zeros(2), 2.0, r)
    assert s_hi == pytest.approx(1.0)
    assert hi == pytest.approx(r ** (2 * (1.5 - 2.0)), rel=2e-2)
    with pytest.raises(ValueError):
        monneau_max(f, np.zeros(2), 1.0, r, s_samples=16)


@pytest.mark.parametrize("values,allowance,dip,passed,index", [
    ((1.0, 1.1, 1.3), 0.0, 0.0, True, 0),
    ((1.0, 0.997, 1.3), 0.005, 0.003, True, 0),
    ((1.0, 0.9, 1.3), 0.005, 0.1, False, 0),
])
def test_check_monotone_examples(values, allowance, dip, passed, index):
    rep = check_monotone(values, allowance)
    assert rep.worst_dip == pytest.approx(dip)
    assert rep.passed == passed and rep.index == index


def test_check_monotone_needs_three_samples():
    with pytest.raises(ValueError):
        check_monotone([1.0, 2.0], 0.0)


def test_h_ratio_bounds_on_exact_power_law(grid513):
    f = _profile(grid513, L32)
    curve = frequency_curve(f, np.zeros(2), grid513.dyadic_radii(0.5, 8.0))
    # gamma large enough that the truncation term is negligible
    rep = h_ratio_bounds(curve, 1.5, 1.5, gamma=6.0)
    assert rep["C2"] == pytest.approx(1.0, rel=0.1)
    assert rep["C3"] == pytest.approx(1.0, rel=0.1)


def test_h_ratio_bounds_for_zero_field():
    g = build_grid(2, 129)
    curve = frequency_curve(GridFunction(g, np.zeros(g.shape)), np.zeros(2), [0.25, 0.35, 0.5])
    rep = h_ratio_bounds(curve, 2.0, 2.0, gamma=2.0)
    assert rep["C2"] == pytest.approx(1.0) and rep["C3"] == pytest.approx(1.0)
    assert rep["slope"] == pytest.approx(4.0)


def test_contact_point_detection():
    g = build_grid(2, 129)
    f = _profile(g, L32)
    assert is_contact_point(f, np.array([-0.5, 0.0]))
    assert not is_contact_point(f, np.array([0.5, 0.0]))
    assert not is_contact_point(f, np.array([-0.5, 0.25]))
    with pytest.raises(ContactPointError):
        estimate_frequency(f, np.array([0.5, 0.0]))


def test_estimate_frequency_on_solves(small_solves):
    s = small_solves("p32", res=257, lam=L32)
    est = estimate_frequency(s, np.zeros(2))
    assert est.contains(1.5, 0.1)
    assert est.lo <= est.estimate <= est.hi
    s1 = small_solves("psi1", lam=1)
    for x in (-0.5, 0.0, 0.75):
        assert estimate_frequency(s1, np.array([x, 0.0])).contains(1.0, 0.1)


def test_estimate_frequency_perturbed(small_solves):
    s = small_solves("pert", res=257, kind="perturbed", lam=L32, lam2=Fraction(7, 2), eps=0.05)
    assert estimate_frequency(s, np.zeros(2)).contains(1.5, 0.1)
