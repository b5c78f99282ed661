from fractions import Fraction

import numpy as np
import pytest

from thinobstacle.estimates import (CertificateError, PreconditionError, as_field, residual_field,
                                    verify_barrier, verify_frequency_comparison, verify_holder_decay,
                                    verify_laplacian_mass, verify_nonlinear_wlapw, verify_subharmonic_bounds)
from thinobstacle.geometry import GridFunction, build_grid
from thinobstacle.profiles import Profile, laplacian_constant, slit_basis_2d
from thinobstacle.solver import make_boundary_data, solve, solve_linearized

L32, L72 = Fraction(3, 2), Fraction(7, 2)
HALF = Fraction(1, 2)


@pytest.fixture(scope="module")
def slit_half():
    g = build_grid(2, 257)
    return solve_linearized(g, make_boundary_data("custom", 2, fn=slit_basis_2d(HALF)))


def test_subharmonic_bounds_for_slit_harmonic(slit_half):
    rep = verify_subharmonic_bounds(slit_half)
    assert abs(rep["certificate_min"]) <= 1e-10
    assert rep["H0_strictly_increasing"]
    assert np.isfinite(rep["sup_ratio"]) and np.isfinite(rep["grad_ratio"])


def test_subharmonic_bounds_for_difference_of_solves(small_solves):
    u = small_solves("p32", lam=L32).u
    v = small_solves("pert", kind="perturbed", lam=L32, lam2=L72, eps=0.05).u
    rep = verify_subharmonic_bounds(u - v)
    assert rep["certificate_min"] >= -1e-8
    assert 0 < rep["sup_ratio"] < np.inf


def test_certificate_violation_aborts():
    g = build_grid(2, 65)
    bump = GridFunction.from_function(g, lambda p: p[:, 0] ** 2 + p[:, 1] ** 2 - 0.25)
    with pytest.raises(CertificateError):
        verify_subharmonic_bounds(bump)


def test_residual_field_of_exact_profile_has_no_laplacian():
    g = build_grid(2, 129)
    F = residual_field(GridFunction.from_function(g, Profile(L32)), L32)
    assert np.abs(F.values).max() == 0.0
    thin = g.thin_mask[..., 0]
    # the reflected stencil of psi_3/2 matches its density up to O(h) away from the origin
    x = g.axes[0]
    sel = thin & (x < -0.5)
    assert np.abs(F.lap[..., 0][sel]).max() * g.h < 0.05 * laplacian_constant(2, L32)


def test_barrier_on_profile_solve(small_solves):
    s = small_solves("p32", res=257, lam=L32)
    rep = verify_barrier(s, L32, 1.0, 0.2)
    assert rep["hard"] and rep["easy"] and rep["holds"]
    assert rep["delta_star"] <= 2 * s.grid.h
    assert rep["C_admissible"] == pytest.approx(0.2 ** 1.5 / rep["eta"])


def test_barrier_odd_profile(small_solves):
    rep = verify_barrier(small_solves("psi1", lam=1), 1, 1.0, 0.2)
    assert rep["odd"] and rep["delta_star"] == 0.0
    with pytest.raises(PreconditionError):
        verify_barrier(small_solves("psi1", lam=1), 2, 1.0, 0.2)


def test_laplacian_mass_of_profile_solve(small_solves):
    s = small_solves("p32", res=257, lam=L32)
    delta = 0.25
    rep = verify_laplacian_mass(s, L32, 1.0, delta=delta)
    closed = laplacian_constant(2, L32) * delta ** 1.5 / 1.5
    assert rep["psi_mass"] == pytest.approx(closed, rel=5e-2)
    assert rep["lhs_u"] == pytest.approx(rep["psi_mass"], rel=0.1)
    assert rep["lhs"] < 0.2 * rep["lhs_u"]
    # below one cell only the origin remains; its mass is a one-cell floor of order h^lam
    tiny = verify_laplacian_mass(s, L32, 1.0, delta=1e-6)
    assert tiny["lhs"] <= s.grid.h ** 1.5
    assert tiny["lhs_u"] < 0.1 * rep["lhs_u"]


def test_wlapw_degenerate_for_exact_profile():
    g = build_grid(2, 129)
    rep = verify_nonlinear_wlapw(GridFunction.from_function(g, Profile(L32)), L32)
    assert rep["degenerate"]


def test_wlapw_vanishes_for_perturbed_solution(small_solves):
    # the residual eps psi_7/2 is zero wherever Delta w is supported
    s = small_solves("pert", res=257, kind="perturbed", lam=L32, lam2=L72, eps=0.05)
    rep = verify_nonlinear_wlapw(s, L32)
    assert not rep["degenerate"] and rep["product_at_roundoff"]
    assert len(rep["ratio"]) == len(rep["radii"])


def test_wlapw_difference_sign(small_solves):
    a = small_solves("p32", lam=L32)
    b = small_solves("pert", kind="perturbed", lam=L32, lam2=L72, eps=0.05)
    rep = verify_nonlinear_wlapw(a, None, reference=b)
    assert rep["sign_ok"] and rep["thin_sum_wlapw"] >= -10 * a.tol


def test_holder_decay_of_slit_harmonic(slit_half):
    rep = verify_holder_decay(slit_half, 0.2)
    assert rep["alpha"] == pytest.approx(0.5, abs=0.1)
    assert rep["certificate_min"] >= -1e-10


def test_holder_decay_of_zero_and_precondition():
    g = build_grid(2, 129)
    rep = verify_holder_decay(GridFunction(g, np.zeros(g.shape)), 0.2)
    assert rep["sup"] == 0.0 and all(v == 0.0 for v in rep["sups"])
    with pytest.raises(PreconditionError):
        verify_holder_decay(GridFunction(g, np.ones(g.shape)), 0.2)


def test_holder_decay_of_perturbed_residual(small_solves):
    s = small_solves("pert", res=257, kind="perturbed", lam=L32, lam2=L72, eps=0.05)
    rep = verify_holder_decay(residual_field(s, L32), 0.1)
    assert rep["alpha"] > 0


def test_frequency_comparison_identical_centres(small_solves):
    s = small_solves("p32", lam=L32)
    rep = verify_frequency_comparison(s, np.zeros(2), 0.25)
    assert rep["deviation"] == 0.0 and rep["dist_ratio"] == 0.0


def test_frequency_comparison_odd_profile(small_solves):
    s = small_solves("psi1", lam=1)
    rep = verify_frequency_comparison(s, np.array([-0.25, 0.0]), 0.25)
    assert rep["deviation"] < 1e-2
    assert np.isfinite(rep["tangential_h2_ratio"])


def test_frequency_comparison_along_the_3d_contact_line():
    g = build_grid(3, 65)
    s = solve(g, make_boundary_data("profile", 3, lam=L32))
    rep = verify_frequency_comparison(s, np.array([0.0625, 0.0, 0.0]), 0.5)
    assert rep["dist_ratio"] == pytest.approx(0.125)
    assert rep["deviation"] < 2e-2
    assert np.isfinite(rep["constant_linear"])


def test_frequency_comparison_requires_contact_points(small_solves):
    s = small_solves("p32", lam=L32)
    with pytest.raises(PreconditionError):
        verify_frequency_comparison(s, np.array([0.25, 0.0]), 0.25)


def test_as_field_uses_discrete_laplacian():
    g = build_grid(2, 33)
    f = GridFunction.from_function(g, lambda p: p[:, 0] ** 2)
    F = as_field(f)
    assert np.allclose(F.lap[g.interior_mask], 2.0)
