import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thinobstacle.geometry import (INTERIOR, OUTER, THIN, GeometryError, GridFunction, ball_energy,
                                   ball_integrals, build_grid, discrete_laplacian, interpolate,
                                   read_snapshot, sample_sphere, sphere_measure, sphere_rule,
                                   write_snapshot)
from thinobstacle.profiles import Profile


def test_grid_spacing_and_thin_plane():
    g = build_grid(2, 17, 2.0)
    assert g.h == pytest.approx(0.25)
    assert g.shape == (17, 9)
    pts = g.points(g.thin_mask)
    assert np.all(pts[:, 1] == 0.0)
    assert np.all(g.kind[..., 0][1:-1] == THIN)
    assert g.kind[0, 0] == OUTER and g.kind[-1, 0] == OUTER


def test_grid_3d_half_domain():
    g = build_grid(3, 129)
    assert g.shape == (129, 129, 65)
    assert g.axes[-1][0] == 0.0 and g.axes[-1][-1] == pytest.approx(2.0)
    assert np.count_nonzero(g.kind == INTERIOR) == 127 * 127 * 63


@pytest.mark.parametrize("res,msg", [(16, "resolution must be odd"), (15, "at least 17")])
def test_grid_rejects_bad_resolution(res, msg):
    with pytest.raises(ValueError, match=msg):
        build_grid(2, res)


def test_dyadic_radii_respect_floor():
    g = build_grid(2, 513)
    r = g.dyadic_radii(0.5, 8.0)
    assert r[0] >= 8 * g.h and r[-1] == 0.5
    assert np.allclose(r[1:] / r[:-1], 2.0)


def test_discrete_laplacian_of_harmonic_quadratic_vanishes():
    g = build_grid(2, 33)
    f = GridFunction.from_function(g, lambda p: p[:, 0] ** 2 - p[:, 1] ** 2)
    lap = f.laplacian()
    assert np.abs(lap[~g.outer_mask]).max() < 1e-10


def test_thin_stencil_reads_even_reflection():
    # |y| has a kink on the thin plane: Delta_h |y| = 2/h at thin nodes
    g = build_grid(2, 33)
    f = GridFunction.from_function(g, lambda p: np.abs(p[:, 1]))
    lap = discrete_laplacian(f.values, g.h)
    assert np.allclose(lap[1:-1, 0], 2.0 / g.h)
    assert np.allclose(lap[1:-1, 1:-1], 0.0, atol=1e-10)


@given(st.floats(-1.9, 1.9), st.floats(-1.9, 1.9))
@settings(max_examples=50, deadline=None)
def test_interpolation_exact_for_bilinear(x, y):
    g = build_grid(2, 33)
    fn = lambda p: 1.0 + 2.0 * p[..., 0] - 0.5 * np.abs(p[..., 1]) + p[..., 0] * np.abs(p[..., 1])
    f = GridFunction.from_function(g, fn)
    p = np.array([[x, y]])
    assert f(p)[0] == pytest.approx(fn(p)[0], abs=1e-12)


def test_interpolation_outside_domain_raises():
    g = build_grid(2, 33)
    with pytest.raises(GeometryError):
        interpolate(g, np.zeros(g.shape), np.array([[2.5, 0.0]]))


def test_grid_function_is_read_only_and_finite():
    g = build_grid(2, 17)
    f = GridFunction(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    bad = np.zeros(g.shape)
    bad[3, 3] = np.nan
    with pytest.raises(ValueError, match="finite"):
        GridFunction(g, bad)


@pytest.mark.parametrize("n,measure", [(2, 2 * np.pi), (3, 4 * np.pi)])
def test_sphere_rule_constant_and_odd(n, measure):
    d, w = sphere_rule(n, 256)
    assert w.sum() == pytest.approx(measure, rel=1e-12)
    assert sphere_measure(n) == pytest.approx(measure)
    assert abs(np.dot(w, d[:, 0])) < 1e-12


def test_sphere_rule_second_moment_3d():
    d, w = sphere_rule(3, 256)
    assert np.dot(w, d[:, 2] ** 2) == pytest.approx(4 * np.pi / 3, rel=1e-10)


def test_sphere_sample_of_interpolated_profile():
    # closed form: H_0(r, psi_lam) = r^(2 lam) for the unit-normalised profile
    g = build_grid(2, 513)
    f = GridFunction.from_function(g, Profile(3 / 2))
    H = sample_sphere(f, np.zeros(2), 0.5, m=1024).l2_squared()
    assert H == pytest.approx(0.5 ** 3, rel=1e-4)


def test_sphere_sample_requires_enough_nodes_and_room():
    g = build_grid(2, 65)
    f = GridFunction(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        sample_sphere(f, np.zeros(2), 0.5, m=32)
    with pytest.raises(GeometryError):
        sample_sphere(f, np.array([1.8, 0.0]), 0.5)
    with pytest.raises(GeometryError, match="floor"):
        sample_sphere(f, np.zeros(2), 2 * g.h)


def test_ball_energy_of_linear_field():
    g = build_grid(2, 129)
    f = GridFunction.from_function(g, lambda p: p[:, 0])
    assert ball_energy(f, np.zeros(2), 1.0) == pytest.approx(np.pi, rel=2e-3)
    e, m = ball_integrals(f, np.zeros(2), [0.5, 1.0])
    assert m[1] == pytest.approx(np.pi / 4, rel=2e-3)
    assert e[0] < e[1] and m[0] < m[1]


def test_ball_energy_of_constant_is_zero():
    g = build_grid(3, 33)
    f = GridFunction(g, np.full(g.shape, 3.0))
    assert ball_energy(f, np.zeros(3), 1.0) == pytest.approx(0.0, abs=1e-12)


def test_ball_energy_matches_frequency_identity():
    g = build_grid(2, 513)
    f = GridFunction.from_function(g, Profile(3 / 2))
    D = ball_energy(f, np.zeros(2), 0.5)
    H = sample_sphere(f, np.zeros(2), 0.5).l2_squared()
    assert D == pytest.approx(1.5 * H, rel=2e-2)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=10, deadline=None)
def test_snapshot_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    g = build_grid(int(rng.integers(2, 4)), 17)
    f = GridFunction(g, rng.standard_normal(g.shape))
    path = tmp_path_factory.mktemp("snap") / "f.snap"
    write_snapshot(path, f, {"tol": "1e-10", "note": "x"})
    back, meta = read_snapshot(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)
    assert meta == {"tol": "1e-10", "note": "x"}


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.snap"
    p.write_bytes(b"not a snapshot\n")
    with pytest.raises(ValueError):
        read_snapshot(p)
