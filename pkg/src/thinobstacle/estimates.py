"""Empirical checks of the inequality lemmas on computed fields.

Every function returns a flat dict of measured quantities.  Functions whose
hypotheses include a node-wise sign certificate check it first and raise
``CertificateError`` when it fails.

Residuals ``w = u - tau psi`` carry their own Laplacian: the discrete
``Delta_h u`` minus the exact thin-space density of the profile (divided by
h, the weight of the reflected thin stencil).  Differencing the profile's
nodal values instead would add its O(h^2 r^(lam-4)) truncation error, which
is large near the free boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frequency import check_monotone, frequency_curve, is_contact_point
from .geometry import (GridFunction, ball_integrals, discrete_laplacian, node_distances,
                       sample_sphere)
from .profiles import Profile, as_homogeneity, branch, laplacian_density, spine


class CertificateError(ValueError):
    """A node-wise sign certificate required by a lemma does not hold."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Field:
    """Node values with an associated Laplacian (in units of Delta_h)."""

    f: GridFunction
    lap: np.ndarray

    @property
    def grid(self):
        return self.f.grid

    @property
    def values(self):
        return self.f.values


def as_field(x) -> Field:
    if isinstance(x, Field):
        return x
    f = x.u if hasattr(x, "u") else x
    return Field(f, discrete_laplacian(f.values, f.grid.h))


def residual_field(s, lam, tau: float = 1.0, e=None) -> Field:
    """``w = u - tau psi_lam(. , spine e)`` with the profile's Laplacian taken analytically."""
    u = s.u if hasattr(s, "u") else s
    grid = u.grid
    e = tuple(e) if e is not None else spine(grid.n)
    prof = Profile(lam, tau, e)
    w = GridFunction(grid, u.values - prof(grid.points()).reshape(grid.shape))
    lap = discrete_laplacian(u.values, grid.h)
    dens = laplacian_density(lam, tau, e, _thin_coords(grid))
    inner = grid.thin_mask[..., 0]
    lap[..., 0] = np.where(inner, lap[..., 0] - dens / grid.h, 0.0)
    return Field(w, lap)


def _thin_measure(grid) -> float:
    return grid.h ** grid.n


def _certificate(F: Field, tol: float) -> float:
    """Most negative ``w Delta w`` over non-outer nodes (0 if none is negative)."""
    prod = F.values * F.lap
    prod = prod[~F.grid.outer_mask]
    worst = float(prod.min()) if prod.size else 0.0
    if worst < -tol:
        raise CertificateError(f"node-wise certificate fails: min w*Delta_h w = {worst:.3e} < -{tol:g}")
    return min(worst, 0.0)


def _shell_norm(f: GridFunction, x0, r: float) -> float:
    """``||f(x0 + r .)||_{L^2(B_2 minus B_1)}``."""
    _, m = ball_integrals(f, x0, [r, 2.0 * r])
    return float(np.sqrt(max(m[1] - m[0], 0.0) * r ** (-f.grid.n)))


# ---------------------------------------------------------------------------


def verify_subharmonic_bounds(w, scale: float = 0.5, cert_tol: float = 1e-8, x0=None) -> dict:
    """Sup and gradient bounds by the shell norm, and monotonicity of H_0, for ``w Delta w >= 0``.

    The unit-ball statement is applied to ``w(x0 + scale .)``.
    """
    F = as_field(w)
    grid = F.grid
    worst = _certificate(F, cert_tol)
    x0 = np.zeros(grid.n) if x0 is None else np.asarray(x0, dtype=float)
    n, s = grid.n, scale
    shell = _shell_norm(F.f, x0, s)
    inside = node_distances(grid, x0) <= 1.5 * s
    sup = float(np.abs(F.values[inside]).max())
    e, _ = ball_integrals(F.f, x0, [1.5 * s])
    grad = float(np.sqrt(s ** (2 - n) * e[0]))
    radii = np.geomspace(max(8 * grid.h, 0.05 * s), 2 * s, 12)
    H0 = np.array([sample_sphere(F.f, x0, r).l2_squared() for r in radii])
    mono = check_monotone(H0, 1e-2, "H0", floor=1e-300)
    return dict(certificate_min=worst, shell_norm=shell, sup=sup, grad=grad,
                sup_ratio=sup / shell if shell > 0 else np.inf,
                grad_ratio=grad / shell if shell > 0 else np.inf,
                H0_worst_dip=mono.worst_dip, H0_strictly_increasing=bool(np.all(np.diff(H0) > 0)),
                scale=s, h=grid.h)


def _thin_coords(grid):
    coords = np.meshgrid(*grid.axes[:-1], indexing="ij")
    return np.stack(coords, axis=-1)


def verify_barrier(s, lam, tau: float = 1.0, delta: float = 0.2, e=None, zero_tol: float | None = None) -> dict:
    """Exhaustive check of the barrier inclusions on thin nodes of the unit ball.

    half-integer lam: thin nodes in B_(1-delta) with x.e < -delta must be in
    contact (hard) and thin nodes in B_1 with x.e > delta must be free
    (easy).  odd lam: thin nodes in B_(1-delta) with |x.e| > delta must be in
    contact.  Also reports ``eta = sup_{B_1}|u - tau psi|``, the largest
    admissible constant ``tau delta^lam / eta`` and the smallest delta for
    which the inclusions hold (exact over the node set).
    """
    q = as_homogeneity(lam)
    kind = branch(q)
    if kind == "even":
        raise PreconditionError("barrier inclusions concern half-integer or odd homogeneities")
    u = s.u if hasattr(s, "u") else s
    grid = u.grid
    e = np.asarray(e if e is not None else spine(grid.n), dtype=float)
    if zero_tol is None:
        zero_tol = s.tol * grid.h ** 2 if hasattr(s, "tol") else 1e-12
    prof = Profile(q, tau, tuple(e))
    ball = node_distances(grid, np.zeros(grid.n)) <= 1.0 + 1e-12
    eta = float(np.abs(u.values - prof(grid.points()).reshape(grid.shape))[ball].max())
    X = _thin_coords(grid)
    inner = grid.thin_mask[..., 0]
    t = X @ e
    rad = np.linalg.norm(X, axis=-1)
    contact = (u.values[..., 0] <= zero_tol) & inner
    free = ~contact & inner
    out = dict(lam=str(q), tau=tau, delta=delta, eta=eta, tau_delta_lam=tau * delta ** float(q),
               C_admissible=tau * delta ** float(q) / eta if eta > 0 else np.inf, h=grid.h)
    in_core = rad < 1.0 - delta
    if kind == "half":
        hard = in_core & (t < -delta) & inner
        easy = (rad <= 1.0) & (t > delta) & inner
        out["hard_violations"] = int(np.sum(hard & ~contact))
        out["easy_violations"] = int(np.sum(easy & ~free))
        out["hard"] = out["hard_violations"] == 0
        out["easy"] = out["easy_violations"] == 0
        # node p leaves the hard set once delta >= min(1 - |p|, -p.e)
        bad_h = free & (rad < 1.0) & (t < 0)
        d_h = float(np.max(np.minimum(1.0 - rad[bad_h], -t[bad_h]))) if bad_h.any() else 0.0
        bad_e = contact & (rad <= 1.0) & (t > 0)
        d_e = float(np.max(t[bad_e])) if bad_e.any() else 0.0
        out["delta_star"] = max(d_h, d_e)
        out["holds"] = out["hard"] and out["easy"]
    else:
        odd = in_core & (np.abs(t) > delta) & inner
        out["odd_violations"] = int(np.sum(odd & ~contact))
        out["odd"] = out["odd_violations"] == 0
        bad = free & (rad < 1.0)
        out["delta_star"] = float(np.max(np.minimum(1.0 - rad[bad], np.abs(t[bad])))) if bad.any() else 0.0
        out["holds"] = out["odd"]
    return out


def verify_laplacian_mass(s, lam, tau: float = 1.0, e=None, delta: float = 0.05) -> dict:
    """``int_{C_delta cap B_1} |Delta w|`` against ``tau delta^lam + ||w||_{L^2(B_2 minus B_1)}``."""
    q = as_homogeneity(lam)
    if branch(q) == "even":
        raise PreconditionError("the mass bound concerns half-integer or odd homogeneities")
    F = residual_field(s, q, tau, e)
    grid = F.grid
    e = np.asarray(e if e is not None else spine(grid.n), dtype=float)
    X = _thin_coords(grid)
    inner = grid.thin_mask[..., 0]
    sel = inner & (np.linalg.norm(X, axis=-1) <= 1.0) & (np.abs(X @ e) <= delta)
    meas = _thin_measure(grid)
    lhs = float(np.sum(np.abs(F.lap[..., 0][sel])) * meas)
    u = s.u if hasattr(s, "u") else s
    lhs_u = float(np.sum(np.abs(discrete_laplacian(u.values, grid.h)[..., 0][sel])) * meas)
    dens = laplacian_density(q, tau, tuple(e), X)
    psi_mass = float(np.sum(np.abs(dens[sel])) * grid.h ** (grid.n - 1))
    shell = _shell_norm(F.f, np.zeros(grid.n), 1.0)
    rhs1 = tau * delta ** float(q)
    return dict(lam=str(q), delta=delta, lhs=lhs, lhs_u=lhs_u, psi_mass=psi_mass, tau_delta_lam=rhs1,
                shell_norm=shell, constant=lhs / (rhs1 + shell) if rhs1 + shell > 0 else np.inf, h=grid.h)


def _radius_sums(grid, x0, values_thin, radii):
    """``sum_{thin nodes in B_r} values * h^n`` for each radius."""
    X = _thin_coords(grid)
    d = np.linalg.norm(X - np.asarray(x0, dtype=float)[:-1], axis=-1)
    inner = grid.thin_mask[..., 0]
    return np.array([np.sum(values_thin[inner & (d <= r)]) * _thin_measure(grid) for r in radii])


def verify_nonlinear_wlapw(s, lam, tau: float = 1.0, e=None, radii=None, reference=None,
                           tol: float | None = None) -> dict:
    """Size of ``int |w Delta w|`` for ``w = u - tau psi`` and its decay along rescalings.

    With ``reference`` (another Solution) the residual is ``u - u'`` instead
    and the report carries the sign of the measure-weighted ``sum w Delta_h w``.
    """
    u = s.u if hasattr(s, "u") else s
    grid = u.grid
    n = grid.n
    x0 = np.zeros(n)
    if reference is not None:
        F = as_field(GridFunction(grid, u.values - (reference.u if hasattr(reference, "u") else reference).values))
        tol = tol if tol is not None else getattr(s, "tol", 1e-10)
        total = float(np.sum((F.values * F.lap)[~grid.outer_mask]) * grid.h ** n)
        thin = float(np.sum((F.values * F.lap)[..., 0][grid.thin_mask[..., 0]]) * grid.h ** n)
        return dict(mode="difference", sum_wlapw=total, thin_sum_wlapw=thin,
                    sign_ok=bool(total >= -10 * tol and thin >= -10 * tol), tol=tol, h=grid.h)
    F = residual_field(s, lam, tau, e)
    wl = F.values[..., 0] * F.lap[..., 0]
    int_abs = float(_radius_sums(grid, x0, np.abs(wl), [1.0])[0])
    shell = _shell_norm(F.f, x0, 1.0)
    if shell <= 1e-12:
        return dict(mode="residual", degenerate=True, int_abs_wlapw=int_abs, shell_norm=shell, h=grid.h)
    # w Delta w vanishes identically when the residual is zero wherever Delta w lives;
    # then the scan below only sees round-off
    product_at_roundoff = bool(int_abs <= 1e-10 * shell ** 2)
    if radii is None:
        radii = np.array([r for r in 2.0 ** -np.arange(1, 12) if r >= 8 * grid.h])[::-1]
    radii = np.asarray(radii, dtype=float)
    # x.grad w on the thin plane uses only tangential differences
    gw = np.gradient(F.values[..., 0], grid.h, axis=tuple(range(n - 1)))
    gw = [gw] if n == 2 else gw
    X = _thin_coords(grid)
    xgrad = sum(X[..., a] * gw[a] for a in range(n - 1))
    I_abs = _radius_sums(grid, x0, np.abs(wl), radii)
    I_grad = _radius_sums(grid, x0, -xgrad * F.lap[..., 0], radii)
    _, mass = ball_integrals(F.f, x0, np.concatenate([radii, 2 * radii]))
    sh = mass[len(radii):] - mass[: len(radii)]
    Q = radii ** 2 * I_abs / sh
    G = radii ** 2 * I_grad / sh
    ok = Q > 0
    kappa = float(np.polyfit(np.log(radii[ok]), np.log(Q[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    kap = kappa if np.isfinite(kappa) and kappa > 0 else 0.0
    C_grad = float(max(0.0, np.max(-G / radii ** kap)))
    return dict(mode="residual", degenerate=False, product_at_roundoff=product_at_roundoff,
                int_abs_wlapw=int_abs, shell_norm=shell, scan_exponent=kappa, decays=bool(kappa > 0), grad_term_min=float(G.min()),
                grad_floor_constant=C_grad, radii=radii.tolist(), ratio=Q.tolist(), grad_ratio=G.tolist(),
                h=grid.h)


def verify_holder_decay(f, delta: float, deltas=None, zero_tol: float = 1e-12, cert_tol: float = 1e-8) -> dict:
    """Decay of ``sup_{N_2delta cap B_1/2} |f|`` in delta for ``f`` vanishing on ``{x_(n-1) < -delta}``.

    ``N_d = {x_n^2 + (x_(n-1))_+^2 <= d^2}``.  The exponent is fitted on a
    geometric scan of delta values between a few h and ``delta``.
    """
    F = as_field(f)
    grid = F.grid
    n = grid.n
    X = _thin_coords(grid)
    inner = grid.thin_mask[..., 0]
    xs = X[..., n - 2]
    cond = inner & (np.linalg.norm(X, axis=-1) < 1.0) & (xs < -delta)
    if np.any(np.abs(F.values[..., 0][cond]) > zero_tol):
        raise PreconditionError("field does not vanish on the thin region x_(n-1) < -delta")
    worst = _certificate(F, cert_tol)
    norm = float(np.sqrt(max(np.diff(ball_integrals(F.f, np.zeros(n), [0.5, 1.0])[1])[0], 0.0)))
    coords = grid.mesh()
    ball = node_distances(grid, np.zeros(n)) <= 0.5
    nd = np.sqrt(coords[-1] ** 2 + np.maximum(coords[n - 2], 0.0) ** 2)
    absf = np.abs(F.values)

    def sup_at(d):
        m = ball & (nd <= 2.0 * d)
        return float(absf[m].max()) if m.any() else 0.0

    if deltas is None:
        deltas = np.geomspace(max(2 * grid.h, delta / 32), delta, 8)
    deltas = np.asarray(deltas, dtype=float)
    sups = np.array([sup_at(d) for d in deltas])
    pos = sups > 0
    alpha = float(np.polyfit(np.log(deltas[pos]), np.log(sups[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    C = float(np.max(sups[pos] / (deltas[pos] ** alpha * norm))) if pos.any() and norm > 0 and np.isfinite(alpha) else 0.0
    return dict(delta=delta, sup=sup_at(delta), alpha=alpha, constant=C, shell_norm=norm,
                certificate_min=worst, deltas=deltas.tolist(), sups=sups.tolist(), h=grid.h)


def verify_frequency_comparison(s, x0, r: float, zero_tol: float | None = None) -> dict:
    """``|phi(r, u) / phi(r, u(x0 + .)) - 1|`` against ``|x0| / r`` and the tangential H^2 ratio."""
    u = s.u if hasattr(s, "u") else s
    grid = u.grid
    n = grid.n
    x0 = np.asarray(x0, dtype=float)
    origin = np.zeros(n)
    for p in (origin, x0):
        if not is_contact_point(s, p, zero_tol):
            raise PreconditionError(f"{tuple(p)} is not a contact point")
    grid.require_ball(origin, 4 * r)
    phi0 = float(frequency_curve(u, origin, [r]).phi[0])
    phix = float(frequency_curve(u, x0, [r]).phi[0])
    dist = float(np.linalg.norm(x0))
    dev = abs(phi0 / phix - 1.0)
    phi4 = float(frequency_curve(u, origin, [4 * r]).phi[0])
    ratio = dist / r
    C_lin = dev / ratio if ratio > 0 else 0.0
    C_exp = C_lin ** (1.0 / phi4) if ratio > 0 and C_lin > 0 else 0.0
    # tangential H^2: ||grad d_e u||_{L^2(B_rho)} rho^2 / ||u||_{L^2(B_2rho minus B_rho)}
    e = x0[:-1] / dist if dist > 0 else np.eye(n - 1)[0]
    g = np.gradient(u.values, grid.h, axis=tuple(range(n - 1)))
    g = [g] if n == 2 else g
    de = GridFunction(grid, sum(e[a] * g[a] for a in range(n - 1)))
    rho = 2.0 * r
    en, _ = ball_integrals(de, origin, [rho])
    _, mass = ball_integrals(u, origin, [rho, 2 * rho])
    h2 = float(rho ** 2 * np.sqrt(en[0]) / np.sqrt(mass[1] - mass[0]))
    return dict(r=r, x0_norm=dist, phi_origin=phi0, phi_x0=phix, deviation=dev, dist_ratio=ratio,
                constant_linear=C_lin, constant_exponential=C_exp, phi_4r=phi4, tangential_h2_ratio=h2, h=grid.h)
