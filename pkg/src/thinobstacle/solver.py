"""Projected SOR for the discrete thin obstacle problem and its KKT certificate."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .geometry import Grid, GridFunction, discrete_laplacian, INTERIOR, THIN
from .profiles import Profile, as_homogeneity, branch, spine

DEFAULT_OMEGA = {2: 1.9, 3: 1.7}
DEFAULT_TOL = {2: 1e-10, 3: 1e-8}


# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class BoundaryData:
    """Values prescribed on the outer boundary of the box.

    ``fn`` maps ``(k, n)`` points to values.  For the profile and perturbed
    kinds it is also the exact solution in the whole domain, exposed as
    ``exact``.
    """

    kind: str
    n: int
    fn: Callable
    params: dict = field(default_factory=dict)
    exact: Callable | None = None

    def __call__(self, points):
        return np.asarray(self.fn(np.asarray(points, dtype=float)), dtype=float)

    def on_grid(self, grid: Grid) -> np.ndarray:
        vals = self(grid.points()).reshape(grid.shape)
        if not np.all(np.isfinite(vals[grid.outer_mask])):
            raise ValueError("boundary data is not finite on the outer boundary")
        return vals


def _thin_boundary_points(n: int, R: float, m: int = 4097) -> np.ndarray:
    t = np.linspace(-R, R, m)
    if n == 2:
        return np.array([[-R, 0.0], [R, 0.0]])
    sides = []
    for fixed in (-R, R):
        sides.append(np.stack([np.full(m, fixed), t, np.zeros(m)], axis=-1))
        sides.append(np.stack([t, np.full(m, fixed), np.zeros(m)], axis=-1))
    return np.concatenate(sides)


def make_boundary_data(kind: str, n: int, **params) -> BoundaryData:
    """Build boundary data of kind ``profile``, ``perturbed``, ``harmonic-min`` or ``custom``.

    profile: lam, tau (1), e (spine, default e_(n-1)).
    perturbed: lam, lam2, eps, tau, e; both homogeneities in 3/2 + 2N.
    harmonic-min: scale (1), offset (0); ``offset > 0`` lifts the thin trace
    off zero so the constraint is inactive.
    custom: fn (callable on points).
    """
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    R = float(params.pop("R", 2.0))
    if kind == "profile":
        prof = Profile(params["lam"], float(params.get("tau", 1.0)), tuple(params.get("e") or spine(n)))
        p = dict(lam=str(prof.lam), tau=prof.tau, e=prof.e)
        return BoundaryData("profile", n, prof, p, exact=prof)
    if kind == "perturbed":
        lam, lam2 = as_homogeneity(params["lam"]), as_homogeneity(params["lam2"])
        for q in (lam, lam2):
            if q.denominator != 2 or branch(q) != "half":
                raise ValueError(f"perturbed data needs homogeneities in 3/2 + 2N, got {q}")
        if not lam2 > lam:
            raise ValueError("perturbation homogeneity must exceed the leading one")
        tau = float(params.get("tau", 1.0))
        eps = float(params["eps"])
        e = tuple(params.get("e") or spine(n))
        p1, p2 = Profile(lam, 1.0, e), Profile(lam2, 1.0, e)
        fn = lambda x: tau * p1(x) + eps * p2(x)
        trace = fn(_thin_boundary_points(n, R))
        if trace.min() < -1e-14:
            raise ValueError(f"perturbation eps={eps} makes the thin boundary trace negative ({trace.min():.3g})")
        p = dict(lam=str(lam), lam2=str(lam2), eps=eps, tau=tau, e=e)
        return BoundaryData("perturbed", n, fn, p, exact=fn)
    if kind == "harmonic-min":
        scale = float(params.get("scale", 1.0))
        offset = float(params.get("offset", 0.0))
        if scale <= 0 or offset < 0:
            raise ValueError("harmonic-min needs scale > 0 and offset >= 0")
        if n == 2:
            v = lambda x: 1.0 + x[..., 0] ** 2 - x[..., 1] ** 2
        else:
            v = lambda x: 1.0 + x[..., 0] ** 2 + x[..., 1] ** 2 - 2.0 * x[..., 2] ** 2
        # v is harmonic; on the thin space v = 1 + |x'|^2, minimised at 0 with value 1
        fn = lambda x: scale * (v(x) - 1.0) + offset
        p = dict(scale=scale, offset=offset)
        return BoundaryData("harmonic-min", n, fn, p, exact=fn)
    if kind == "custom":
        fn = params["fn"]
        return BoundaryData("custom", n, fn, {k: v for k, v in params.items() if k != "fn"})
    raise ValueError(f"unknown boundary data kind {kind!r}")


# ---------------------------------------------------------------------------
# PSOR kernels


@njit(cache=True)
def _psor2(v, F, low, omega, thresh, max_sweeps):
    # v is the correction to a reference field; F is h^2 times its discrete
    # Laplacian and low the thin-node lower bound (minus the reference trace)
    nx, ny = v.shape
    maxd = 0.0
    for it in range(max_sweeps):
        maxd = 0.0
        for i in range(1, nx - 1):
            old = v[i, 0]
            new = old + omega * (0.25 * (v[i - 1, 0] + v[i + 1, 0] + 2.0 * v[i, 1] + F[i, 0]) - old)
            if new < low[i]:
                new = low[i]
            d = abs(new - old)
            if d > maxd:
                maxd = d
            v[i, 0] = new
            for j in range(1, ny - 1):
                old = v[i, j]
                new = old + omega * (0.25 * (v[i - 1, j] + v[i + 1, j] + v[i, j - 1] + v[i, j + 1] + F[i, j]) - old)
                d = abs(new - old)
                if d > maxd:
                    maxd = d
                v[i, j] = new
        if maxd <= thresh:
            return it + 1, maxd
    return max_sweeps, maxd


@njit(cache=True)
def _psor3(v, F, low, omega, thresh, max_sweeps):
    nx, ny, nz = v.shape
    s6 = 1.0 / 6.0
    maxd = 0.0
    for it in range(max_sweeps):
        maxd = 0.0
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                old = v[i, j, 0]
                gs = (v[i - 1, j, 0] + v[i + 1, j, 0] + v[i, j - 1, 0] + v[i, j + 1, 0]
                      + 2.0 * v[i, j, 1] + F[i, j, 0]) * s6
                new = old + omega * (gs - old)
                if new < low[i, j]:
                    new = low[i, j]
                d = abs(new - old)
                if d > maxd:
                    maxd = d
                v[i, j, 0] = new
                for k in range(1, nz - 1):
                    old = v[i, j, k]
                    gs = (v[i - 1, j, k] + v[i + 1, j, k] + v[i, j - 1, k] + v[i, j + 1, k]
                          + v[i, j, k - 1] + v[i, j, k + 1] + F[i, j, k]) * s6
                    new = old + omega * (gs - old)
                    d = abs(new - old)
                    if d > maxd:
                        maxd = d
                    v[i, j, k] = new
        if maxd <= thresh:
            return it + 1, maxd
    return max_sweeps, maxd


def discrete_energy(values: np.ndarray) -> float:
    """Half-domain Dirichlet energy (sum of squared edge differences).

    Edges inside the thin plane are shared with the mirror half and carry
    weight 1/2, so twice this value is the energy of the reflected field.
    """
    u = values
    n = u.ndim
    e = 0.0
    for a in range(n):
        d = np.diff(u, axis=a)
        if a < n - 1:
            e += np.sum(d[..., 1:] ** 2) + 0.5 * np.sum(d[..., 0] ** 2)
        else:
            e += np.sum(d ** 2)
    return float(e)


# ---------------------------------------------------------------------------
# sparse harmonic solves


def _graph_laplacian(grid: Grid) -> sp.csr_matrix:
    n = grid.n
    shape = grid.shape
    idx = np.arange(int(np.prod(shape))).reshape(shape)
    rows, cols, wts = [], [], []
    for a in range(n):
        lo = [slice(None)] * n
        hi = [slice(None)] * n
        lo[a], hi[a] = slice(None, -1), slice(1, None)
        i0, i1 = idx[tuple(lo)], idx[tuple(hi)]
        w = np.ones(i0.shape)
        if a < n - 1:
            w[..., 0] = 0.5
        rows.append(i0.ravel())
        cols.append(i1.ravel())
        wts.append(w.ravel())
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.concatenate(wts)
    N = idx.size
    off = sp.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(N, N))
    deg = np.bincount(r, weights=w, minlength=N) + np.bincount(c, weights=w, minlength=N)
    return (off + sp.diags(deg)).tocsr()


def harmonic_solve(grid: Grid, fixed_values: np.ndarray, fixed_mask: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension with even reflection and Dirichlet values on ``fixed_mask``."""
    L = _graph_laplacian(grid)
    fixed = fixed_mask.ravel()
    free = ~fixed
    x = np.where(fixed_mask, fixed_values, 0.0).ravel().astype(float)
    A = L[free][:, free]
    b = -L[free][:, fixed] @ x[fixed]
    if grid.n == 2:
        sol = spla.spsolve(A.tocsc(), b)
    else:
        d = A.diagonal()
        M = sp.diags(1.0 / d)
        sol, info = spla.cg(A, b, rtol=1e-10, atol=0.0, maxiter=20000, M=M)
        if info != 0:
            raise RuntimeError(f"conjugate gradients did not converge (info={info})")
    x[free] = sol
    return x.reshape(grid.shape)


# ---------------------------------------------------------------------------
# solve


@dataclass
class Solution:
    grid: Grid
    u: GridFunction
    iterations: int
    residual: float
    converged: bool
    omega: float
    tol: float
    data: BoundaryData | None = None
    energy_history: list = field(default_factory=list)

    @property
    def thin(self) -> np.ndarray:
        return self.u.values[..., 0]


def solve(grid: Grid, g: BoundaryData, omega: float | None = None, tol: float | None = None,
          max_iter: int = 400_000, initial=None, track_energy: bool = False) -> Solution:
    """Projected SOR on the discrete energy with ``u >= 0`` at thin nodes.

    Convergence is declared when the largest node update of a sweep divided
    by h^2 drops to ``tol``.  A run that exhausts ``max_iter`` sweeps comes
    back with ``converged=False``.  With ``track_energy`` the half-domain
    energy is recorded after every sweep and any increase raises.
    """
    omega = DEFAULT_OMEGA[grid.n] if omega is None else float(omega)
    tol = DEFAULT_TOL[grid.n] if tol is None else float(tol)
    if not 0 < omega < 2:
        raise ValueError("relaxation parameter must lie in (0, 2)")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    bvals = g.on_grid(grid)
    outer = grid.outer_mask
    if np.any(bvals[..., 0][outer[..., 0]] < 0):
        raise ValueError("boundary data is negative on the thin part of the outer boundary")

    # iterate on the correction v = u - u0 to a harmonic reference u0: the
    # round-off floor of the update metric then scales with |v|, not |u|
    u0 = harmonic_solve(grid, bvals, outer)
    u0[outer] = bvals[outer]
    if initial is None:
        start = u0.copy()
    else:
        start = np.array(initial.values if isinstance(initial, GridFunction) else initial, dtype=float)
        if start.shape != grid.shape:
            raise ValueError("initial guess does not match the grid")
    start[..., 0] = np.maximum(start[..., 0], 0.0)
    v = np.ascontiguousarray(start - u0)
    v[outer] = 0.0
    F = np.ascontiguousarray(grid.h ** 2 * discrete_laplacian(u0, grid.h))
    low = np.ascontiguousarray(-u0[..., 0])

    kernel = _psor2 if grid.n == 2 else _psor3
    thresh = tol * grid.h ** 2
    history = []
    if track_energy:
        history.append(discrete_energy(u0 + v))
        its, maxd = 0, np.inf
        while its < max_iter:
            _, maxd = kernel(v, F, low, omega, thresh, 1)
            its += 1
            e = discrete_energy(u0 + v)
            if e > history[-1] * (1 + 1e-12) + 1e-300:
                raise AssertionError(f"energy increased at sweep {its}: {history[-1]!r} -> {e!r}")
            history.append(e)
            if maxd <= thresh:
                break
    else:
        its, maxd = kernel(v, F, low, omega, thresh, max_iter)
    u = u0 + v
    u[..., 0] = np.maximum(u[..., 0], 0.0)
    residual = float(maxd / grid.h ** 2)
    return Solution(grid, GridFunction(grid, u), int(its), residual, residual <= tol, omega, tol, g, history)


def solve_linearized(grid: Grid, g: BoundaryData) -> Solution:
    """Slit problem: harmonic with even reflection and ``u = 0`` on thin nodes with ``x_(n-1) <= 0``."""
    bvals = g.on_grid(grid)
    slit = np.zeros(grid.shape, dtype=bool)
    xs = grid.mesh()[grid.n - 2]
    slit[..., 0] = xs[..., 0] <= 1e-12
    fixed = grid.outer_mask | slit
    vals = np.where(slit & ~grid.outer_mask, 0.0, bvals)
    u = harmonic_solve(grid, vals, fixed)
    return Solution(grid, GridFunction(grid, u), 1, 0.0, True, 1.0, 0.0, g)


# ---------------------------------------------------------------------------
# certificate


@dataclass(frozen=True)
class ComplementarityReport:
    thin_negativity: float
    thin_laplacian_positive: float
    complementarity: float
    interior_residual: float
    tol: float
    h: float

    def as_dict(self) -> dict:
        return asdict(self)

    def worst(self) -> float:
        return max(self.thin_negativity, self.thin_laplacian_positive, self.complementarity, self.interior_residual)

    def passes(self, factor: float = 10.0) -> bool:
        return self.thin_negativity == 0.0 and self.worst() <= factor * self.tol


def kkt_report(s: Solution, allow_nonconverged: bool = False) -> ComplementarityReport:
    """Discrete KKT violations: ``u >= 0``, ``Delta_h u <= 0``, ``u Delta_h u = 0`` on thin nodes, harmonic elsewhere."""
    if not s.converged and not allow_nonconverged:
        raise ValueError("KKT report requires a converged solution")
    grid = s.grid
    lap = discrete_laplacian(s.u.values, grid.h)
    thin = grid.kind == THIN
    inter = grid.kind == INTERIOR
    uthin = s.u.values[thin]
    lthin = lap[thin]
    return ComplementarityReport(
        thin_negativity=float(max(0.0, -uthin.min())) if uthin.size else 0.0,
        thin_laplacian_positive=float(max(0.0, lthin.max())) if lthin.size else 0.0,
        complementarity=float(np.abs(uthin * lthin).max()) if lthin.size else 0.0,
        interior_residual=float(np.abs(lap[inter]).max()) if inter.any() else 0.0,
        tol=s.tol,
        h=grid.h,
    )


def thin_density(s_or_f) -> np.ndarray:
    """Surface density ``h Delta_h u`` on thin nodes (matches 2 d_n u(., 0+) to O(h))."""
    f = s_or_f.u if isinstance(s_or_f, Solution) else s_or_f
    return f.grid.h * discrete_laplacian(f.values, f.grid.h)[..., 0]
