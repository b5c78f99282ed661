"""Homogeneous model solutions, their constants, and the 2D slit-harmonic basis.

All profiles are built from ``z = x + i|y|`` in polar form, so the square
root branch is the principal one and the cut on the negative y axis is
never reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, solve_ivp

DEFAULT_CAP = Fraction(15, 2)
_CIRCLE_NODES = 4096


class InadmissibleHomogeneity(ValueError):
    pass


def as_homogeneity(lam) -> Fraction:
    """Exact rational form of a homogeneity given as int, float, str or Fraction."""
    if isinstance(lam, Fraction):
        q = lam
    elif isinstance(lam, str):
        q = Fraction(lam.strip())
    else:
        q = Fraction(float(lam)).limit_denominator(1000)
    if q <= 0 or q.denominator not in (1, 2):
        raise InadmissibleHomogeneity(f"homogeneity {lam} is not a positive multiple of 1/2")
    return q


def branch(lam) -> str:
    """'half', 'odd' or 'even'; raises for homogeneities outside the profile family."""
    q = as_homogeneity(lam)
    if q.denominator == 2:
        if (q - Fraction(3, 2)) % 2 == 0:
            return "half"
        raise InadmissibleHomogeneity(f"half-integer homogeneity {q} is not in 3/2 + 2N")
    return "odd" if q.numerator % 2 else "even"


def is_admissible(lam) -> bool:
    try:
        branch(lam)
    except InadmissibleHomogeneity:
        return False
    return True


def admissible_list(cap=DEFAULT_CAP) -> list[Fraction]:
    cap = Fraction(cap)
    out = []
    q = Fraction(1)
    while q <= cap:
        if is_admissible(q):
            out.append(q)
        q += Fraction(1, 2)
    return out


def _polar(x, y):
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    return np.hypot(x, y), np.arctan2(y, x)


def _re_power(lam: float, x, y):
    r, th = _polar(x, y)
    return r ** lam * np.cos(lam * th)


def _im_power(lam: float, x, y):
    r, th = _polar(x, y)
    return r ** lam * np.sin(lam * th)


def _raw(q: Fraction, x, y):
    """Unnormalised profile or slit harmonic of homogeneity ``q``."""
    lam = float(q)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax = np.abs(x)
    if q.denominator == 2:
        val, trace = _re_power(lam, x, y), np.where(x > 0, ax, 0.0) ** lam
    elif q.numerator % 2:
        val, trace = -_im_power(lam, x, y), np.zeros_like(ax)
    else:
        val, trace = _re_power(lam, x, y), ax ** lam
    # exact thin traces, free of the round-off in cos(lam pi) and sin(lam pi)
    return np.where(y == 0, trace, val)


@lru_cache(maxsize=None)
def _circle_norm_sq(q: Fraction) -> float:
    th = 2.0 * np.pi * (np.arange(_CIRCLE_NODES) + 0.5) / _CIRCLE_NODES
    v = _raw(q, np.cos(th), np.sin(th))
    return float(np.sum(v * v) * 2.0 * np.pi / _CIRCLE_NODES)


@lru_cache(maxsize=None)
def _transverse_factor(q: Fraction) -> float:
    # extra factor from the thin direction orthogonal to the spine in 3D
    val, _ = quad(lambda t: np.sin(t) ** (2.0 * float(q) + 1.0), 0.0, np.pi, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _norm_constant(n: int, q: Fraction) -> float:
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    a2 = _circle_norm_sq(q) ** -0.5
    return a2 if n == 2 else a2 * _transverse_factor(q) ** -0.5


def normalization_constant(n: int, lam) -> float:
    """``a(n, lam)`` making the profile unit-norm in L^2 of the unit sphere."""
    q = as_homogeneity(lam)
    branch(q)
    return _norm_constant(n, q)


def slit_normalization(n: int, lam) -> float:
    q = as_homogeneity(lam)
    if q.denominator != 2:
        raise InadmissibleHomogeneity(f"slit harmonics have half-integer homogeneity, got {q}")
    return _norm_constant(n, q)


def _raw_normal_derivative(q: Fraction, x):
    """``d/dy`` of the unnormalised profile at ``(x, 0+)``."""
    x = np.asarray(x, dtype=float)
    lam = float(q)
    th0 = np.where(x > 0, 0.0, np.pi)
    mag = lam * np.abs(x) ** (lam - 1.0)
    if q.denominator == 2 or q.numerator % 2 == 0:
        return -mag * np.sin((lam - 1.0) * th0)
    return -mag * np.cos((lam - 1.0) * th0)


def laplacian_constant(n: int, lam) -> float:
    """``c(n, lam) = -2 d_y psi(-1, 0+)``: magnitude of the thin Laplacian density."""
    q = as_homogeneity(lam)
    branch(q)
    c = -2.0 * normalization_constant(n, q) * float(_raw_normal_derivative(q, -1.0))
    return max(c, 0.0) if abs(c) < 1e-14 else c


def derivative_constant(n: int, lam) -> float:
    """``b`` with ``d/dx psi_lam = b psi_(lam-1)`` for half-integer ``lam >= 3/2``."""
    q = as_homogeneity(lam)
    if q.denominator != 2 or q < Fraction(3, 2):
        raise InadmissibleHomogeneity("derivative relation needs lam in 3/2 + N")
    return float(q) * _norm_constant(n, q) / _norm_constant(n, q - 1)


def psi(lam, p) -> np.ndarray:
    """Normalised 2D profile at points ``p = (..., 2)`` or a pair ``(x, y)``."""
    q = as_homogeneity(lam)
    branch(q)
    p = np.asarray(p, dtype=float)
    return _norm_constant(2, q) * _raw(q, p[..., 0], p[..., 1])


def ode_admissible(lam, atol: float = 1e-9) -> bool:
    """Independent check that ``r^lam g(theta)`` can solve the 2D problem.

    Each thin ray (theta = 0 and theta = pi) is either free (g > 0, g' = 0)
    or in contact (g = 0 with the one-sided density sign).  For each of the
    two starting conditions the ODE ``g'' + lam^2 g = 0`` is integrated to pi
    and the far-end conditions are checked.
    """
    lam = float(lam)
    rhs = lambda t, s: [s[1], -lam * lam * s[0]]
    for start in ([1.0, 0.0], [0.0, -1.0]):
        sol = solve_ivp(rhs, (0.0, np.pi), start, rtol=1e-12, atol=1e-12)
        g, dg = sol.y[0, -1], sol.y[1, -1]
        free_end = g > atol and abs(dg) <= 1e-6
        # d_y u(x, 0+) at theta = pi is -g'(pi)/r, must be <= 0 in contact
        contact_end = abs(g) <= 1e-6 and dg >= -atol
        if free_end or contact_end:
            return True
    return False


# ---------------------------------------------------------------------------
# profiles in n dimensions


@dataclass(frozen=True)
class Profile:
    """``tau * psi_lam(x . e, x_n)``, constant along thin directions orthogonal to ``e``."""

    lam: Fraction
    tau: float = 1.0
    e: tuple = (1.0,)
    n: int = field(init=False)

    def __post_init__(self):
        q = as_homogeneity(self.lam)
        branch(q)
        object.__setattr__(self, "lam", q)
        e = np.asarray(self.e, dtype=float).ravel()
        if abs(np.linalg.norm(e) - 1.0) > 1e-12:
            raise ValueError("spine direction must be a unit vector")
        if not self.tau >= 0:
            raise ValueError("amplitude must be nonnegative")
        object.__setattr__(self, "e", tuple(e))
        object.__setattr__(self, "n", len(e) + 1)

    @property
    def a(self) -> float:
        return _norm_constant(self.n, self.lam)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        s = pts[..., :-1] @ np.asarray(self.e)
        return self.tau * self.a * _raw(self.lam, s, pts[..., -1])

    def density(self, xthin) -> np.ndarray:
        return laplacian_density(self.lam, self.tau, self.e, xthin)


def spine(n: int, angle: float | None = None) -> tuple:
    """Unit thin-space direction at ``angle`` from e_1; the default is e_(n-1).

    In 2D only the angles 0 and pi are meaningful.
    """
    if angle is None:
        angle = 0.0 if n == 2 else np.pi / 2
    if n == 2:
        return (1.0 if np.cos(angle) >= 0 else -1.0,)
    c, s = np.cos(angle), np.sin(angle)
    c, s = (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)
    return (float(c), float(s))


def laplacian_density(lam, tau: float, e, xthin) -> np.ndarray:
    """Signed thin-space density of ``Delta(tau psi_lam(x.e, x_n))``.

    ``xthin`` has shape ``(..., n-1)``.
    """
    q = as_homogeneity(lam)
    kind = branch(q)
    e = np.asarray(e, dtype=float).ravel()
    n = len(e) + 1
    s = np.asarray(xthin, dtype=float) @ e
    c = laplacian_constant(n, q)
    if kind == "even":
        return np.zeros_like(s)
    if kind == "odd":
        return -c * tau * np.abs(s) ** (float(q) - 1.0)
    return -c * tau * np.maximum(-s, 0.0) ** (float(q) - 1.0)


# ---------------------------------------------------------------------------
# classification on the circle


@dataclass(frozen=True)
class Classification:
    admissible: bool
    lam: Fraction | None
    tau: float
    e: tuple | None
    residual: float
    relative_residual: float


def classify_2d(values, angles=None, cap=DEFAULT_CAP, rel_tol: float = 1e-6) -> Classification:
    """Match a circle profile against ``tau psi_lam(+-x, y)`` for admissible ``lam <= cap``.

    ``angles`` defaults to the half-offset uniform rule of ``sphere_rule``.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0 or not np.all(np.isfinite(v)):
        raise ValueError("profile must be a nonempty array of finite values")
    if v.size < 256:
        raise ValueError("profile must be sampled at 256 or more angles")
    m = v.size
    th = 2.0 * np.pi * (np.arange(m) + 0.5) / m if angles is None else np.asarray(angles, dtype=float)
    w = 2.0 * np.pi / m
    norm = np.sqrt(w * np.dot(v, v))
    if norm == 0.0:
        return Classification(True, None, 0.0, None, 0.0, 0.0)
    best = None
    for q in admissible_list(cap):
        for sgn in ((1.0, -1.0) if q.denominator == 2 else (1.0,)):
            basis = psi(q, np.stack([sgn * np.cos(th), np.sin(th)], axis=-1))
            tau = max(0.0, float(np.dot(v, basis) / np.dot(basis, basis)))
            res = float(np.sqrt(w * np.sum((v - tau * basis) ** 2)))
            if best is None or res < best[0]:
                best = (res, q, tau, (sgn,))
    res, q, tau, e = best
    ok = bool(res <= rel_tol * norm)
    return Classification(ok, q if ok else None, tau if ok else 0.0, e if ok else None, res, float(res / norm))


def thin_sign_violation(g, lam: float, h: float = 1e-6) -> float:
    """Largest violation of the thin-space conditions by ``r^lam g(theta)``.

    Checks ``g >= 0`` on both rays, the density sign, and complementarity
    ``g * density = 0``, using one-sided differences in theta.
    """
    g0, gpi = g(0.0), g(np.pi)
    d0 = (g(h) - g0) / h  # d_y at theta = 0+
    dpi = -(gpi - g(np.pi - h)) / h  # d_y at theta = pi-
    return max(0.0, -g0, -gpi, d0, dpi, abs(g0 * d0), abs(gpi * dpi))


# ---------------------------------------------------------------------------
# slit harmonics


@dataclass(frozen=True)
class SlitBasisElement:
    lam: Fraction
    index: int = 1

    def __call__(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return slit_normalization(2, self.lam) * _re_power(float(self.lam), p[..., 0], p[..., 1])


def slit_basis_2d(lam) -> SlitBasisElement:
    """The unit-norm slit harmonic of homogeneity ``lam`` in 1/2 + N (one per degree in 2D)."""
    q = as_homogeneity(lam)
    if q.denominator != 2:
        raise InadmissibleHomogeneity(f"slit homogeneities lie in 1/2 + N, got {q}")
    return SlitBasisElement(q)


def slit_degrees(up_to) -> list[Fraction]:
    top = as_homogeneity(up_to)
    return [Fraction(2 * k + 1, 2) for k in range(int(top - Fraction(1, 2)) + 1) if Fraction(2 * k + 1, 2) <= top]


def project_slit(sample, up_to) -> list[tuple[Fraction, int, float]]:
    """Coefficients ``int_{S^1} w_r psi_(lam, m)`` of a sphere trace in the 2D slit basis."""
    if sample.directions.shape[1] != 2:
        raise NotImplementedError("a complete slit basis is provided for n = 2 only")
    out = []
    for q in slit_degrees(up_to):
        el = slit_basis_2d(q)
        out.append((q, el.index, sample.integral(el(sample.directions))))
    return out


def slit_members_3d(lam, i: int | None = None):
    """The 3D slit members ``psi_lam`` (``i`` None) or ``x_i psi_(lam-1)`` with spine e_2.

    Returned as callables on ``(..., 3)`` points; not normalised.
    """
    q = as_homogeneity(lam)
    if q.denominator != 2:
        raise InadmissibleHomogeneity("slit members need half-integer homogeneity")
    if i is None:
        return lambda p: _re_power(float(q), np.asarray(p)[..., 1], np.asarray(p)[..., 2])
    if q < Fraction(3, 2):
        raise InadmissibleHomogeneity("x_i psi_(lam-1) needs lam >= 3/2")
    return lambda p: np.asarray(p)[..., i] * _re_power(float(q - 1), np.asarray(p)[..., 1], np.asarray(p)[..., 2])
