"""Contact sets, profile fits, flatness, dyadic decay scans and the sequence lemma."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .frequency import ContactPointError, estimate_frequency, is_contact_point
from .geometry import GeometryError, GridFunction, sphere_rule
from .profiles import Profile, as_homogeneity, branch, spine


# ---------------------------------------------------------------------------
# contact set


@dataclass(frozen=True)
class ContactSet:
    points: np.ndarray
    free_boundary: np.ndarray
    mask: np.ndarray
    fb_mask: np.ndarray
    zero_tol: float

    def __len__(self):
        return len(self.points)


def contact_set(s, zero_tol: float | None = None) -> ContactSet:
    """Thin nodes with ``u <= zero_tol`` (default tol h^2) and the contact nodes next to free thin nodes."""
    f = s.u if hasattr(s, "u") else s
    grid = f.grid
    if zero_tol is None:
        zero_tol = s.tol * grid.h ** 2 if hasattr(s, "tol") else 0.0
    thin = f.values[..., 0]
    inner = np.zeros(thin.shape, dtype=bool)
    inner[(slice(1, -1),) * (grid.n - 1)] = True
    mask = (thin <= zero_tol) & inner
    free = ~mask & inner
    near = np.zeros_like(mask)
    for a in range(grid.n - 1):
        near |= np.roll(free, 1, axis=a) | np.roll(free, -1, axis=a)
    fb = mask & near
    coords = np.meshgrid(*grid.axes[:-1], indexing="ij")

    def pts(m):
        return np.stack([c[m] for c in coords] + [np.zeros(int(m.sum()))], axis=-1)

    return ContactSet(pts(mask), pts(fb), mask, fb, float(zero_tol))


# ---------------------------------------------------------------------------
# profile fit


@dataclass(frozen=True)
class ProfileFit:
    r: float
    lam: Fraction
    tau: float
    e: tuple
    A: float
    A_normalized: float
    norm: float


def _as_callable(f, n: int | None):
    if hasattr(f, "u"):
        f = f.u
    if isinstance(f, GridFunction):
        return f, f.grid.n, f.grid
    if callable(f):
        if n is None:
            raise ValueError("dimension is required for a callable field")
        return f, n, None
    raise TypeError("expected a Solution, GridFunction or callable")


def _spine3(angle):
    return (float(np.cos(angle)), float(np.sin(angle)))


def fit_profile(f, x0, r: float, lam, n: int | None = None, m: int | None = None,
                n_angles: int = 360) -> ProfileFit:
    """Minimise ``||u(x0 + r .) - tau psi_lam(r . , spine e)||`` on the unit sphere.

    ``tau >= 0`` is the closed-form least-squares amplitude for each ``e``.
    In 2D the two spines ``+-e_1`` are compared; in 3D ``n_angles`` equally
    spaced spines are scanned and the best is refined by a parabola through
    its neighbours.
    """
    q = as_homogeneity(lam)
    branch(q)
    field_, n, grid = _as_callable(f, n)
    x0 = np.asarray(x0, dtype=float)
    if grid is not None:
        grid.require_ball(x0, r, floor=8.0)
    if m is None:
        m = 256 if n == 2 else 360
    dirs, w = sphere_rule(n, m)
    vals = np.asarray(field_(x0 + r * dirs), dtype=float)
    norm2 = float(np.dot(w, vals * vals))
    if norm2 <= 0.0:
        raise ValueError("the field vanishes on the sphere")

    def score(e):
        b = Profile(q, 1.0, e)(dirs)
        bb = float(np.dot(w, b * b))
        wb = float(np.dot(w, vals * b))
        t = max(0.0, wb / bb)
        d = vals - t * b
        return np.sqrt(float(np.dot(w, d * d))), t

    if n == 2:
        cands = [((1.0,), *score((1.0,))), ((-1.0,), *score((-1.0,)))]
        e, A, t = min(cands, key=lambda c: c[1])
    else:
        angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
        res = [score(_spine3(th)) for th in angles]
        As = np.array([a for a, _ in res])
        k = int(np.argmin(As))
        e, A, t = _spine3(angles[k]), As[k], res[k][1]
        ym, y0, yp = As[k - 1], As[k], As[(k + 1) % n_angles]
        denom = ym - 2.0 * y0 + yp
        if denom > 0:
            step = 2.0 * np.pi / n_angles
            th = angles[k] + 0.5 * step * (ym - yp) / denom
            a_ref, t_ref = score(_spine3(th))
            if a_ref < A:
                e, A, t = _spine3(th), a_ref, t_ref
    norm = float(np.sqrt(norm2))
    return ProfileFit(float(r), q, float(t / r ** float(q)), tuple(e), float(A), float(A / norm), norm)


def spine_angle(e) -> float:
    e = np.asarray(e, dtype=float)
    return float(np.arctan2(e[1], e[0])) if e.size == 2 else (0.0 if e[0] > 0 else np.pi)


# ---------------------------------------------------------------------------
# flatness


def diam_m(points, m: int, n_dirs: int = 2048) -> float:
    """Smallest d with ``points`` inside the d-neighbourhood of some m-dimensional linear subspace.

    Exact for m = 0 and m = n; for m = 1 and m = n - 1 the optimal direction
    is found by a direction scan followed by local refinement.
    """
    X = np.asarray(points, dtype=float)
    if X.size == 0:
        return 0.0
    n = X.shape[1]
    if m >= n:
        return 0.0
    if m == 0:
        return float(np.max(np.linalg.norm(X, axis=1)))
    if m not in (1, n - 1):
        raise NotImplementedError("diam_m supports m in {0, 1, n-1, n}")
    dirs, _ = sphere_rule(n, n_dirs if n == 2 else 64)

    def cost(v):
        v = v / np.linalg.norm(v)
        proj = X @ v
        if m == n - 1:  # hyperplane with normal v
            return float(np.max(np.abs(proj)))
        return float(np.max(np.sqrt(np.maximum(np.sum(X * X, axis=1) - proj ** 2, 0.0))))

    costs = [cost(d) for d in dirs]
    best = dirs[int(np.argmin(costs))]
    from scipy.optimize import minimize

    res = minimize(cost, best, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14))
    return float(min(min(costs), res.fun))


def flatness(points, x0, r: float, eps: float, n: int | None = None) -> bool:
    """The flatness predicate at scale r.

    In 3D: every point of ``points`` within ``r/2`` of ``x0`` lies within
    ``eps r`` of ``x0``.  In 2D no point other than ``x0`` may lie within
    ``r/2``.  The check is exhaustive over the given points.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    x0 = np.asarray(x0, dtype=float)
    P = np.asarray(points, dtype=float).reshape(-1, len(x0))
    n = len(x0) if n is None else n
    d = np.linalg.norm(P - x0, axis=1)
    inside = d <= r / 2
    if n == 2:
        return bool(np.all(d[inside] <= 1e-12 * max(r, 1.0)))
    return bool(diam_m(P[inside] - x0, 0) <= eps * r) if inside.any() else True


def frequency_points(s, lam, x0=None, radius: float | None = None, window: float = 0.1) -> np.ndarray:
    """Free-boundary nodes whose estimated frequency is within ``window`` of ``lam``."""
    f = s.u if hasattr(s, "u") else s
    grid = f.grid
    cs = contact_set(s)
    P = cs.free_boundary
    if x0 is not None and radius is not None:
        P = P[np.linalg.norm(P - np.asarray(x0, dtype=float), axis=1) <= radius]
    keep = []
    for p in P:
        try:
            est = estimate_frequency(s, p)
        except (GeometryError, ContactPointError, ValueError):
            continue
        if abs(est.estimate - float(lam)) <= window:
            keep.append(p)
    return np.array(keep).reshape(-1, grid.n)


# ---------------------------------------------------------------------------
# decay scans


class ScaleStatus(enum.Enum):
    OK = "ok"
    ZERO_RESIDUAL = "zero-residual"
    BELOW_FLOOR = "below-floor"


@dataclass
class DecayScan:
    x0: np.ndarray
    lam: Fraction
    r0: float
    radii: np.ndarray
    A: np.ndarray
    A_normalized: np.ndarray
    status: list
    flat: list
    exponent_raw: np.ndarray
    exponent: np.ndarray
    good: list
    weak: list
    p: float
    prefix_min: float
    params: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        return ["k", "r", "A", "A_normalized", "exponent", "flat_flag", "good_flag"]

    def rows(self) -> list[list]:
        out = []
        for k, r in enumerate(self.radii):
            ex = self.exponent[k] if k < len(self.exponent) else float("nan")
            gd = self.good[k] if k < len(self.good) else ""
            out.append([k, r, self.A[k], self.A_normalized[k], ex, int(self.flat[k]), "" if gd == "" else int(gd)])
        return out

    def summary(self) -> dict:
        return dict(lam=str(self.lam), r0=self.r0, scales=len(self.radii), p=self.p,
                    prefix_min=self.prefix_min, statuses=",".join(st.value for st in self.status), **self.params)


def decay_scan(s, x0, lam, r0: float, k_max: int, eps: float = 0.1, gamma: float = 0.45,
               sigma: float = 0.5, n: int | None = None, points=None, zero_level: float = 1e-9,
               check_frequency: bool = True) -> DecayScan:
    """Profile-fit residuals at the dyadic scales ``r0 2^-k``, ``k = 0..k_max``.

    ``exponent_raw[k] = log2(A_k / A_(k+1))`` and ``exponent`` is the same
    for ``A / ||u_r||``.  A scale is good when the raw exponent reaches
    ``lam + sigma`` and satisfies the weak alternative when it reaches
    ``lam - gamma``.  ``points`` are the frequency-lam points used for the
    flatness flag; by default they are extracted from the solution.
    """
    q = as_homogeneity(lam)
    field_, n, grid = _as_callable(s, n)
    x0 = np.asarray(x0, dtype=float)
    if check_frequency and grid is not None:
        est = estimate_frequency(s, x0)
        if abs(est.estimate - float(q)) > 0.15:
            raise ValueError(f"frequency estimate {est.estimate:.3f} at x0 is not within 0.15 of {q}")
    if points is None:
        points = frequency_points(s, q, x0, r0) if grid is not None else np.zeros((0, n))
    floor = 8.0 * grid.h if grid is not None else 0.0
    radii, A, An, status, flat = [], [], [], [], []
    for k in range(k_max + 1):
        r = r0 * 2.0 ** -k
        if r < floor * (1 - 1e-12):
            break
        fit = fit_profile(s, x0, r, q, n=n)
        radii.append(r)
        A.append(fit.A)
        An.append(fit.A_normalized)
        status.append(ScaleStatus.ZERO_RESIDUAL if fit.A_normalized <= zero_level else ScaleStatus.OK)
        flat.append(flatness(points, x0, r, eps, n))
    if len(radii) < 2:
        raise ValueError("fewer than two scales above the accuracy floor")
    A, An, radii = np.array(A), np.array(An), np.array(radii)
    ok = np.array([st is ScaleStatus.OK for st in status])
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(ok[:-1] & ok[1:], np.log2(A[:-1] / A[1:]), np.nan)
        nrm = np.where(ok[:-1] & ok[1:], np.log2(An[:-1] / An[1:]), np.nan)
    valid = np.isfinite(raw)
    good = [bool(x >= float(q) + sigma) for x in raw[valid]]
    weak = [bool(x >= float(q) - gamma) for x in raw[valid]]
    if good:
        p = float(np.mean(good))
        prefix = np.cumsum(good) / np.arange(1, len(good) + 1)
        prefix_min = float(prefix.min())
    else:
        p = prefix_min = float("nan")
    good_full = []
    it = iter(good)
    for v in valid:
        good_full.append(next(it) if v else "")
    if k_max + 1 > len(radii):
        status = status + [ScaleStatus.BELOW_FLOOR] * (k_max + 1 - len(radii))
    params = dict(eps=eps, gamma=gamma, sigma=sigma, h=grid.h if grid is not None else 0.0)
    return DecayScan(x0, q, float(r0), radii, A, An, status, flat, raw, nrm, good_full, weak, p, prefix_min, params)


# ---------------------------------------------------------------------------
# sequence lemma


def sequence_witness(a, p, m: int = 0):
    """Smallest ``n >= m`` whose every window ``a[n..n+j]`` inside the sequence averages ``>= p``.

    Uses ``T(k) = S(k) - p k`` with partial sums ``S``: ``n`` is a witness
    iff ``T(k) >= T(n)`` for all ``k > n``, so one backward pass of suffix
    minima decides every start.  Arithmetic is exact.  Returns None if no
    witness exists.
    """
    pf = Fraction(str(p)) if isinstance(p, float) else Fraction(p)
    if not 0 < pf < 1:
        raise ValueError("p must lie in (0, 1)")
    seq = [int(x) for x in a]
    if any(x not in (0, 1) for x in seq):
        raise ValueError("sequence entries must be 0 or 1")
    L = len(seq)
    num, den = pf.numerator, pf.denominator
    T = [0] * (L + 1)
    for k in range(L):
        T[k + 1] = T[k] + den * seq[k] - num
    suffix_min = None
    witness = None
    for k in range(L - 1, -1, -1):
        suffix_min = T[k + 1] if suffix_min is None else min(suffix_min, T[k + 1])
        if k >= m and suffix_min >= T[k]:
            witness = k
    return witness
