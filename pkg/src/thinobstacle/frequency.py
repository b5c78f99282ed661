"""Frequency-type functionals sampled over radii, and monotonicity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import GridFunction, ball_integrals, sample_sphere

H_GUARD = 1e-300


class ContactPointError(ValueError):
    """The requested center is not a contact point."""


def _field(f):
    return f.u if hasattr(f, "u") else f


def h_mu(f, x0, r: float, mu: float = 0.0, m: int = 256) -> float:
    """``H_mu(r) = r^(-2 mu) int_{S^(n-1)} f(x0 + r theta)^2``."""
    return float(r ** (-2.0 * mu) * sample_sphere(_field(f), x0, r, m).l2_squared())


@dataclass
class FrequencyCurve:
    x0: np.ndarray
    radii: np.ndarray
    h: float
    H0: np.ndarray
    D: np.ndarray
    phi: np.ndarray
    H_mu: dict = field(default_factory=dict)
    phi_gamma: dict = field(default_factory=dict)
    g_gamma: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        cols = ["r", "H0", "D", "phi"]
        cols += [f"H_mu={mu:g}" for mu in self.H_mu]
        cols += [f"phi_gamma={g:g}" for g in self.phi_gamma]
        cols += [f"g_gamma={g:g}" for g in self.g_gamma]
        return cols

    def rows(self) -> list[list[float]]:
        out = []
        for i, r in enumerate(self.radii):
            row = [r, self.H0[i], self.D[i], self.phi[i]]
            row += [v[i] for v in self.H_mu.values()]
            row += [v[i] for v in self.phi_gamma.values()]
            row += [v[i] for v in self.g_gamma.values()]
            out.append(row)
        return out


def frequency_curve(f, x0, radii, mus=(), gammas=(), m: int = 256) -> FrequencyCurve:
    """Sample H_0, D, phi and the requested H_mu, phi_gamma, g_gamma at each radius.

    ``g_gamma`` needs the ball of radius 2r inside the domain as well.
    """
    f = _field(f)
    x0 = np.asarray(x0, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be a nonempty strictly increasing list")
    n = f.grid.n
    H0 = np.array([sample_sphere(f, x0, r, m).l2_squared() for r in radii])
    if gammas:
        ball_r = np.concatenate([radii, 2.0 * radii])
        energy, mass = ball_integrals(f, x0, ball_r)
        energy, shell = energy[: len(radii)], mass[len(radii):] - mass[: len(radii)]
    else:
        energy, _ = ball_integrals(f, x0, radii)
        shell = None
    D = radii ** (2 - n) * energy
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(H0 > H_GUARD, D / np.where(H0 > H_GUARD, H0, 1.0), np.nan)
    curve = FrequencyCurve(x0, radii, f.grid.h, H0, D, phi)
    for mu in mus:
        curve.H_mu[float(mu)] = radii ** (-2.0 * mu) * H0
    for g in gammas:
        g = float(g)
        t = radii ** (2.0 * g)
        curve.phi_gamma[g] = (D + g * t) / (H0 + t)
        curve.g_gamma[g] = radii ** (-n) * shell / (H0 + t)
    return curve


def monneau_max(f, x0, mu: float, r: float, s_samples: int = 33, refinements: int = 2, m: int = 256):
    """``max_{s in [1, 2]} H_mu(s r)`` by a uniform scan plus parabolic refinement.

    Returns ``(value, s_at_max)``.
    """
    if s_samples < 33:
        raise ValueError("use at least 33 samples in s")
    f = _field(f)
    H = lambda s: h_mu(f, x0, s * r, mu, m)
    s = np.linspace(1.0, 2.0, s_samples)
    vals = np.array([H(t) for t in s])
    k = int(np.argmax(vals))
    best_s, best = float(s[k]), float(vals[k])
    step = s[1] - s[0]
    for _ in range(refinements):
        if best_s - step < 1.0 or best_s + step > 2.0:
            break
        ym, y0, yp = H(best_s - step), best, H(best_s + step)
        denom = ym - 2.0 * y0 + yp
        if denom >= 0:
            break
        cand = best_s + 0.5 * step * (ym - yp) / denom
        cand = min(max(cand, best_s - step), best_s + step)
        val = H(cand)
        if val > best:
            best_s, best = cand, val
        step /= 4.0
    return best, best_s


@dataclass(frozen=True)
class MonotonicityReport:
    name: str
    worst_dip: float
    index: int
    allowance: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(name=self.name, worst_dip=self.worst_dip, index=self.index,
                    allowance=self.allowance, passed=self.passed)


def check_monotone(values, allowance: float, name: str = "", floor: float = 1e-12) -> MonotonicityReport:
    """Worst relative drop between consecutive samples; passes iff it is within ``allowance``."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("monotonicity check needs at least 3 samples")
    dips = np.maximum(0.0, (v[:-1] - v[1:]) / np.maximum(np.abs(v[:-1]), floor))
    k = int(np.argmax(dips))
    worst = float(dips[k])
    return MonotonicityReport(name, worst, k, float(allowance), worst <= allowance)


def h_ratio_bounds(curve: FrequencyCurve, lam_bar: float, lam_star: float, gamma: float, delta: float = 0.0) -> dict:
    """Fit the constants in ``C3 (R/r)^(2 lam_star) <= Q <= C2 (R/r)^(2 lam_bar + delta)``.

    ``Q = (H_0(R) + R^(2 gamma)) / (H_0(r) + r^(2 gamma))`` over every pair
    of sampled radii; also reports the log-log slope of ``H_0 + r^(2 gamma)``.
    """
    r = curve.radii
    G = curve.H0 + r ** (2.0 * gamma)
    i, j = np.triu_indices(len(r), k=1)
    Q = G[j] / G[i]
    rho = r[j] / r[i]
    C2 = float(np.max(Q / rho ** (2.0 * lam_bar + delta)))
    C3 = float(np.min(Q / rho ** (2.0 * lam_star)))
    slope = float(np.polyfit(np.log(r), np.log(G), 1)[0])
    return dict(C2=C2, C3=C3, slope=slope, lo=2.0 * lam_star, hi=2.0 * lam_bar + delta,
                slope_in_window=bool(2.0 * lam_star - 1e-9 <= slope <= 2.0 * lam_bar + delta + 1e-9),
                gamma=gamma, h=curve.h)


@dataclass(frozen=True)
class FrequencyEstimate:
    estimate: float
    lo: float
    hi: float
    radii: tuple
    phis: tuple

    def contains(self, lam: float, tol: float) -> bool:
        return abs(self.estimate - lam) <= tol


def is_contact_point(f, x0, zero_tol: float | None = None) -> bool:
    """``x0`` lies on the thin plane and the field vanishes there."""
    s = f if hasattr(f, "u") else None
    g = _field(f)
    x0 = np.asarray(x0, dtype=float)
    if abs(x0[-1]) > 1e-12:
        return False
    if zero_tol is None:
        zero_tol = s.tol * g.grid.h ** 2 if s is not None else 1e-12
    return bool(abs(float(g(x0[None, :])[0])) <= zero_tol)


def estimate_frequency(f, x0, r_min: float | None = None, zero_tol: float | None = None,
                       check_contact: bool = True) -> FrequencyEstimate:
    """Frequency at ``x0`` from phi at ``r_min * (1, sqrt 2, 2)``, extrapolated linearly to r = 0.

    ``r_min`` defaults to 8h.  The window is the estimate plus or minus the
    size of the extrapolation step and the fit residual.
    """
    g = _field(f)
    if check_contact and not is_contact_point(f, x0, zero_tol):
        raise ContactPointError(f"{tuple(np.asarray(x0))} is not a contact point")
    r0 = 8.0 * g.grid.h if r_min is None else float(r_min)
    radii = r0 * np.array([1.0, np.sqrt(2.0), 2.0])
    curve = frequency_curve(g, x0, radii)
    phi = curve.phi
    if np.any(~np.isfinite(phi)):
        raise ValueError("boundary mass vanishes at the sampling radii")
    coef = np.polyfit(radii, phi, 1)
    est = float(coef[1])
    resid = float(np.max(np.abs(np.polyval(coef, radii) - phi)))
    spread = abs(phi[0] - est) + resid
    return FrequencyEstimate(est, est - spread, est + spread, tuple(radii), tuple(phi))
