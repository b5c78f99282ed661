"""Half-domain lattice, even-reflected interpolation and sphere/ball quadrature.

The computational domain is the box ``[-R, R]^(n-1) x [0, R]``.  Values are
stored only for ``x_n >= 0``; every evaluation at ``x_n < 0`` goes through the
even reflection ``(x', x_n) -> (x', |x_n|)``.  The last array axis is the
normal axis and index 0 on it is the thin plane ``{x_n = 0}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from pathlib import Path

import numpy as np

INTERIOR, THIN, OUTER = 0, 1, 2

SNAPSHOT_MAGIC = "THINOBSTACLE-SNAPSHOT v1"


class GeometryError(ValueError):
    """A sphere, ball or point does not fit the lattice."""


@dataclass(frozen=True)
class Grid:
    n: int
    resolution: int
    R: float = 2.0

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.resolution - 1)

    @property
    def normal_nodes(self) -> int:
        return (self.resolution - 1) // 2 + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * (self.n - 1) + (self.normal_nodes,)

    @cached_property
    def axes(self) -> list[np.ndarray]:
        tang = -self.R + self.h * np.arange(self.resolution)
        normal = self.h * np.arange(self.normal_nodes)
        return [tang] * (self.n - 1) + [normal]

    @cached_property
    def kind(self) -> np.ndarray:
        k = np.full(self.shape, INTERIOR, dtype=np.int8)
        k[..., 0] = THIN
        for a in range(self.n - 1):
            idx = [slice(None)] * self.n
            idx[a] = 0
            k[tuple(idx)] = OUTER
            idx[a] = -1
            k[tuple(idx)] = OUTER
        k[..., -1] = OUTER
        return k

    @property
    def thin_mask(self) -> np.ndarray:
        return self.kind == THIN

    @property
    def interior_mask(self) -> np.ndarray:
        return self.kind == INTERIOR

    @property
    def outer_mask(self) -> np.ndarray:
        return self.kind == OUTER

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self, mask: np.ndarray | None = None) -> np.ndarray:
        """Coordinates of the nodes selected by ``mask`` as a ``(k, n)`` array."""
        coords = self.mesh()
        if mask is None:
            return np.stack([c.ravel() for c in coords], axis=-1)
        return np.stack([c[mask] for c in coords], axis=-1)

    def contains_ball(self, x0, r: float) -> bool:
        x0 = np.asarray(x0, dtype=float)
        slack = 1e-12 * self.R
        return bool(np.all(np.abs(x0) + r <= self.R + slack))

    def require_ball(self, x0, r: float, floor: float = 4.0) -> None:
        if not self.contains_ball(x0, r):
            raise GeometryError(f"ball of radius {r:g} at {tuple(np.round(x0, 6))} exits the domain")
        if r < floor * self.h * (1 - 1e-12):
            raise GeometryError(f"radius {r:g} is below the accuracy floor {floor:g}h = {floor * self.h:g}")

    def dyadic_radii(self, r_max: float = 0.5, floor: float = 8.0) -> np.ndarray:
        """Radii r_max * 2^-k down to the ``floor * h`` limit, increasing."""
        radii = []
        r = r_max
        while r >= floor * self.h * (1 - 1e-12):
            radii.append(r)
            r /= 2
        return np.array(radii[::-1])


def build_grid(n: int, resolution: int, R: float = 2.0) -> Grid:
    if n not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {n}")
    if resolution % 2 == 0:
        raise ValueError(f"resolution must be odd, got {resolution}")
    if resolution < 17:
        raise ValueError(f"resolution must be at least 17, got {resolution}")
    if not R > 0:
        raise ValueError("R must be positive")
    return Grid(n, int(resolution), float(R))


class GridFunction:
    """Node values on the half-domain; reads through the even reflection."""

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid function values must be finite")
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "GridFunction":
        pts = grid.points()
        return cls(grid, np.asarray(fn(pts), dtype=float).reshape(grid.shape))

    def __call__(self, points) -> np.ndarray:
        return interpolate(self.grid, self.values, points)

    def __add__(self, other):
        return GridFunction(self.grid, self.values + _values_of(other))

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - _values_of(other))

    def __mul__(self, c: float):
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def laplacian(self) -> np.ndarray:
        return discrete_laplacian(self.values, self.grid.h)

    def thin_values(self) -> np.ndarray:
        return self.values[..., 0]


def _values_of(other):
    if isinstance(other, GridFunction):
        return other.values
    return np.asarray(other, dtype=float)


def discrete_laplacian(values: np.ndarray, h: float) -> np.ndarray:
    """Second-order Laplacian with the even ghost layer at ``x_n = 0``.

    Outer-boundary nodes get 0.  On thin nodes the stencil reads the ghost
    value ``u(x', -h) = u(x', h)``, so ``lap ~ (2/h) du/dn(x', 0+)``.
    """
    u = values
    n = u.ndim
    lap = np.zeros_like(u)
    for a in range(n - 1):
        c = [slice(None)] * n
        p = [slice(None)] * n
        m = [slice(None)] * n
        c[a], p[a], m[a] = slice(1, -1), slice(2, None), slice(None, -2)
        lap[tuple(c)] += u[tuple(p)] + u[tuple(m)] - 2.0 * u[tuple(c)]
    lap[..., 1:-1] += u[..., 2:] + u[..., :-2] - 2.0 * u[..., 1:-1]
    lap[..., 0] += 2.0 * (u[..., 1] - u[..., 0])
    for a in range(n - 1):
        idx = [slice(None)] * n
        idx[a] = 0
        lap[tuple(idx)] = 0.0
        idx[a] = -1
        lap[tuple(idx)] = 0.0
    lap[..., -1] = 0.0
    return lap / (h * h)


def interpolate(grid: Grid, values: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation of node values at arbitrary points."""
    pts = np.asarray(points, dtype=float)
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, grid.n)
    h = grid.h
    slack = 1e-9 * h
    if np.any(np.abs(pts) > grid.R + slack):
        raise GeometryError("interpolation point outside the domain")
    idx = np.empty_like(pts)
    idx[:, :-1] = (pts[:, :-1] + grid.R) / h
    idx[:, -1] = np.abs(pts[:, -1]) / h
    upper = np.array(grid.shape) - 2
    i0 = np.clip(np.floor(idx).astype(np.intp), 0, upper)
    t = idx - i0
    out = np.zeros(len(pts))
    for corner in product((0, 1), repeat=grid.n):
        w = np.ones(len(pts))
        for a, b in enumerate(corner):
            w *= t[:, a] if b else 1.0 - t[:, a]
        out += w * values[tuple(i0[:, a] + corner[a] for a in range(grid.n))]
    return out.reshape(lead)


# ---------------------------------------------------------------------------
# sphere quadrature


def sphere_rule(n: int, m: int = 256, m_polar: int | None = None):
    """Directions and weights on the unit sphere.

    n = 2: ``m`` equispaced angles offset by half a step, so the rule is
    symmetric under both ``y -> -y`` and ``x -> -x``.
    n = 3: ``m`` equispaced azimuths about the x_n axis times Gauss-Legendre
    in ``x_n`` on each hemisphere separately (the even reflection puts a kink
    on the equator).  Rotations about x_n by multiples of ``2 pi / m`` map the
    rule onto itself.
    """
    if n == 2:
        theta = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return dirs, np.full(m, 2.0 * np.pi / m)
    if n == 3:
        p = m_polar if m_polar is not None else max(m // 4, 8)
        z, wz = np.polynomial.legendre.leggauss(p)
        z = np.concatenate([(z - 1.0) / 2.0, (z + 1.0) / 2.0])
        wz = np.concatenate([wz, wz]) / 2.0
        phi = 2.0 * np.pi * np.arange(m) / m
        s = np.sqrt(1.0 - z * z)
        dirs = np.stack(
            [np.outer(s, np.cos(phi)).ravel(), np.outer(s, np.sin(phi)).ravel(), np.repeat(z, m)],
            axis=-1,
        )
        return dirs, np.repeat(wz, m) * (2.0 * np.pi / m)
    raise ValueError(f"unsupported dimension {n}")


def sphere_measure(n: int) -> float:
    return {2: 2.0 * np.pi, 3: 4.0 * np.pi}[n]


@dataclass(frozen=True)
class SphericalSample:
    center: np.ndarray
    radius: float
    directions: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def integral(self, g=None) -> float:
        """Integral over the unit sphere of ``values * g`` (``g`` defaults to 1)."""
        v = self.values if g is None else self.values * g
        return float(np.dot(self.weights, v))

    def l2_squared(self) -> float:
        return float(np.dot(self.weights, self.values ** 2))


def sample_sphere(f: GridFunction, x0, r: float, m: int = 256, m_polar: int | None = None) -> SphericalSample:
    """Trace of ``f`` on ``x0 + r S^(n-1)``, parametrised by unit directions."""
    grid = f.grid
    if m < 64:
        raise ValueError("angular node count must be at least 64")
    x0 = np.asarray(x0, dtype=float)
    grid.require_ball(x0, r)
    dirs, w = sphere_rule(grid.n, m, m_polar)
    vals = f(x0 + r * dirs)
    return SphericalSample(x0, float(r), dirs, w, vals)


def sphere_l2_squared(f: GridFunction, x0, r: float, m: int = 256) -> float:
    """``H_0(r)``: integral over the unit sphere of ``f(x0 + r theta)^2``."""
    return sample_sphere(f, x0, r, m).l2_squared()


# ---------------------------------------------------------------------------
# ball quadrature


def _subcell_tables(n: int, s: int, h: float):
    t1 = (np.arange(s) + 0.5) / s
    T = np.stack(np.meshgrid(*([t1] * n), indexing="ij"), axis=-1).reshape(-1, n)
    corners = list(product((0, 1), repeat=n))
    Wv = np.ones((len(T), len(corners)))
    Wg = np.ones((n, len(T), len(corners)))
    for c, corner in enumerate(corners):
        for a, b in enumerate(corner):
            fac = T[:, a] if b else 1.0 - T[:, a]
            Wv[:, c] *= fac
            for k in range(n):
                if k == a:
                    Wg[k, :, c] *= (1.0 if b else -1.0) / h
                else:
                    Wg[k, :, c] *= fac
    return T, corners, Wv, Wg


def ball_integrals(f: GridFunction, x0, radii, sub: int | None = None, floor: float = 4.0):
    """Return ``(int_{B_r}|grad f|^2, int_{B_r} f^2)`` for every radius.

    Cells of the multilinear interpolant are split into ``sub^n`` subcells;
    each subcell contributes with a coverage weight that ramps linearly from
    0 to 1 across the sphere over one subcell width.  The weight is
    nondecreasing in r, so both integrals are monotone in r.  The mirror
    image of the ball below the thin plane is folded back by reflecting the
    centre.
    """
    grid = f.grid
    n, h = grid.n, grid.h
    x0 = np.asarray(x0, dtype=float)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    rmax = float(radii.max())
    for r in radii:
        grid.require_ball(x0, r, floor=floor)
    s = sub if sub is not None else (4 if n == 2 else 3)
    d = h / s
    T, corners, Wv, Wg = _subcell_tables(n, s, h)

    ranges = []
    for a in range(n - 1):
        lo = max(0, int(np.floor((x0[a] - rmax + grid.R) / h)) - 1)
        hi = min(grid.resolution - 2, int(np.floor((x0[a] + rmax + grid.R) / h)) + 1)
        ranges.append(np.arange(lo, hi + 1))
    hi = min(grid.normal_nodes - 2, int(np.floor((abs(x0[-1]) + rmax) / h)) + 1)
    ranges.append(np.arange(0, hi + 1))

    energy = np.zeros(len(radii))
    mass = np.zeros(len(radii))
    vol = d ** n
    vals = f.values
    # chunk along the first axis to bound memory
    per_slab = int(np.prod([len(rg) for rg in ranges[1:]])) * len(T)
    step = max(1, int(2_000_000 // max(per_slab, 1)))
    for start in range(0, len(ranges[0]), step):
        rg = [ranges[0][start:start + step]] + ranges[1:]
        cell_idx = np.meshgrid(*rg, indexing="ij")
        cell_idx = [c.ravel() for c in cell_idx]
        C = np.stack(
            [vals[tuple(cell_idx[a] + corner[a] for a in range(n))] for corner in corners], axis=-1
        )
        v = C @ Wv.T
        g2 = np.zeros_like(v)
        for k in range(n):
            g2 += (C @ Wg[k].T) ** 2
        dist2 = np.zeros_like(v)
        dist2m = np.zeros_like(v)
        for a in range(n):
            xa = grid.axes[a][cell_idx[a]][:, None] + h * T[None, :, a]
            dist2 += (xa - x0[a]) ** 2
            if a == n - 1:
                dist2m += (xa + x0[a]) ** 2
            else:
                dist2m += (xa - x0[a]) ** 2
        dist = np.sqrt(dist2)
        distm = np.sqrt(dist2m)
        for i, r in enumerate(radii):
            cov = np.clip((r - dist) / d + 0.5, 0.0, 1.0) + np.clip((r - distm) / d + 0.5, 0.0, 1.0)
            energy[i] += vol * np.sum(cov * g2)
            mass[i] += vol * np.sum(cov * v * v)
    return energy, mass


def ball_energy(f: GridFunction, x0, r: float) -> float:
    """Scaled Dirichlet energy ``r^(2-n) int_{B_r(x0)} |grad f|^2``."""
    e, _ = ball_integrals(f, x0, [r])
    return float(r ** (2 - f.grid.n) * e[0])


def ball_mass(f: GridFunction, x0, r: float, floor: float = 4.0) -> float:
    """``int_{B_r(x0)} f^2``."""
    _, m = ball_integrals(f, x0, [r], floor=floor)
    return float(m[0])


def node_distances(grid: Grid, x0) -> np.ndarray:
    """Distance from every stored node to ``x0``, minimised over the mirror image."""
    x0 = np.asarray(x0, dtype=float)
    coords = grid.mesh()
    d2 = sum((coords[a] - x0[a]) ** 2 for a in range(grid.n - 1))
    d2 = d2 + (coords[-1] - abs(x0[-1])) ** 2
    return np.sqrt(d2)


def ball_sup(f: GridFunction, x0, r: float) -> float:
    """Max of ``|f|`` over the nodes in ``B_r(x0)`` (reflection included)."""
    inside = node_distances(f.grid, x0) <= r * (1 + 1e-12)
    if not inside.any():
        return 0.0
    return float(np.abs(f.values[inside]).max())


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path, f: GridFunction, meta: dict | None = None) -> None:
    """Write ``f`` as an ASCII header followed by raw little-endian float64.

    Layout::

        THINOBSTACLE-SNAPSHOT v1
        n = <dimension>
        resolution = <nodes per tangential axis>
        R = <half-width>
        h = <spacing>
        shape = <axis lengths, normal axis last>
        dtype = <f8
        order = C
        <key> = <value>          (optional metadata, one per line)
        END
        <prod(shape) * 8 bytes, row-major, normal axis fastest>
    """
    g = f.grid
    lines = [
        SNAPSHOT_MAGIC,
        f"n = {g.n}",
        f"resolution = {g.resolution}",
        f"R = {g.R!r}",
        f"h = {g.h!r}",
        "shape = " + " ".join(str(s) for s in g.shape),
        "dtype = <f8",
        "order = C",
    ]
    for k, v in (meta or {}).items():
        lines.append(f"{k} = {v}")
    lines.append("END")
    with open(Path(path), "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[GridFunction, dict]:
    with open(Path(path), "rb") as fh:
        first = fh.readline().decode("ascii").strip()
        if first != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a snapshot file")
        header = {}
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            line = line.decode("ascii").strip()
            if line == "END":
                break
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        payload = fh.read()
    grid = build_grid(int(header["n"]), int(header["resolution"]), float(header["R"]))
    shape = tuple(int(s) for s in header["shape"].split())
    if shape != grid.shape:
        raise ValueError(f"{path}: shape {shape} inconsistent with grid {grid.shape}")
    data = np.frombuffer(payload, dtype="<f8")
    if data.size != np.prod(shape):
        raise ValueError(f"{path}: expected {np.prod(shape)} values, found {data.size}")
    meta = {k: v for k, v in header.items() if k not in ("n", "resolution", "R", "h", "shape", "dtype", "order")}
    return GridFunction(grid, data.reshape(shape)), meta
