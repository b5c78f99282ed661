"""Command-line experiment runner: ``thinobstacle {solve,analyze,verify,report}``.

Runs are described by an INI file::

    [grid]      dimension, resolution, R
    [data]      kind, lam, lam2, eps, tau, angle, scale, offset
    [solver]    omega, tol, max_iter
    [analysis]  centers, radii, mus, gammas, allowance, decay_k_max, decay_r0,
                eps_flat, sigma, gamma_dichotomy, estimates
    [verify]    criteria, res2, res2_coarse, res3, omega3, allowance
    [run]       seed, out

Every output file starts with a comment line carrying the config hash.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import acceptance
from .blowup import decay_scan
from .estimates import (residual_field, verify_barrier, verify_holder_decay, verify_laplacian_mass,
                        verify_nonlinear_wlapw)
from .frequency import check_monotone, estimate_frequency, frequency_curve
from .geometry import GeometryError, build_grid, read_snapshot, write_snapshot
from .profiles import as_homogeneity, is_admissible, spine
from .solver import kkt_report, make_boundary_data, solve

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_ACCEPTANCE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()] if text.strip() else []


def _points(text: str) -> list[tuple[float, ...]]:
    return [tuple(_floats(p)) for p in text.split(";") if p.strip()]


@dataclass
class RunConfig:
    dimension: int = 2
    resolution: int = 257
    R: float = 2.0
    kind: str = "profile"
    lam: str = "3/2"
    lam2: str = "7/2"
    eps: float = 0.05
    tau: float = 1.0
    angle: str = ""
    scale: float = 1.0
    offset: float = 0.0
    omega: str = ""
    tol: str = ""
    max_iter: int = 400_000
    centers: str = "0"
    radii: str = "dyadic"
    mus: str = ""
    gammas: str = ""
    allowance: float = 1e-2
    decay_k_max: int = 0
    decay_r0: float = 0.5
    eps_flat: float = 0.1
    sigma: float = 0.5
    gamma_dichotomy: float = 0.45
    estimates: str = ""
    criteria: str = ""
    res2: int = 513
    res2_coarse: int = 257
    res3: int = 129
    omega3: float = 1.85
    verify_allowance: float = 1e-2
    seed: int = 0
    out: str = "out"

    SECTIONS = {
        "grid": ("dimension", "resolution", "R"),
        "data": ("kind", "lam", "lam2", "eps", "tau", "angle", "scale", "offset"),
        "solver": ("omega", "tol", "max_iter"),
        "analysis": ("centers", "radii", "mus", "gammas", "allowance", "decay_k_max", "decay_r0",
                     "eps_flat", "sigma", "gamma_dichotomy", "estimates"),
        "verify": ("criteria", "res2", "res2_coarse", "res3", "omega3", "verify_allowance"),
        "run": ("seed", "out"),
    }

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for sec in cp.sections():
            if sec not in cls.SECTIONS:
                raise ConfigError(f"unknown section [{sec}]")
            for key, raw in cp.items(sec):
                name = "verify_allowance" if (sec, key) == ("verify", "allowance") else key
                if name not in cls.SECTIONS[sec]:
                    raise ConfigError(f"unknown field {sec}.{key}")
                conv = {"int": int, "float": float}.get(types[name], str)
                try:
                    kw[name] = conv(raw.strip())
                except ValueError as exc:
                    raise ConfigError(f"field {sec}.{key}: cannot parse {raw!r}") from exc
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        lines = []
        for sec, names in self.SECTIONS.items():
            lines.append(f"[{sec}]")
            for name in names:
                key = "allowance" if name == "verify_allowance" else name
                lines.append(f"{key} = {getattr(self, name)}")
            lines.append("")
        return "\n".join(lines)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.dimension not in (2, 3):
            raise ConfigError("field grid.dimension must be 2 or 3")
        try:
            build_grid(self.dimension, self.resolution, self.R)
        except (GeometryError, ValueError) as exc:
            raise ConfigError(f"field grid.resolution: {exc}") from exc
        for name in ("lam", "lam2"):
            try:
                q = as_homogeneity(getattr(self, name))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"field data.{name}: {exc}") from exc
            if not is_admissible(q):
                raise ConfigError(f"field data.{name}: homogeneity {q} is not admissible")
        if self.kind not in ("profile", "perturbed", "harmonic-min"):
            raise ConfigError(f"field data.kind: unknown kind {self.kind!r}")
        if self.max_iter < 1:
            raise ConfigError("field solver.max_iter must be positive")
        if self.omega and not 0.0 < float(self.omega) < 2.0:
            raise ConfigError("field solver.omega must lie in (0, 2)")
        for c in self.center_points():
            if len(c) != self.dimension:
                raise ConfigError(f"field analysis.centers: {c} has the wrong dimension")
        if self.radii != "dyadic":
            r = _floats(self.radii)
            h = 2.0 * self.R / (self.resolution - 1)
            if not r or min(r) < 8.0 * h:
                raise ConfigError(f"field analysis.radii: radii must be at least 8h = {8 * h:g}")

    def center_points(self) -> list[tuple[float, ...]]:
        pts = _points(self.centers)
        return [tuple([0.0] * self.dimension) if p == (0.0,) else p for p in pts]

    def boundary_data(self):
        e = spine(self.dimension, float(self.angle)) if self.angle else None
        if self.kind == "profile":
            return make_boundary_data("profile", self.dimension, lam=Fraction(self.lam), tau=self.tau, e=e, R=self.R)
        if self.kind == "perturbed":
            return make_boundary_data("perturbed", self.dimension, lam=Fraction(self.lam), lam2=Fraction(self.lam2),
                                      eps=self.eps, tau=self.tau, e=e, R=self.R)
        return make_boundary_data("harmonic-min", self.dimension, scale=self.scale, offset=self.offset, R=self.R)

    def scale_for_verify(self) -> acceptance.Scale:
        return acceptance.Scale(res2=self.res2, res2_coarse=self.res2_coarse, res3=self.res3,
                                omega3=self.omega3, seed=self.seed or acceptance.Scale.seed,
                                dip=self.verify_allowance)


# ---------------------------------------------------------------------------
# output


def _header(cfg: RunConfig) -> str:
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"# thinobstacle config={cfg.hash} generated={stamp}\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_csv(path: Path, cfg: RunConfig, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_header(cfg) + buf.getvalue())


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _dict_rows(d: dict, prefix: str = ""):
    for k, v in d.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(_fmt(x) for x in np.ravel(v))
        yield [prefix + k, _fmt(v)]


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path, allow_nonconverged: bool = False) -> int:
    grid = build_grid(cfg.dimension, cfg.resolution, cfg.R)
    s = solve(grid, cfg.boundary_data(), omega=float(cfg.omega) if cfg.omega else None,
              tol=float(cfg.tol) if cfg.tol else None, max_iter=cfg.max_iter)
    meta = dict(config=cfg.hash, converged=str(s.converged).lower(), iterations=s.iterations,
                residual=repr(s.residual), omega=repr(s.omega), tol=repr(s.tol))
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(out / "solution.snap", s.u, meta)
    if not s.converged and not allow_nonconverged:
        write_csv(out / "solve_summary.csv", cfg, ["key", "value"], _dict_rows(meta))
        print(f"not converged after {s.iterations} sweeps (residual {s.residual:.3e}, tol {s.tol:g})", file=sys.stderr)
        return EXIT_NONCONVERGED
    rep = kkt_report(s, allow_nonconverged=allow_nonconverged)
    rows = list(_dict_rows(meta)) + list(_dict_rows(rep.as_dict(), "kkt.")) + [["kkt.passes", _fmt(rep.passes())]]
    write_csv(out / "solve_summary.csv", cfg, ["key", "value"], rows)
    print(f"solved in {s.iterations} sweeps, residual {s.residual:.3e}, KKT worst {rep.worst():.3e}")
    return EXIT_OK if s.converged else EXIT_NONCONVERGED


class _Snap:
    """Snapshot field with the solver tolerance it was produced at."""

    def __init__(self, u, tol):
        self.u, self.tol, self.grid = u, tol, u.grid


def _analysis_jobs(cfg: RunConfig, snap: _Snap, out: Path):
    n, h = cfg.dimension, snap.grid.h
    lam = as_homogeneity(cfg.lam)
    radii = snap.grid.dyadic_radii(0.5, 8.0) if cfg.radii == "dyadic" else np.array(_floats(cfg.radii))
    mus, gammas = _floats(cfg.mus), _floats(cfg.gammas)
    zero_tol = snap.tol * h * h

    def frequency_job(i, x0):
        curve = frequency_curve(snap.u, x0, radii, mus=mus, gammas=gammas)
        write_csv(out / f"frequency_{i}.csv", cfg, curve.columns(), curve.rows())
        est = estimate_frequency(snap.u, x0, zero_tol=zero_tol, check_contact=False)
        tag = f"center{i}"
        rows = [[f"{tag}.x0", " ".join(_fmt(v) for v in x0), ""],
                [f"{tag}.frequency_estimate", _fmt(est.estimate), ""]]
        if len(radii) >= 3:
            mono = check_monotone(curve.phi, cfg.allowance, "phi")
            rows.append([f"{tag}.phi_worst_dip", _fmt(mono.worst_dip), _fmt(mono.passed)])
        return rows

    def decay_job():
        scan = decay_scan(snap.u, np.zeros(n), lam, cfg.decay_r0, cfg.decay_k_max, eps=cfg.eps_flat,
                          gamma=cfg.gamma_dichotomy, sigma=cfg.sigma)
        write_csv(out / "decay.csv", cfg, scan.columns(), scan.rows())
        return [["decay." + r[0], r[1], ""] for r in _dict_rows(scan.summary())]

    def estimates_job(name):
        fn = {
            "barrier": lambda: verify_barrier(snap, lam, cfg.tau),
            "laplacian_mass": lambda: verify_laplacian_mass(snap, lam, cfg.tau),
            "wlapw": lambda: verify_nonlinear_wlapw(snap, lam, cfg.tau),
            "holder": lambda: verify_holder_decay(residual_field(snap, lam, cfg.tau), 0.1),
        }.get(name)
        if fn is None:
            raise ConfigError(f"field analysis.estimates: unknown estimate {name!r}")
        rep = fn()
        write_csv(out / f"estimate_{name}.csv", cfg, ["key", "value"], _dict_rows(rep))
        return [[f"{name}.{k}", v, ""] for k, v in _dict_rows(rep) if not isinstance(rep[k], list)]

    jobs = [lambda i=i, x0=x0: frequency_job(i, np.asarray(x0, dtype=float))
            for i, x0 in enumerate(cfg.center_points())]
    if cfg.decay_k_max > 0:
        jobs.append(decay_job)
    for name in [t.strip() for t in cfg.estimates.split(",") if t.strip()]:
        jobs.append(lambda name=name: estimates_job(name))
    return jobs


def cmd_analyze(cfg: RunConfig, snapshot: Path, out: Path, threads: int = 1) -> int:
    try:
        u, meta = read_snapshot(snapshot)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {snapshot}: {exc}") from exc
    g = u.grid
    if (g.n, g.resolution, g.R) != (cfg.dimension, cfg.resolution, cfg.R):
        raise ConfigError(f"snapshot grid (n={g.n}, resolution={g.resolution}, R={g.R:g}) does not match the config")
    snap = _Snap(u, float(meta.get("tol", 1e-10)))
    jobs = _analysis_jobs(cfg, snap, out)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        results = list(ex.map(lambda job: job(), jobs))
    rows = [["config", cfg.hash, ""], ["snapshot", Path(snapshot).name, ""]]
    for r in results:
        rows.extend(r)
    write_csv(out / "summary.csv", cfg, ["key", "value", "pass"], rows)
    failed = [r[0] for r in rows if r[2] == "false"]
    print(f"{len(jobs)} analysis requests; {len(failed)} allowance failures" + (f": {failed}" if failed else ""))
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    selection = [t.strip() for t in cfg.criteria.split(",") if t.strip()] or None
    results = acceptance.run(selection, scale=cfg.scale_for_verify())
    for r in results:
        print(r.line())
    rows = [[r.id, r.title, _fmt(r.passed), r.detail, f"{r.seconds:.2f}"] for r in results]
    write_csv(out / "acceptance.csv", cfg, ["criterion", "title", "passed", "detail", "seconds"], rows)
    failed = [r.id for r in results if not r.passed]
    if failed:
        print("failing criteria: " + ", ".join(failed), file=sys.stderr)
        return EXIT_ACCEPTANCE
    return EXIT_OK


def cmd_report(dirs: list[Path], out: Path | None) -> int:
    rows = []
    for d in dirs:
        for name in ("solve_summary.csv", "summary.csv", "acceptance.csv"):
            p = Path(d) / name
            if p.exists():
                head, body = read_csv(p)
                rows.extend([str(d), name] + b for b in body)
    if not rows:
        raise ConfigError("no summaries found")
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([["dir", "file", "fields..."]] + rows)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thinobstacle", description="Thin obstacle problem laboratory.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--allow-nonconverged", action="store_true")
    sub.add_parser("solve", parents=[common], help="solve and write a snapshot")
    a = sub.add_parser("analyze", parents=[common], help="diagnostics on a snapshot")
    a.add_argument("--snapshot", type=Path, help="defaults to OUT/solution.snap")
    sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    r = sub.add_parser("report", parents=[common], help="concatenate summaries")
    r.add_argument("dirs", nargs="+", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.dirs, args.out)
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
        out = args.out or Path(cfg.out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.allow_nonconverged)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.snapshot or out / "solution.snap", out, args.threads)
        return cmd_verify(cfg, out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
