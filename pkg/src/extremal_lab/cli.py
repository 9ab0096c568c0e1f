"""Experiment driver: one JSON config in, deterministic files out.

Commands: solve | eigen | check | flow | branch | report.  Every run writes
its data as CSV/JSON (figures are SVG renderings of data that is also saved
as CSV) plus a record.json carrying the config snapshot, version tag, wall
time, and a sha256 manifest of the produced files.  Re-running a config with
the same version reproduces identical digests.

Exit codes: 0 success, 1 numerical failure (partial outputs kept), 2 config
error (nothing written).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import random
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, analytic, fem, overdet, shapeopt, svgfig
from .errors import ConfigInvalid, ExtremalLabError, VersionMismatch
from .geom2d import Line, build_domain, domain_spec_from_json, domain_spec_to_json
from .geom2d.domain import DomainSpec

COMMANDS = ("solve", "eigen", "check", "flow", "branch", "report")


@dataclass
class RunConfig:
    command: str
    domain: DomainSpec | None
    nonlinearity: fem.NonlinearitySpec | None
    alpha: float | None
    h: float
    tolerances: dict
    out_dir: str
    seed: int
    extra: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {
            "command": self.command,
            "domain": domain_spec_to_json(self.domain) if self.domain else None,
            "nonlinearity": _nonlinearity_to_json(self.nonlinearity),
            "alpha": self.alpha,
            "h": self.h,
            "tolerances": self.tolerances,
            "seed": self.seed,
            **{k: v for k, v in sorted(self.extra.items())},
        }

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _nonlinearity_to_json(f) -> dict | None:
    if f is None:
        return None
    if isinstance(f, fem.Linear):
        return {"kind": "linear", "lam": f.lam}
    if isinstance(f, fem.AllenCahn):
        return {"kind": "allen_cahn"}
    if isinstance(f, fem.Tabulated):
        return {
            "kind": "tabulated",
            "breakpoints": list(f.breakpoints),
            "values": list(f.fvalues),
            "lipschitz": f.lipschitz_constant,
        }
    raise ConfigInvalid(f"unknown nonlinearity {f!r}")


def _nonlinearity_from_json(data) -> fem.NonlinearitySpec | None:
    if data is None:
        return None
    kind = data.get("kind")
    if kind == "linear":
        return fem.Linear(float(data["lam"]))
    if kind == "allen_cahn":
        return fem.AllenCahn()
    if kind == "tabulated":
        return fem.Tabulated(
            tuple(map(float, data["breakpoints"])),
            tuple(map(float, data["values"])),
            float(data["lipschitz"]),
        )
    raise ConfigInvalid(f"unknown nonlinearity kind {kind!r}")


_KNOWN_KEYS = {
    "command", "domain", "nonlinearity", "alpha", "h", "tolerances", "out_dir",
    "seed", "lambda", "grid", "theorems", "n_lines", "max_steps", "spread_tol",
    "T", "s_max", "ds", "n_modes", "resolution", "records", "seed_amplitude",
    "h_values",
}


def load_config(data: dict, command: str | None = None, out_dir: str | None = None) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigInvalid("config must be a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    cmd = data.get("command", command)
    if command is not None and data.get("command") not in (None, command):
        raise ConfigInvalid(
            f"config command {data['command']!r} conflicts with CLI command {command!r}"
        )
    if cmd not in COMMANDS:
        raise ConfigInvalid(f"command must be one of {COMMANDS}, got {cmd!r}")

    h = float(data.get("h", 0.05))
    if cmd != "report" and not (1e-4 < h < 1.0):
        raise ConfigInvalid(f"mesh size h must lie in (1e-4, 1), got {h}")
    tolerances = data.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigInvalid("tolerances must be an object")
    for key, val in tolerances.items():
        if not (1e-14 <= float(val) <= 1e-1):
            raise ConfigInvalid(f"tolerance override {key}={val} outside [1e-14, 1e-1]")

    domain = None
    if data.get("domain") is not None:
        try:
            domain = domain_spec_from_json(data["domain"])
        except ExtremalLabError as exc:
            raise ConfigInvalid(f"bad domain: {exc}") from exc
    elif cmd in ("solve", "eigen", "check", "flow"):
        raise ConfigInvalid(f"command {cmd!r} needs a domain")

    alpha = data.get("alpha")
    if alpha is not None:
        alpha = float(alpha)
        if alpha >= 0:
            raise ConfigInvalid("alpha target must be negative")

    extra_keys = _KNOWN_KEYS - {
        "command", "domain", "nonlinearity", "alpha", "h", "tolerances", "out_dir", "seed"
    }
    extra = {k: data[k] for k in extra_keys if k in data}
    cfg = RunConfig(
        command=cmd,
        domain=domain,
        nonlinearity=_nonlinearity_from_json(data.get("nonlinearity")),
        alpha=alpha,
        h=h,
        tolerances={k: float(v) for k, v in tolerances.items()},
        out_dir=out_dir or data.get("out_dir", "."),
        seed=int(data.get("seed", 0)),
        extra=extra,
    )
    return cfg


@dataclass
class ExperimentRecord:
    config: dict
    version: str
    wall_time: float
    manifest: list[dict]
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "wall_time": self.wall_time,
            "manifest": self.manifest,
            "error": self.error,
        }


class _Outputs:
    """Collects produced files and their digests."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.manifest: list[dict] = []

    def write(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        data = content.encode()
        path.write_bytes(data)
        self.manifest.append({"path": name, "sha256": hashlib.sha256(data).hexdigest()})
        return path


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(c) for c in row))
    return "\n".join(lines) + "\n"


def _csv_cell(c) -> str:
    if isinstance(c, float):
        return repr(c)
    if isinstance(c, (np.floating,)):
        return repr(float(c))
    return str(c)


def _boundary_csv(mesh) -> str:
    rows = []
    for li, loop in enumerate(mesh.boundary_polygons()):
        for x, y in loop:
            rows.append([li, float(x), float(y)])
    return _csv(["loop", "x", "y"], rows)


def _solve_eigen(cfg: RunConfig, out: _Outputs) -> dict:
    mesh = build_domain(cfg.domain, cfg.h)
    k, m = fem.assemble(mesh)
    ep = fem.eigen_smallest(
        k, m, fem.dirichlet_mask(mesh), mesh, tol=cfg.tolerances.get("eigen_tol", 1e-10)
    )
    rep = overdet.overdet_residual(mesh, ep.u1, ep.lambda1 * ep.u1.values)
    u = ep.u1
    if cfg.alpha is not None:
        u = fem.ScalarField(mesh, ep.u1.values * (cfg.alpha / rep.alpha_hat))
        rep = overdet.overdet_residual(mesh, u, ep.lambda1 * u.values)
    out.write("u.csv", u.export_csv())
    out.write("boundary.csv", _boundary_csv(mesh))
    digest = cfg.digest()
    out.write("domain.svg", svgfig.domain_figure(mesh.boundary_polygons(), digest))
    out.write(
        "levels.svg",
        svgfig.level_set_figure(
            mesh.vertices, mesh.triangles, u.values, mesh.boundary_polygons(), digest
        ),
    )
    report = {
        "lambda1": ep.lambda1,
        "eigen_residual": ep.residual,
        "alpha_hat": rep.alpha_hat,
        "rel_spread": rep.rel_spread,
        "max_abs_deviation": rep.max_abs_deviation,
        "loop_means": rep.loop_means,
        "n_vertices": len(mesh.vertices),
        "n_triangles": len(mesh.triangles),
        "h": cfg.h,
        "domain": domain_spec_to_json(cfg.domain),
        "max_u": float(u.values.max()),
    }
    out.write("report.json", _json_dumps(report))
    return report


def _run_solve(cfg: RunConfig, out: _Outputs) -> dict:
    if cfg.nonlinearity is None:
        raise ConfigInvalid("solve needs a nonlinearity")
    mesh = build_domain(cfg.domain, cfg.h)
    k, m = fem.assemble(mesh)
    # universal positive seed: the torsion function scaled to a set amplitude
    from scipy.sparse.linalg import splu

    mask = fem.dirichlet_mask(mesh)
    interior = np.nonzero(~mask)[0]
    ki = k.mat[interior][:, interior].tocsc()
    ones = np.ones(len(interior))
    tors = splu(ki).solve(m.mat[interior][:, interior] @ ones)
    amp = float(cfg.extra.get("seed_amplitude", 0.5))
    seed_dof = np.zeros(mesh.n_dofs)
    seed_dof[interior] = tors * (amp / float(tors.max()))
    u0 = fem.ScalarField(mesh, mesh.expand(seed_dof))
    u = fem.solve_semilinear(
        mesh, cfg.nonlinearity, u0, tol=cfg.tolerances.get("newton_tol", 1e-10)
    )
    trivial = bool(float(np.max(np.abs(u.values))) < 1e-8)
    report: dict = {
        "trivial_solution": trivial,
        "max_u": float(u.values.max()),
        "h": cfg.h,
        "domain": domain_spec_to_json(cfg.domain),
        "nonlinearity": _nonlinearity_to_json(cfg.nonlinearity),
    }
    out.write("u.csv", u.export_csv())
    out.write("boundary.csv", _boundary_csv(mesh))
    digest = cfg.digest()
    out.write("domain.svg", svgfig.domain_figure(mesh.boundary_polygons(), digest))
    if not trivial:
        rep = overdet.overdet_residual(mesh, u, cfg.nonlinearity.f(u.values))
        pr = overdet.p_function(mesh, u, cfg.nonlinearity, rep.alpha_hat)
        out.write("p.csv", pr.field.export_csv())
        out.write(
            "levels.svg",
            svgfig.level_set_figure(
                mesh.vertices, mesh.triangles, u.values, mesh.boundary_polygons(), digest
            ),
        )
        out.write(
            "p_field.svg",
            svgfig.level_set_figure(
                mesh.vertices, mesh.triangles, pr.field.values, mesh.boundary_polygons(), digest
            ),
        )
        report.update(
            {
                "alpha_hat": rep.alpha_hat,
                "rel_spread": rep.rel_spread,
                "criterion_left": pr.criterion_left,
                "criterion_right": pr.criterion_right,
                "criterion_holds": pr.criterion_holds,
                "p_interior_max": pr.interior_max,
                "p_boundary_max": pr.boundary_max,
                "p_flags": pr.flags,
            }
        )
    out.write("report.json", _json_dumps(report))
    return report


def _sample_lines(cfg: RunConfig, mesh) -> list[Line]:
    rng = random.Random(cfg.seed)
    n = int(cfg.extra.get("n_lines", 16))
    v = mesh.vertices
    x0, x1 = float(v[:, 0].min()), float(v[:, 0].max())
    y0, y1 = float(v[:, 1].min()), float(v[:, 1].max())
    lines = []
    for _ in range(n):
        px = x0 + (x1 - x0) * rng.random()
        py = y0 + (y1 - y0) * rng.random()
        theta = 2 * math.pi * rng.random()
        lines.append(Line((px, py), (math.cos(theta), math.sin(theta))))
    return lines


def _run_check(cfg: RunConfig, out: _Outputs) -> dict:
    lam = float(cfg.extra.get("lambda", 1.0))
    if lam <= 0:
        raise ConfigInvalid("check needs lambda > 0")
    grid = float(cfg.extra.get("grid", cfg.h / 2))
    theorems = cfg.extra.get("theorems", ["T4", "T5", "L3R", "T8"])
    checks = []
    mesh = build_domain(cfg.domain, cfg.h)
    if "T4" in theorems:
        checks.append(overdet.check_T4(cfg.domain, lam, grid))
    needs_solution = {"T5", "L3R", "T8"} & set(theorems)
    if needs_solution:
        k, m = fem.assemble(mesh)
        ep = fem.eigen_smallest(k, m, fem.dirichlet_mask(mesh), mesh)
        rep = overdet.overdet_residual(mesh, ep.u1, ep.lambda1 * ep.u1.values)
        u = ep.u1
        if cfg.alpha is not None:
            u = fem.ScalarField(mesh, ep.u1.values * (cfg.alpha / rep.alpha_hat))
            rep = overdet.overdet_residual(mesh, u, ep.lambda1 * u.values)
        if "T5" in theorems:
            checks.append(overdet.check_T5(mesh, u, lam, rep.alpha_hat))
        if "L3R" in theorems:
            checks.append(overdet.check_cap_heights(mesh, lam, _sample_lines(cfg, mesh)))
        if "T8" in theorems:
            checks.append(
                overdet.check_T8_convexity(mesh, u, fem.Linear(ep.lambda1), rep.alpha_hat)
            )
    out.write("boundary.csv", _boundary_csv(mesh))
    out.write("domain.svg", svgfig.domain_figure(mesh.boundary_polygons(), cfg.digest()))
    report = {"lambda": lam, "grid": grid, "checks": [c.to_json() for c in checks]}
    out.write("checks.json", _json_dumps(report))
    return report


def _run_flow(cfg: RunConfig, out: _Outputs) -> dict:
    max_steps = int(cfg.extra.get("max_steps", 300))
    spread_tol = cfg.tolerances.get("spread_tol", 1e-3)
    res = shapeopt.flow_to_extremal(cfg.domain, cfg.h, max_steps, spread_tol=spread_tol)
    rows = [[s.step, s.lambda1, s.area, s.spread] for s in res.states]
    out.write("trajectory.csv", _csv(["step", "lambda1", "area", "spread"], rows))
    pts = np.asarray(res.final.spec.vertices)
    out.write("final_boundary.csv", _csv(["x", "y"], [[float(x), float(y)] for x, y in pts]))
    digest = cfg.digest()
    steps = np.array([s.step for s in res.states], dtype=float)
    lams = np.array([s.lambda1 for s in res.states])
    out.write(
        "flow.svg",
        svgfig.chart_figure([(steps, lams, "lambda1")], digest),
    )
    out.write("domain.svg", svgfig.domain_figure([pts], digest))
    report = {
        "reason": res.reason,
        "steps": len(res.states) - 1,
        "lambda1_final": res.final.lambda1,
        "spread_final": res.final.spread,
        "area_final": res.final.area,
    }
    out.write("report.json", _json_dumps(report))
    return report


def _run_branch(cfg: RunConfig, out: _Outputs) -> dict:
    lam = float(cfg.extra.get("lambda", 1.0))
    n_modes = int(cfg.extra.get("n_modes", 10))
    resolution = int(cfg.extra.get("resolution", 16))
    t0 = cfg.extra.get("T")
    tstar = None
    if t0 is None:
        tstar = shapeopt.bifurcation_period(lam)
        t0 = tstar
    s_max = float(cfg.extra.get("s_max", 0.05))
    ds = float(cfg.extra.get("ds", 0.005))
    points = shapeopt.continue_branch(
        lam, float(t0), s_max, ds, n_modes=n_modes, resolution=resolution
    )
    header = (
        ["T", "s"] + [f"c_{i}" for i in range(n_modes + 1)]
        + ["alpha_hat", "spread", "max_u", "lambda"]
    )
    rows = []
    for p in points:
        rows.append(
            [p.period, p.s] + [float(c) for c in p.coeffs]
            + [p.alpha_hat, p.spread, p.max_u, p.lam]
        )
    out.write("branch.csv", _csv(header, rows))
    digest = cfg.digest()
    s_vals = np.array([p.s for p in points])
    max_us = np.array([p.max_u for p in points])
    threshold = np.array([abs(p.alpha_hat) / math.sqrt(lam) for p in points])
    out.write(
        "branch.svg",
        svgfig.chart_figure(
            [(s_vals, max_us, "max u"), (s_vals, threshold, "|alpha|/sqrt(lambda)")], digest
        ),
    )
    report = {
        "lambda": lam,
        "T0": float(t0),
        "bifurcation_period": tstar,
        "n_points": len(points),
        "n_accepted": sum(1 for p in points if p.converged),
        "max_spread": max(p.spread for p in points),
        "final_s": points[-1].s if points else None,
    }
    out.write("report.json", _json_dumps(report))
    return report


def run(cfg: RunConfig) -> ExperimentRecord:
    """Execute the configured pipeline and write outputs plus a record."""
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = _Outputs(out_dir)
    t0 = time.perf_counter()
    error = None
    try:
        if cfg.command == "eigen":
            _solve_eigen(cfg, out)
        elif cfg.command == "solve":
            _run_solve(cfg, out)
        elif cfg.command == "check":
            _run_check(cfg, out)
        elif cfg.command == "flow":
            _run_flow(cfg, out)
        elif cfg.command == "branch":
            _run_branch(cfg, out)
        elif cfg.command == "report":
            _run_report(cfg, out)
        else:
            raise ConfigInvalid(f"unknown command {cfg.command!r}")
    except ExtremalLabError as exc:
        if isinstance(exc, (ConfigInvalid, VersionMismatch)):
            raise
        error = f"{type(exc).__name__}: {exc}"
    record = ExperimentRecord(
        config=cfg.snapshot(),
        version=__version__,
        wall_time=time.perf_counter() - t0,
        manifest=out.manifest,
        error=error,
    )
    (out_dir / "record.json").write_text(_json_dumps(record.to_json()))
    return record


def _run_report(cfg: RunConfig, out: _Outputs) -> dict:
    paths = cfg.extra.get("records", [])
    if not isinstance(paths, list):
        raise ConfigInvalid("report needs a list of record paths")
    records = []
    for p in paths:
        with open(p) as fh:
            records.append((Path(p).parent, json.load(fh)))
    return report(records, out, cfg.digest())


def report(records: list[tuple[Path, dict]], out: _Outputs, digest: str = "") -> dict:
    """Aggregate theorem-check counts and eigen convergence across records."""
    versions = {r["version"] for _, r in records}
    if len(versions) > 1:
        raise VersionMismatch(f"records span versions {sorted(versions)}")

    check_counts: dict[str, dict[str, int]] = {}
    eigen_rows = []
    for base, rec in records:
        cmd = rec["config"].get("command")
        if cmd == "check":
            blob = json.loads((base / "checks.json").read_text())
            for chk in blob["checks"]:
                tally = check_counts.setdefault(chk["theorem"], {"pass": 0, "fail": 0, "na": 0})
                if chk["pass"] is None:
                    tally["na"] += 1
                elif chk["pass"]:
                    tally["pass"] += 1
                else:
                    tally["fail"] += 1
        elif cmd == "eigen":
            blob = json.loads((base / "report.json").read_text())
            eigen_rows.append((blob["h"], blob["lambda1"], json.dumps(blob["domain"], sort_keys=True)))

    rows = [[tag, c["pass"], c["fail"], c["na"]] for tag, c in sorted(check_counts.items())]
    out.write("check_counts.csv", _csv(["theorem", "pass", "fail", "not_applicable"], rows))

    conv_rows = []
    orders = []
    by_domain: dict[str, list[tuple[float, float]]] = {}
    for h, lam1, dom in eigen_rows:
        by_domain.setdefault(dom, []).append((h, lam1))
    for dom, pairs in sorted(by_domain.items()):
        pairs.sort(reverse=True)
        if len(pairs) < 2:
            continue
        spec = json.loads(dom)
        if spec.get("kind") == "disk":
            lam_ref = analytic.j01() ** 2 / spec["radius"] ** 2
        else:
            # second-order Richardson reference from the two finest levels
            (h1, l1), (h2, l2) = pairs[-2], pairs[-1]
            r = (h1 / h2) ** 2
            lam_ref = l2 + (l2 - l1) / (r - 1.0)
        errs = [(h, abs(l - lam_ref)) for h, l in pairs]
        for i in range(len(errs) - 1):
            (ha, ea), (hb, eb) = errs[i], errs[i + 1]
            order = math.log(ea / eb) / math.log(ha / hb) if eb > 0 else float("nan")
            orders.append(order)
            conv_rows.append([dom, ha, ea, order])
        conv_rows.append([dom, errs[-1][0], errs[-1][1], ""])
    out.write("convergence.csv", _csv(["domain", "h", "lambda1_error", "observed_order"], conv_rows))
    if conv_rows:
        hs = np.array([r[1] for r in conv_rows if r[3] != "" or True], dtype=float)
        es = np.array([max(float(r[2]), 1e-16) for r in conv_rows], dtype=float)
        out.write(
            "convergence.svg",
            svgfig.chart_figure([(hs, es, "lambda1 error")], digest, logx=True, logy=True),
        )
    summary = {
        "n_records": len(records),
        "check_counts": check_counts,
        "observed_orders": orders,
    }
    out.write("summary.json", _json_dumps(summary))
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="extremal-lab",
        description="solve/check/flow/branch pipelines for constant-flux planar domains",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config or cwd)")
    parser.add_argument("--threads", type=int, default=1, help="accepted for interface parity; solvers are single-threaded")
    args = parser.parse_args(argv)

    try:
        with open(args.config) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = os.environ.get("EXTREMAL_LAB_OUT") or args.out
    try:
        cfg = load_config(data, command=args.command, out_dir=out_dir)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        record = run(cfg)
    except (ConfigInvalid, VersionMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if record.error:
        print(f"numerical failure: {record.error}", file=sys.stderr)
        return 1
    print(json.dumps({"out_dir": cfg.out_dir, "files": [m["path"] for m in record.manifest]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
