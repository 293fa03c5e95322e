"""Command-line front end.

Subcommands: ``verify``, ``simulate-additive``, ``simulate-multiplicative``,
``mildness-sweep`` and ``sample-fbm``. Exit codes: 0 success, 1 check
failure, 2 configuration error, 3 resource cap.

Every artifact in the output directory is a deterministic function of the
resolved configuration. Wall-clock timings go to ``run_log.json`` and to
stderr only.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io as _io
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .additive_solver import kernel_slice, map_chunks, point_index, stochastic_convolution
from .config import ConfigError, RunConfig, load_config
from .errors import CapExceeded, FracHeatError, NoConvergence
from .fbm_field import (HurstVector, SeedSpec, cumulate_increments, resolve_method, fbm_covariance,
                        sample_fbm_increments)
from .heat_kernels import HeatParams, kernel_table
from .io import dumps, write_field, write_json
from .mildness import (classify, exponent_test, g_norm_sq, kernel_l2_norm_sq,
                       refinement_experiment)
from .verify import run_checks
from .volterra_solver import picard_solve, volterra_problem
from .wis_integral import Integrand, MomentEstimate, isometry_norm

__all__ = ["main", "build_parser", "CSV_SCHEMA_VERSION", "POINT_COLUMNS", "SWEEP_COLUMNS"]

CSV_SCHEMA_VERSION = 1
MANIFEST_SCHEMA_VERSION = 1

POINT_COLUMNS = ["schema_version", "point", "n", "second_moment", "variance", "stderr",
                 "J1", "J2", "J2_stderr", "J2_exact", "J2_z"]
SWEEP_COLUMNS = ["schema_version", "alpha", "d", "hurst", "verdict", "exponent", "exponent_finite",
                 "exponent_disagrees", "g_norm_sq", "kernel_l2_norm_sq", "cells", "estimates",
                 "stderrs", "ratios", "growth", "stabilized"]

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "nan")
    if isinstance(value, (list, tuple)):
        return ";".join(_fmt(v) for v in value)
    return str(value)


def _write_csv(path: Path, columns: list, rows: list):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()
        self.phases = {}

    def mark(self, name: str):
        now = time.perf_counter()
        self.phases[name] = now - self.start - sum(self.phases.values())


def _finish(cfg: RunConfig, clock: _Clock, outputs: list):
    clock.mark("finish")
    log = {"command": cfg.command, "threads": cfg["threads"], "out": str(cfg.out), "seconds": clock.phases,
           "total_seconds": sum(clock.phases.values()), "version": __version__}
    write_json(cfg.out / "run_log.json", log)
    print(f"{cfg.command}: wrote {', '.join(outputs)} to {cfg.out} "
          f"in {log['total_seconds']:.2f} s", file=sys.stderr)


# execution settings: they never change the results, so the manifest leaves them out
_EXECUTION_KEYS = ("threads", "out")


def _manifest(cfg: RunConfig, **extra) -> dict:
    echo = {k: v for k, v in cfg.to_dict().items() if k not in _EXECUTION_KEYS}
    return {"kind": "manifest", "schema_version": MANIFEST_SCHEMA_VERSION, "version": __version__,
            "config": echo, **extra}


def _check_values_cap(cfg: RunConfig, per_sample: int):
    total = per_sample * cfg["samples"]
    if total > cfg["limits"]["max_values"]:
        raise CapExceeded(f"{total} output values exceed limits.max_values = {cfg['limits']['max_values']}")


def cmd_verify(cfg: RunConfig | None, out: str | None = None) -> int:
    report, timings = run_checks()
    text = dumps(report)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "verify_report.json").write_text(text)
    sys.stdout.write(text)
    for name, sec in timings.items():
        print(f"{name}: {sec:.3f} s", file=sys.stderr)
    if not report["passed"]:
        print("failed checks: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def _point_rows(cfg, values, det, additive, p, H, grid):
    rows = []
    for pt in cfg["points"]:
        idx = point_index(grid, pt)
        node = (idx[0] - 1,) + idx[1:]
        y = values[(slice(None),) + node]
        j1 = float(det[node] ** 2)
        row = {"schema_version": CSV_SCHEMA_VERSION, "point": [float(v) for v in pt], "J1": j1}
        if additive:
            sq = MomentEstimate.from_samples((y - det[node]) ** 2)
            exact = isometry_norm(Integrand(grid, kernel_slice(p, grid, pt)), H) if p.sigma else 0.0
            z = (sq.mean - exact) / sq.stderr if sq.stderr > 0 else 0.0
            row.update(n=sq.n, second_moment=j1 + sq.mean, variance=sq.variance, stderr=sq.stderr,
                       J2=sq.mean, J2_stderr=sq.stderr, J2_exact=exact, J2_z=z)
        else:
            est = MomentEstimate.from_samples(y * y)
            row.update(n=est.n, second_moment=est.mean, variance=est.variance, stderr=est.stderr)
        rows.append(row)
    return rows


def cmd_simulate(cfg: RunConfig, multiplicative: bool = False) -> int:
    clock = _Clock()
    p, H, grid = cfg.params, cfg.H, cfg.grid
    per_sample = (grid.counts[0] - 1) * math.prod(grid.counts[1:])
    _check_values_cap(cfg, per_sample)
    cfg.check_output_dir()
    table = kernel_table(p, grid)
    det = table.deterministic
    if not np.all(np.isfinite(det)):
        raise ConfigError("the deterministic part is singular at a grid node; move the spatial origin",
                          "grid.origin")
    method = resolve_method(grid, cfg["method"])
    base = SeedSpec(cfg["seed"], 0)
    clock.mark("setup")

    if not multiplicative:
        def run(lo, hi):
            if p.sigma == 0.0:
                return np.broadcast_to(det, (hi - lo,) + det.shape).copy(), []
            inc = sample_fbm_increments(grid, H, [base.child(k) for k in range(lo, hi)], method)
            return det + stochastic_convolution(table.weights, inc), []
    else:
        template = volterra_problem(p, H, grid, base, method, increments=np.zeros(grid.cell_shape))

        def run(lo, hi):
            vals, traces = [], []
            for k in range(lo, hi):
                seed = base.child(k)
                inc = sample_fbm_increments(grid, H, [seed], method)[0]
                prob = dataclasses.replace(template, increments=inc, seed=seed)
                sol = picard_solve(p, H, grid, seed, cfg["tol"], cfg["max_iter"], method,
                                   cfg["constants"], problem=prob)
                vals.append(sol.values)
                traces.append({"realization": k, **sol.meta["picard"]})
            return np.stack(vals), traces

    chunks = map_chunks(run, cfg["samples"], cfg["threads"])
    values = np.concatenate([c[0] for c in chunks])
    traces = [t for c in chunks for t in c[1]]
    clock.mark("simulate")

    sidecar = {"params": p.to_dict(), "H": list(H.components), "grid": grid.to_dict(),
               "seed": [base.master_seed, base.stream_index], "method": method,
               "layout": "realization, time (t > 0), space axes"}
    write_field(cfg.out / "solution.fhf", values, sidecar)
    write_field(cfg.out / "kernel_table.fhf", det,
                {"params": p.to_dict(), "grid": grid.to_dict(), "truncation": table.meta})
    rows = _point_rows(cfg, values, det, not multiplicative, p, H, grid)
    _write_csv(cfg.out / "points.csv", POINT_COLUMNS, rows)
    extra = {"params": p.to_dict(), "H": list(H.components), "grid": grid.to_dict(),
             "seed": cfg["seed"], "method": method, "truncation": table.meta,
             "outputs": ["solution.fhf", "kernel_table.fhf", "points.csv"]}
    if multiplicative:
        extra["picard"] = traces
    write_json(cfg.out / "manifest.json", _manifest(cfg, **extra))
    _finish(cfg, clock, extra["outputs"] + ["manifest.json"])
    return EXIT_OK


def cmd_mildness_sweep(cfg: RunConfig) -> int:
    clock = _Clock()
    cfg.check_output_dir()
    s = cfg["sweep"]
    rows = []
    for alpha in s["alphas"]:
        for d in s["ds"]:
            v = classify(alpha, d)
            e, finite = exponent_test(alpha, d)
            p = HeatParams(alpha, 1.0, 1.0, d)
            for h in s["hurst"]:
                H = HurstVector((h,) * (d + 1))
                row = {"schema_version": CSV_SCHEMA_VERSION, "alpha": alpha, "d": d, "hurst": h,
                       "verdict": v.verdict.value, "exponent": e, "exponent_finite": finite,
                       "exponent_disagrees": (v.verdict.value == "Mild") != finite,
                       "g_norm_sq": g_norm_sq(p, H, (1.0,) * (d + 1)),
                       "kernel_l2_norm_sq": kernel_l2_norm_sq(p, 1.0)}
                if d <= s["experiment_max_d"]:
                    res = refinement_experiment(p, H, (1.0,) * (d + 1), s["refinements"],
                                                cfg["samples"], s["base_cells"].get(str(d)), cfg["seed"],
                                                cfg["threads"])
                    row.update(cells=res.cells, estimates=[est.mean for est in res.estimates],
                               stderrs=[est.stderr for est in res.estimates], ratios=res.ratios,
                               growth=res.growth, stabilized=res.stabilized)
                rows.append(row)
    clock.mark("sweep")
    _write_csv(cfg.out / "mildness.csv", SWEEP_COLUMNS, rows)
    write_json(cfg.out / "manifest.json", _manifest(cfg, outputs=["mildness.csv"]))
    _finish(cfg, clock, ["mildness.csv", "manifest.json"])
    return EXIT_OK


def _covariance_report(grid, H, values, cap: int = 256) -> dict:
    nodes = math.prod(grid.shape)
    if nodes > cap:
        return {"checked": False, "reason": f"more than {cap} nodes"}
    x = values.reshape(values.shape[0], nodes)
    pts = np.stack(np.meshgrid(*[grid.nodes(j) for j in range(grid.n)], indexing="ij"), -1)
    pts = pts.reshape(nodes, grid.n)
    exact = fbm_covariance(pts[:, None, :], pts[None, :, :], H)
    prods = x[:, :, None] * x[:, None, :]
    emp = prods.mean(axis=0)
    se = prods.std(axis=0, ddof=1) / math.sqrt(x.shape[0])
    zero = se == 0.0
    z = np.abs(emp - exact)[~zero] / se[~zero]
    boundary = float(np.max(np.abs(emp[zero] - exact[zero]))) if zero.any() else 0.0
    max_z = float(z.max()) if z.size else 0.0
    return {"checked": True, "entries": int(emp.size), "max_z": max_z,
            "within_5se": float(np.mean(z <= 5.0)) if z.size else 1.0,
            "boundary_max_abs": boundary, "passed": max_z <= 5.0 and boundary == 0.0}


def cmd_sample_fbm(cfg: RunConfig) -> int:
    clock = _Clock()
    grid, H = cfg.grid, cfg.H
    kind = cfg["kind"]
    per = math.prod(grid.shape if kind == "fbm_values" else grid.cell_shape)
    _check_values_cap(cfg, per)
    if kind == "fbm_values" and any(o != 0.0 for o in grid.origin):
        raise ConfigError("field values are anchored at the origin", "grid.origin")
    cfg.check_output_dir()
    method = resolve_method(grid, cfg["method"])
    base = SeedSpec(cfg["seed"], 0)

    def run(lo, hi):
        inc = sample_fbm_increments(grid, H, [base.child(k) for k in range(lo, hi)], method)
        return cumulate_increments(inc, grid.n) if kind == "fbm_values" else inc

    values = np.concatenate(map_chunks(run, cfg["samples"], cfg["threads"]))
    clock.mark("sample")
    write_field(cfg.out / "fbm.fhf", values,
                {"grid": grid.to_dict(), "H": list(H.components), "kind": kind, "method": method,
                 "exact": method == "cholesky", "seed": [base.master_seed, base.stream_index]})
    report = (_covariance_report(grid, H, values) if kind == "fbm_values"
              else {"checked": False, "reason": "increments"})
    write_json(cfg.out / "covariance_report.json", report)
    write_json(cfg.out / "manifest.json",
               _manifest(cfg, outputs=["fbm.fhf", "covariance_report.json"], method=method))
    _finish(cfg, clock, ["fbm.fhf", "covariance_report.json", "manifest.json"])
    return EXIT_CHECK if report.get("passed") is False else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracheat", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"fracheat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("verify", "simulate-additive", "simulate-multiplicative", "mildness-sweep",
                 "sample-fbm"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="YAML or JSON configuration file, or a run manifest")
        cmd.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        cmd.add_argument("--samples", type=int, help="number of realizations")
        cmd.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--tol", type=float, help="Picard tolerance")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "samples": args.samples, "threads": args.threads,
                 "out": args.out, "tol": args.tol}
    try:
        if args.command == "verify":
            return cmd_verify(None, args.out)
        cfg = load_config(args.command, args.config, overrides)
        if args.command == "simulate-additive":
            return cmd_simulate(cfg)
        if args.command == "simulate-multiplicative":
            return cmd_simulate(cfg, multiplicative=True)
        if args.command == "mildness-sweep":
            return cmd_mildness_sweep(cfg)
        return cmd_sample_fbm(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapExceeded as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except NoConvergence as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except FracHeatError as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
