"""Command-line entry point.

Subcommands::

    latticecrack simulate <config>
    latticecrack sweep <config>
    latticecrack check-identity [--cases N] [--seed S] [--out DIR]
    latticecrack measure-densities <config>

Exit status is 0 on success, 1 when an audit or assertion fails and 2 on a
configuration error.  Every subcommand writes ``manifest.json`` next to its
other outputs.

Output schemas (all CSV files have a header row and use the shortest
round-trip float representation):

``energies.csv``
    step, t, ela, cra, rem, bdy, total, n_broken, n_large2, n_large3
``diagnostics.csv``
    step, iterations, restarts, grad_norm, winner, winner_label, converged
``audits.csv``
    step, energy, shifted_energy, lhs, work, slack, allowance
``cracks_final.csv`` / ``cracks_stepNNNN.csv``
    x1, y1, x2, y2, nx, ny, triangle_id, variant
``displacements.csv`` (``output.dumps``)
    step, x, y, u
``jump_field.csv`` / ``bar_field.csv`` (``output.fields``)
    per-triangle piece values, gradients and jump flags
``sweep_table.csv``
    eps, delta, followed by the energies.csv columns
``sweep_summary.csv``
    check, passed
``sweep_cauchy.csv``
    delta, eps_coarse, eps_fine, difference
``identity.csv``
    case, geometric, counting, cra, residual1, residual2, bound2, ok
``densities.csv``
    input, value
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import __version__
from .analysis import convergence_sweep, identity_suite, measure_elastic_constant, measure_surface_constant
from .config import ConfigError, RunConfig, parse_config
from .evolution import (
    ENERGY_COLUMNS,
    audit_crack_inclusion,
    audit_energy_balance,
    audit_energy_bound,
    audit_irreversibility,
    audit_stability,
    run_evolution,
    write_rows,
    write_trace,
)
from .interpolation import ClassificationError, bar_interpolation, jump_interpolation
from .model import cell_density, elastic_density_Phi, surface_density_phi

log = logging.getLogger("latticecrack")


def _json_scalar(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def write_manifest(outdir: str, command: str, config: dict | None, seed: int | None,
                   outputs: list[str], results: dict) -> str:
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "manifest.json")
    doc = {"command": command, "version": __version__, "seed": seed, "config": config,
           "outputs": sorted(os.path.relpath(p, outdir) for p in outputs), "results": results}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_scalar)
        fh.write("\n")
    return path


def _simulate(cfg: RunConfig) -> int:
    lattice = cfg.lattice()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        trace = run_evolution(lattice, cfg.material, cfg.R_n, cfg.program(), cfg.solver)
    for w in caught:
        log.warning("%s", w.message)
    outputs = write_trace(trace, cfg.out_dir, crack_sets=cfg.crack_sets, dumps=cfg.dumps)

    if cfg.fields and trace.steps:
        k = len(trace.steps) - 1
        cls = trace.classification(k)
        u = trace.steps[k].u
        for name, build in (("jump_field.csv", jump_interpolation), ("bar_field.csv", bar_interpolation)):
            try:
                field = build(lattice, u, cls)
            except ClassificationError as exc:
                log.warning("skipping %s: %s", name, exc)
                continue
            p = os.path.join(cfg.out_dir, name)
            field.write_csv(p, cls)
            outputs.append(p)

    irr, first = audit_irreversibility(trace)
    stab, stab_bad = audit_stability(trace)
    inc, inc_bad = audit_crack_inclusion(trace)
    bal = audit_energy_balance(trace)
    bound = audit_energy_bound(trace)
    results = {
        "irreversibility": irr, "irreversibility_first_violation": first,
        "stability": stab, "stability_violations": stab_bad,
        "crack_inclusion": inc, "crack_inclusion_violations": inc_bad,
        "energy_balance": bal.ok, "energy_balance_flagged": bal.flagged,
        "count_bound": bound.count_bound_ok, "max_energy": bound.max_energy,
        "max_eps_broken": bound.max_eps_broken,
        "final_total": trace.steps[-1].breakdown.total if trace.steps else 0.0,
        "solver_warnings": len(caught),
    }
    write_manifest(cfg.out_dir, "simulate", cfg.raw, cfg.solver.seed, outputs, results)
    ok = irr and stab and inc and bal.ok and bound.count_bound_ok
    for key in ("irreversibility", "stability", "crack_inclusion", "energy_balance", "count_bound"):
        print(f"{key}: {'PASS' if results[key] else 'FAIL'}")
    return 0 if ok else 1


def _sweep(cfg: RunConfig) -> int:
    report = convergence_sweep(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    outputs = []
    p = os.path.join(cfg.out_dir, "sweep_table.csv")
    write_rows(p, ("eps", "delta") + ENERGY_COLUMNS, report.table())
    outputs.append(p)
    p = os.path.join(cfg.out_dir, "sweep_summary.csv")
    write_rows(p, ("check", "passed"), [{"check": k, "passed": int(v)} for k, v in report.checks.items()])
    outputs.append(p)
    p = os.path.join(cfg.out_dir, "sweep_cauchy.csv")
    eps_sorted = sorted(set(c.eps for c in report.cells), reverse=True)
    rows = [{"delta": d, "eps_coarse": eps_sorted[i], "eps_fine": eps_sorted[i + 1], "difference": diff}
            for d, diffs in report.cauchy.items() for i, diff in enumerate(diffs)]
    write_rows(p, ("delta", "eps_coarse", "eps_fine", "difference"), rows)
    outputs.append(p)
    failed = {f"{c.eps!r},{c.delta!r}": c.error for c in report.cells if c.error}
    write_manifest(cfg.out_dir, "sweep", cfg.raw, cfg.solver.seed, outputs,
                   {"checks": report.checks, "failed_cells": failed,
                    "note": "Cauchy-trend checks are heuristics; no convergence rate is known"})
    for k, v in report.checks.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    return 0 if report.ok else 1


def _check_identity(cases: int, seed: int, outdir: str) -> int:
    checks = identity_suite(cases, seed)
    os.makedirs(outdir, exist_ok=True)
    rows = [{"case": i, "geometric": c.geometric, "counting": c.counting, "cra": c.cra,
             "residual1": c.residual1, "residual2": c.residual2, "bound2": c.bound2, "ok": int(c.ok)}
            for i, c in enumerate(checks)]
    p = os.path.join(outdir, "identity.csv")
    header = ("case", "geometric", "counting", "cra", "residual1", "residual2", "bound2", "ok")
    write_rows(p, header, rows)
    ok = all(c.ok for c in checks)
    worst = max((c.residual1 for c in checks), default=0.0)
    write_manifest(outdir, "check-identity", {"cases": cases}, seed, [p],
                   {"ok": ok, "max_residual1": worst})
    print("case  residual1  residual2  bound2")
    for i, c in enumerate(checks):
        print(f"{i:4d}  {c.residual1:.3e}  {c.residual2:.3e}  {c.bound2:.3e}")
    print(f"max residual1 = {worst:.3e}: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _measure_densities(cfg: RunConfig) -> int:
    rows = []
    for z in cfg.density_gradients:
        tag = f"({z[0]!r},{z[1]!r})"
        rows.append({"input": f"Phi{tag}", "value": float(elastic_density_Phi(z, cfg.material))})
        rows.append({"input": f"cell{tag}", "value": float(cell_density(z, cfg.eps, cfg.material))})
        try:
            m = measure_elastic_constant(z, cfg.eps, cfg.material)
        except ValueError as exc:
            log.warning("elastic measurement %s skipped: %s", tag, exc)
            continue
        rows.append({"input": f"elastic_per_area{tag}", "value": m.value})
    for nu in cfg.density_normals:
        tag = f"({nu[0]!r},{nu[1]!r})"
        rows.append({"input": f"phi{tag}", "value": float(surface_density_phi(nu, cfg.material))})
        m = measure_surface_constant(nu, cfg.eps, cfg.material, cfg.R_n, length=cfg.density_length,
                                     jump_factor=cfg.jump_factor)
        rows.append({"input": f"surface_per_length{tag}", "value": m.value})
    os.makedirs(cfg.out_dir, exist_ok=True)
    p = os.path.join(cfg.out_dir, "densities.csv")
    write_rows(p, ("input", "value"), rows)
    write_manifest(cfg.out_dir, "measure-densities", cfg.raw, None, [p], {})
    for r in rows:
        print(f"{r['input']},{r['value']!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latticecrack", description="Quasi-static lattice fracture runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("simulate", "run one evolution and its audits"),
                           ("sweep", "run evolutions over an eps/delta grid"),
                           ("measure-densities", "measure elastic and surface densities")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="YAML configuration file")
    p = sub.add_parser("check-identity", help="crack-energy identity on random classifications")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/identity", help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check-identity":
            if args.cases < 1:
                raise ConfigError("--cases must be >= 1")
            return _check_identity(args.cases, args.seed, args.out)
        cfg = parse_config(args.config)
        if args.command == "simulate":
            return _simulate(cfg)
        if args.command == "sweep":
            return _sweep(cfg)
        return _measure_densities(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except AssertionError as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
