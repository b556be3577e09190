"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records a PASS/FAIL line that is repeated in the pytest terminal
summary under "acceptance criteria".
"""
import math
import time

import numpy as np
import pytest

from latticecrack.analysis import convergence_sweep, identity_suite, measure_elastic_constant, measure_surface_constant
from latticecrack.config import from_dict
from latticecrack.energy import MemoryState, energy_gradient, total_energy
from latticecrack.evolution import (
    audit_energy_balance,
    audit_irreversibility,
    audit_stability,
    run_evolution,
)
from latticecrack.geometry import SQRT3, DomainSpec, build_lattice
from latticecrack.model import MaterialParams, cell_density, elastic_density_Phi

PARAMS = MaterialParams()


@pytest.fixture(scope="module")
def ramp_trace():
    """Uniaxial clamped ramp on the unit square at eps = 1/32, delta = 1/20."""
    cfg = from_dict({"scales": {"eps": 1 / 32}, "time": {"T": 1.0, "delta": 0.05},
                     "boundary": {"kind": "clamped-affine", "a": [0.0, 3.0]}})
    t0 = time.perf_counter()
    trace = run_evolution(cfg.lattice(), cfg.material, cfg.R_n, cfg.program(), cfg.solver)
    return trace, time.perf_counter() - t0


def test_criterion1_crack_identity(acceptance_report):
    t0 = time.perf_counter()
    checks = identity_suite(1000, seed=2024)
    elapsed = time.perf_counter() - t0
    worst = max(c.residual1 for c in checks)
    ok = worst <= 1e-12 and elapsed < 10.0
    assert acceptance_report(1, ok, f"max residual1 = {worst:.2e} over 1000 cases, {elapsed:.1f} s")


def test_criterion2_cell_density_convergence(acceptance_report):
    t0 = time.perf_counter()
    ok, parts = True, []
    for z in [(1.0, 0.0), (0.0, 1.0), (1.0, 2.0), (-3.0, 0.5)]:
        zz = float(np.dot(z, z))
        gaps = [abs(cell_density(z, e, PARAMS) - elastic_density_Phi(z, PARAMS)) / zz for e in (1e-2, 1e-3, 1e-4)]
        ok &= gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-2
        parts.append(f"{z}: {gaps[2]:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    assert acceptance_report(2, ok, f"gaps at eps=1e-4 {', '.join(parts)}; {elapsed:.3f} s")


def test_criterion3_elastic_density(acceptance_report):
    t0 = time.perf_counter()
    m = measure_elastic_constant((1.0, 0.0), 1e-3)
    elapsed = time.perf_counter() - t0
    rel = abs(m.value - SQRT3 / 2) / (SQRT3 / 2)
    ok = rel <= 0.01 and elapsed < 5.0
    assert acceptance_report(3, ok, f"per-area energy {m.value:.6f} vs sqrt(3)/2, gap {rel:.1e}, {elapsed:.1f} s")


def test_criterion4_surface_density(acceptance_report):
    t0 = time.perf_counter()
    eps = 1 / 128
    results = []
    for nu, target in (((0.0, 1.0), 2.0), ((1.0, 0.0), 4.0 / math.sqrt(3.0))):
        m = measure_surface_constant(nu, eps, PARAMS, R_n=eps ** -0.125, length=1.0)
        results.append((nu, m.value, abs(m.value - target) / target))
    elapsed = time.perf_counter() - t0
    ok = all(r[2] <= 0.05 for r in results) and elapsed < 30.0
    detail = "; ".join(f"nu={nu}: {v:.4f} (err {e:.1%})" for nu, v, e in results)
    assert acceptance_report(4, ok, f"{detail}; {elapsed:.1f} s")


def test_criterion5_gradient(acceptance_report):
    t0 = time.perf_counter()
    eps = 0.25
    # six rows of triangles, six lattice spacings wide
    lat = build_lattice(DomainSpec((0, 6 * eps, 0, 6 * eps * SQRT3 / 2),
                                   (0, 6 * eps, 0, 6 * eps * SQRT3 / 2), ()), eps)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(lat.n_nodes) * 3.0 * math.sqrt(eps)
    mem = np.where(rng.random(lat.n_springs) < 0.4, rng.uniform(0, 6, lat.n_springs), 0.0)
    state = MemoryState(mem)
    g = energy_gradient(lat, u, state, PARAMS)
    h = 1e-7
    fd = np.empty(lat.n_nodes)
    for k in range(lat.n_nodes):
        e = np.zeros(lat.n_nodes)
        e[k] = h
        fd[k] = (total_energy(lat, u + e, state, PARAMS) - total_energy(lat, u - e, state, PARAMS)) / (2 * h)
    # springs whose stretch sits on the kink of max(memory, stretch)
    tie = (mem > PARAMS.R) & (np.abs(lat.stretches(u) - mem) < 1e-6)
    keep = np.ones(lat.n_nodes, bool)
    keep[np.unique(lat.springs[tie])] = False
    err = float(np.max(np.abs(g - fd)[keep]))
    elapsed = time.perf_counter() - t0
    ok = err < 1e-5 * (1 + np.max(np.abs(g))) and elapsed < 5.0
    assert acceptance_report(5, ok, f"max |grad - FD| = {err:.1e} on {lat.n_triangles} triangles, {elapsed:.2f} s")


def test_criterion6_evolution_audits(ramp_trace, acceptance_report):
    trace, elapsed = ramp_trace
    irr, first = audit_irreversibility(trace)
    stab, bad = audit_stability(trace)
    bal = audit_energy_balance(trace)
    worst = float(np.min(bal.slack + bal.allowance))
    ok = irr and stab and bal.ok and elapsed < 300.0
    detail = (f"irreversibility {'ok' if irr else f'fails at step {first}'}, "
              f"stability violations {bad}, balance flagged {bal.flagged} "
              f"(min slack+allowance {worst:.2e}), {elapsed:.0f} s")
    assert acceptance_report(6, ok, detail)


@pytest.fixture(scope="module")
def sweep():
    cfg = from_dict({"sweep": {"eps": [1 / 16, 1 / 32, 1 / 64]}})
    t0 = time.perf_counter()
    report = convergence_sweep(cfg)
    return report, time.perf_counter() - t0


def test_criterion7_sweep_trend(sweep, acceptance_report):
    report, elapsed = sweep
    finals = {c.eps: c.final for c in report.cells if c.final}
    # the flat-maximum check belongs to the energy-bound audit, tested below
    wanted = [k for k in report.checks if "slope" not in k]
    ok = all(report.checks[k] for k in wanted) and elapsed < 1800.0
    ratios = ", ".join(f"1/{round(1 / e)}: rem {f['rem'] / f['total']:.3f} bdy {f['bdy'] / f['total']:.3f}"
                       for e, f in sorted(finals.items(), reverse=True))
    failed = [k for k in wanted if not report.checks[k]]
    detail = f"{ratios}; Cauchy {[f'{d:.2e}' for d in report.cauchy.get(0.05, [])]}; failed {failed}; {elapsed:.0f} s"
    assert acceptance_report(7, ok, detail)


def test_sweep_energy_maxima_uniform(sweep):
    report, _ = sweep
    maxima = [c.max_energy for c in report.cells]
    assert all(c.error is None for c in report.cells)
    assert max(maxima) <= 1.2 * min(maxima)
    assert all(v for k, v in report.checks.items() if "slope" in k)


def test_criterion8_crack_anisotropy(ramp_trace, acceptance_report):
    trace, elapsed = ramp_trace
    K = trace.steps[-1].cracks
    total = K.total_length()
    aligned = float(np.sum(K.lengths[np.abs(K.normals[:, 1]) > 0.9]))
    frac = aligned / total if total > 0 else 0.0
    ok = total > 0 and frac >= 0.8 and elapsed < 300.0
    assert acceptance_report(8, ok, f"{len(K)} segments, length {total:.3f}, aligned fraction {frac:.1%}")
