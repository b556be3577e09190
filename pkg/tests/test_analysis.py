import math

import numpy as np
import pytest

from latticecrack.analysis import (
    BreakageRegimeError,
    LineOutsideDomainError,
    check_crack_identity,
    convergence_sweep,
    identity_suite,
    measure_elastic_constant,
    measure_surface_constant,
    random_classification,
)
from latticecrack.config import from_dict
from latticecrack.energy import INTACT, LARGE2, LARGE3, classify_from_trial
from latticecrack.geometry import DomainSpec, build_lattice
from latticecrack.model import MaterialParams, psi

PARAMS = MaterialParams()


@pytest.fixture(scope="module")
def square():
    return build_lattice(DomainSpec((0, 1, 0, 1), (0, 1, 0, 1), ()), 0.125)


def test_identity_empty(square):
    trial = np.zeros((square.n_triangles, 3))
    chk = check_crack_identity(square, classify_from_trial(trial, square.eps, PARAMS.R, 2.0), PARAMS)
    assert chk.geometric == 0.0 and chk.counting == 0.0 and chk.cra == 0.0
    assert chk.residual1 == 0.0 and chk.residual2 == 0.0 and chk.ok


def test_identity_single_large3(square):
    eps = square.eps
    trial = np.zeros((square.n_triangles, 3))
    t = square.n_triangles // 2
    trial[t] = 10.0
    cls = classify_from_trial(trial, eps, PARAMS.R, 2.0)
    assert cls.count(LARGE3) == 1 and np.count_nonzero(cls.status != INTACT) == 1
    chk = check_crack_identity(square, cls, PARAMS)
    assert chk.geometric == pytest.approx(1.5 * eps, rel=1e-14)
    assert chk.counting == pytest.approx(1.5 * eps, rel=1e-15)
    assert chk.cra == pytest.approx(1.5 * eps * psi(10.0, PARAMS), rel=1e-14)
    assert chk.residual2 == pytest.approx(1.5 * eps * abs(1.0 - psi(10.0, PARAMS)), rel=1e-10)
    assert chk.ok


def test_identity_single_large2(square):
    eps = square.eps
    trial = np.zeros((square.n_triangles, 3))
    trial[5, 1:] = 10.0
    cls = classify_from_trial(trial, eps, PARAMS.R, 2.0)
    assert cls.count(LARGE2) == 1
    chk = check_crack_identity(square, cls, PARAMS)
    assert chk.geometric == pytest.approx(eps, rel=1e-14)
    assert chk.residual1 <= 1e-15


def test_random_classifications_mix_all_classes(square):
    rng = np.random.default_rng(3)
    R_n = max(square.eps ** -0.125, 1.5 * PARAMS.R)
    seen = set()
    for _ in range(30):
        seen |= set(np.unique(random_classification(square, PARAMS, R_n, rng).status).tolist())
    assert {INTACT, LARGE2, LARGE3} <= seen


def test_identity_suite_random():
    checks = identity_suite(100, seed=11)
    assert all(c.ok for c in checks)
    assert max(c.residual1 for c in checks) <= 1e-12
    assert any(c.counting > 0 for c in checks)


@pytest.mark.parametrize("normal", [(0.0, 1.0), (1.0, 0.0), (math.sqrt(0.5), math.sqrt(0.5))])
def test_surface_measurement_additive_in_length(normal):
    m1 = measure_surface_constant(normal, 1 / 32, length=1.0)
    m2 = measure_surface_constant(normal, 1 / 32, length=2.0)
    if 0.0 in normal:
        assert m2.crack_length == pytest.approx(2 * m1.crack_length)
    # the off-node shift moves a tilted line off the diagonal, so compare with the length ratio
    ratio = m2.crack_length / m1.crack_length
    assert (m2.cra + m2.rem) == pytest.approx(ratio * (m1.cra + m1.rem), rel=0.02)


@pytest.mark.parametrize("normal", [(0.0, 1.0), (1.0, 0.0)])
def test_surface_measurement_independent_of_jump(normal):
    a = measure_surface_constant(normal, 1 / 32, jump_factor=10.0)
    b = measure_surface_constant(normal, 1 / 32, jump_factor=20.0)
    assert a.value == pytest.approx(b.value, rel=0.01)


def test_surface_targets():
    assert measure_surface_constant((0.0, 1.0), 1 / 16).target == pytest.approx(2.0)
    assert measure_surface_constant((1.0, 0.0), 1 / 16).target == pytest.approx(4 / math.sqrt(3))


def test_surface_line_outside_domain():
    with pytest.raises(LineOutsideDomainError):
        measure_surface_constant((0.0, 1.0), 1 / 16, offset=0.6)
    with pytest.raises(LineOutsideDomainError):
        measure_surface_constant((1.0, 0.0), 1 / 16, offset=-0.6)
    assert measure_surface_constant((0.0, 1.0), 1 / 16, offset=0.3).crack_length == pytest.approx(1.0)
    with pytest.raises(ValueError):
        measure_surface_constant((0.0, 2.0), 1 / 16)


def test_line_outside_box_is_rejected():
    from latticecrack.analysis import _clip_line

    assert _clip_line(np.array([0.5, 3.0]), np.array([0.0, 1.0]), (0, 1, 0, 1)) == 0.0
    assert _clip_line(np.array([0.5, 0.5]), np.array([0.0, 1.0]), (0, 1, 0, 1)) == pytest.approx(1.0)
    assert _clip_line(np.array([0.5, 0.5]), np.array([math.sqrt(0.5)] * 2), (0, 1, 0, 1)) == pytest.approx(
        math.sqrt(2.0))


def test_elastic_zero_gradient():
    m = measure_elastic_constant((0.0, 0.0), 1 / 16)
    assert m.value == 0.0 and m.target == 0.0 and m.gap == 0.0


def test_elastic_value_is_cell_density():
    # affine data has the same gradient on every triangle, so the per-area
    # energy is the cell density itself
    m = measure_elastic_constant((1.0, 2.0), 1 / 64)
    assert m.value == pytest.approx(m.cell, rel=1e-12)


def test_elastic_gap_decreasing():
    gaps = [measure_elastic_constant((1.0, 0.0), e).gap for e in (1 / 16, 1 / 64, 1 / 256)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_elastic_breakage_regime():
    with pytest.raises(BreakageRegimeError):
        measure_elastic_constant((10.0, 0.0), 1 / 16)


def test_zero_program_sweep():
    cfg = from_dict({"boundary": {"kind": "zero"}, "time": {"T": 1.0, "delta": 0.5},
                     "sweep": {"eps": [0.25, 0.125]}})
    report = convergence_sweep(cfg, workers=1)
    assert all(c.error is None for c in report.cells)
    rows = report.table()
    assert len(rows) == 2 * 3
    for r in rows:
        assert r["total"] == 0.0 and r["ela"] == 0.0 and r["n_broken"] == 0
    assert report.cauchy[0.5] == [0.0]


def test_sweep_reports_failed_cells():
    cfg = from_dict({"time": {"T": 1.0, "delta": 0.5}, "sweep": {"eps": [0.25, 4.0]}})
    report = convergence_sweep(cfg, workers=1)
    failed = [c for c in report.cells if c.error]
    assert [c.eps for c in failed] == [4.0]
    assert not report.ok
