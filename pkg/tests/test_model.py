import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latticecrack.geometry import DIRECTIONS, SQRT3
from latticecrack.model import (
    MaterialParams,
    ScaleParams,
    cell_density,
    cell_density_grad,
    elastic_density_Phi,
    phi_alpha,
    potential_W,
    psi,
    psi_increment,
    psi_prime,
    surface_density_phi,
)


def mp_psi(s, mu=1, kappa=1):
    """High-precision reference for psi built directly from the pair potential."""
    r = mpmath.sqrt(1 + mpmath.mpf(s) ** 2)
    return kappa * (1 - mpmath.exp(-(mpmath.mpf(mu) / kappa) * (r - 1)))


def test_params_validation():
    with pytest.raises(ValueError):
        MaterialParams(rbar=1.0)
    with pytest.raises(ValueError):
        MaterialParams(mu=0.0)
    with pytest.raises(ValueError):
        MaterialParams(kappa=-1.0)
    assert MaterialParams().R == pytest.approx(1.0, rel=1e-15)
    assert MaterialParams(rbar=2.0).R == pytest.approx(math.sqrt(3.0), rel=1e-15)


def test_scale_schedule():
    sp = ScaleParams.from_schedule(2.0 ** -16)
    assert sp.R_n == pytest.approx(4.0, rel=1e-15)
    sp.check(MaterialParams())
    with pytest.raises(ValueError):
        ScaleParams(0.01, 0.5).check(MaterialParams())
    # the regime quantity R_n^{3/2} eps^{1/4} decreases along the schedule
    vals = [ScaleParams.from_schedule(e).R_n ** 1.5 * e ** 0.25 for e in (1e-2, 1e-4, 1e-8)]
    assert vals[0] > vals[1] > vals[2]


def test_potential_axioms(params):
    assert potential_W(1.0, params) == 0.0
    assert potential_W(1e3 * params.kappa / params.mu + 1, params) > 0.99 * params.kappa
    h = 1e-8
    assert (potential_W(1 + h, params) - 0.0) / h == pytest.approx(params.mu, rel=1e-6)
    # second derivative at 1+ is -mu^2/kappa
    h = 1e-4
    second = (potential_W(1 + 2 * h, params) - 2 * potential_W(1 + h, params)) / h ** 2
    assert second == pytest.approx(-params.mu ** 2 / params.kappa, rel=1e-3)
    # beyond r ~ 35 the increments fall below double resolution near kappa
    r = np.linspace(1, 20, 2001)
    w = potential_W(r, params)
    assert np.all(np.diff(w) > 0) and np.all(w < params.kappa)
    assert np.all(potential_W(np.linspace(1, 1e4, 1001), params) <= params.kappa)
    with pytest.raises(ValueError):
        potential_W(0.999, params)


def test_psi_basic(params):
    assert psi(0.0, params) == 0.0
    assert psi(1e-3, params) / (params.mu * 1e-6 / 2) == pytest.approx(1.0, rel=1e-2)
    s = np.linspace(-20, 20, 401)
    assert np.allclose(psi(s, params), psi(-s, params), rtol=0, atol=0)
    assert np.all(np.diff(psi(s[s >= 0], params)) > 0)
    assert psi(1e4, params) == pytest.approx(params.kappa, rel=1e-12)


@pytest.mark.parametrize("s", [0.1, 0.7, 2.0, 13.0])
def test_psi_matches_potential(s, params):
    assert psi(s, params) == pytest.approx(potential_W(math.sqrt(1 + s * s), params), rel=1e-13)


@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 4.0])
@pytest.mark.parametrize("ds", [1e-13, -1e-9, 1e-4, 0.5])
def test_psi_increment_against_high_precision(r, ds, params):
    s = abs(r + ds)
    with mpmath.workdps(60):
        ref = float(mp_psi(s) - mp_psi(r))
    got = psi_increment(s, r, s - r, params)
    assert got == pytest.approx(ref, rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 30), st.floats(0, 30))
def test_psi_increment_matches_plain_difference(s, r):
    p = MaterialParams()
    assert psi_increment(s, r, s - r, p) == pytest.approx(psi(s, p) - psi(r, p), abs=1e-14)


@pytest.mark.parametrize("s", [0.1, 1.0, 5.0, 50.0])
def test_psi_prime_finite_difference(s):
    params = MaterialParams()
    with mpmath.workdps(60):
        ref = float(mpmath.diff(mp_psi, s))
    assert psi_prime(s, params) == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("mu,kappa", [(1.0, 1.0), (2.5, 0.4)])
def test_psi_prime_central_difference(mu, kappa):
    params = MaterialParams(mu=mu, kappa=kappa)
    for s in (0.1, 1.0, 3.0):
        h = 1e-5
        fd = (psi(s + h, params) - psi(s - h, params)) / (2 * h)
        assert psi_prime(s, params) == pytest.approx(fd, rel=1e-6)
    assert psi_prime(0.0, params) == 0.0
    h = 1e-4
    assert (psi_prime(h, params) - psi_prime(-h, params)) / (2 * h) == pytest.approx(mu, rel=1e-6)
    s = np.linspace(-100, 100, 10001)
    assert np.max(np.abs(psi_prime(s, params))) <= mu


def test_cell_density_zero_and_closed_form(params):
    assert cell_density([0.0, 0.0], 0.01, params) == 0.0
    z = np.array([0.3, -1.2])
    eps = 0.04
    direct = 2 / (SQRT3 * eps) * sum(psi(math.sqrt(eps) * abs(z @ v), params) for v in DIRECTIONS)
    assert cell_density(z, eps, params) == pytest.approx(direct, rel=1e-14)


def test_cell_density_bounded_by_quadratic(rng, params):
    # psi(s) <= mu s^2 / 2 gives cell density <= Phi <= (sqrt3/2) mu |z|^2 for every eps
    for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-5):
        z = rng.standard_normal((500, 2)) * rng.uniform(0, 1e3, (500, 1))
        c = cell_density(z, eps, params)
        assert np.all(c <= SQRT3 / 2 * params.mu * np.sum(z * z, axis=1) * (1 + 1e-12))


def test_cell_density_coercive_below_threshold(rng, params):
    # on |z| <= 2 R eps^{-1/2} the ratio to |z|^2 stays away from zero
    lows = []
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        dirs = rng.standard_normal((400, 2))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        r = rng.uniform(1e-3, 1, (400, 1)) * 2 * params.R / math.sqrt(eps)
        z = dirs * r
        lows.append(np.min(cell_density(z, eps, params) / np.sum(z * z, axis=1)))
    assert min(lows) > 0.05
    assert max(lows) / min(lows) < 2.0


def test_cell_density_converges_to_Phi(params):
    z = np.array([1.0, 2.0])
    gaps = [abs(cell_density(z, e, params) - elastic_density_Phi(z, params)) / (z @ z)
            for e in (1e-2, 1e-3, 1e-4)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_cell_density_grad_matches_finite_differences(rng, params):
    for eps in (0.1, 0.01, 0.001):
        bound = params.R / math.sqrt(eps) / 2
        for _ in range(20):
            z = rng.uniform(-1, 1, 2)
            z *= rng.uniform(0, bound) / np.linalg.norm(z)
            h = 1e-6 * max(1.0, np.linalg.norm(z))
            fd = np.array([(cell_density(z + h * e, eps, params) - cell_density(z - h * e, eps, params)) / (2 * h)
                           for e in np.eye(2)])
            g = cell_density_grad(z, eps, params)
            assert np.max(np.abs(g - fd)) <= 1e-5 * max(np.max(np.abs(fd)), 1e-8) + 1e-9


def test_Phi_examples(rng, params):
    assert elastic_density_Phi([0.0, 0.0], params) == 0.0
    assert elastic_density_Phi([1.0, 0.0], params) == pytest.approx(SQRT3 / 2, rel=1e-15)
    z = rng.standard_normal(2)
    assert elastic_density_Phi(3 * z, params) == pytest.approx(9 * elastic_density_Phi(z, params), rel=1e-14)
    assert elastic_density_Phi(z, params) == pytest.approx(SQRT3 / 2 * params.mu * (z @ z), rel=1e-14)


def test_surface_density_examples():
    p = MaterialParams(kappa=1.7)
    assert surface_density_phi([0.0, 1.0], p) == pytest.approx(2 * p.kappa, rel=1e-15)
    assert surface_density_phi([1.0, 0.0], p) == pytest.approx(4 * p.kappa / SQRT3, rel=1e-15)
    with pytest.raises(ValueError):
        surface_density_phi([1.0, 1.0], p)
    with pytest.raises(ValueError):
        phi_alpha([0.5, 0.5], 0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_phi_alpha_sum(theta):
    nu = np.array([math.cos(theta), math.sin(theta)])
    total = sum(phi_alpha(nu, a) for a in range(3))
    assert total == pytest.approx(2 * np.abs(DIRECTIONS @ nu).sum(), rel=1e-14, abs=1e-15)
    p = MaterialParams()
    assert surface_density_phi(nu, p) == pytest.approx(surface_density_phi(-nu, p), rel=1e-15)
