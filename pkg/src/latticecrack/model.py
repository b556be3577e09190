"""Material law: pair potential, reduced potential, cell and limit densities.

The pair potential is the exponential saturation law

    W(r) = kappa * (1 - exp(-(mu / kappa) * (r - 1))),   r >= 1,

and the reduced potential is ``psi(s) = W(sqrt(1 + s^2))`` as a function of the
rescaled stretch ``s``.  All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DIRECTIONS, SQRT3, other_directions


@dataclass(frozen=True)
class MaterialParams:
    """Stiffness ``mu``, saturation energy ``kappa`` and distance threshold ``rbar``."""

    mu: float = 1.0
    kappa: float = 1.0
    rbar: float = math.sqrt(2.0)

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not self.rbar > 1:
            raise ValueError(f"rbar must be > 1, got {self.rbar}")

    @property
    def R(self) -> float:
        """Rescaled-stretch threshold ``sqrt(rbar^2 - 1)``."""
        return math.sqrt(self.rbar ** 2 - 1.0)


@dataclass(frozen=True)
class ScaleParams:
    """Lattice spacing and the threshold ``R_n`` of the large-crack class."""

    eps: float
    R_n: float

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError(f"eps must be > 0, got {self.eps}")
        if not self.R_n > 0:
            raise ValueError(f"R_n must be > 0, got {self.R_n}")

    @classmethod
    def from_schedule(cls, eps: float, exponent: float = 0.125) -> "ScaleParams":
        """``R_n = eps^(-exponent)``; the default satisfies ``R_n^{3/2} eps^{1/4} -> 0``."""
        return cls(eps, eps ** (-exponent))

    def check(self, params: MaterialParams) -> None:
        if not self.R_n > params.R:
            raise ValueError(f"R_n must exceed R: R_n={self.R_n}, R={params.R}")


def potential_W(r, params: MaterialParams):
    """Pair energy as a function of the deformed distance ``r >= 1``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1.0):
        raise ValueError("potential_W is only defined for r >= 1")
    out = -params.kappa * np.expm1(-(params.mu / params.kappa) * (r - 1.0))
    return out if out.ndim else float(out)


def _excess(s: np.ndarray) -> np.ndarray:
    # sqrt(1 + s^2) - 1 without cancellation
    return s * s / (np.sqrt(1.0 + s * s) + 1.0)


def psi(s, params: MaterialParams):
    """Reduced potential ``W(sqrt(1 + s^2))``; even in ``s``."""
    s = np.asarray(s, dtype=float)
    out = -params.kappa * np.expm1(-(params.mu / params.kappa) * _excess(s))
    return out if out.ndim else float(out)


def psi_increment(s, r, ds, params: MaterialParams):
    """``psi(s) - psi(r)`` for ``s, r >= 0`` given ``ds = s - r`` computed separately.

    Evaluated without cancellation, so the result keeps full relative
    precision when ``s`` and ``r`` are close.
    """
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    c = params.mu / params.kappa
    dx = ds * (s + r) / (np.sqrt(1.0 + s * s) + np.sqrt(1.0 + r * r))
    out = -params.kappa * np.exp(-c * _excess(r)) * np.expm1(-c * dx)
    return out if out.ndim else float(out)


def psi_prime(s, params: MaterialParams):
    """Derivative of :func:`psi`; odd in ``s`` and bounded by ``mu``."""
    s = np.asarray(s, dtype=float)
    out = params.mu * np.exp(-(params.mu / params.kappa) * _excess(s)) * s / np.sqrt(1.0 + s * s)
    return out if out.ndim else float(out)


def cell_density(z, eps: float, params: MaterialParams):
    """Energy per unit area of one triangle under the affine gradient ``z``.

    ``z`` has shape (..., 2); returns shape (...).
    """
    z = np.asarray(z, dtype=float)
    proj = np.abs(z @ DIRECTIONS.T) * math.sqrt(eps)
    out = 2.0 / (SQRT3 * eps) * psi(proj, params).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def cell_density_grad(z, eps: float, params: MaterialParams) -> np.ndarray:
    """Gradient of :func:`cell_density` with respect to ``z``; shape (..., 2)."""
    z = np.asarray(z, dtype=float)
    proj = z @ DIRECTIONS.T
    dpsi = psi_prime(math.sqrt(eps) * proj, params)
    return 2.0 / (SQRT3 * math.sqrt(eps)) * (dpsi @ DIRECTIONS)


def elastic_density_Phi(z, params: MaterialParams):
    """Quadratic limit density ``(mu / sqrt 3) * sum_v |z . v|^2``."""
    z = np.asarray(z, dtype=float)
    out = params.mu / SQRT3 * ((z @ DIRECTIONS.T) ** 2).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def _check_unit(nu: np.ndarray) -> None:
    norms = np.linalg.norm(nu, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-12):
        raise ValueError("normal vectors must have unit length")


def surface_density_phi(nu, params: MaterialParams):
    """Anisotropic crack energy per unit length, ``(2 kappa / sqrt 3) sum_v |nu . v|``."""
    nu = np.asarray(nu, dtype=float)
    _check_unit(nu)
    out = 2.0 * params.kappa / SQRT3 * np.abs(nu @ DIRECTIONS.T).sum(axis=-1)
    return out if np.ndim(out) else float(out)


def phi_alpha(nu, alpha: int):
    """Per-direction weight ``|v_beta . nu| + |v_gamma . nu|`` with beta, gamma != alpha."""
    nu = np.asarray(nu, dtype=float)
    _check_unit(nu)
    b, c = other_directions(alpha)
    out = np.abs(nu @ DIRECTIONS[b]) + np.abs(nu @ DIRECTIONS[c])
    return out if np.ndim(out) else float(out)
