"""Discrete Dirichlet energy, admissibility diagnostics, and the
energy-splitting identity.

A configuration with end states (cos t, +-sin t, 0) splits as

    int |grad m|^2 = sin^2 t * int |grad m2*|^2 + sin^4 t * B(mhat_t, mhat_t)

where mhat_t = (m - (cos t, sin t m2*, 0)) / sin^2 t and
B(f, f) = int |grad f|^2 - mu(x1) |f|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import profiles
from .errors import NoSignChange, ValidationError
from .grid import Grid, average_x3, divergence, gradient, integrate


def _components(m: np.ndarray):
    return m[None, :, :] if m.ndim == 2 else m


def dirichlet_energy(grid: Grid, m: np.ndarray) -> float:
    """Trapezoidal quadrature of int |grad m|^2 over the strip."""
    W = grid.weights
    total = 0.0
    for comp in _components(m):
        g = gradient(grid, comp)
        total += float(np.sum(W * (g[0] ** 2 + g[1] ** 2)))
    return total


def end_states(theta: float):
    """Prescribed states (cos t, -+ sin t, 0) at x1 = -+L."""
    minus = np.array([np.cos(theta), -np.sin(theta), 0.0])
    plus = np.array([np.cos(theta), np.sin(theta), 0.0])
    return minus, plus


@dataclass
class AdmissibilityReport:
    """Residuals of the flux-closure / boundary-condition contract."""

    max_unit_length_violation: float
    div_residual_L2: float
    boundary_m3_max: float
    avg_m1_deviation: float
    endpoint_misfit: float
    wall_center: float | None = None

    def as_dict(self):
        return {
            "max_unit_length_violation": self.max_unit_length_violation,
            "div_residual_L2": self.div_residual_L2,
            "boundary_m3_max": self.boundary_m3_max,
            "avg_m1_deviation": self.avg_m1_deviation,
            "endpoint_misfit": self.endpoint_misfit,
            "wall_center": self.wall_center,
        }


def wall_center_of(grid: Grid, m2bar: np.ndarray) -> float:
    """x1 of the first sign change of the column-averaged m2, by linear
    interpolation between the flanking nonzero values; raises NoSignChange
    when the average never attains both signs."""
    s = np.sign(m2bar)
    nz = np.nonzero(s)[0]
    flips = np.where(s[nz][:-1] * s[nz][1:] < 0)[0] if nz.size else np.array([], int)
    if flips.size == 0:
        raise NoSignChange("column-averaged m2 does not cross zero")
    i, j = int(nz[flips[0]]), int(nz[flips[0] + 1])
    a, b = m2bar[i], m2bar[j]
    return float(grid.x1[i] + (grid.x1[j] - grid.x1[i]) * a / (a - b))


def admissibility(grid: Grid, m: np.ndarray, theta: float) -> AdmissibilityReport:
    """Residuals against the admissible set at prescribed wall angle theta.

    The "infinity" conditions are tested at x1 = -+L only; raises
    NoSignChange (carrying the partial report) when the averaged m2 does
    not cross zero.
    """
    norms = np.sqrt(np.sum(m * m, axis=0))
    unit_viol = float(np.max(np.abs(norms - 1.0)))

    div = divergence(grid, m[[0, 2]])
    div_l2 = float(np.sqrt(np.sum(grid.weights * div * div)))

    m3_bnd = float(max(np.max(np.abs(m[2, :, 0])), np.max(np.abs(m[2, :, -1]))))

    m1bar = average_x3(grid, m[0])
    avg_dev = float(np.max(np.abs(m1bar - np.cos(theta))))

    minus, plus = end_states(theta)
    mis = max(
        float(np.max(np.abs(m[:, 0, :] - minus[:, None]))),
        float(np.max(np.abs(m[:, -1, :] - plus[:, None]))),
    )

    report = AdmissibilityReport(
        max_unit_length_violation=unit_viol,
        div_residual_L2=div_l2,
        boundary_m3_max=m3_bnd,
        avg_m1_deviation=avg_dev,
        endpoint_misfit=mis,
    )
    try:
        report.wall_center = wall_center_of(grid, average_x3(grid, m[1]))
    except NoSignChange as err:
        raise NoSignChange(str(err), report=report) from None
    return report


def esym(alpha: float, theta: float) -> float:
    """Symmetric-tail energy 2*pi*(cos(theta) - cos(alpha))^2."""
    if not (0.0 <= theta <= alpha <= np.pi / 2):
        raise ValidationError(f"need 0 <= theta <= alpha <= pi/2, got ({alpha}, {theta})")
    return float(2.0 * np.pi * (np.cos(theta) - np.cos(alpha)) ** 2)


@dataclass(frozen=True)
class EnergySplit:
    """total = leading + hessian_part up to quadrature tolerance."""

    total: float
    leading: float
    hessian_part: float

    @property
    def residual(self):
        return self.total - self.leading - self.hessian_part


def hessian_quadratic_form(grid: Grid, f: np.ndarray) -> float:
    """B(f, f) = int |grad f|^2 - mu(x1) |f|^2, summed over components."""
    muw = profiles.mu(grid.x1)[:, None]
    total = 0.0
    for comp in _components(f):
        g = gradient(grid, comp)
        total += float(
            np.sum(grid.weights * (g[0] ** 2 + g[1] ** 2 - muw * comp * comp))
        )
    return total


def energy_split(grid: Grid, m: np.ndarray, theta: float, sigma: int = 1) -> EnergySplit:
    """Split the Dirichlet energy into leading sin^2 and Hessian sin^4 parts."""
    X1, X3 = grid.meshgrid()
    m2s = profiles.m2star(X1, X3, sigma)
    s = np.sin(theta)
    base = np.stack([np.full(grid.shape, np.cos(theta)), s * m2s, np.zeros(grid.shape)])
    mhat = (m - base) / s**2
    total = dirichlet_energy(grid, m)
    leading = s**2 * dirichlet_energy(grid, m2s)
    hess = s**4 * hessian_quadratic_form(grid, mhat)
    return EnergySplit(total=total, leading=leading, hessian_part=hess)
