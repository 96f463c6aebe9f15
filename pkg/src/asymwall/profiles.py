"""Closed-form wall profiles and quadrature of the energy coefficients.

All formulas are stated for the sigma = +1 branch; sigma = -1 is realized by
flipping the sign of every half-frequency (sin(pi x3/2), cos(pi x3/2)) term,
which is the x3-reflection of the printed forms.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError
from .grid import build_grid

SQRT2 = np.sqrt(2.0)

E0_EXACT = 4.0 * np.pi
E1_EXACT = 148.0 * np.pi / 35.0
C1_EXACT = 304.0 * np.pi / 105.0


def check_sigma(sigma: int) -> int:
    if sigma not in (-1, 1):
        raise ValidationError(f"sigma must be +1 or -1, got {sigma}")
    return int(sigma)


def ell(x1):
    """Transition profile tanh(pi x1 / 2); odd, increasing, range (-1, 1)."""
    return np.tanh(0.5 * np.pi * np.asarray(x1, dtype=float))


def mu(x1):
    """Constraint multiplier (pi^2/2)(1 - ell^2); even, decays like e^{-pi|x1|}."""
    t = ell(x1)
    return 0.5 * np.pi**2 * (1.0 - t * t)


def m2star(x1, x3, sigma: int = 1):
    """Second-component profile ell + sigma*sqrt(2)*sin(pi x3/2)*sqrt(1-ell^2)."""
    s = check_sigma(sigma)
    t = ell(x1)
    return t + s * SQRT2 * np.sin(0.5 * np.pi * np.asarray(x3)) * np.sqrt(1.0 - t * t)


def m2star_grad(x1, x3, sigma: int = 1):
    """Closed-form (d1, d3) of m2star."""
    s = check_sigma(sigma)
    t = ell(x1)
    q = np.sqrt(1.0 - t * t)
    sn = np.sin(0.5 * np.pi * np.asarray(x3))
    cs = np.cos(0.5 * np.pi * np.asarray(x3))
    g1 = 0.5 * np.pi * (1.0 - t * t) - s * (np.pi / SQRT2) * t * q * sn
    g3 = s * (np.pi / SQRT2) * q * cs
    return g1, g3


def mhat(x1, x3, sigma: int = 1):
    """Second-order corrector (mhat1, mhat3) and closed-form gradients.

    mhat1 = (1 - m2star^2)/2 and d3 mhat3 = -d1 mhat1 with mhat3 = 0 on
    x3 = +-1. Returns (m1h, m3h, grad_m1h, grad_m3h) where each gradient is
    a pair (d1, d3).
    """
    s = check_sigma(sigma)
    t = ell(x1)
    t2 = t * t
    q = np.sqrt(1.0 - t2)
    x3 = np.asarray(x3)
    sn = np.sin(0.5 * np.pi * x3)
    cs = np.cos(0.5 * np.pi * x3)
    snp = np.sin(np.pi * x3)
    csp = np.cos(np.pi * x3)

    m1h = 0.5 * (1.0 - t2) * csp - s * SQRT2 * t * q * sn
    m3h = 0.5 * t * (1.0 - t2) * snp - s * SQRT2 * q * (1.0 - 2.0 * t2) * cs

    d1_m1h = (
        -0.5 * np.pi * t * (1.0 - t2) * csp
        - s * (np.pi / SQRT2) * q * (1.0 - 2.0 * t2) * sn
    )
    d3_m1h = (
        -0.5 * np.pi * (1.0 - t2) * snp
        - s * (np.pi / SQRT2) * t * q * cs
    )
    d1_m3h = (
        0.25 * np.pi * (1.0 - t2) * (1.0 - 3.0 * t2) * snp
        + s * (np.pi / SQRT2) * t * q * (5.0 - 6.0 * t2) * cs
    )
    d3_m3h = -d1_m1h
    return m1h, m3h, (d1_m1h, d3_m1h), (d1_m3h, d3_m3h)


def mhat1_antiderivative(x1, x3, sigma: int = 1):
    """int_{-1}^{x3} mhat1(x1, s) ds in closed form (used by the stream ansatz)."""
    s = check_sigma(sigma)
    t = ell(x1)
    q = np.sqrt(1.0 - t * t)
    x3 = np.asarray(x3)
    return (1.0 / (2.0 * np.pi)) * (1.0 - t * t) * np.sin(np.pi * x3) + s * (
        2.0 * SQRT2 / np.pi
    ) * t * q * np.cos(0.5 * np.pi * x3)


@dataclass(frozen=True)
class Coefficients:
    """Quadrature values of the sin^2/sin^4 and theta^2/theta^4 coefficients."""

    e0: float
    e1: float
    c0: float
    c1: float


def coefficients_quadrature(L: float = 12.0, n1: int = 2049, n3: int = 257) -> Coefficients:
    """Trapezoid quadrature of e0 = int |grad m2star|^2 and
    e1 = int (|grad mhat'|^2 - mu |mhat'|^2) over the truncated strip.

    Converges to 4*pi and 148*pi/35; the x3-rule is exact for the trig
    integrands, so the error is dominated by the (spectrally small)
    x1-truncation.
    """
    if L < 8:
        raise ValidationError(f"L must be >= 8 to keep truncation below tolerance, got {L}")
    if n1 < 64 or n3 < 64:
        raise ValidationError(f"need n1, n3 >= 64, got {n1}x{n3}")
    g = build_grid(L, n1, n3)
    X1 = g.x1[:, None]
    X3 = g.x3[None, :]

    g1, g3 = m2star_grad(X1, X3)
    e0 = float(g.w1 @ ((g1 * g1 + g3 * g3) @ g.w3))

    m1h, m3h, (d1_m1h, d3_m1h), (d1_m3h, d3_m3h) = mhat(X1, X3)
    dens = (
        d1_m1h**2 + d3_m1h**2 + d1_m3h**2 + d3_m3h**2
        - mu(X1) * (m1h**2 + m3h**2)
    )
    e1 = float(g.w1 @ (dens @ g.w3))

    return Coefficients(e0=e0, e1=e1, c0=e0, c1=-e0 / 3.0 + e1)


def e1_polynomial() -> float:
    """Exact value of (pi/8) * int_{-1}^{1} (3 + 207 s^2 - 519 s^4 + 341 s^6) ds.

    Evaluated in rational arithmetic: the integral is 1184/35, so the result
    is 148/35 * pi.
    """
    coeffs = {0: Fraction(3), 2: Fraction(207), 4: Fraction(-519), 6: Fraction(341)}
    integral = sum(2 * c / (k + 1) for k, c in coeffs.items())
    assert integral == Fraction(1184, 35)
    return float(integral / 8) * np.pi
