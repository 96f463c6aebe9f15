import numpy as np
import pytest
from fractions import Fraction

from asymwall import profiles as P
from asymwall.errors import ValidationError
from asymwall.grid import build_grid


# high-precision oracle values (mpmath, 30 digits)
ELL_1 = 0.917152335667274346373092921443
MU_1 = 0.78380249554099377400418141941
M2STAR_1_M1 = 0.353536166310746171135758896951


def test_ell_basic():
    assert P.ell(0.0) == 0.0
    assert P.ell(50.0) == pytest.approx(1.0, abs=1e-15)
    assert P.ell(-50.0) == pytest.approx(-1.0, abs=1e-15)
    assert P.ell(1.0) == pytest.approx(ELL_1, abs=1e-14)
    x = np.linspace(-3, 3, 41)
    assert np.allclose(P.ell(-x), -P.ell(x))
    assert np.all(np.diff(P.ell(x)) > 0)


def test_ell_ode_residual():
    # d/dx1 ell = (pi/2)(1 - ell^2), centered difference at step 1e-4;
    # residual relative to the derivative scale (FD truncation floor is
    # (h^2/6) ell''' ~ 1.3e-8 absolute at the origin)
    x = np.linspace(-6, 6, 201)
    h = 1e-4
    dnum = (P.ell(x + h) - P.ell(x - h)) / (2 * h)
    resid = np.max(np.abs(dnum - 0.5 * np.pi * (1 - P.ell(x) ** 2)))
    assert resid / (0.5 * np.pi) < 1e-8


def test_mu_values():
    assert P.mu(0.0) == pytest.approx(np.pi**2 / 2, rel=1e-15)
    assert P.mu(80.0) == pytest.approx(0.0, abs=1e-15)
    assert P.mu(1.0) == pytest.approx(MU_1, abs=1e-14)
    x = np.linspace(-5, 5, 101)
    assert np.allclose(P.mu(x), P.mu(-x))
    assert np.all(P.mu(x) > 0)
    # exponential tail ~ 2 pi^2 e^{-pi |x1|}
    assert P.mu(10.0) == pytest.approx(2 * np.pi**2 * np.exp(-np.pi * 10), rel=1e-12)


def test_m2star_values():
    assert P.m2star(0.0, 0.0, 1) == 0.0
    assert P.m2star(0.0, 1.0, 1) == pytest.approx(np.sqrt(2), rel=1e-15)
    assert P.m2star(1.0, -1.0, 1) == pytest.approx(M2STAR_1_M1, abs=1e-14)


def test_m2star_sigma_reflection():
    x1 = np.linspace(-4, 4, 31)[:, None]
    x3 = np.linspace(-1, 1, 21)[None, :]
    assert np.allclose(P.m2star(x1, x3, -1), P.m2star(x1, -x3, 1), atol=1e-15)


def test_m2star_square_average_constraint():
    # column average of (m2star)^2 equals 1 for every x1
    g = build_grid(10.0, 5, 1001)
    for x1 in [-7.3, -1.0, 0.0, 0.4, 2.2, 9.9]:
        vals = P.m2star(x1, g.x3, 1) ** 2
        avg = (vals @ g.w3) / 2.0
        assert abs(avg - 1.0) < 1e-10


def test_m2star_grad_matches_fd():
    rng = np.random.default_rng(0)
    pts = rng.uniform([-5, -0.95], [5, 0.95], size=(40, 2))
    h = 1e-5
    for sigma in (1, -1):
        g1, g3 = P.m2star_grad(pts[:, 0], pts[:, 1], sigma)
        fd1 = (P.m2star(pts[:, 0] + h, pts[:, 1], sigma) - P.m2star(pts[:, 0] - h, pts[:, 1], sigma)) / (2 * h)
        fd3 = (P.m2star(pts[:, 0], pts[:, 1] + h, sigma) - P.m2star(pts[:, 0], pts[:, 1] - h, sigma)) / (2 * h)
        assert np.max(np.abs(g1 - fd1)) < 1e-8
        assert np.max(np.abs(g3 - fd3)) < 1e-8


def test_mhat_point_values():
    m1h, m3h, _, _ = P.mhat(0.0, 0.0, 1)
    assert m1h == pytest.approx(0.5, rel=1e-15)
    assert m3h == pytest.approx(-np.sqrt(2), rel=1e-15)
    # boundary condition mhat3(x1, +-1) = 0
    x1 = np.linspace(-6, 6, 25)
    for sigma in (1, -1):
        for x3 in (-1.0, 1.0):
            _, m3h, _, _ = P.mhat(x1, x3, sigma)
            assert np.max(np.abs(m3h)) < 1e-14


def test_mhat1_is_half_one_minus_m2star_squared():
    x1 = np.linspace(-5, 5, 41)[:, None]
    x3 = np.linspace(-1, 1, 31)[None, :]
    for sigma in (1, -1):
        m1h, _, _, _ = P.mhat(x1, x3, sigma)
        assert np.allclose(m1h, 0.5 * (1 - P.m2star(x1, x3, sigma) ** 2), atol=1e-14)


def test_mhat_gradients_match_fd():
    # centered differences at h = 1e-3; the truncation envelope is
    # (h^2/6) max|f'''| ~ 5e-6 for the mhat3 terms, and halving h must
    # shrink the error by ~4 (second order)
    rng = np.random.default_rng(1)
    pts = rng.uniform([-4, -0.9], [4, 0.9], size=(30, 2))

    def max_err(h, sigma):
        _, _, (d1m1, d3m1), (d1m3, d3m3) = P.mhat(pts[:, 0], pts[:, 1], sigma)
        out = 0.0
        for comp, d1v, d3v in ((0, d1m1, d3m1), (1, d1m3, d3m3)):
            fun = lambda a, b: P.mhat(a, b, sigma)[comp]
            fd1 = (fun(pts[:, 0] + h, pts[:, 1]) - fun(pts[:, 0] - h, pts[:, 1])) / (2 * h)
            fd3 = (fun(pts[:, 0], pts[:, 1] + h) - fun(pts[:, 0], pts[:, 1] - h)) / (2 * h)
            out = max(out, np.max(np.abs(d1v - fd1)), np.max(np.abs(d3v - fd3)))
        return out

    for sigma in (1, -1):
        e_h = max_err(1e-3, sigma)
        e_h2 = max_err(5e-4, sigma)
        assert e_h < 1.2e-5  # (h^2/6) max|f'''| with max|f'''| ~ 60
        assert e_h2 < e_h / 3.5
        assert max_err(1e-4, sigma) < 1e-6


def test_mhat_divergence_free_closed_form():
    x1 = np.linspace(-8, 8, 81)[:, None]
    x3 = np.linspace(-1, 1, 41)[None, :]
    for sigma in (1, -1):
        _, _, (d1m1, _), (_, d3m3) = P.mhat(x1, x3, sigma)
        assert np.max(np.abs(d1m1 + d3m3)) < 1e-10


def test_mu_is_column_average_of_grad_m2star_squared():
    g = build_grid(10.0, 5, 801)
    for x1 in [-3.0, 0.0, 0.7, 5.5]:
        g1, g3 = P.m2star_grad(x1, g.x3, 1)
        avg = ((g1**2 + g3**2) @ g.w3) / 2.0
        assert abs(avg - P.mu(x1)) < 1e-8


def test_mhat1_antiderivative():
    # d/dx3 of the antiderivative is mhat1; value at x3=-1 is 0
    x1 = np.linspace(-4, 4, 17)
    h = 1e-5
    for sigma in (1, -1):
        assert np.max(np.abs(P.mhat1_antiderivative(x1, -1.0, sigma))) < 1e-14
        for x3 in (-0.6, 0.0, 0.8):
            dnum = (
                P.mhat1_antiderivative(x1, x3 + h, sigma)
                - P.mhat1_antiderivative(x1, x3 - h, sigma)
            ) / (2 * h)
            m1h = P.mhat(x1, x3, sigma)[0]
            assert np.max(np.abs(dnum - m1h)) < 1e-9


def test_coefficients_quadrature_hits_paper_values():
    c = P.coefficients_quadrature(12.0, 2049, 257)
    assert abs(c.e0 - 4 * np.pi) / (4 * np.pi) < 1e-6
    assert abs(c.e1 - P.E1_EXACT) / P.E1_EXACT < 1e-4
    assert c.c0 == c.e0
    assert c.c1 == pytest.approx(P.C1_EXACT, rel=1e-10)


def test_coefficients_quadrature_rejects_small_L():
    with pytest.raises(ValidationError):
        P.coefficients_quadrature(6.0, 256, 65)


def test_e1_polynomial_exact():
    # antiderivative coefficient sum 6 + 138 - 1038/5 + 682/7 = 1184/35
    total = Fraction(6) + Fraction(138) - Fraction(1038, 5) + Fraction(682, 7)
    assert total == Fraction(1184, 35)
    assert total / 8 == Fraction(148, 35)
    assert P.e1_polynomial() == pytest.approx(148 * np.pi / 35, rel=1e-15)
    c = P.coefficients_quadrature(12.0, 512, 129)
    assert abs(P.e1_polynomial() - c.e1) < 1e-4


def test_euler_lagrange_weak_residual():
    # int grad(m2star).grad(f) == int mu m2star f for compactly supported f
    # with zero column average at x1 = 0
    g = build_grid(12.0, 1537, 257)
    X1, X3 = g.meshgrid()
    # smooth, compactly supported in x1, zero x3-average at every column
    f = np.exp(-0.5 * X1**2) * np.cos(np.pi * X3) * (1 + 0.3 * np.sin(np.pi * X1))
    g1, g3 = P.m2star_grad(X1, X3, 1)
    h = 1e-5
    f1 = (np.exp(-0.5 * (X1 + h) ** 2) * np.cos(np.pi * X3) * (1 + 0.3 * np.sin(np.pi * (X1 + h))) -
          np.exp(-0.5 * (X1 - h) ** 2) * np.cos(np.pi * X3) * (1 + 0.3 * np.sin(np.pi * (X1 - h)))) / (2 * h)
    f3 = -np.pi * np.exp(-0.5 * X1**2) * np.sin(np.pi * X3) * (1 + 0.3 * np.sin(np.pi * X1))
    W = g.weights
    lhs = float(np.sum(W * (g1 * f1 + g3 * f3)))
    rhs = float(np.sum(W * P.mu(X1) * P.m2star(X1, X3, 1) * f))
    assert abs(lhs - rhs) < 1e-6
