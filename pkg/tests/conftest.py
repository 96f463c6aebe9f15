import numpy as np
import pytest

from asymwall import profiles as P


def make_admissible_config(grid, theta, sigma=1, amp=0.4):
    """Exactly unit-length test configuration near the analytic wall.

    m2 = sin(t)*(m2star + sin(t)*p) with p per-column orthogonal to m2star
    (cos(pi x3) mode, exact under the trapezoid rule) plus a per-column
    multiple of m2star chosen so that the column average of
    m1 = sqrt(1 - m2^2 - m3^2) equals cos(t) exactly; m3 vanishes on the
    rows. These are the discrete analogues of the flux-closure consequences
    the energy-splitting identity relies on.
    """
    X1, X3 = grid.meshgrid()
    m2s = P.m2star(X1, X3, sigma)
    s = np.sin(theta)
    gg = amp * np.exp(-0.4 * X1**2) * (1 + 0.2 * np.sin(1.3 * X1))
    ptil = gg * np.cos(np.pi * X3)
    q = amp * np.exp(-0.5 * X1**2) * np.sin(np.pi * X3)
    m3 = s**2 * q
    w3 = grid.w3
    target = 2.0 * np.cos(theta)
    beta = np.zeros(grid.n1)
    for i in range(grid.n1):
        def resid(b):
            m2c = s * (m2s[i] + s * (ptil[i] + b * m2s[i]))
            return float(np.sqrt(1.0 - m2c**2 - m3[i] ** 2) @ w3) - target

        b0, b1 = 0.0, -1e-3
        f0, f1 = resid(b0), resid(b1)
        for _ in range(80):
            if f1 == f0:
                break
            b2 = b1 - f1 * (b1 - b0) / (f1 - f0)
            b0, f0, b1 = b1, f1, b2
            f1 = resid(b1)
            if abs(f1) < 1e-15:
                break
        beta[i] = b1
    m2 = s * (m2s + s * (ptil + beta[:, None] * m2s))
    m1 = np.sqrt(1.0 - m2**2 - m3**2)
    return np.stack([m1, m2, m3])


@pytest.fixture
def admissible_config():
    return make_admissible_config
