import numpy as np
import pytest

from asymwall import minimizer as M
from asymwall import profiles as P
from asymwall import topology as T
from asymwall.energy import dirichlet_energy
from asymwall.errors import NotConverged, SolverFailure, ValidationError
from asymwall.grid import build_grid, divergence, grad_perp, gradient


@pytest.fixture(scope="module")
def small_grid():
    return build_grid(12.0, 513, 65)


def test_options_validation():
    with pytest.raises(ValidationError):
        M.MinimizeOptions(kappa_schedule=(100.0, 100.0))
    with pytest.raises(ValidationError):
        M.MinimizeOptions(kappa_schedule=(-1.0,))
    M.MinimizeOptions(kappa_schedule=(10.0, 100.0))


def test_init_ansatz_small_theta_limit(small_grid):
    m = M.init_ansatz(1e-4, 1, small_grid)
    assert np.max(np.abs(m[0] - 1.0)) < 1e-4
    assert np.max(np.abs(m[2])) < 2e-8  # sin^2(theta) * sqrt(2)
    with pytest.raises(ValidationError):
        M.init_ansatz(0.0, 1, small_grid)


def test_init_ansatz_energy_matches_expansion():
    g = build_grid(12.0, 1537, 193)
    theta = 0.2
    m = M.init_ansatz(theta, 1, g)
    s = np.sin(theta)
    target = 4 * np.pi * s**2 + P.E1_EXACT * s**4
    assert dirichlet_energy(g, m) == pytest.approx(target, rel=0.03)


def test_init_ansatz_is_topologically_trivial(small_grid):
    m = M.init_ansatz(0.2, 1, small_grid)
    w_area, w_bnd = T.winding_number(small_grid, m)
    assert abs(w_area) < 1e-6 and abs(w_bnd) < 1e-6


def test_init_bloch_topology(small_grid):
    g = small_grid
    m = M.init_bloch(0.3, g)
    assert np.max(np.abs(np.sqrt(np.sum(m * m, axis=0)) - 1.0)) < 1e-14
    assert np.max(np.abs(m[2, :, 0])) == 0.0
    assert np.max(np.abs(m[2, :, -1])) == 0.0
    w_area, w_bnd = T.winding_number(g, m)
    assert abs(w_bnd - round(w_bnd)) < 1e-6
    assert abs(abs(w_bnd) - 1.0) < 1e-6
    assert dirichlet_energy(g, m) >= 2 * np.pi * abs(w_bnd) - 0.1


def test_helmholtz_unchanged_on_divergence_free(small_grid):
    g = small_grid
    X1, X3 = g.meshgrid()
    psi = np.exp(-0.3 * (X1**2 + X3**2))
    v = grad_perp(g, psi)
    m = np.stack([v[0] + 1.0, np.zeros(g.shape), v[1]])
    out = M.helmholtz_project(g, m)
    assert np.array_equal(out, m)


def test_helmholtz_removes_compatible_gradient(small_grid):
    # compatible BC: potential compactly supported inside the strip, so the
    # gradient has m3 = 0 on the rows and lies in the correction range
    g = small_grid
    X1, X3 = g.meshgrid()
    u = np.clip(np.abs(X3) / 0.7, 0.0, 1.0)
    bump = (1 - u) ** 3 * (1 + 3 * u + 6 * u**2)
    phi = np.exp(-0.4 * X1**2) * bump
    gp = gradient(g, phi)
    m = np.stack([0.9 + gp[0], np.zeros(g.shape), gp[1]])
    out = M.helmholtz_project(g, m)
    assert np.max(np.abs(divergence(g, out[[0, 2]]))) < 1e-10
    assert np.max(np.abs(out[0] - 0.9)) < 1e-9
    assert np.max(np.abs(out[2])) < 1e-9


def test_helmholtz_drops_divergence_six_orders(small_grid):
    g = small_grid
    rng = np.random.default_rng(3)
    m = M.init_ansatz(0.2, 1, g)
    pert = 1e-3 * rng.standard_normal(m.shape)
    pert[:, 0, :] = 0
    pert[:, -1, :] = 0
    pert[2, :, 0] = 0
    pert[2, :, -1] = 0
    m = m + pert
    d0 = np.sqrt(np.sum(g.weights * divergence(g, m[[0, 2]]) ** 2))
    out = M.helmholtz_project(g, m)
    d1 = np.sqrt(np.sum(g.weights * divergence(g, out[[0, 2]]) ** 2))
    assert d0 / d1 > 1e6


def test_helmholtz_rejects_inconsistent_boundary(small_grid):
    g = small_grid
    rng = np.random.default_rng(4)
    m = np.stack([np.ones(g.shape), np.zeros(g.shape), rng.standard_normal(g.shape)])
    with pytest.raises(SolverFailure):
        M.helmholtz_project(g, m)


def test_minimize_theta_zero_is_noop(small_grid):
    g = small_grid
    m0 = np.stack([np.ones(g.shape), np.zeros(g.shape), np.zeros(g.shape)])
    m, rep = M.minimize(g, m0, 0.0)
    assert rep.energy < 1e-20
    assert rep.iterations == 0


def test_minimize_not_converged_carries_iterate(small_grid):
    m0 = M.init_ansatz(0.1, 1, small_grid)
    opts = M.MinimizeOptions(max_iters=1, grad_tol=1e-15, kappa_schedule=(1e2,))
    with pytest.raises(NotConverged) as exc:
        M.minimize(small_grid, m0, 0.1, opts)
    assert exc.value.last_iterate is not None
    assert exc.value.report is not None


@pytest.fixture(scope="module")
def minimized_01(small_grid):
    m0 = M.init_ansatz(0.1, 1, small_grid)
    opts = M.MinimizeOptions(max_iters=80, grad_tol=1e-6)
    return M.minimize(small_grid, m0, 0.1, opts, raise_on_notconverged=False)


def test_minimize_leading_order(minimized_01):
    m, rep = minimized_01
    s = np.sin(0.1)
    ratio = rep.energy / s**2
    assert 4 * np.pi * 0.97 <= ratio <= 4 * np.pi * 1.03


def test_minimize_second_order(minimized_01):
    m, rep = minimized_01
    s = np.sin(0.1)
    e1_est = (rep.energy - 4 * np.pi * s**2) / s**4
    assert 0.8 * P.E1_EXACT <= e1_est <= 1.2 * P.E1_EXACT


def test_minimize_descends_from_seed(small_grid, minimized_01):
    m, rep = minimized_01
    seed = dirichlet_energy(small_grid, M.init_ansatz(0.1, 1, small_grid))
    assert rep.energy <= seed + 1e-12
    # energies across kappa stages nonincreasing up to projection correction
    ks = rep.kappa_energies
    assert all(b <= a + 1e-6 for a, b in zip(ks, ks[1:]))


def test_minimize_residuals_and_topology(small_grid, minimized_01):
    m, rep = minimized_01
    res = rep.residuals
    assert res.max_unit_length_violation < 1e-12
    assert res.boundary_m3_max < 1e-12
    assert res.avg_m1_deviation < 1e-10
    assert res.div_residual_L2 < 1e-3
    assert abs(res.wall_center) < 0.05
    w_area, w_bnd = T.winding_number(small_grid, m)
    assert abs(w_area) < 0.1 and abs(w_bnd) < 0.1
    assert abs(T.degree(small_grid, m)) < 0.1


def test_minimize_sigma_symmetry(small_grid):
    opts = M.MinimizeOptions(max_iters=40, grad_tol=1e-6)
    out = {}
    for sigma in (1, -1):
        m0 = M.init_ansatz(0.15, sigma, small_grid)
        m, rep = M.minimize(small_grid, m0, 0.15, opts, sigma=sigma,
                            raise_on_notconverged=False)
        out[sigma] = rep.energy
    assert out[1] == pytest.approx(out[-1], rel=1e-6)
