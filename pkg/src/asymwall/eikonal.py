"""Upper-bound construction: characteristics of the perturbed eikonal
equation, three stream-function patches blended across the strip, and
recovery of an admissible magnetization.

The Hamiltonian is H(p, x) = |p|^2 - (1 - sin^2(t) m2star(x)^2); its
characteristics obey xdot = 2p, pdot = -sin^2(t) grad(m2star^2) and carry
psi via psidot = 2|p|^2. Top and bottom fans are seeded on the rows with
p0 = -sqrt(1 - sin^2(t) m2star^2) e3; the middle fan is seeded on the zero
curve of m2star with data interpolating the two row solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import profiles
from .errors import (
    BlendViolation,
    CoverageGap,
    EscapedDomain,
    NegativeRadicand,
    RootBracketFailure,
    StepFailure,
    ValidationError,
)
from .grid import Grid, grad_perp

SQRT2 = np.sqrt(2.0)


def smoothstep(t):
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 at the junctions."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def eta_cut(x3):
    """Vertical cutoff: 1 for x3 >= 3/4, 0 for x3 <= 1/2."""
    return smoothstep((np.asarray(x3) - 0.5) / 0.25)


def alpha_cut(s):
    """Arc cutoff: 1 for s <= -1/4, 0 for s >= 1/4."""
    return 1.0 - smoothstep((np.asarray(s) + 0.25) / 0.5)


def alpha_cut_prime(s):
    t = (np.asarray(s) + 0.25) / 0.5
    tc = np.clip(t, 0.0, 1.0)
    return -(30.0 * tc**2 * (1.0 - tc) ** 2) / 0.5


def curve_x1_of_x3(x3, sigma: int = 1):
    """Closed-form zero-curve graph x1(x3): the zero of m2star at height x3
    is ell = -sigma sqrt(2) sin(pi x3/2)/sqrt(1 + 2 sin^2(pi x3/2))."""
    s = np.sin(0.5 * np.pi * np.asarray(x3))
    ell0 = -sigma * SQRT2 * s / np.sqrt(1.0 + 2.0 * s * s)
    return (2.0 / np.pi) * np.arctanh(ell0)


@dataclass
class ZeroCurve:
    """Arc-length parametrization of {m2star = 0}, oriented with gamma1
    increasing and gamma(0) at the origin."""

    sigma: int
    s: np.ndarray          # arc-length samples
    points: np.ndarray     # (n, 2)
    tangents: np.ndarray   # (n, 2), unit
    a: float               # gamma1(+-a) = +-1/2

    def interp_point(self, s):
        return np.stack([
            np.interp(s, self.s, self.points[:, 0]),
            np.interp(s, self.s, self.points[:, 1]),
        ], axis=-1)

    def interp_tangent(self, s):
        t = np.stack([
            np.interp(s, self.s, self.tangents[:, 0]),
            np.interp(s, self.s, self.tangents[:, 1]),
        ], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def arc_of_x3(self, x3):
        x3s = self.points[:, 1]
        if x3s[0] > x3s[-1]:
            return np.interp(np.asarray(x3), x3s[::-1], self.s[::-1])
        return np.interp(np.asarray(x3), x3s, self.s)


def zero_curve(sigma: int = 1, n_samples: int = 1025) -> ZeroCurve:
    """Sample the zero curve of m2star by bracketed root finding per x3
    level, reparametrized by arc length."""
    profiles.check_sigma(sigma)
    if n_samples < 64:
        raise ValidationError(f"need n_samples >= 64, got {n_samples}")
    if n_samples % 2 == 0:
        n_samples += 1  # keep the origin an exact sample
    # order by decreasing x3 for sigma=+1 (arc length increases with x1)
    x3s = np.linspace(1.0, -1.0, n_samples) * sigma
    x1s = np.empty(n_samples)
    for i, x3 in enumerate(x3s):
        f = lambda x1: profiles.m2star(x1, x3, sigma)
        lo, hi = -0.76, 0.76
        if f(lo) * f(hi) > 0:
            raise RootBracketFailure(f"no sign change for x3 = {x3}")
        x1s[i] = brentq(f, lo, hi, xtol=1e-13)
    pts = np.column_stack([x1s, x3s])
    seg = np.sqrt(np.sum(np.diff(pts, axis=0) ** 2, axis=1))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    arc -= arc[n_samples // 2]  # gamma(0) = origin

    # analytic tangents from the closed-form graph x1(x3)
    sn = np.sin(0.5 * np.pi * x3s)
    cs = np.cos(0.5 * np.pi * x3s)
    ell0 = -sigma * SQRT2 * sn / np.sqrt(1.0 + 2.0 * sn * sn)
    dell0 = -sigma * SQRT2 * 0.5 * np.pi * cs / (1.0 + 2.0 * sn * sn) ** 1.5
    dx1_dx3 = (2.0 / np.pi) * dell0 / (1.0 - ell0**2)
    # arc direction: d(x3)/ds = -sigma / sqrt(1 + (dx1/dx3)^2)
    norm = np.sqrt(1.0 + dx1_dx3**2)
    tangents = np.column_stack([-sigma * dx1_dx3 / norm, -sigma / norm * np.ones_like(x1s)])

    a_plus = float(np.interp(0.5, pts[:, 0], arc))
    return ZeroCurve(sigma=sigma, s=arc, points=pts, tangents=tangents, a=a_plus)


# ---------------------------------------------------------------------------
# characteristic integration
# ---------------------------------------------------------------------------

@dataclass
class Characteristic:
    """Sampled trajectory (s, x(s), p(s), psi(s)) through one seed."""

    s: np.ndarray
    x: np.ndarray       # (n, 2)
    p: np.ndarray       # (n, 2)
    psi: np.ndarray
    seed: tuple         # (x0, p0, psi0)
    t_top: float | None
    t_bottom: float | None
    max_drift: float


def _force(x1, x3, theta, sigma, use_tilde):
    s2 = np.sin(theta) ** 2
    if not use_tilde:
        m2 = profiles.m2star(x1, x3, sigma)
        g1, g3 = profiles.m2star_grad(x1, x3, sigma)
        return -s2 * 2.0 * m2 * g1, -s2 * 2.0 * m2 * g3
    # tilde system: F = +grad |grad psitilde|^2
    c = np.cos(theta)
    m1h, m3h, (d1m1h, d3m1h), (d1m3h, d3m3h) = profiles.mhat(x1, x3, sigma)
    a = c + s2 * m1h
    b = s2 * m3h
    f1 = 2.0 * (a * s2 * d1m1h + b * s2 * d1m3h)
    f3 = 2.0 * (a * s2 * d3m1h + b * s2 * d3m3h)
    return f1, f3


def _hamiltonian(x1, x3, p1, p3, theta, sigma, use_tilde):
    if not use_tilde:
        return p1 * p1 + p3 * p3 - (1.0 - np.sin(theta) ** 2 * profiles.m2star(x1, x3, sigma) ** 2)
    c = np.cos(theta)
    s2 = np.sin(theta) ** 2
    m1h, m3h, _, _ = profiles.mhat(x1, x3, sigma)
    rhs = (c + s2 * m1h) ** 2 + (s2 * m3h) ** 2
    return p1 * p1 + p3 * p3 - rhs


class _FanIntegrator:
    """Vectorized RK4 integration of a family of characteristics, recording
    cubic-Hermite-interpolated states at prescribed x3 levels and at the
    zero-curve graph."""

    def __init__(self, theta, sigma, use_tilde=False, dt=1e-3, drift_tol=1e-10,
                 guard_halfwidth=None, record_curve=False):
        self.theta = theta
        self.sigma = sigma
        self.use_tilde = use_tilde
        self.dt = dt
        self.drift_tol = drift_tol
        self.guard = guard_halfwidth
        self.record_curve = record_curve

    def _rhs(self, state):
        x1, x3, p1, p3 = state[0], state[1], state[2], state[3]
        f1, f3 = _force(x1, x3, self.theta, self.sigma, self.use_tilde)
        return np.stack([2.0 * p1, 2.0 * p3, f1, f3, 2.0 * (p1 * p1 + p3 * p3)])

    def run(self, x0, p0, psi0, rows, direction):
        """Integrate until x3 crosses -1 (direction=+1, moving down) or +1
        (direction=-1, backward time, moving up); returns crossing tables
        of shape (n_rows, n_seeds) plus optional curve-crossing records."""
        n = x0.shape[0]
        state = np.stack([x0[:, 0], x0[:, 1], p0[:, 0], p0[:, 1], np.asarray(psi0, float)])
        h0 = _hamiltonian(state[0], state[1], state[2], state[3],
                          self.theta, self.sigma, self.use_tilde)
        if np.max(np.abs(h0)) > 1e-10:
            raise ValidationError(
                f"seed data off the zero level set: max |H| = {np.max(np.abs(h0)):.2e}"
            )

        rows = np.asarray(rows, float)
        n_rows = rows.size
        tab = np.full((4, n_rows, n), np.nan)  # x1, p1, p3, psi
        # rows ordered in the direction of motion
        order = np.argsort(-direction * rows)
        rows_m = rows[order]
        target = -1.0 if direction > 0 else 1.0
        dt = direction * self.dt

        # first row level each trajectory can still reach, moving with the
        # flow; seeds sitting exactly on a level are recorded immediately
        next_row = np.searchsorted(-direction * rows_m, -direction * state[1] - 1e-13)
        on_row = (next_row < n_rows) & (
            np.abs(state[1] - rows_m[np.minimum(next_row, n_rows - 1)]) < 1e-13
        )
        if np.any(on_row):
            rr = next_row[on_row]
            cols = np.where(on_row)[0]
            tab[0, rr, cols] = state[0, on_row]
            tab[1, rr, cols] = state[2, on_row]
            tab[2, rr, cols] = state[3, on_row]
            tab[3, rr, cols] = state[4, on_row]
            next_row[on_row] += 1

        curve_rec = []  # (arc s, x1, p1, p3, psi)
        active = np.ones(n, bool)
        max_drift = 0.0
        exit_state = np.full((5, n), np.nan)
        t_exit = np.full(n, np.nan)
        t = 0.0
        max_steps = int(np.ceil(10.0 / self.dt))
        if self.record_curve:
            side_prev = state[0] - curve_x1_of_x3(np.clip(state[1], -1, 1), self.sigma)

        for _step in range(max_steps):
            if not np.any(active):
                break
            k1 = self._rhs(state)
            k2 = self._rhs(state + 0.5 * dt * k1)
            k3 = self._rhs(state + 0.5 * dt * k2)
            k4 = self._rhs(state + dt * k3)
            new = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            k1_new = self._rhs(new)

            drift = np.abs(
                _hamiltonian(new[0][active], new[1][active], new[2][active],
                             new[3][active], self.theta, self.sigma, self.use_tilde)
            )
            step_drift = float(np.max(drift)) if drift.size else 0.0
            if step_drift > self.drift_tol:
                if abs(dt) < 1e-8:
                    raise StepFailure(
                        f"step size underflow chasing drift {step_drift:.2e}"
                    )
                dt *= 0.5
                continue
            max_drift = max(max_drift, step_drift)

            if self.guard is not None and np.any(np.abs(new[0][active]) > self.guard):
                raise EscapedDomain("characteristic left the guard box")

            # row crossings within [t, t+dt] via cubic Hermite in time
            for _sub in range(3):  # at most a few rows per step
                idx = np.where(active & (next_row < n_rows))[0]
                if idx.size == 0:
                    break
                lev = rows_m[np.minimum(next_row[idx], n_rows - 1)]
                crossed = (state[1, idx] - lev) * (new[1, idx] - lev) <= 0
                crossed &= np.abs(new[1, idx] - state[1, idx]) > 0
                idc = idx[crossed]
                if idc.size == 0:
                    break
                levc = rows_m[next_row[idc]]
                tc = _hermite_crossing(state[1, idc], new[1, idc],
                                       k1[1, idc], k1_new[1, idc], dt, levc)
                for comp, row_c in ((0, 0), (2, 1), (3, 2), (4, 3)):
                    vals = _hermite_eval(state[comp, idc], new[comp, idc],
                                         k1[comp, idc], k1_new[comp, idc], dt, tc)
                    tab[row_c, next_row[idc], idc] = vals
                next_row[idc] += 1

            if self.record_curve:
                g_new = new[0] - curve_x1_of_x3(np.clip(new[1], -1, 1), self.sigma)
                hit = active & (side_prev * g_new <= 0) & (np.abs(g_new - side_prev) > 0)
                for i in np.where(hit)[0]:
                    # refine the crossing in time by bisection on the Hermite
                    tc = _curve_crossing_time(state[:, i], new[:, i], k1[:, i],
                                              k1_new[:, i], dt, self.sigma)
                    rec = [
                        _hermite_eval(state[c, i], new[c, i], k1[c, i], k1_new[c, i], dt, tc)
                        for c in range(5)
                    ]
                    curve_rec.append(rec)
                side_prev = g_new

            # termination at the far row
            done = active & (direction * (new[1] - target) <= 0)
            for i in np.where(done)[0]:
                tc = _hermite_crossing(
                    np.array([state[1, i]]), np.array([new[1, i]]),
                    np.array([k1[1, i]]), np.array([k1_new[1, i]]), dt,
                    np.array([target]))[0]
                exit_state[:, i] = [
                    _hermite_eval(state[c, i], new[c, i], k1[c, i], k1_new[c, i], dt, tc)
                    for c in range(5)
                ]
                t_exit[i] = t + tc
            active &= ~done
            state = new
            t += dt
        else:
            if np.any(active):
                raise StepFailure("characteristics failed to reach the boundary")

        tab_out = tab[:, np.argsort(order), :]
        return tab_out, exit_state, t_exit, max_drift, curve_rec


def _hermite_crossing(y0, y1, d0, d1, dt, level):
    """Time within [0, dt] at which the cubic Hermite of (y0, d0)-(y1, d1)
    crosses the level; a few Newton steps from the secant estimate."""
    tau = np.clip((level - y0) / np.where(y1 != y0, y1 - y0, 1.0), 0.0, 1.0)
    for _ in range(4):
        h00 = 2 * tau**3 - 3 * tau**2 + 1
        h10 = tau**3 - 2 * tau**2 + tau
        h01 = -2 * tau**3 + 3 * tau**2
        h11 = tau**3 - tau**2
        val = h00 * y0 + h10 * dt * d0 + h01 * y1 + h11 * dt * d1 - level
        dval = (
            (6 * tau**2 - 6 * tau) * y0
            + (3 * tau**2 - 4 * tau + 1) * dt * d0
            + (-6 * tau**2 + 6 * tau) * y1
            + (3 * tau**2 - 2 * tau) * dt * d1
        )
        tau = np.clip(tau - val / np.where(np.abs(dval) > 1e-300, dval, 1.0), 0.0, 1.0)
    return tau * dt


def _hermite_eval(y0, y1, d0, d1, dt, tc):
    tau = tc / dt
    h00 = 2 * tau**3 - 3 * tau**2 + 1
    h10 = tau**3 - 2 * tau**2 + tau
    h01 = -2 * tau**3 + 3 * tau**2
    h11 = tau**3 - tau**2
    return h00 * y0 + h10 * dt * d0 + h01 * y1 + h11 * dt * d1


def _curve_crossing_time(s0, s1, d0, d1, dt, sigma):
    """Bisection in time for the zero of x1(t) - curve(x3(t))."""
    lo, hi = 0.0, dt

    def g(tc):
        x1 = _hermite_eval(s0[0], s1[0], d0[0], d1[0], dt, tc)
        x3 = _hermite_eval(s0[1], s1[1], d0[1], d1[1], dt, tc)
        return x1 - curve_x1_of_x3(np.clip(x3, -1.0, 1.0), sigma)

    glo = g(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if glo * gm <= 0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


def integrate_characteristic(
    x0, p0, theta: float, use_tilde: bool = False, sigma: int = 1,
    psi0: float = 0.0, dt: float = 1e-3, guard_halfwidth: float = None,
) -> Characteristic:
    """Integrate a single characteristic forward and backward until x3 hits
    -+1; Hamiltonian drift is kept below 1e-10 by step halving."""
    x0 = np.asarray(x0, float)
    p0 = np.asarray(p0, float)
    if np.hypot(p0[0], p0[1] + 1.0) > 0.5:
        raise ValidationError(f"|p0 + e3| must be <= 1/2, got p0 = {p0}")
    h = float(_hamiltonian(x0[0], x0[1], p0[0], p0[1], theta, sigma, use_tilde))
    if abs(h) > 1e-10:
        raise ValidationError(f"H(p0, x0) = {h:.2e} not on the zero level set")

    fan = _FanIntegrator(theta, sigma, use_tilde, dt=dt,
                         guard_halfwidth=guard_halfwidth)
    segs = []
    t_top = t_bottom = None
    for direction in (+1, -1):
        if (direction > 0 and x0[1] <= -1.0) or (direction < 0 and x0[1] >= 1.0):
            continue
        samples = [(0.0, x0[0], x0[1], p0[0], p0[1], psi0)]
        state = np.array([[x0[0]], [x0[1]], [p0[0]], [p0[1]], [psi0]])
        dt_s = direction * dt
        t = 0.0
        max_drift = 0.0
        target = -1.0 if direction > 0 else 1.0
        for _ in range(int(10.0 / dt)):
            k1 = fan._rhs(state)
            k2 = fan._rhs(state + 0.5 * dt_s * k1)
            k3 = fan._rhs(state + 0.5 * dt_s * k2)
            k4 = fan._rhs(state + dt_s * k3)
            new = state + (dt_s / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            drift = abs(float(_hamiltonian(new[0, 0], new[1, 0], new[2, 0],
                                           new[3, 0], theta, sigma, use_tilde)))
            if drift > 1e-10:
                if abs(dt_s) < 1e-8:
                    raise StepFailure("step size underflow")
                dt_s *= 0.5
                continue
            max_drift = max(max_drift, drift)
            if guard_halfwidth is not None and abs(new[0, 0]) > guard_halfwidth:
                raise EscapedDomain("characteristic left the guard box")
            t += dt_s
            samples.append((t, new[0, 0], new[1, 0], new[2, 0], new[3, 0], new[4, 0]))
            state = new
            if direction * (new[1, 0] - target) <= 0:
                if direction > 0:
                    t_bottom = t
                else:
                    t_top = t
                break
        else:
            raise StepFailure("characteristic failed to reach the boundary")
        segs.append((direction, samples, max_drift))

    rows = []
    drift_all = 0.0
    for direction, samples, md in segs:
        drift_all = max(drift_all, md)
        rows.extend(samples if direction > 0 else samples[1:])
    rows.sort(key=lambda r: r[0])
    arr = np.asarray(rows)
    return Characteristic(
        s=arr[:, 0], x=arr[:, 1:3], p=arr[:, 3:5], psi=arr[:, 5],
        seed=(tuple(x0), tuple(p0), psi0),
        t_top=t_top, t_bottom=t_bottom, max_drift=drift_all,
    )


# ---------------------------------------------------------------------------
# stream-function construction
# ---------------------------------------------------------------------------

LABELS = {"t": 0, "b": 1, "m": 2, "t-inter": 3, "b-inter": 4}


@dataclass
class BlendedPsi:
    grid: Grid
    theta: float
    sigma: int
    psi: np.ndarray           # (n1, n3)
    grad: np.ndarray          # (2, n1, n3), transported + blended gradient
    labels: np.ndarray        # (n1, n3) int8, values in LABELS
    eikonal_residual: np.ndarray = field(repr=False, default=None)

    def label_mask(self, *names):
        codes = [LABELS[n] for n in names]
        return np.isin(self.labels, codes)


def psi_tilde(theta: float, grid: Grid, sigma: int = 1) -> np.ndarray:
    """Closed-form reference stream function
    psitilde = -cos(t)(x3+1) - sin^2(t) int_{-1}^{x3} mhat1."""
    X1, X3 = grid.meshgrid()
    return (
        -np.cos(theta) * (X3 + 1.0)
        - np.sin(theta) ** 2 * profiles.mhat1_antiderivative(X1, X3, sigma)
    )


def psi_tilde_grad(theta: float, grid: Grid, sigma: int = 1) -> np.ndarray:
    """(d1, d3) of psi_tilde in closed form: (sin^2 mhat3, -cos - sin^2 mhat1)."""
    X1, X3 = grid.meshgrid()
    s2 = np.sin(theta) ** 2
    m1h, m3h, _, _ = profiles.mhat(X1, X3, sigma)
    return np.stack([s2 * m3h, -np.cos(theta) - s2 * m1h])


def _lagrange4(xs, ys, x, order: int = 6):
    """Vectorized local Lagrange interpolation on a sorted table."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    k = min(order, xs.size)
    idx = np.clip(np.searchsorted(xs, x) - k // 2, 0, xs.size - k)
    out = np.zeros_like(np.asarray(x, float))
    for a in range(k):
        lk = np.ones_like(out)
        xa = xs[idx + a]
        for b in range(k):
            if b != a:
                xb = xs[idx + b]
                lk *= (x - xb) / (xa - xb)
        out += lk * ys[idx + a]
    return out


class _PatchTable:
    """Crossing tables of one characteristic fan: per grid row, state
    samples ordered by (monotone) x1."""

    def __init__(self, tab, params):
        self.x1 = tab[0]     # (n_rows, n_seeds)
        self.p1 = tab[1]
        self.p3 = tab[2]
        self.psi = tab[3]
        self.params = params

    def eval_rows(self, row_indices, x1_targets):
        """Interpolate (psi, p1, p3) at x1_targets per row; raises
        CoverageGap when a target falls outside the fan."""
        out_psi = np.empty_like(x1_targets)
        out_p1 = np.empty_like(x1_targets)
        out_p3 = np.empty_like(x1_targets)
        for r, j in enumerate(row_indices):
            xr = self.x1[j]
            good = np.isfinite(xr)
            xg = xr[good]
            if xg.size < 4:
                raise CoverageGap(f"fan too sparse at row {j}")
            tg = x1_targets[r]
            if np.any(tg < xg[0] - 1e-9) or np.any(tg > xg[-1] + 1e-9):
                raise CoverageGap(
                    f"node outside the characteristic fan at row {j}"
                )
            out_psi[r] = _lagrange4(xg, self.psi[j][good], tg)
            out_p1[r] = _lagrange4(xg, self.p1[j][good], tg)
            out_p3[r] = _lagrange4(xg, self.p3[j][good], tg)
        return out_psi, out_p1, out_p3


def _seed_momentum_row(x1, x3_row, theta, sigma):
    amp = np.sqrt(1.0 - np.sin(theta) ** 2 * profiles.m2star(x1, x3_row, sigma) ** 2)
    p = np.zeros((x1.size, 2))
    p[:, 1] = -amp
    return p


def _build_fans(theta: float, sigma: int, grid: Grid, curve: ZeroCurve):
    """Integrate the top, bottom and middle fans; returns patch tables."""
    spacing = 0.5 * grid.h1
    half = grid.L + 0.5
    n_seed = int(2 * half / spacing) + 1
    seeds = np.linspace(-half, half, n_seed)
    rows = grid.x3
    guard = grid.L + 2.0

    top = _FanIntegrator(theta, sigma, guard_halfwidth=guard, record_curve=True)
    x0 = np.column_stack([seeds, np.ones(n_seed)])
    p0 = _seed_momentum_row(seeds, 1.0, theta, sigma)
    tab_t, _, _, drift_t, curve_t = top.run(x0, p0, np.full(n_seed, -2.0 * np.cos(theta)), rows, +1)

    bot = _FanIntegrator(theta, sigma, guard_halfwidth=guard, record_curve=True)
    x0 = np.column_stack([seeds, -np.ones(n_seed)])
    p0 = _seed_momentum_row(seeds, -1.0, theta, sigma)
    tab_b, _, _, drift_b, curve_b = bot.run(x0, p0, np.zeros(n_seed), rows, -1)

    # psi^t, psi^b and their gradients along the curve, indexed by arc length
    def curve_table(recs):
        recs = np.asarray(recs)
        arcs = curve.arc_of_x3(recs[:, 1])
        order = np.argsort(arcs)
        return arcs[order], recs[order]

    arc_t, rec_t = curve_table(curve_t)
    arc_b, rec_b = curve_table(curve_b)

    # middle fan seeds on gamma restricted to (-1/2, 1/2)
    n_mid = max(int(1.0 / spacing) + 1, 65)
    s_mid = np.linspace(-0.5 + 1e-9, 0.5 - 1e-9, n_mid)
    pts = curve.interp_point(s_mid)
    tans = curve.interp_tangent(s_mid)
    al = alpha_cut(s_mid)
    alp = alpha_cut_prime(s_mid)
    psi_t_on = _lagrange4(arc_t, rec_t[:, 4], s_mid)
    psi_b_on = _lagrange4(arc_b, rec_b[:, 4], s_mid)
    pt1 = _lagrange4(arc_t, rec_t[:, 2], s_mid)
    pt3 = _lagrange4(arc_t, rec_t[:, 3], s_mid)
    pb1 = _lagrange4(arc_b, rec_b[:, 2], s_mid)
    pb3 = _lagrange4(arc_b, rec_b[:, 3], s_mid)
    h = al * psi_t_on + (1.0 - al) * psi_b_on
    hdot = (
        alp * (psi_t_on - psi_b_on)
        + al * (pt1 * tans[:, 0] + pt3 * tans[:, 1])
        + (1.0 - al) * (pb1 * tans[:, 0] + pb3 * tans[:, 1])
    )
    if np.max(np.abs(hdot)) >= 1.0:
        raise BlendViolation("tangential derivative on gamma reached 1")
    perp = np.column_stack([-tans[:, 1], tans[:, 0]])  # positive e3 component
    p0_mid = hdot[:, None] * tans - np.sqrt(1.0 - hdot**2)[:, None] * perp

    mid_dn = _FanIntegrator(theta, sigma, guard_halfwidth=guard)
    tab_md, _, _, drift_md, _ = mid_dn.run(pts, p0_mid, h, rows, +1)
    mid_up = _FanIntegrator(theta, sigma, guard_halfwidth=guard)
    tab_mu, _, _, drift_mu, _ = mid_up.run(pts, p0_mid, h, rows, -1)
    tab_m = np.where(np.isnan(tab_md), tab_mu, tab_md)

    drift = max(drift_t, drift_b, drift_md, drift_mu)
    return _PatchTable(tab_t, None), _PatchTable(tab_b, None), _PatchTable(tab_m, None), drift


def build_psi(theta: float, sigma: int = 1, grid: Grid = None) -> BlendedPsi:
    """Three-patch stream function with the case-table blending.

    The sigma = -1 construction is realized by the exact reflection
    psi(x1, x3) = -2 cos(t) - psi_plus(x1, -x3) of the sigma = +1 build.
    """
    profiles.check_sigma(sigma)
    if not (0 < theta <= 0.3):
        raise ValidationError(f"construction requires 0 < theta <= 0.3, got {theta}")
    if sigma == -1:
        bp = build_psi(theta, 1, grid)
        flip = slice(None, None, -1)
        labels = bp.labels[:, flip].copy()
        swap = labels.copy()
        swap[labels == LABELS["t"]] = LABELS["b"]
        swap[labels == LABELS["b"]] = LABELS["t"]
        swap[labels == LABELS["t-inter"]] = LABELS["b-inter"]
        swap[labels == LABELS["b-inter"]] = LABELS["t-inter"]
        grad = np.stack([-bp.grad[0][:, flip], bp.grad[1][:, flip]])
        return BlendedPsi(
            grid=grid, theta=theta, sigma=-1,
            psi=-2.0 * np.cos(theta) - bp.psi[:, flip],
            grad=grad,
            labels=swap,
            eikonal_residual=bp.eikonal_residual[:, flip],
        )

    curve = zero_curve(sigma, n_samples=2049)
    tab_t, tab_b, tab_m, drift = _build_fans(theta, sigma, grid, curve)

    X1, X3 = grid.meshgrid()
    n1, n3 = grid.shape
    psi = np.empty((n1, n3))
    gpsi = np.empty((2, n1, n3))
    labels = np.empty((n1, n3), dtype=np.int8)

    all_rows = np.arange(n3)
    x1_nodes = np.broadcast_to(grid.x1[:, None], (n1, n3)).T  # (n3, n1)
    psi_t, p1_t, p3_t = tab_t.eval_rows(all_rows, np.array(x1_nodes))
    psi_b, p1_b, p3_b = tab_b.eval_rows(all_rows, np.array(x1_nodes))
    # middle patch evaluated only on the central columns (the case table
    # consumes it for |x1| <= 3/8, within the fan's reach gamma1(+-1/2))
    mid_cols = np.abs(grid.x1) <= 0.375 + 0.5 * grid.h1
    xm = np.array(x1_nodes[:, mid_cols])
    psi_m_c, p1_m_c, p3_m_c = tab_m.eval_rows(all_rows, xm)
    psi_m = np.full((n3, n1), np.nan)
    p1_m = np.full((n3, n1), np.nan)
    p3_m = np.full((n3, n1), np.nan)
    psi_m[:, mid_cols] = psi_m_c
    p1_m[:, mid_cols] = p1_m_c
    p3_m[:, mid_cols] = p3_m_c

    # (n3, n1) -> (n1, n3)
    psi_t, p1_t, p3_t = psi_t.T, p1_t.T, p3_t.T
    psi_b, p1_b, p3_b = psi_b.T, p1_b.T, p3_b.T
    psi_m, p1_m, p3_m = psi_m.T, p1_m.T, p3_m.T

    eta = eta_cut(X3)
    deta = _eta_prime(X3)

    zone_t = X3 >= 0.75
    zone_ti = (X3 >= 0.5) & (X3 < 0.75)
    zone_mid = (X3 > -0.5) & (X3 < 0.5)
    zone_bi = (X3 > -0.75) & (X3 <= -0.5)
    zone_b = X3 <= -0.75
    left = X1 < -0.375
    right = X1 > 0.375
    center = ~left & ~right

    psi[:] = np.nan
    labels[:] = -1

    def put(mask, vals_psi, vals_g1, vals_g3, lab):
        psi[mask] = vals_psi[mask]
        gpsi[0][mask] = vals_g1[mask]
        gpsi[1][mask] = vals_g3[mask]
        labels[mask] = LABELS[lab]

    put(zone_t, psi_t, p1_t, p3_t, "t")
    put(zone_ti & left, psi_t, p1_t, p3_t, "t")
    put(zone_mid & left, psi_t, p1_t, p3_t, "t")
    put(zone_mid & center, psi_m, p1_m, p3_m, "m")
    put(zone_mid & right, psi_b, p1_b, p3_b, "b")
    put(zone_bi & right, psi_b, p1_b, p3_b, "b")
    put(zone_b, psi_b, p1_b, p3_b, "b")

    def blend(mask, pa, g1a, g3a, pb_, g1b, g3b, w, dw, lab):
        psi[mask] = (w * pa + (1 - w) * pb_)[mask]
        gpsi[0][mask] = (w * g1a + (1 - w) * g1b)[mask]
        gpsi[1][mask] = (w * g3a + (1 - w) * g3b + dw * (pa - pb_))[mask]
        labels[mask] = LABELS[lab]

    blend(zone_ti & center, psi_t, p1_t, p3_t, psi_m, p1_m, p3_m, eta, deta, "t-inter")
    blend(zone_ti & right, psi_t, p1_t, p3_t, psi_b, p1_b, p3_b, eta, deta, "t-inter")
    eta_b = eta_cut(-X3)
    deta_b = -_eta_prime(-X3)
    blend(zone_bi & center, psi_b, p1_b, p3_b, psi_m, p1_m, p3_m, eta_b, deta_b, "b-inter")
    blend(zone_bi & left, psi_b, p1_b, p3_b, psi_t, p1_t, p3_t, eta_b, deta_b, "b-inter")

    if np.any(~np.isfinite(psi)):
        raise CoverageGap("nodes left unassigned by the case table")

    # enforce the exact row values (interpolation noise at 1e-12 level)
    psi[:, -1] = -2.0 * np.cos(theta)
    psi[:, 0] = 0.0

    gn = np.sqrt(gpsi[0] ** 2 + gpsi[1] ** 2)
    inter = np.isin(labels, [LABELS["t-inter"], LABELS["b-inter"]])
    if np.any(gn[inter] >= 1.0):
        raise BlendViolation(
            f"|grad psi| reached {np.max(gn[inter]):.6f} inside a blend strip"
        )
    resid = gn**2 - (1.0 - np.sin(theta) ** 2 * profiles.m2star(X1, X3, sigma) ** 2)
    return BlendedPsi(
        grid=grid, theta=theta, sigma=sigma, psi=psi, grad=gpsi,
        labels=labels, eikonal_residual=resid,
    )


def _eta_prime(x3):
    t = (np.asarray(x3) - 0.5) / 0.25
    tc = np.clip(t, 0.0, 1.0)
    return (30.0 * tc**2 * (1.0 - tc) ** 2) / 0.25


def recover_m(grid: Grid, bp: BlendedPsi, theta: float) -> np.ndarray:
    """m' = grad_perp(psi) discretely (machine-zero divergence), with
    m2 = s(x) sqrt(1 - |m'|^2) and the sign flipping across the zero curve.

    NegativeRadicand fires when the transported gradient exceeds unit
    length beyond integrator tolerance (a blending bug); the discrete
    radicand's O(h^2) negatives near the curve are clamped to zero.
    """
    trans = 1.0 - (bp.grad[0] ** 2 + bp.grad[1] ** 2)
    if float(np.min(trans)) < -1e-12:
        raise NegativeRadicand(
            f"1 - |grad psi|^2 reached {np.min(trans):.2e} on the transported field"
        )
    mp = grad_perp(grid, bp.psi)
    X1, X3 = grid.meshgrid()
    sign = np.where(X1 >= curve_x1_of_x3(X3, bp.sigma), 1.0, -1.0)
    radicand = 1.0 - (mp[0] ** 2 + mp[1] ** 2)
    m2 = sign * np.sqrt(np.maximum(radicand, 0.0))
    return np.stack([mp[0], m2, mp[1]])
