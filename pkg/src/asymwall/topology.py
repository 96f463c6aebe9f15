"""Winding number and degree of strip magnetizations.

W integrates the in-plane Jacobian J = d1(m1,m2) x d3(m1,m2) over the strip
(area route) or the unwrapped phase of (m1, m2) along the boundary loop
(boundary route); D integrates omega = m . (d1 m x d3 m). The boundary loop
closes through the end columns, where the field is constant and contributes
no phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBoundary
from .grid import Grid, gradient, integrate


@dataclass(frozen=True)
class TopologyReport:
    W_area: float
    W_boundary: float
    D_area: float

    @property
    def W_int(self):
        return int(np.rint(self.W_boundary))

    @property
    def D_int(self):
        return int(np.rint(self.D_area))

    def as_dict(self):
        return {
            "W_area": self.W_area,
            "W_boundary": self.W_boundary,
            "D_area": self.D_area,
            "W_int": self.W_int,
            "D_int": self.D_int,
            "W_dist": abs(self.W_area - self.W_int),
            "D_dist": abs(self.D_area - self.D_int),
        }


def winding_number(grid: Grid, m: np.ndarray, min_inplane: float = 0.05):
    """(W_area, W_boundary): both near a common integer for smooth fields.

    Raises DegenerateBoundary when |(m1, m2)| < min_inplane somewhere on
    the boundary loop, where phase unwrapping loses its branch.
    """
    g1 = gradient(grid, m[0])
    g2 = gradient(grid, m[1])
    jac = g1[0] * g2[1] - g2[0] * g1[1]
    w_area = integrate(grid, jac) / np.pi

    # closed loop: bottom row left-to-right, right column up, top row
    # right-to-left, left column down
    loop1 = np.concatenate([m[0, :, 0], m[0, -1, :], m[0, ::-1, -1], m[0, 0, ::-1]])
    loop2 = np.concatenate([m[1, :, 0], m[1, -1, :], m[1, ::-1, -1], m[1, 0, ::-1]])
    amp = np.hypot(loop1, loop2)
    if np.min(amp) < min_inplane:
        raise DegenerateBoundary(
            f"in-plane magnitude {np.min(amp):.3g} < {min_inplane} on the boundary"
        )
    phase = np.arctan2(loop2, loop1)
    steps = np.diff(phase)
    steps = (steps + np.pi) % (2 * np.pi) - np.pi  # nearest-branch unwrap
    closing = phase[0] - phase[-1]
    closing = (closing + np.pi) % (2 * np.pi) - np.pi
    w_boundary = (np.sum(steps) + closing) / (2 * np.pi)
    return float(w_area), float(w_boundary)


def degree(grid: Grid, m: np.ndarray) -> float:
    """D = (1/2 pi) int m . (d1 m x d3 m); near-integer for admissible fields."""
    g = np.stack([gradient(grid, comp) for comp in m])  # (3, 2, n1, n3)
    cross = np.cross(g[:, 0], g[:, 1], axisa=0, axisb=0)  # (n1, n3, 3)
    omega = np.einsum("cij,ijc->ij", m, cross)
    return float(integrate(grid, omega) / (2 * np.pi))


def report(grid: Grid, m: np.ndarray) -> TopologyReport:
    w_area, w_bnd = winding_number(grid, m)
    return TopologyReport(W_area=w_area, W_boundary=w_bnd, D_area=degree(grid, m))


def reflect_extend(grid: Grid, m: np.ndarray):
    """Even reflection of (m1, m2) and odd reflection of m3 across the
    bottom boundary; returns (extended grid, extended field). Doubles D and
    cancels W for admissible fields."""
    from .grid import build_grid

    n3 = grid.n3
    ext = build_grid(grid.L, grid.n1, 2 * n3 - 1)
    out = np.empty((3, grid.n1, 2 * n3 - 1))
    # reflected copy occupies the lower half, original the upper half
    out[:, :, n3 - 1 :] = m
    out[0, :, : n3 - 1] = m[0, :, n3 - 1 : 0 : -1]
    out[1, :, : n3 - 1] = m[1, :, n3 - 1 : 0 : -1]
    out[2, :, : n3 - 1] = -m[2, :, n3 - 1 : 0 : -1]
    return ext, out
