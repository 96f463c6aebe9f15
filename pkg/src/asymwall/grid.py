"""Discretization of the truncated strip [-L,L] x [-1,1].

Node-centered tensor grid with second-order stencils: centered differences
in the interior, one-sided second-order at the edges. Scalar fields are
numpy arrays of shape (n1, n3); 2-vector fields (2, n1, n3) with components
(v1, v3); magnetizations (3, n1, n3) with components (m1, m2, m3).
Quadrature is the trapezoidal rule in both directions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on [-L,L] x [-1,1], endpoints included."""

    L: float
    n1: int
    n3: int
    h1: float
    h3: float
    x1: np.ndarray = field(repr=False)
    x3: np.ndarray = field(repr=False)
    w1: np.ndarray = field(repr=False)  # 1D trapezoid weights in x1
    w3: np.ndarray = field(repr=False)  # 1D trapezoid weights in x3

    @property
    def shape(self):
        return (self.n1, self.n3)

    @property
    def weights(self):
        """Tensor-product trapezoid weights, shape (n1, n3)."""
        return np.outer(self.w1, self.w3)

    def meshgrid(self):
        """Node coordinates X1, X3 of shape (n1, n3)."""
        return np.meshgrid(self.x1, self.x3, indexing="ij")


def build_grid(L: float, n1: int, n3: int) -> Grid:
    """Uniform grid with x1 endpoints at +-L and x3 endpoints at +-1."""
    if not (L > 0):
        raise ValidationError(f"half-length L must be positive, got {L}")
    if n1 < 3 or n3 < 3:
        raise ValidationError(f"need at least 3 nodes per direction, got {n1}x{n3}")
    x1 = np.linspace(-L, L, n1)
    x3 = np.linspace(-1.0, 1.0, n3)
    h1 = 2.0 * L / (n1 - 1)
    h3 = 2.0 / (n3 - 1)
    w1 = np.full(n1, h1)
    w1[0] = w1[-1] = h1 / 2.0
    w3 = np.full(n3, h3)
    w3[0] = w3[-1] = h3 / 2.0
    return Grid(L=L, n1=n1, n3=n3, h1=h1, h3=h3, x1=x1, x3=x3, w1=w1, w3=w3)


def _diff_matrix(n: int, h: float) -> sp.csr_matrix:
    """1D first-derivative: centered interior, one-sided second-order edges."""
    D = sp.lil_matrix((n, n))
    for i in range(1, n - 1):
        D[i, i - 1] = -0.5 / h
        D[i, i + 1] = 0.5 / h
    D[0, 0], D[0, 1], D[0, 2] = -1.5 / h, 2.0 / h, -0.5 / h
    D[-1, -1], D[-1, -2], D[-1, -3] = 1.5 / h, -2.0 / h, 0.5 / h
    return D.tocsr()


_OP_CACHE: dict = {}


def _ops(grid: Grid):
    """Cached 1D difference matrices (D1 along x1, D3 along x3)."""
    key = (grid.L, grid.n1, grid.n3)
    if key not in _OP_CACHE:
        _OP_CACHE[key] = (
            _diff_matrix(grid.n1, grid.h1),
            _diff_matrix(grid.n3, grid.h3),
        )
    return _OP_CACHE[key]


def d1(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Discrete d/dx1 of a scalar field."""
    D1, _ = _ops(grid)
    return D1 @ f


def d3(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Discrete d/dx3 of a scalar field."""
    _, D3 = _ops(grid)
    return f @ D3.T


def d1_adjoint(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Plain transpose of the d/dx1 stencil applied to a field."""
    D1, _ = _ops(grid)
    return D1.T @ f


def d3_adjoint(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Plain transpose of the d/dx3 stencil applied to a field."""
    _, D3 = _ops(grid)
    return f @ D3


def gradient(grid: Grid, f: np.ndarray) -> np.ndarray:
    """(d1 f, d3 f); exact on affine fields."""
    return np.stack([d1(grid, f), d3(grid, f)])


def divergence(grid: Grid, v: np.ndarray) -> np.ndarray:
    """d1 v1 + d3 v3 with the same stencils as ``gradient``."""
    return d1(grid, v[0]) + d3(grid, v[1])


def grad_perp(grid: Grid, psi: np.ndarray) -> np.ndarray:
    """(-d3 psi, d1 psi): stream-function velocity m1 = -d3 psi, m3 = d1 psi.

    divergence(grad_perp(psi)) vanishes identically because the axis-0 and
    axis-1 stencils commute.
    """
    return np.stack([-d3(grid, psi), d1(grid, psi)])


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Trapezoidal integral over the strip (fixed reduction order)."""
    return float(grid.w1 @ (f @ grid.w3))


def average_x3(grid: Grid, f: np.ndarray) -> np.ndarray:
    """(1/2) * trapezoidal x3-integral per x1 column, shape (n1,)."""
    return (f @ grid.w3) / 2.0


def integrate_x1(grid: Grid, g: np.ndarray) -> float:
    """Trapezoidal integral of a 1D profile over [-L, L]."""
    return float(grid.w1 @ g)


# ---------------------------------------------------------------------------
# field dump: flat little-endian float64, row-major (x1 outer, x3 inner),
# components stacked, with a JSON sidecar
# ---------------------------------------------------------------------------

def save_field(path, grid: Grid, values: np.ndarray, components, name: str):
    """Write ``<path>.f64`` and ``<path>.json``; bit-exact round trip."""
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.shape != (len(components), grid.n1, grid.n3):
        raise ValidationError(
            f"field shape {values.shape} does not match {len(components)} x {grid.shape}"
        )
    arr.tofile(path.with_suffix(".f64"))
    sidecar = {
        "L": grid.L,
        "n1": grid.n1,
        "n3": grid.n3,
        "components": list(components),
        "name": name,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))


def load_field(path):
    """Read a dump written by ``save_field``; returns (grid, values, sidecar)."""
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    grid = build_grid(sidecar["L"], sidecar["n1"], sidecar["n3"])
    ncomp = len(sidecar["components"])
    raw = np.fromfile(path.with_suffix(".f64"), dtype="<f8")
    values = raw.reshape(ncomp, grid.n1, grid.n3)
    if ncomp == 1:
        values = values[0]
    return grid, values, sidecar


def export_csv(path, grid: Grid, columns: dict):
    """CSV with header ``x1,x3,<components...>`` and one row per node."""
    X1, X3 = grid.meshgrid()
    names = list(columns)
    cols = [X1.ravel(), X3.ravel()] + [np.asarray(columns[k]).ravel() for k in names]
    header = ",".join(["x1", "x3"] + names)
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")
