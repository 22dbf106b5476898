"""Piecewise-(bi)linear DG fields stored by cell corner values.

A 1D field keeps an array of shape (n, 2): values at the left/right endpoint
of each cell.  A 2D field keeps (nx, ny, 2, 2): values at the four corners,
indexed [i, j, a, b] with a the x-corner (0 = left) and b the y-corner
(0 = bottom).  Corner storage makes the corner-interpolation projection, the
limiters and the cell-average identities exact and cheap:

    1D:  mean(cell) = (v_left + v_right) / 2
    2D:  mean(cell) = (sum of 4 corners) / 4

Trace conventions at an interface/edge: the minus trace comes from the cell
on the lower-coordinate side, the plus trace from the higher-coordinate side.
A missing boundary trace is defined as 0, so jump [v] = v_plus - v_minus and
average {v} = (v_plus + v_minus) / 2 are well defined on every edge.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh1D, Mesh2D, gauss2


@dataclass
class DGField:
    """Corner values of a piecewise-(bi)linear field on a mesh."""

    mesh: Mesh1D | Mesh2D
    values: np.ndarray

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.mesh, Mesh1D) else 2

    def cell_averages(self) -> np.ndarray:
        return cell_averages(self.values)

    def copy(self) -> "DGField":
        return DGField(self.mesh, self.values.copy())


def interpolate_corners(f, mesh: Mesh1D | Mesh2D) -> DGField:
    """Project a function onto the DG space by sampling it at cell corners.

    ``f`` must be numpy-vectorized: f(x) in 1D, f(x, y) in 2D.  Continuous
    functions produce globally continuous fields because shared corners are
    sampled at identical coordinates.
    """
    if isinstance(mesh, Mesh1D):
        vals = np.asarray(f(mesh.corner_coords()), dtype=float)
        expected = (mesh.n_cells, 2)
    else:
        X, Y = mesh.corner_coords()
        vals = np.asarray(f(X, Y), dtype=float)
        expected = (mesh.nx, mesh.ny, 2, 2)
    if vals.shape != expected:
        vals = np.broadcast_to(vals, expected).astype(float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("interpolated field contains non-finite values")
    return DGField(mesh, np.ascontiguousarray(vals))


def porosity_interpolant(mesh: Mesh1D | Mesh2D, phi) -> DGField:
    """Interpolate a porosity function; values must be strictly positive."""
    field = interpolate_corners(phi, mesh)
    if field.values.min() <= 0.0:
        raise ValueError("porosity must be positive at every cell corner")
    return field


def cell_averages(values: np.ndarray) -> np.ndarray:
    """Cell averages of corner-value arrays, (n,) or (nx, ny)."""
    if values.ndim == 2:
        return values.mean(axis=1)
    return values.mean(axis=(2, 3))


def cell_average(field: DGField, index) -> float:
    """Average over one cell; ``index`` is an int (1D) or an (i, j) pair."""
    return float(cell_averages(field.values)[index])


def concentration_from_r(r: DGField, phi: DGField) -> DGField:
    """Corner interpolation of r / phi; maps 0 <= r <= phi to 0 <= c <= 1."""
    return DGField(r.mesh, r.values / phi.values)


def gauss_values_1d(values: np.ndarray) -> np.ndarray:
    """Values of a 1D field at the two volume Gauss points per cell, (n, 2)."""
    G = gauss2().corner_to_gauss
    return values @ G.T


def gauss_values_2d(values: np.ndarray) -> np.ndarray:
    """Values at the 2x2 volume Gauss points per cell, (nx, ny, 2, 2) [g, h]."""
    G = gauss2().corner_to_gauss
    return np.einsum("ijab,ga,hb->ijgh", values, G, G, optimize=True)


def traces_1d(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-sided traces at all n + 1 interfaces of a 1D field.

    Returns (minus, plus); the missing boundary trace is 0 by convention.
    """
    n = values.shape[0]
    minus = np.zeros(n + 1)
    plus = np.zeros(n + 1)
    minus[1:] = values[:, 1]
    plus[:n] = values[:, 0]
    return minus, plus


def edge_values_2d(values: np.ndarray):
    """Per-cell field values at the Gauss points of the four cell edges.

    Returns (west, east, south, north), each (nx, ny, 2).  For west/east the
    Gauss index runs along y; for south/north along x.
    """
    G = gauss2().corner_to_gauss
    west = np.einsum("ijb,gb->ijg", values[:, :, 0, :], G)
    east = np.einsum("ijb,gb->ijg", values[:, :, 1, :], G)
    south = np.einsum("ija,ga->ijg", values[:, :, :, 0], G)
    north = np.einsum("ija,ga->ijg", values[:, :, :, 1], G)
    return west, east, south, north


def traces_vertical(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Traces at the Gauss points of all vertical edges, each (nx+1, ny, 2)."""
    west, east, _, _ = edge_values_2d(values)
    nx, ny = values.shape[:2]
    minus = np.zeros((nx + 1, ny, 2))
    plus = np.zeros((nx + 1, ny, 2))
    minus[1:] = east
    plus[:nx] = west
    return minus, plus


def traces_horizontal(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Traces at the Gauss points of all horizontal edges, each (nx, ny+1, 2)."""
    _, _, south, north = edge_values_2d(values)
    nx, ny = values.shape[:2]
    minus = np.zeros((nx, ny + 1, 2))
    plus = np.zeros((nx, ny + 1, 2))
    minus[:, 1:] = north
    plus[:, :ny] = south
    return minus, plus


def jump(minus: np.ndarray, plus: np.ndarray) -> np.ndarray:
    """[v] = v_plus - v_minus."""
    return plus - minus


def average(minus: np.ndarray, plus: np.ndarray) -> np.ndarray:
    """{v} = (v_plus + v_minus) / 2."""
    return 0.5 * (plus + minus)


def field_to_csv(field: DGField) -> str:
    """Serialize a field as CSV, one row per cell corner."""
    buf = io.StringIO()
    if field.dim == 1:
        buf.write("x,value\n")
        coords = field.mesh.corner_coords()
        for x, v in zip(coords.ravel(), field.values.ravel()):
            buf.write(f"{x!r},{v!r}\n")
    else:
        buf.write("x,y,value\n")
        X, Y = field.mesh.corner_coords()
        for x, y, v in zip(X.ravel(), Y.ravel(), field.values.ravel()):
            buf.write(f"{x!r},{y!r},{v!r}\n")
    return buf.getvalue()
