"""Uniform tensor-product meshes and the two-point Gauss-Legendre rule.

The solvers operate on uniform partitions of an interval [x_lo, x_hi] or a
rectangle [x_lo, x_hi] x [y_lo, y_hi].  Element data is kept as plain numpy
arrays so the discretization modules can vectorize over cells.

All quadrature in the package uses the tensor-product two-point Gauss rule
(exact for polynomials of degree <= 3 per direction).  On the reference cell
[-1/2, 1/2] the points are +-1/(2*sqrt(3)) with weights 1/2, 1/2.  The same
rule links cell corner values to Gauss-point values of a (bi)linear field:

    v(g1) = mu1 * v_left + mu2 * v_right,   mu1 = (3 + sqrt(3)) / 6,
    v(g2) = mu2 * v_left + mu1 * v_right,   mu2 = (3 - sqrt(3)) / 6,

and the map is invertible, so traces can be recovered from Gauss values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT3 = float(np.sqrt(3.0))

#: interpolation weights from cell endpoints to the two Gauss points
MU1 = (3.0 + SQRT3) / 6.0
MU2 = (3.0 - SQRT3) / 6.0


@dataclass(frozen=True)
class GaussRule2:
    """Two-point Gauss rule on the reference cell [-1/2, 1/2].

    Attributes:
        points: quadrature abscissae, shape (2,)
        weights: quadrature weights, shape (2,); they sum to 1 so that
            integral over a cell = cell measure * weighted sum
        corner_to_gauss: matrix G with G[g, a] the weight of corner a in the
            value of a linear function at Gauss point g
        gauss_to_corner: inverse of corner_to_gauss
    """

    points: np.ndarray
    weights: np.ndarray
    corner_to_gauss: np.ndarray
    gauss_to_corner: np.ndarray


_G = np.array([[MU1, MU2], [MU2, MU1]])
_RULE = GaussRule2(
    points=np.array([-1.0 / (2.0 * SQRT3), 1.0 / (2.0 * SQRT3)]),
    weights=np.array([0.5, 0.5]),
    corner_to_gauss=_G,
    gauss_to_corner=np.linalg.inv(_G),
)


def gauss2() -> GaussRule2:
    """Return the shared two-point Gauss rule used everywhere in the package."""
    return _RULE


@dataclass(frozen=True)
class Mesh1D:
    """Uniform partition of [x_lo, x_hi] into n_cells cells.

    Immutable after construction; derived arrays are precomputed.
    """

    n_cells: int
    x_lo: float
    x_hi: float
    dx: float = field(init=False)
    interfaces: np.ndarray = field(init=False)  # (n_cells + 1,)
    centers: np.ndarray = field(init=False)  # (n_cells,)

    def __post_init__(self):
        dx = (self.x_hi - self.x_lo) / self.n_cells
        object.__setattr__(self, "dx", dx)
        object.__setattr__(
            self, "interfaces", self.x_lo + dx * np.arange(self.n_cells + 1)
        )
        object.__setattr__(
            self, "centers", self.x_lo + dx * (np.arange(self.n_cells) + 0.5)
        )

    @property
    def n_interfaces(self) -> int:
        return self.n_cells + 1

    def corner_coords(self) -> np.ndarray:
        """Coordinates of the two corners of every cell, shape (n_cells, 2)."""
        return np.stack([self.interfaces[:-1], self.interfaces[1:]], axis=1)

    def gauss_coords(self) -> np.ndarray:
        """Coordinates of the two volume Gauss points per cell, (n_cells, 2)."""
        return self.centers[:, None] + self.dx * _RULE.points[None, :]


@dataclass(frozen=True)
class Mesh2D:
    """Uniform nx-by-ny partition of a rectangle.

    Edges split into (nx + 1) * ny vertical and nx * (ny + 1) horizontal ones.
    Boundary edges carry an orientation tag through their index alone: the
    right column of vertical edges and the top row of horizontal edges are the
    outflow-style part of the boundary (outward normal equals the fixed edge
    normal); the left column and bottom row are the inflow-style part.
    """

    nx: int
    ny: int
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    dx: float = field(init=False)
    dy: float = field(init=False)
    x_interfaces: np.ndarray = field(init=False)
    y_interfaces: np.ndarray = field(init=False)
    x_centers: np.ndarray = field(init=False)
    y_centers: np.ndarray = field(init=False)

    def __post_init__(self):
        dx = (self.x_hi - self.x_lo) / self.nx
        dy = (self.y_hi - self.y_lo) / self.ny
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)
        object.__setattr__(self, "x_interfaces", self.x_lo + dx * np.arange(self.nx + 1))
        object.__setattr__(self, "y_interfaces", self.y_lo + dy * np.arange(self.ny + 1))
        object.__setattr__(self, "x_centers", self.x_lo + dx * (np.arange(self.nx) + 0.5))
        object.__setattr__(self, "y_centers", self.y_lo + dy * (np.arange(self.ny) + 0.5))

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_vertical_edges(self) -> int:
        return (self.nx + 1) * self.ny

    @property
    def n_horizontal_edges(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_edges(self) -> int:
        return self.n_vertical_edges + self.n_horizontal_edges

    def corner_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) coordinates of cell corners, each shaped (nx, ny, 2, 2).

        Index [i, j, a, b]: corner a in x (0 = left) and b in y (0 = bottom)
        of cell (i, j).
        """
        xc = np.stack([self.x_interfaces[:-1], self.x_interfaces[1:]], axis=1)
        yc = np.stack([self.y_interfaces[:-1], self.y_interfaces[1:]], axis=1)
        X = np.broadcast_to(xc[:, None, :, None], (self.nx, self.ny, 2, 2))
        Y = np.broadcast_to(yc[None, :, None, :], (self.nx, self.ny, 2, 2))
        return np.ascontiguousarray(X), np.ascontiguousarray(Y)

    def gauss_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) of the 2x2 volume Gauss points per cell, (nx, ny, 2, 2).

        Index [i, j, g, h]: Gauss point g in x, h in y.
        """
        xg = self.x_centers[:, None] + self.dx * _RULE.points[None, :]
        yg = self.y_centers[:, None] + self.dy * _RULE.points[None, :]
        X = np.broadcast_to(xg[:, None, :, None], (self.nx, self.ny, 2, 2))
        Y = np.broadcast_to(yg[None, :, None, :], (self.nx, self.ny, 2, 2))
        return np.ascontiguousarray(X), np.ascontiguousarray(Y)

    def vertical_edge_gauss_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) at the two Gauss points of every vertical edge, (nx+1, ny, 2)."""
        yg = self.y_centers[:, None] + self.dy * _RULE.points[None, :]
        X = np.broadcast_to(self.x_interfaces[:, None, None], (self.nx + 1, self.ny, 2))
        Y = np.broadcast_to(yg[None, :, :], (self.nx + 1, self.ny, 2))
        return np.ascontiguousarray(X), np.ascontiguousarray(Y)

    def horizontal_edge_gauss_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) at the two Gauss points of every horizontal edge, (nx, ny+1, 2)."""
        xg = self.x_centers[:, None] + self.dx * _RULE.points[None, :]
        X = np.broadcast_to(xg[:, None, :], (self.nx, self.ny + 1, 2))
        Y = np.broadcast_to(self.y_interfaces[None, :, None], (self.nx, self.ny + 1, 2))
        return np.ascontiguousarray(X), np.ascontiguousarray(Y)


def build_mesh_1d(n_cells: int, x_lo: float = 0.0, x_hi: float = 2.0 * np.pi) -> Mesh1D:
    """Build a uniform 1D mesh; the bound-preserving analysis needs n >= 4."""
    if n_cells < 4:
        raise ValueError(f"need at least 4 cells, got {n_cells}")
    if not x_hi > x_lo:
        raise ValueError(f"empty domain [{x_lo}, {x_hi}]")
    return Mesh1D(n_cells=int(n_cells), x_lo=float(x_lo), x_hi=float(x_hi))


def build_mesh_2d(
    nx: int,
    ny: int,
    x_lo: float = 0.0,
    x_hi: float = 2.0 * np.pi,
    y_lo: float = 0.0,
    y_hi: float = 2.0 * np.pi,
) -> Mesh2D:
    """Build a uniform 2D mesh; at least 4 cells per direction."""
    if nx < 4 or ny < 4:
        raise ValueError(f"need at least 4 cells per direction, got ({nx}, {ny})")
    if not (x_hi > x_lo and y_hi > y_lo):
        raise ValueError("empty domain")
    return Mesh2D(
        nx=int(nx), ny=int(ny),
        x_lo=float(x_lo), x_hi=float(x_hi),
        y_lo=float(y_lo), y_hi=float(y_hi),
    )
