"""Structured square-cell grid over the outer domain with a Dirichlet frame.

The outer rectangle is centred at the origin.  Cells, nodes and interfaces
are enumerated row-major (x fastest).  Local corner order of a cell is
counter-clockwise from the lower-left corner::

    3 ---- 2
    |      |
    0 ---- 1
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpecError

# interface orientation tags
VERTICAL = 0  # shared edge is vertical, normal e1
HORIZONTAL = 1  # shared edge is horizontal, normal e2

_REL_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the outer domain and its frame.

    ``margin`` is the frame thickness in length units; it must be a positive
    whole number of cells.  Cells must be square.
    """

    width: float
    height: float
    cells_x: int
    cells_y: int
    margin: float

    @property
    def dx(self) -> float:
        return self.width / self.cells_x

    @property
    def margin_cells(self) -> int:
        return int(round(self.margin / self.dx))

    def validate(self) -> None:
        if self.cells_x < 4 or self.cells_y < 4:
            raise InvalidSpecError(
                f"GridSpec invariant violated: cells_x, cells_y >= 4 "
                f"(got {self.cells_x}x{self.cells_y})"
            )
        if not (self.width > 0 and self.height > 0):
            raise InvalidSpecError("GridSpec invariant violated: width, height > 0")
        dy = self.height / self.cells_y
        if abs(dy - self.dx) > _REL_TOL * self.dx:
            raise InvalidSpecError(
                f"GridSpec invariant violated: cells must be square "
                f"(dx={self.dx}, dy={dy})"
            )
        if self.margin <= 0:
            raise InvalidSpecError("GridSpec invariant violated: margin > 0")
        m = self.margin / self.dx
        if abs(m - round(m)) > 1e-6 or round(m) < 1:
            raise InvalidSpecError(
                f"GridSpec invariant violated: margin must be a whole number "
                f"(>= 1) of cells, got {m:g} cells"
            )


@dataclass(frozen=True, eq=False)
class Mesh:
    spec: GridSpec
    dx: float
    nodes: np.ndarray  # (n_nodes, 2)
    cell_nodes: np.ndarray  # (n_cells, 4)
    cell_ij: np.ndarray  # (n_cells, 2) column, row
    centroids: np.ndarray  # (n_cells, 2)
    in_frame: np.ndarray  # (n_cells,) bool
    iface_cells: np.ndarray  # (n_ifaces, 2) minus cell, plus cell
    iface_orient: np.ndarray  # (n_ifaces,) VERTICAL / HORIZONTAL
    iface_length: np.ndarray  # (n_ifaces,)
    iface_normal: np.ndarray  # (n_ifaces, 2) from minus to plus
    iface_nodes: np.ndarray  # (n_ifaces, 2)
    iface_slots: np.ndarray  # (n_ifaces, 2, 2) tied (minus slot, plus slot) pairs
    cell_ifaces: np.ndarray  # (n_cells, 4) left, right, bottom, top; -1 if none
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cell_nodes)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_ifaces(self) -> int:
        return len(self.iface_cells)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def frame_adjacent(self) -> np.ndarray:
        return self.in_frame[self.iface_cells].any(axis=1)

    @property
    def frame_frame(self) -> np.ndarray:
        return self.in_frame[self.iface_cells].all(axis=1)

    @property
    def frame_cells(self) -> np.ndarray:
        return np.flatnonzero(self.in_frame)

    @property
    def omega_cells(self) -> np.ndarray:
        return np.flatnonzero(~self.in_frame)

    def cell_id(self, i: int, j: int) -> int:
        return j * self.spec.cells_x + i

    def vertical_iface(self, i: int, j: int) -> int:
        """Interface between cell (i, j) and (i + 1, j)."""
        return int(self.cell_ifaces[self.cell_id(i, j), 1])

    def horizontal_iface(self, i: int, j: int) -> int:
        """Interface between cell (i, j) and (i, j + 1)."""
        return int(self.cell_ifaces[self.cell_id(i, j), 3])

    def cell_boundary(self, cells) -> set[int]:
        """Interfaces with exactly one adjacent cell in ``cells``."""
        inside = np.zeros(self.n_cells, dtype=bool)
        inside[list(cells)] = True
        flags = inside[self.iface_cells]
        return set(np.flatnonzero(flags[:, 0] != flags[:, 1]).tolist())


def build_mesh(spec: GridSpec) -> Mesh:
    spec.validate()
    cx, cy = spec.cells_x, spec.cells_y
    dx = spec.dx
    m = spec.margin_cells
    x0, y0 = -spec.width / 2, -spec.height / 2

    ii, jj = np.meshgrid(np.arange(cx + 1), np.arange(cy + 1))
    nodes = np.column_stack([x0 + ii.ravel() * dx, y0 + jj.ravel() * dx])

    ci, cj = np.meshgrid(np.arange(cx), np.arange(cy))
    ci, cj = ci.ravel(), cj.ravel()
    n00 = cj * (cx + 1) + ci
    cell_nodes = np.column_stack([n00, n00 + 1, n00 + cx + 2, n00 + cx + 1])
    centroids = np.column_stack([x0 + (ci + 0.5) * dx, y0 + (cj + 0.5) * dx])
    in_frame = (ci < m) | (ci >= cx - m) | (cj < m) | (cj >= cy - m)

    cells, orient, normals, inodes, slots = [], [], [], [], []
    cell_ifaces = -np.ones((cx * cy, 4), dtype=np.int64)
    for c in range(cx * cy):
        i, j = ci[c], cj[c]
        if i + 1 < cx:
            k = len(cells)
            cells.append((c, c + 1))
            orient.append(VERTICAL)
            normals.append((1.0, 0.0))
            inodes.append((cell_nodes[c, 1], cell_nodes[c, 2]))
            slots.append(((1, 0), (2, 3)))
            cell_ifaces[c, 1] = k
            cell_ifaces[c + 1, 0] = k
        if j + 1 < cy:
            k = len(cells)
            cells.append((c, c + cx))
            orient.append(HORIZONTAL)
            normals.append((0.0, 1.0))
            inodes.append((cell_nodes[c, 3], cell_nodes[c, 2]))
            slots.append(((3, 0), (2, 1)))
            cell_ifaces[c, 3] = k
            cell_ifaces[c + cx, 2] = k

    n_if = len(cells)
    return Mesh(
        spec=spec,
        dx=dx,
        nodes=nodes,
        cell_nodes=cell_nodes,
        cell_ij=np.column_stack([ci, cj]),
        centroids=centroids,
        in_frame=in_frame,
        iface_cells=np.asarray(cells, dtype=np.int64).reshape(n_if, 2),
        iface_orient=np.asarray(orient, dtype=np.int64),
        iface_length=np.full(n_if, dx),
        iface_normal=np.asarray(normals, dtype=float).reshape(n_if, 2),
        iface_nodes=np.asarray(inodes, dtype=np.int64).reshape(n_if, 2),
        iface_slots=np.asarray(slots, dtype=np.int64).reshape(n_if, 2, 2),
        cell_ifaces=cell_ifaces,
    )


def crackable_interfaces(mesh: Mesh) -> tuple[int, ...]:
    """Interfaces that may break: every interface not lying between two frame cells."""
    return tuple(np.flatnonzero(~mesh.frame_frame).tolist())
