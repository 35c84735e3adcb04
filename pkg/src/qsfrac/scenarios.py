"""Small fixtures shared by the CLI, the acceptance checks and the tests."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .config import BoundarySpec, RunConfig
from .energy import ModelParams
from .mesh import GridSpec, Mesh, build_mesh
from .solver import SolveOptions


def strip_grid(n: int, dx: float = 1.0) -> GridSpec:
    """A single row of n free cells inside a two-ring frame."""
    return GridSpec((n + 4) * dx, 5 * dx, n + 4, 5, 2 * dx)


def strip_threshold_time(n: int, amplitude: float, kappa: float, dx: float = 1.0) -> float:
    """First time the uncut linear strip stores more energy than the cheapest release.

    Under uniaxial stretch the strip relaxes fully once its top and bottom
    rows and one end are cut (2n + 1 interfaces), leaving it hanging from a
    frame edge on which the datum is a translation.  The released energy is
    n dx^2 (a t)^2.
    """
    return float(np.sqrt(kappa * (2 * n + 1) * dx / (n * dx * dx * amplitude**2)))


def strip_config(
    n: int = 3,
    kappa: float = 0.15,
    amplitude: float = 1.0,
    level: int = 3,
    model: str = "linear",
    program: str = "uniaxial_stretch",
    params: ModelParams | None = None,
) -> RunConfig:
    p = params or ModelParams(0.1, 0.75, 0.7, kappa, 0.25)
    return RunConfig(
        grid=strip_grid(n),
        model=model,
        params=p,
        partition_level=level,
        boundary=BoundarySpec(program, amplitude, 0),
    )


def notch(mesh: Mesh, length: int = 2) -> tuple[int, ...]:
    """Vertical cut of ``length`` interfaces left of the centre line."""
    cx, cy = mesh.spec.cells_x, mesh.spec.cells_y
    j0 = cy // 2 - length // 2
    return tuple(mesh.vertical_iface(cx // 2 - 1, j) for j in range(j0, j0 + length))


def ladder_config() -> RunConfig:
    """Notched block under sub-threshold uniaxial stretch.

    Cells are 4 length units wide so the second-gradient weight
    eps^(2 - 2 beta) stays below dx^2 across the ladder, which is where its
    asymptotic decay is visible on a fixed mesh.
    """
    grid = GridSpec(32.0, 32.0, 8, 8, 4.0)
    mesh = build_mesh(grid)
    return RunConfig(
        grid=grid,
        model="both",
        params=ModelParams(0.1, 0.7, 0.68, 1000.0, 0.25),
        ladder=(0.2, 0.1, 0.05, 0.025),
        sample_times=(0.25, 0.5, 1.0),
        partition_level=2,
        boundary=BoundarySpec("uniaxial_stretch", 0.5, 0),
        solve=SolveOptions(),
        initial_crack=notch(mesh),
    )


def block_cells(mesh: Mesh, i0: int, j0: int, w: int, h: int) -> list[int]:
    return [mesh.cell_id(i, j) for j in range(j0, j0 + h) for i in range(i0, i0 + w)]


def block_ring(mesh: Mesh, i0: int, j0: int, w: int, h: int) -> tuple[int, ...]:
    """Interfaces enclosing a rectangular block of cells."""
    return tuple(sorted(mesh.cell_boundary(block_cells(mesh, i0, j0, w, h))))


def unit_grid(n: int = 8) -> GridSpec:
    return GridSpec(1.0, 1.0, n, n, 1.0 / n)


def separating_cut(mesh: Mesh) -> tuple[int, ...]:
    """Cut the free region along both sides and across its middle row line.

    The upper half then hangs only from the top frame, the lower half only
    from the bottom frame.
    """
    m = mesh.spec.margin_cells
    cx, cy = mesh.spec.cells_x, mesh.spec.cells_y
    rows = range(m, cy - m)
    ids = [mesh.vertical_iface(m - 1, j) for j in rows]
    ids += [mesh.vertical_iface(cx - m - 1, j) for j in rows]
    jm = (m + cy - m) // 2 - 1
    ids += [mesh.horizontal_iface(i, jm) for i in range(m, cx - m)]
    return tuple(sorted(ids))


def with_model(cfg: RunConfig, model: str) -> RunConfig:
    return replace(cfg, model=model)
