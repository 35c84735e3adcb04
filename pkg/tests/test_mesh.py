import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsfrac.errors import InvalidSpecError
from qsfrac.mesh import HORIZONTAL, VERTICAL, GridSpec, build_mesh, crackable_interfaces


def adjacency_scan(mesh):
    """Neighbouring cell pairs found by comparing centroids directly."""
    c = mesh.centroids
    pairs = set()
    for a in range(mesh.n_cells):
        for b in range(a + 1, mesh.n_cells):
            d = np.abs(c[b] - c[a])
            if np.isclose(d.sum(), mesh.dx) and np.isclose(d.max(), mesh.dx):
                pairs.add((a, b))
    return pairs


def test_interfaces_match_brute_force_adjacency():
    mesh = build_mesh(GridSpec(6.0, 5.0, 6, 5, 1.0))
    found = {tuple(sorted(p)) for p in mesh.iface_cells.tolist()}
    assert found == adjacency_scan(mesh)
    assert mesh.n_ifaces == 5 * 5 + 6 * 4


def test_grid_is_centred_and_frame_has_margin():
    mesh = build_mesh(GridSpec(8.0, 6.0, 8, 6, 2.0))
    assert np.allclose(mesh.nodes.min(axis=0), [-4, -3])
    assert np.allclose(mesh.nodes.max(axis=0), [4, 3])
    assert mesh.frame_cells.size == 8 * 6 - 4 * 2
    inner = mesh.centroids[mesh.omega_cells]
    assert np.all(np.abs(inner[:, 0]) < 2) and np.all(np.abs(inner[:, 1]) < 1)


def test_interface_geometry():
    mesh = build_mesh(GridSpec(4.0, 4.0, 4, 4, 1.0))
    for k in range(mesh.n_ifaces):
        a, b = mesh.iface_cells[k]
        d = mesh.centroids[b] - mesh.centroids[a]
        assert np.allclose(d / mesh.dx, mesh.iface_normal[k])
        assert mesh.iface_orient[k] == (VERTICAL if abs(d[0]) > 0 else HORIZONTAL)
        p, q = mesh.nodes[mesh.iface_nodes[k]]
        assert np.isclose(np.linalg.norm(q - p), mesh.iface_length[k])
        # shared edge is orthogonal to the normal and centred between the cells
        assert np.isclose((q - p) @ mesh.iface_normal[k], 0)
        assert np.allclose((p + q) / 2, (mesh.centroids[a] + mesh.centroids[b]) / 2)


def test_tied_slots_sit_on_the_same_node():
    mesh = build_mesh(GridSpec(5.0, 4.0, 5, 4, 1.0))
    for k in range(mesh.n_ifaces):
        a, b = mesh.iface_cells[k]
        for sa, sb in mesh.iface_slots[k]:
            assert mesh.cell_nodes[a, sa] == mesh.cell_nodes[b, sb]


def test_crackable_excludes_frame_frame_only():
    mesh = build_mesh(GridSpec(5.0, 5.0, 5, 5, 1.0))
    ids = crackable_interfaces(mesh)
    assert list(ids) == sorted(ids)
    assert len(ids) == 3 * 4 * 2  # 3x3 free block: 12 internal + 12 to the frame
    for k in ids:
        assert not mesh.in_frame[mesh.iface_cells[k]].all()


@pytest.mark.parametrize(
    "spec, msg",
    [
        (GridSpec(2.0, 5.0, 2, 5, 1.0), "cells_x, cells_y >= 4"),
        (GridSpec(4.0, 5.0, 4, 4, 1.0), "square"),
        (GridSpec(4.0, 4.0, 4, 4, 1.5), "whole number"),
        (GridSpec(4.0, 4.0, 4, 4, 0.0), "margin > 0"),
    ],
)
def test_invalid_specs(spec, msg):
    with pytest.raises(InvalidSpecError, match=msg):
        build_mesh(spec)


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 9), st.integers(4, 9), st.sampled_from([0.5, 1.0, 2.0]))
def test_counts_and_boundary(nx, ny, dx):
    mesh = build_mesh(GridSpec(nx * dx, ny * dx, nx, ny, dx))
    assert mesh.n_cells == nx * ny
    assert mesh.n_nodes == (nx + 1) * (ny + 1)
    assert mesh.n_ifaces == (nx - 1) * ny + nx * (ny - 1)
    assert np.allclose(mesh.iface_length, dx)
    # each cell lists its own interfaces, and a single cell's boundary is all of them
    c = mesh.cell_id(nx // 2, ny // 2)
    own = {int(k) for k in mesh.cell_ifaces[c] if k >= 0}
    assert mesh.cell_boundary([c]) == own
    assert mesh.cell_boundary(range(mesh.n_cells)) == set()
