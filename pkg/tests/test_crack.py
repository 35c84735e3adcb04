from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsfrac import scenarios as sc
from qsfrac.crack import CrackHistory, CrackState, accumulate, bad_set, components, crack_measure
from qsfrac.errors import TimeOrderError
from qsfrac.mesh import GridSpec, build_mesh, crackable_interfaces


def bfs_labels(mesh, broken):
    """Component labels by breadth-first search, numbered by smallest cell."""
    nbrs = [[] for _ in range(mesh.n_cells)]
    for k, (a, b) in enumerate(mesh.iface_cells.tolist()):
        if k not in broken:
            nbrs[a].append(b)
            nbrs[b].append(a)
    lab = -np.ones(mesh.n_cells, dtype=int)
    n = 0
    for s in range(mesh.n_cells):
        if lab[s] >= 0:
            continue
        lab[s] = n
        q = deque([s])
        while q:
            c = q.popleft()
            for d in nbrs[c]:
                if lab[d] < 0:
                    lab[d] = n
                    q.append(d)
        n += 1
    return lab


MESH = build_mesh(GridSpec(7.0, 6.0, 7, 6, 1.0))
CRACKABLE = crackable_interfaces(MESH)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.sampled_from(CRACKABLE), max_size=30))
def test_components_match_bfs(broken):
    part = components(MESH, broken)
    assert np.array_equal(part.labels, bfs_labels(MESH, broken))
    B, G = bad_set(MESH, broken)
    assert B.isdisjoint(G) and len(B | G) == MESH.n_cells
    assert not (B & set(MESH.frame_cells.tolist()))
    for j in range(part.n_components):
        assert part.touches_frame[j] == bool(MESH.in_frame[part.cells[j]].any())


def test_enclosed_block_is_bad():
    ring = sc.block_ring(MESH, 2, 2, 2, 2)
    B, _ = bad_set(MESH, ring)
    assert B == frozenset(sc.block_cells(MESH, 2, 2, 2, 2))
    part = components(MESH, ring)
    assert part.n_components == 2
    assert part.boundary[1] == frozenset(ring)


def test_measure_counts_lengths():
    assert crack_measure(MESH, CrackState(frozenset(CRACKABLE[:5]))) == pytest.approx(5.0)
    assert crack_measure(MESH, ()) == 0.0


def test_history_accumulates_and_rejects_going_back():
    h = CrackHistory()
    h = accumulate(h, 0.0, CrackState(frozenset({1, 2})))
    h = accumulate(h, 0.5, CrackState(frozenset({2, 3})))
    assert h.current.broken == {1, 2, 3}
    assert h.last_time == 0.5
    with pytest.raises(TimeOrderError):
        accumulate(h, 0.25, CrackState(frozenset()))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sets(st.sampled_from(CRACKABLE), max_size=6), min_size=1, max_size=6))
def test_history_is_nested(steps):
    h = CrackHistory()
    for n, s in enumerate(steps):
        before = h.current.broken
        h = accumulate(h, n / len(steps), CrackState(frozenset(s)))
        assert before <= h.current.broken
