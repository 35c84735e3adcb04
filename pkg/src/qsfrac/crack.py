"""Crack sets, their irreversible accumulation, and connectivity of the cracked body."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import chain

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import TimeOrderError
from .mesh import Mesh


@dataclass(frozen=True)
class CrackState:
    broken: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "broken", frozenset(int(k) for k in self.broken))

    def __or__(self, other) -> "CrackState":
        other_ids = other.broken if isinstance(other, CrackState) else other
        return CrackState(self.broken | frozenset(other_ids))

    def __len__(self) -> int:
        return len(self.broken)

    def sorted(self) -> tuple[int, ...]:
        return tuple(sorted(self.broken))


@dataclass
class CrackHistory:
    """Time-ordered crack snapshots with their running union."""

    times: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # CrackState per entry, as reported
    cumulative: list = field(default_factory=list)  # CrackState per entry

    @property
    def current(self) -> CrackState:
        return self.cumulative[-1] if self.cumulative else CrackState()

    @property
    def last_time(self):
        return self.times[-1] if self.times else None

    def __len__(self) -> int:
        return len(self.times)

    def copy(self) -> "CrackHistory":
        return CrackHistory(list(self.times), list(self.steps), list(self.cumulative))


def accumulate(history: CrackHistory, t: float, new: CrackState) -> CrackHistory:
    """Return a new history with ``new`` appended at time ``t``."""
    if history.times and not t > history.times[-1]:
        raise TimeOrderError(
            f"accumulate: time {t} not after last recorded time {history.times[-1]}"
        )
    out = history.copy()
    out.times.append(t)
    out.steps.append(new)
    out.cumulative.append(history.current | new)
    return out


def crack_measure(mesh: Mesh, crack) -> float:
    ids = crack.broken if isinstance(crack, CrackState) else crack
    ids = list(ids)
    return float(mesh.iface_length[ids].sum()) if ids else 0.0


@dataclass(frozen=True, eq=False)
class DomainPartition:
    """Connected components of cells joined through intact interfaces.

    Components are numbered by their smallest cell id.
    """

    labels: np.ndarray  # (n_cells,) component id
    touches_frame: np.ndarray  # (n_components,) bool
    cells: tuple  # per component: sorted cell-id array
    boundary: tuple  # per component: frozenset of boundary interface ids

    @property
    def n_components(self) -> int:
        return len(self.cells)

    @property
    def interior(self) -> list[int]:
        """Ids of components that do not touch the frame."""
        return np.flatnonzero(~self.touches_frame).tolist()


def _intact_mask(mesh: Mesh, crack) -> np.ndarray:
    ids = crack.broken if isinstance(crack, CrackState) else crack
    intact = np.ones(mesh.n_ifaces, dtype=bool)
    ids = list(ids)
    if ids:
        intact[ids] = False
    return intact


def components(mesh: Mesh, crack) -> DomainPartition:
    intact = _intact_mask(mesh, crack)
    e = mesh.iface_cells[intact]
    n = mesh.n_cells
    graph = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    # renumber by first cell so labels are stable
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels = rank[inverse]
    k = len(order)
    touches = np.zeros(k, dtype=bool)
    touches[np.unique(labels[mesh.in_frame])] = True
    cells = tuple(np.flatnonzero(labels == j) for j in range(k))
    lab_if = labels[mesh.iface_cells]
    cut = np.flatnonzero(lab_if[:, 0] != lab_if[:, 1])
    bnd: list[set] = [set() for _ in range(k)]
    for f in cut.tolist():
        bnd[lab_if[f, 0]].add(f)
        bnd[lab_if[f, 1]].add(f)
    return DomainPartition(labels, touches, cells, tuple(frozenset(b) for b in bnd))


def bad_set(mesh: Mesh, crack) -> tuple[frozenset, frozenset]:
    """Cells cut off from the frame (B) and the rest (G).

    B is the union of all components not touching the frame.  Near the frame
    the answer depends on the mesh resolution, since a piece is either
    attached through an intact interface or not.
    """
    part = components(mesh, crack)
    bad = frozenset(chain.from_iterable(part.cells[j].tolist() for j in part.interior))
    good = frozenset(range(mesh.n_cells)) - bad
    return bad, good
