"""Stored-energy densities, the linearized tensor, discrete fields and energies.

Matrices are handled in row-major vector form ``vec(F) = (F11, F12, F21, F22)``
with ``F[i, j] = d y_i / d x_j``.  Bulk integrals use 2x2 Gauss quadrature on
each bilinear cell; the second-gradient term uses centroid gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InconsistentTieError, NonPositiveDefiniteError, ParamsError
from .mesh import Mesh

DEFORMATION = "deformation"
DISPLACEMENT = "displacement"


@dataclass(frozen=True)
class ModelParams:
    """Scaling triple (epsilon, beta, gamma), toughness kappa, regularity radius r."""

    epsilon: float = 0.1
    beta: float = 0.75
    gamma: float = 0.7
    kappa: float = 1.0
    r: float = 0.25

    def validate(self) -> None:
        if not 2 / 3 < self.gamma < self.beta < 1:
            raise ParamsError(
                f"ModelParams invariant violated: 2/3 < gamma < beta < 1 "
                f"(got gamma={self.gamma}, beta={self.beta})"
            )
        for name in ("epsilon", "kappa", "r"):
            if not getattr(self, name) > 0:
                raise ParamsError(f"ModelParams invariant violated: {name} > 0")

    def with_epsilon(self, eps: float) -> "ModelParams":
        return ModelParams(eps, self.beta, self.gamma, self.kappa, self.r)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------

# rows map vec(F) to (F11 + F22, F21 - F12)
_L = np.array([[1.0, 0.0, 0.0, 1.0], [0.0, -1.0, 1.0, 0.0]])


def nearest_rotation(F: np.ndarray) -> np.ndarray:
    """Closest rotation to each 2x2 matrix in ``F`` (..., 2, 2).

    Returns Id where the matrix has no unique nearest rotation
    (F11 + F22 = F21 - F12 = 0).
    """
    F = np.asarray(F, dtype=float)
    a = F[..., 0, 0] + F[..., 1, 1]
    b = F[..., 1, 0] - F[..., 0, 1]
    s = np.hypot(a, b)
    safe = s > 0
    c = np.where(safe, a / np.where(safe, s, 1.0), 1.0)
    sn = np.where(safe, b / np.where(safe, s, 1.0), 0.0)
    R = np.empty(F.shape)
    R[..., 0, 0] = c
    R[..., 0, 1] = -sn
    R[..., 1, 0] = sn
    R[..., 1, 1] = c
    return R


def dist2_so2(F: np.ndarray) -> np.ndarray:
    """Squared Frobenius distance to SO(2)."""
    D = np.asarray(F, dtype=float) - nearest_rotation(F)
    return np.einsum("...ij,...ij->...", D, D)


class Density:
    """Frame-indifferent stored energy density acting on (..., 2, 2) arrays.

    Subclasses provide ``value`` and ``grad``; ``hess`` defaults to central
    differences of the gradient and returns (..., 4, 4) in vec ordering.
    """

    name = "abstract"
    satisfies_growth = True

    def value(self, F: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, F: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.sqrt(np.einsum("...ij,...ij->...", F, F)))
        out = np.empty(F.shape[:-2] + (4, 4))
        for k in range(4):
            E = np.zeros(4)
            E[k] = 1.0
            dF = h[..., None, None] * E.reshape(2, 2)
            dg = self.grad(F + dF) - self.grad(F - dF)
            out[..., :, k] = dg.reshape(F.shape[:-2] + (4,)) / (2 * h[..., None])
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class DistanceDensity(Density):
    """W(F) = dist^2(F, SO(2)) = |F|^2 + 2 - 2 sqrt(|F|^2 + 2 det F).

    Evaluated through the split of F into its conformal part (multiple of a
    rotation) and anticonformal part, which are orthogonal:
    ``W = 2 (rho - 1)^2 + |F_anti|^2`` with ``rho`` the conformal scale.  This
    avoids the cancellation of the closed form near SO(2).  A scale within a
    few ulp of 1 is snapped to 1, so floating-point rotations give W = 0.
    """

    name = "distance"
    snap = 4 * np.finfo(float).eps

    def _split(self, F):
        F = np.asarray(F, dtype=float)
        p = 0.5 * (F[..., 0, 0] + F[..., 1, 1])
        q = 0.5 * (F[..., 1, 0] - F[..., 0, 1])
        m = 0.5 * (F[..., 0, 0] - F[..., 1, 1])
        n = 0.5 * (F[..., 0, 1] + F[..., 1, 0])
        rho = np.hypot(p, q)
        dev = np.where(np.abs(rho - 1) <= self.snap, 0.0, rho - 1)
        return F, p, q, m, n, rho, dev

    def value(self, F):
        _, _, _, m, n, _, dev = self._split(F)
        return 2 * dev * dev + 2 * (m * m + n * n)

    def grad(self, F):
        # DW = 2 (F - R*) = 2 (1 - 1/rho) F_conf + 2 F_anti
        F, p, q, m, n, rho, dev = self._split(F)
        safe = rho > 0
        f = np.where(safe, dev / np.where(safe, rho, 1.0), 0.0)
        G = np.empty(F.shape)
        G[..., 0, 0] = f * p + m
        G[..., 1, 1] = f * p - m
        G[..., 1, 0] = f * q + n
        G[..., 0, 1] = -f * q + n
        # rho = 0: nearest rotation taken as Id
        G[..., 0, 0] = np.where(safe, G[..., 0, 0], m - 1)
        G[..., 1, 1] = np.where(safe, G[..., 1, 1], -m - 1)
        return 2 * G

    def hess(self, F):
        F = np.asarray(F, dtype=float)
        a = F[..., 0, 0] + F[..., 1, 1]
        b = F[..., 1, 0] - F[..., 0, 1]
        s = np.hypot(a, b)
        safe = s > 0
        inv = np.where(safe, 1.0 / np.where(safe, s, 1.0), 0.0)
        c, sn = a * inv, b * inv
        # projector orthogonal to (c, sn), divided by s
        P = np.empty(F.shape[:-2] + (2, 2))
        P[..., 0, 0] = sn * sn * inv
        P[..., 0, 1] = -c * sn * inv
        P[..., 1, 0] = -c * sn * inv
        P[..., 1, 1] = c * c * inv
        return 2.0 * np.eye(4) - 2.0 * np.einsum("ki,...kl,lj->...ij", _L, P, _L)


class KirchhoffDetDensity(Density):
    """|F^T F - Id|^2 / 8 + (det F - 1)^2 / 2.

    Frame indifferent and zero exactly on SO(2), but grows quartically, so it
    violates the linear-growth Lipschitz bound.  Experiments only.
    """

    name = "kirchhoff_det"
    satisfies_growth = False

    def value(self, F):
        F = np.asarray(F, dtype=float)
        C = np.swapaxes(F, -1, -2) @ F - np.eye(2)
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        return np.einsum("...ij,...ij->...", C, C) / 8 + (det - 1) ** 2 / 2

    def grad(self, F):
        F = np.asarray(F, dtype=float)
        C = np.swapaxes(F, -1, -2) @ F - np.eye(2)
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        cof = np.empty(F.shape)
        cof[..., 0, 0] = F[..., 1, 1]
        cof[..., 0, 1] = -F[..., 1, 0]
        cof[..., 1, 0] = -F[..., 0, 1]
        cof[..., 1, 1] = F[..., 0, 0]
        return 0.5 * F @ C + (det - 1)[..., None, None] * cof


DENSITIES: dict[str, Callable[[], Density]] = {
    DistanceDensity.name: DistanceDensity,
    KirchhoffDetDensity.name: KirchhoffDetDensity,
}


def get_density(name: str = "distance") -> Density:
    try:
        return DENSITIES[name]()
    except KeyError:
        raise ParamsError(f"unknown density {name!r}; choose from {sorted(DENSITIES)}")


def density_eval(W: Density, F) -> float:
    return float(W.value(np.asarray(F, dtype=float)))


def density_grad(W: Density, F) -> np.ndarray:
    return W.grad(np.asarray(F, dtype=float))


# ---------------------------------------------------------------------------
# linearized tensor
# ---------------------------------------------------------------------------

# orthonormal basis of symmetric 2x2 matrices in vec ordering:
# e11, e22, (e12 + e21)/sqrt(2)
SYM_BASIS = np.array(
    [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 2**-0.5, 2**-0.5, 0.0]]
)
SKEW = np.array([0.0, 2**-0.5, -(2**-0.5), 0.0])


@dataclass(frozen=True, eq=False)
class ElasticTensor:
    """Symmetric fourth-order tensor stored on symmetric strains.

    ``matrix`` is 3x3 in the orthonormal basis ``(e11, e22, sqrt(2) e12)``;
    ``full`` is the equivalent 4x4 operator on vec(A), which annihilates skew
    parts by construction.  ``raw`` keeps the unprojected finite-difference
    Hessian for diagnostics.
    """

    matrix: np.ndarray
    raw: np.ndarray | None = None

    @property
    def full(self) -> np.ndarray:
        return SYM_BASIS.T @ self.matrix @ SYM_BASIS

    def Q(self, A) -> np.ndarray:
        A = np.asarray(A, dtype=float)
        v = A.reshape(A.shape[:-2] + (4,))
        return np.einsum("...i,ij,...j->...", v, self.full, v)

    def stress(self, A) -> np.ndarray:
        """C A as a 2x2 matrix (symmetric)."""
        A = np.asarray(A, dtype=float)
        v = A.reshape(A.shape[:-2] + (4,))
        return (v @ self.full).reshape(A.shape)

    @property
    def skew_defect(self) -> float:
        """|Q_raw(K)| for the unit skew matrix K (0 for an exact linearization)."""
        if self.raw is None:
            return 0.0
        return float(abs(SKEW @ self.raw @ SKEW))


def linearized_tensor(W: Density, step: float = 1e-4) -> ElasticTensor:
    """C = D^2 W(Id) by second-order central differences, projected on Sym(2)."""
    I = np.eye(2).reshape(4)
    h = step

    def w(v):
        return float(W.value(v.reshape(2, 2)))

    E = np.eye(4)
    raw = np.empty((4, 4))
    w0 = w(I)
    for i in range(4):
        raw[i, i] = (w(I + h * E[i]) - 2 * w0 + w(I - h * E[i])) / h**2
        for j in range(i + 1, 4):
            raw[i, j] = raw[j, i] = (
                w(I + h * E[i] + h * E[j])
                - w(I + h * E[i] - h * E[j])
                - w(I - h * E[i] + h * E[j])
                + w(I - h * E[i] - h * E[j])
            ) / (4 * h**2)
    S = SYM_BASIS @ raw @ SYM_BASIS.T
    S = 0.5 * (S + S.T)
    if np.linalg.eigvalsh(S).min() <= 0:
        raise NonPositiveDefiniteError(
            f"linearized tensor of {W!r} is not positive definite on Sym(2)"
        )
    return ElasticTensor(matrix=S, raw=raw)


_TENSOR_CACHE: dict[str, ElasticTensor] = {}


def default_tensor(W: Density | None = None) -> ElasticTensor:
    W = W or DistanceDensity()
    if W.name not in _TENSOR_CACHE:
        _TENSOR_CACHE[W.name] = linearized_tensor(W)
    return _TENSOR_CACHE[W.name]


# ---------------------------------------------------------------------------
# shape functions
# ---------------------------------------------------------------------------

_XI = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_G = 3**-0.5
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])


def _ref_shape(pts: np.ndarray):
    """Bilinear shape values (npts, 4) and reference derivatives (npts, 4, 2)."""
    xi, eta = pts[:, 0:1], pts[:, 1:2]
    N = (1 + _XI[:, 0] * xi) * (1 + _XI[:, 1] * eta) / 4
    dxi = _XI[:, 0] * (1 + _XI[:, 1] * eta) / 4
    deta = _XI[:, 1] * (1 + _XI[:, 0] * xi) / 4
    return N, np.stack([dxi, deta], axis=-1)


GAUSS_N, _GAUSS_DREF = _ref_shape(GAUSS_POINTS)
_CENTROID_N, _CENTROID_DREF = _ref_shape(np.zeros((1, 2)))


def shape_gradients(dx: float, where: str = "gauss") -> np.ndarray:
    """Physical shape-function gradients (npts, 4 corners, 2)."""
    ref = _GAUSS_DREF if where == "gauss" else _CENTROID_DREF
    return ref * (2.0 / dx)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DofMap:
    """Node ties induced by a set of broken interfaces.

    ``slot_dof[c, a]`` is the degree of freedom carried by corner ``a`` of
    cell ``c``.  Corners of neighbouring cells share a dof exactly when they
    are linked through a chain of intact interfaces.
    """

    broken: frozenset
    slot_dof: np.ndarray  # (n_cells, 4)
    dof_node: np.ndarray  # (n_dof,)
    frame_dofs: np.ndarray  # sorted dofs touched by a frame cell
    positions: np.ndarray  # (n_dof, 2) reference node coordinates

    @property
    def n_dof(self) -> int:
        return len(self.dof_node)


def _as_ids(crack) -> frozenset:
    if crack is None:
        return frozenset()
    if hasattr(crack, "broken"):
        return frozenset(crack.broken)
    return frozenset(int(k) for k in crack)


def dof_map(mesh: Mesh, broken: Iterable[int] = ()) -> DofMap:
    broken = _as_ids(broken)
    key = ("dofmap", broken)
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    n_slots = mesh.n_cells * 4
    intact = np.ones(mesh.n_ifaces, dtype=bool)
    if broken:
        intact[list(broken)] = False
    cells = mesh.iface_cells[intact]
    pairs = mesh.iface_slots[intact]
    rows = np.concatenate([cells[:, 0] * 4 + pairs[:, 0, 0], cells[:, 0] * 4 + pairs[:, 1, 0]])
    cols = np.concatenate([cells[:, 1] * 4 + pairs[:, 0, 1], cells[:, 1] * 4 + pairs[:, 1, 1]])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_slots, n_slots))
    _, labels = connected_components(graph, directed=False)
    # relabel by first occurrence so numbering follows slot order
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    slot_dof = rank[inverse].reshape(mesh.n_cells, 4)
    dof_node = mesh.cell_nodes.ravel()[np.sort(first)]
    frame_dofs = np.unique(slot_dof[mesh.in_frame])
    dm = DofMap(broken, slot_dof, dof_node, frame_dofs, mesh.nodes[dof_node])
    if len(mesh._cache) > 4096:
        mesh._cache.clear()
    mesh._cache[key] = dm
    return dm


@dataclass(eq=False)
class Field:
    """Vector values per degree of freedom, tagged as deformation or displacement."""

    dofs: DofMap
    values: np.ndarray  # (n_dof, 2)
    kind: str = DEFORMATION
    info: dict | None = None  # solver diagnostics

    def slot_values(self) -> np.ndarray:
        """Per-cell corner values (n_cells, 4, 2)."""
        return self.values[self.dofs.slot_dof]

    def copy(self) -> "Field":
        return Field(self.dofs, self.values.copy(), self.kind)

    @classmethod
    def from_function(cls, mesh: Mesh, dofs: DofMap, fn, kind: str = DEFORMATION) -> "Field":
        X = mesh.nodes[dofs.dof_node]
        return cls(dofs, np.asarray(fn(X), dtype=float).reshape(-1, 2).copy(), kind)

    @classmethod
    def from_slots(cls, dofs: DofMap, slot_values: np.ndarray, kind: str) -> "Field":
        """Build from per-slot values; slots sharing a dof must agree."""
        vals = np.zeros((dofs.n_dof, 2))
        vals[dofs.slot_dof.ravel()] = slot_values.reshape(-1, 2)
        return cls(dofs, vals, kind)


def identity_field(mesh: Mesh, broken=()) -> Field:
    return Field.from_function(mesh, dof_map(mesh, broken), lambda X: X, DEFORMATION)


def transfer(field: Field, dofs: DofMap) -> Field:
    """Re-express ``field`` on a finer tie structure (more broken interfaces)."""
    vals = np.zeros((dofs.n_dof, 2))
    vals[dofs.slot_dof.ravel()] = field.values[field.dofs.slot_dof.ravel()]
    return Field(dofs, vals, field.kind)


def gauss_gradients(mesh: Mesh, field: Field) -> np.ndarray:
    """Gradients at the 2x2 Gauss points, shape (n_cells, 4, 2, 2)."""
    return np.einsum("cai,gaj->cgij", field.slot_values(), shape_gradients(mesh.dx, "gauss"))


def cell_gradients(mesh: Mesh, field: Field) -> np.ndarray:
    """Centroid gradients of the bilinear interpolant, shape (n_cells, 2, 2)."""
    return np.einsum("cai,aj->cij", field.slot_values(), shape_gradients(mesh.dx, "centroid")[0])


def cell_gradient(mesh: Mesh, field: Field, cell: int) -> np.ndarray:
    V = field.slot_values()[cell]
    return np.einsum("ai,aj->ij", V, shape_gradients(mesh.dx, "centroid")[0])


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, -1, -2))


# ---------------------------------------------------------------------------
# energies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float = 0.0
    hessian: float = 0.0
    surface: float = 0.0

    @property
    def total(self) -> float:
        return self.elastic + self.hessian + self.surface

    @property
    def bulk(self) -> float:
        return self.elastic + self.hessian

    def as_dict(self) -> dict:
        return {
            "elastic": self.elastic,
            "hessian": self.hessian,
            "surface": self.surface,
            "total": self.total,
        }


def _check_ties(field: Field, broken: frozenset) -> None:
    if field.dofs.broken != broken:
        extra = sorted(field.dofs.broken ^ broken)[:8]
        raise InconsistentTieError(
            f"field ties do not match crack set (differing interfaces {extra}...)"
        )


def discrete_hessian_term(mesh: Mesh, crack, field: Field) -> float:
    """Second-difference quadrature of the integral of |grad^2 y|^2.

    Sums (length / dx) |grad y(cell+) - grad y(cell-)|^2 over intact interfaces;
    broken interfaces carry no bulk penalty.
    """
    broken = _as_ids(crack)
    _check_ties(field, broken)
    intact = np.ones(mesh.n_ifaces, dtype=bool)
    if broken:
        intact[list(broken)] = False
    G = cell_gradients(mesh, field)
    cells = mesh.iface_cells[intact]
    jump = G[cells[:, 1]] - G[cells[:, 0]]
    weights = mesh.iface_length[intact] / mesh.dx
    return float(np.sum(weights * np.einsum("kij,kij->k", jump, jump)))


def surface_length(mesh: Mesh, ids) -> float:
    ids = list(_as_ids(ids))
    return float(mesh.iface_length[ids].sum()) if ids else 0.0


def nonlinear_energy(
    mesh: Mesh,
    crack,
    new_broken,
    y: Field,
    p: ModelParams,
    density: Density | None = None,
) -> EnergyBreakdown:
    """Incremental nonlinear functional; surface charges only ``new_broken \\ crack``."""
    W = density or DistanceDensity()
    old, new = _as_ids(crack), _as_ids(new_broken)
    _check_ties(y, old | new)
    F = gauss_gradients(mesh, y)
    elastic = p.epsilon**-2 * float(W.value(F).sum()) * mesh.cell_area / 4
    hess = p.epsilon ** (-2 * p.beta) * discrete_hessian_term(mesh, old | new, y)
    return EnergyBreakdown(elastic, hess, p.kappa * surface_length(mesh, new - old))


def linear_energy(
    mesh: Mesh,
    crack,
    new_broken,
    u: Field,
    p: ModelParams,
    tensor: ElasticTensor | None = None,
) -> EnergyBreakdown:
    """Linearized Griffith functional; no second-gradient term."""
    C = tensor or default_tensor()
    old, new = _as_ids(crack), _as_ids(new_broken)
    _check_ties(u, old | new)
    E = sym(gauss_gradients(mesh, u))
    elastic = 0.5 * float(C.Q(E).sum()) * mesh.cell_area / 4
    return EnergyBreakdown(elastic, 0.0, p.kappa * surface_length(mesh, new - old))


# ---------------------------------------------------------------------------
# sparse operators
# ---------------------------------------------------------------------------


def gradient_operator(mesh: Mesh, dofs: DofMap, where: str = "gauss"):
    """Sparse map from flattened dof values (dof*2 + i) to vec(grad) per point.

    Rows are ordered (cell, point, 2*i + j); ``where`` is "gauss" (4 points
    per cell) or "centroid" (1 point).
    """
    from scipy.sparse import csr_matrix

    key = ("gradop", where, dofs.broken)
    cached = mesh._cache.get(key)
    if cached is not None and cached[0] is dofs:
        return cached[1]
    dN = shape_gradients(mesh.dx, where)  # (npts, 4, 2)
    npts = dN.shape[0]
    nc = mesh.n_cells
    c, g, a, i, j = np.meshgrid(
        np.arange(nc), np.arange(npts), np.arange(4), np.arange(2), np.arange(2), indexing="ij"
    )
    rows = ((c * npts + g) * 4 + 2 * i + j).ravel()
    cols = (dofs.slot_dof[c, a] * 2 + i).ravel()
    vals = dN[g, a, j].ravel()
    B = csr_matrix((vals, (rows, cols)), shape=(nc * npts * 4, dofs.n_dof * 2))
    mesh._cache[key] = (dofs, B)
    return B
