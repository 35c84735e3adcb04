"""Time-incremental minimization: elastic solves, crack updates, evolution loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Callable

import numpy as np
from scipy.sparse import bsr_matrix, csc_matrix, diags, identity, kron
from scipy.sparse.linalg import splu

from . import energy as en
from .crack import CrackHistory, CrackState, accumulate, components
from .errors import (
    NoConvergenceError,
    OutOfRangeError,
    SingularSystemError,
    TimeOrderError,
    TooLargeError,
)
from .mesh import Mesh, crackable_interfaces

log = logging.getLogger(__name__)

LINEAR = "linear"
NONLINEAR = "nonlinear"

BRUTE_FORCE_LIMIT = 16

# callables invoked with every finished Trajectory (used for suite-wide audits)
RUN_OBSERVERS: list = []


# ---------------------------------------------------------------------------
# time and loading
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimePartition:
    """Dyadic partition t_n = n / 2^k of [0, 1]."""

    level: int

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("partition level must be >= 0")

    @property
    def n_steps(self) -> int:
        return 2**self.level

    @property
    def delta(self) -> float:
        return 2.0**-self.level

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.n_steps

    def index(self, t: float) -> int:
        n = t * self.n_steps
        k = int(round(n))
        if abs(n - k) > 1e-9 or not 0 <= k <= self.n_steps:
            raise OutOfRangeError(f"time {t} is not a node of the level-{self.level} partition")
        return k


@dataclass(frozen=True)
class LoadTerm:
    """s(t) * G x with s piecewise linear through (knots, values)."""

    gradient: tuple  # 2x2 as nested tuples
    knots: tuple = (0.0, 1.0)
    values: tuple = (0.0, 1.0)

    @property
    def G(self) -> np.ndarray:
        return np.asarray(self.gradient, dtype=float)

    def scale(self, t: float) -> float:
        return float(np.interp(t, self.knots, self.values))

    def rate(self, t: float) -> float:
        """Right derivative of the scale (left derivative at the last knot)."""
        k = np.asarray(self.knots)
        v = np.asarray(self.values)
        i = int(np.searchsorted(k, t, side="right")) - 1
        i = min(max(i, 0), len(k) - 2)
        return float((v[i + 1] - v[i]) / (k[i + 1] - k[i]))


@dataclass(frozen=True)
class BoundaryProgram:
    """Affine-in-space loading h(t, x) = sum_k s_k(t) G_k x."""

    terms: tuple = ()
    name: str = "zero"

    def grad(self, t: float) -> np.ndarray:
        A = np.zeros((2, 2))
        for term in self.terms:
            A += term.scale(t) * term.G
        return A

    def grad_rate(self, t: float) -> np.ndarray:
        A = np.zeros((2, 2))
        for term in self.terms:
            A += term.rate(t) * term.G
        return A

    def h(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.grad(t).T

    def h_rate(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.grad_rate(t).T

    def __add__(self, other: "BoundaryProgram") -> "BoundaryProgram":
        return BoundaryProgram(self.terms + other.terms, f"{self.name}+{other.name}")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "terms": [
                {"gradient": [list(r) for r in t.gradient], "knots": list(t.knots), "values": list(t.values)}
                for t in self.terms
            ],
        }


def uniaxial_stretch(a: float, axis: int = 0, knots=(0.0, 1.0), values=(0.0, 1.0)) -> BoundaryProgram:
    G = ((a, 0.0), (0.0, 0.0)) if axis == 0 else ((0.0, 0.0), (0.0, a))
    return BoundaryProgram((LoadTerm(G, tuple(knots), tuple(values)),), f"uniaxial_stretch[{axis}]")


def simple_shear(a: float, knots=(0.0, 1.0), values=(0.0, 1.0)) -> BoundaryProgram:
    return BoundaryProgram((LoadTerm(((0.0, a), (0.0, 0.0)), tuple(knots), tuple(values)),), "simple_shear")


def zero_load() -> BoundaryProgram:
    return BoundaryProgram((), "zero")


# ---------------------------------------------------------------------------
# options and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SolveOptions:
    elastic_tol: float = 1e-10
    max_newton_iters: int = 60
    multistart: int = 3
    greedy_passes: int = 10
    break_threshold_tol: float = 1e-12
    rng_seed: int = 0
    chain_max_len: int | None = None  # default: longest grid line
    max_chain_combo: int = 3
    max_candidates: int = 20000

    def validate(self) -> None:
        from .errors import ConfigError

        if not (self.elastic_tol > 0 and self.break_threshold_tol > 0):
            raise ConfigError("SolveOptions invariant violated: tolerances > 0")
        if self.max_newton_iters < 1 or self.multistart < 0 or self.greedy_passes < 1:
            raise ConfigError("SolveOptions invariant violated: iteration counts")
        if self.max_chain_combo < 1 or self.max_candidates < 1:
            raise ConfigError("SolveOptions invariant violated: candidate limits")


@dataclass(eq=False)
class Trajectory:
    model: str
    mesh: Mesh
    params: en.ModelParams
    partition: TimePartition
    program: BoundaryProgram
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    increments: list = field(default_factory=list)  # new interfaces per step
    cumulative: list = field(default_factory=list)
    energies: list = field(default_factory=list)  # totals, surface over cumulative crack
    partitions: list = field(default_factory=list)
    density: str = "distance"
    initial_crack: frozenset = frozenset()

    @property
    def history(self) -> CrackHistory:
        return CrackHistory(list(self.times), list(self.increments), list(self.cumulative))

    def step_index(self, t: float) -> int:
        for n, s in enumerate(self.times):
            if abs(s - t) <= 1e-12:
                return n
        raise OutOfRangeError(f"time {t} not in trajectory")

    def tensor(self) -> en.ElasticTensor:
        return en.default_tensor(en.get_density(self.density))


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _datum(h_t, X: np.ndarray) -> np.ndarray:
    """Displacement datum at points X from a 2x2 gradient or a callable."""
    if callable(h_t):
        return np.asarray(h_t(X), dtype=float).reshape(-1, 2)
    A = np.asarray(h_t, dtype=float)
    return X @ A.T


def _flat(ids: np.ndarray) -> np.ndarray:
    return (2 * np.asarray(ids)[:, None] + np.arange(2)).ravel()


def _ids(crack) -> frozenset:
    return en._as_ids(crack)


def _floating_dofs(mesh: Mesh, dofs: en.DofMap) -> np.ndarray:
    part = components(mesh, dofs.broken)
    if not part.interior:
        return np.zeros(0, dtype=np.int64)
    cells = np.concatenate([part.cells[j] for j in part.interior])
    return np.unique(dofs.slot_dof[cells])


def _hessian_operator(mesh: Mesh, dofs: en.DofMap):
    """H with z.H.z = sum over intact interfaces of (len/dx)|grad jump|^2."""
    key = ("hessop", dofs.broken)
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    Bc = en.gradient_operator(mesh, dofs, "centroid")
    intact = np.ones(mesh.n_ifaces, dtype=bool)
    if dofs.broken:
        intact[list(dofs.broken)] = False
    cm, cp = mesh.iface_cells[intact, 0], mesh.iface_cells[intact, 1]
    rows = lambda c: (4 * c[:, None] + np.arange(4)).ravel()  # noqa: E731
    J = (Bc[rows(cp)] - Bc[rows(cm)]).tocsr()
    wt = np.repeat(mesh.iface_length[intact] / mesh.dx, 4)
    H = (J.T @ diags(wt) @ J).tocsr()
    mesh._cache[key] = H
    return H


# ---------------------------------------------------------------------------
# linear elastic solve
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _LinearSystem:
    dofs: en.DofMap
    K: object
    free: np.ndarray  # flat indices
    fixed: np.ndarray  # flat indices (frame)
    floating: np.ndarray  # flat indices (set to zero)
    lu: object
    Kfp: object
    Kf: object  # free rows, all columns


def _linear_system(mesh: Mesh, broken: frozenset, tensor: en.ElasticTensor) -> _LinearSystem:
    key = ("linsys", broken, tensor.matrix.tobytes())
    cached = mesh._cache.get(key)
    if cached is not None:
        return cached
    dofs = en.dof_map(mesh, broken)
    Bg = en.gradient_operator(mesh, dofs, "gauss")
    w = mesh.cell_area / 4
    D = kron(identity(mesh.n_cells * 4, format="csr"), w * tensor.full, format="csr")
    K = (Bg.T @ D @ Bg).tocsr()
    fixed = _flat(dofs.frame_dofs)
    floating = _flat(_floating_dofs(mesh, dofs))
    mask = np.ones(2 * dofs.n_dof, dtype=bool)
    mask[fixed] = False
    mask[floating] = False
    free = np.flatnonzero(mask)
    lu = None
    Kfp = K[free][:, fixed]
    if len(free):
        try:
            lu = splu(csc_matrix(K[free][:, free]))
        except RuntimeError as exc:
            raise SingularSystemError(f"elastic_solve_linear: factorization failed ({exc})")
    sys = _LinearSystem(dofs, K, free, fixed, floating, lu, Kfp, K[free])
    if len(mesh._cache) > 4096:
        mesh._cache.clear()
    mesh._cache[key] = sys
    return sys


def elastic_solve_linear(
    mesh: Mesh,
    crack,
    h_t,
    p: en.ModelParams | None = None,
    tensor: en.ElasticTensor | None = None,
) -> en.Field:
    """Minimize the linear elastic energy with the crack fixed and u = h_t on the frame.

    Pieces cut off from the frame carry no load; their rigid-motion nullspace
    is pinned by zero mean displacement and zero mean rotation, which makes
    their displacement identically zero.  ``field.info`` holds the
    Euler-Lagrange residual and load norm.
    """
    C = tensor or en.default_tensor()
    sys = _linear_system(mesh, _ids(crack), C)
    dofs = sys.dofs
    X = mesh.nodes[dofs.dof_node]
    u = np.zeros(2 * dofs.n_dof)
    u[sys.fixed] = _datum(h_t, X).ravel()[sys.fixed]
    load = sys.Kfp @ u[sys.fixed]
    load_norm = float(np.linalg.norm(load))
    res_norm = 0.0
    if len(sys.free):
        uf = sys.lu.solve(-load)
        for _ in range(3):
            u[sys.free] = uf
            r = sys.Kf @ u
            res_norm = float(np.linalg.norm(r))
            if res_norm <= 1e-10 * max(load_norm, 1e-300) or load_norm == 0.0:
                break
            uf = uf - sys.lu.solve(r)
        if load_norm > 0 and res_norm > 1e-10 * load_norm:
            raise SingularSystemError(
                f"elastic_solve_linear: residual {res_norm:.3e} exceeds 1e-10 x load {load_norm:.3e}"
            )
        if not np.all(np.isfinite(u)):
            raise SingularSystemError("elastic_solve_linear: non-finite solution")
    f = en.Field(dofs, u.reshape(-1, 2), en.DISPLACEMENT)
    f.info = {"residual": res_norm, "load_norm": load_norm}
    return f


def _linear_bulk(mesh: Mesh, sys: _LinearSystem, u: en.Field) -> float:
    v = u.values.ravel()
    return 0.5 * float(v @ (sys.K @ v))


# ---------------------------------------------------------------------------
# nonlinear elastic solve
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _NonlinearProblem:
    mesh: Mesh
    dofs: en.DofMap
    Bg: object
    H: object
    free: np.ndarray
    fixed: np.ndarray
    X: np.ndarray  # (n_dof, 2)
    p: en.ModelParams
    W: en.Density

    @property
    def c_el(self) -> float:
        return self.p.epsilon**-2 * self.mesh.cell_area / 4

    @property
    def c_h(self) -> float:
        return self.p.epsilon ** (-2 * self.p.beta)

    def _F(self, z):
        return (self.Bg @ z).reshape(-1, 2, 2) + np.eye(2)

    def parts(self, z):
        return self.c_el * float(self.W.value(self._F(z)).sum()), self.c_h * float(z @ (self.H @ z))

    def energy(self, z) -> float:
        a, b = self.parts(z)
        return a + b

    def grad(self, z) -> np.ndarray:
        dW = self.W.grad(self._F(z)).ravel()
        return self.c_el * (self.Bg.T @ dW) + 2 * self.c_h * (self.H @ z)

    def hess_free(self, z):
        blocks = self.W.hess(self._F(z))
        nb = blocks.shape[0]
        D = bsr_matrix((blocks, np.arange(nb), np.arange(nb + 1)), shape=(4 * nb, 4 * nb))
        Hm = self.c_el * (self.Bg.T @ D @ self.Bg) + 2 * self.c_h * self.H
        Hm = Hm.tocsr()
        return Hm[self.free][:, self.free]


def _nonlinear_problem(mesh, dofs, p, W) -> _NonlinearProblem:
    Bg = en.gradient_operator(mesh, dofs, "gauss")
    H = _hessian_operator(mesh, dofs)
    fixed = _flat(dofs.frame_dofs)
    mask = np.ones(2 * dofs.n_dof, dtype=bool)
    mask[fixed] = False
    return _NonlinearProblem(mesh, dofs, Bg, H, np.flatnonzero(mask), fixed, mesh.nodes[dofs.dof_node], p, W)


def _newton(prob: _NonlinearProblem, z: np.ndarray, opts: SolveOptions):
    """Damped Newton with Armijo backtracking on the free dofs.

    Returns (z, energy, gradient inf-norm, iterations, converged).
    """
    free = prob.free
    z = z.copy()
    E = prob.energy(z)
    g = prob.grad(z)[free]
    gnorm = float(np.abs(g).max()) if len(free) else 0.0
    target = opts.elastic_tol * max(1.0, gnorm)
    mu = 0.0
    it = 0
    while it < opts.max_newton_iters:
        if gnorm <= target:
            return z, E, gnorm, it, True
        it += 1
        Hf = prob.hess_free(z)
        scale = float(np.abs(Hf.diagonal()).max()) or 1.0
        mu = max(mu * 0.1, 1e-12 * scale)
        accepted = False
        for _ in range(12):
            try:
                lu = splu(csc_matrix(Hf + mu * identity(len(free), format="csr")))
                d = -lu.solve(g)
            except RuntimeError:
                d = None
            if d is None or not np.all(np.isfinite(d)) or g @ d >= 0:
                mu = max(10 * mu, 1e-8 * scale)
                continue
            slope = float(g @ d)
            alpha = 1.0
            while alpha > 1e-10:
                zt = z.copy()
                zt[free] += alpha * d
                Et = prob.energy(zt)
                if Et <= E + 1e-4 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                # near the minimum the energy is flat to rounding; accept a
                # full step if it reduces the gradient
                zt = z.copy()
                zt[free] += d
                gt = prob.grad(zt)[free]
                if float(np.abs(gt).max()) < gnorm:
                    Et = prob.energy(zt)
                    accepted = True
            if accepted:
                break
            mu = max(10 * mu, 1e-8 * scale)
        if not accepted:
            return z, E, gnorm, it, False
        z, E = zt, Et
        g = prob.grad(z)[free]
        gnorm = float(np.abs(g).max())
    return z, E, gnorm, it, gnorm <= target


def _start_values(warm: en.Field, dofs: en.DofMap) -> np.ndarray:
    if warm.dofs is dofs:
        return warm.values.copy()
    if warm.dofs.broken <= dofs.broken:
        return en.transfer(warm, dofs).values
    # warm start has ties the target lacks: average through slots
    vals = np.zeros((dofs.n_dof, 2))
    cnt = np.zeros(dofs.n_dof)
    sv = warm.slot_values().reshape(-1, 2)
    np.add.at(vals, dofs.slot_dof.ravel(), sv)
    np.add.at(cnt, dofs.slot_dof.ravel(), 1)
    return vals / cnt[:, None]


def elastic_solve_nonlinear(
    mesh: Mesh,
    crack,
    h_t,
    p: en.ModelParams,
    warm_start: en.Field | None = None,
    opts: SolveOptions | None = None,
    density: en.Density | None = None,
    screening: bool = False,
) -> en.Field:
    """Critical point of elastic + second-gradient energy, y = id + eps h_t on the frame.

    Starts: the warm start (frame refreshed), the affine competitor
    id + eps h_t, and ``opts.multistart`` random perturbations of amplitude
    eps on free nodes.  The lowest-energy converged result is returned.
    ``screening`` uses the warm start only.
    """
    opts = opts or SolveOptions()
    W = density or en.DistanceDensity()
    dofs = en.dof_map(mesh, _ids(crack))
    prob = _nonlinear_problem(mesh, dofs, p, W)
    X = prob.X
    frame_y = X + p.epsilon * _datum(h_t, X)
    frame_z = (frame_y - X).ravel()[prob.fixed]

    starts = []
    if warm_start is not None:
        starts.append(_start_values(warm_start, dofs) - X)
    if not screening or not starts:
        starts.append(frame_y - X)
    if not screening:
        b = sorted(dofs.broken)
        rng = np.random.default_rng([opts.rng_seed, len(b), sum(b)])
        base = starts[0]
        for _ in range(opts.multistart):
            starts.append(base + p.epsilon * rng.uniform(-1, 1, base.shape))

    best = None
    for z0 in starts:
        z0 = z0.ravel().copy()
        z0[prob.fixed] = frame_z
        z, E, gn, it, ok = _newton(prob, z0, opts)
        if ok and (best is None or E < best[1]):
            best = (z, E, gn, it)
    if best is None:
        raise NoConvergenceError(
            f"elastic_solve_nonlinear: no start converged within {opts.max_newton_iters} iterations"
        )
    z, E, gn, it = best
    y = X + z.reshape(-1, 2)
    y.ravel()[prob.fixed] = frame_y.ravel()[prob.fixed]
    el, hs = prob.parts((y - X).ravel())
    f = en.Field(dofs, y, en.DEFORMATION)
    f.info = {"grad_norm": gn, "iterations": it, "elastic": el, "hessian": hs}
    return f


# ---------------------------------------------------------------------------
# crack update
# ---------------------------------------------------------------------------


def _grid_lines(mesh: Mesh) -> list[list[int]]:
    """Interfaces along each grid line, in order."""
    cx, cy = mesh.spec.cells_x, mesh.spec.cells_y
    lines = [[mesh.vertical_iface(i, j) for j in range(cy)] for i in range(cx - 1)]
    lines += [[mesh.horizontal_iface(i, j) for i in range(cx)] for j in range(cy - 1)]
    return lines


def candidate_chains(mesh: Mesh, max_len: int | None = None) -> list[tuple[int, ...]]:
    """Straight runs of contiguous crackable interfaces, length 1..max_len."""
    key = ("chains", max_len)
    if key in mesh._cache:
        return mesh._cache[key]
    L = max_len or max(mesh.spec.cells_x, mesh.spec.cells_y)
    ok = np.zeros(mesh.n_ifaces, dtype=bool)
    ok[list(crackable_interfaces(mesh))] = True
    chains = set()
    for line in _grid_lines(mesh):
        run: list[int] = []
        for f in line + [-1]:
            if f >= 0 and ok[f]:
                run.append(f)
                continue
            for a in range(len(run)):
                for b in range(a + 1, min(len(run), a + L) + 1):
                    chains.add(tuple(sorted(run[a:b])))
            run = []
    out = sorted(chains, key=lambda c: (len(c), c))
    mesh._cache[key] = out
    return out


def candidate_moves(
    mesh: Mesh,
    broken: frozenset,
    max_new_length: float,
    opts: SolveOptions,
) -> list[frozenset]:
    """New-interface sets worth testing: chains and unions of chains.

    Only sets whose new length is strictly below ``max_new_length`` are kept;
    larger ones cannot pay for themselves.
    """
    dx = mesh.dx
    chains = []
    seen = set()
    for c in candidate_chains(mesh, opts.chain_max_len):
        new = frozenset(c) - broken
        if new and new not in seen and len(new) * dx < max_new_length:
            seen.add(new)
            chains.append(new)
    moves = list(chains)
    truncated = False
    for r in range(2, opts.max_chain_combo + 1):
        for combo in combinations(chains, r):
            u = frozenset().union(*combo)
            if len(u) * dx >= max_new_length or u in seen:
                continue
            seen.add(u)
            moves.append(u)
            if len(moves) >= opts.max_candidates:
                truncated = True
                break
        if truncated:
            log.warning("candidate_moves: truncated at %d candidates", opts.max_candidates)
            break
    moves.sort(key=lambda s: (len(s), tuple(sorted(s))))
    return moves


def _fixed_bulk(mesh: Mesh, model: str, field_: en.Field, p, tensor, W) -> float:
    """Bulk energy carried by frame cells and frame-frame interfaces.

    Every dof of a frame cell is prescribed, so this part is the same for
    every crack set and bounds the bulk energy of any competitor from below.
    """
    frame = mesh.in_frame
    if model == LINEAR:
        E = en.sym(en.gauss_gradients(mesh, field_))[frame]
        return 0.5 * float(tensor.Q(E).sum()) * mesh.cell_area / 4
    F = en.gauss_gradients(mesh, field_)[frame]
    el = p.epsilon**-2 * float(W.value(F).sum()) * mesh.cell_area / 4
    G = en.cell_gradients(mesh, field_)
    ff = np.flatnonzero(mesh.frame_frame)
    jump = G[mesh.iface_cells[ff, 1]] - G[mesh.iface_cells[ff, 0]]
    hs = float(np.sum(mesh.iface_length[ff] / mesh.dx * np.einsum("kij,kij->k", jump, jump)))
    return el + p.epsilon ** (-2 * p.beta) * hs


class _Evaluator:
    """Bulk energy of the elastic minimizer for a given crack set."""

    def __init__(self, mesh, model, p, h_t, opts, tensor, W, warm):
        self.mesh, self.model, self.p, self.h_t = mesh, model, p, h_t
        self.opts, self.tensor, self.W, self.warm = opts, tensor, W, warm

    def solve(self, broken: frozenset, screening: bool = False):
        if self.model == LINEAR:
            u = elastic_solve_linear(self.mesh, broken, self.h_t, self.p, self.tensor)
            sys = _linear_system(self.mesh, broken, self.tensor)
            return u, _linear_bulk(self.mesh, sys, u)
        y = elastic_solve_nonlinear(
            self.mesh, broken, self.h_t, self.p, self.warm, self.opts, self.W, screening=screening
        )
        return y, y.info["elastic"] + y.info["hessian"]


def _better(total, key, best_total, best_key, tol) -> bool:
    if best_total is None or total < best_total - tol:
        return True
    return abs(total - best_total) <= tol and key < best_key


def incremental_step(
    mesh: Mesh,
    history: CrackHistory,
    t_n: float,
    prev_field: en.Field | None,
    model: str,
    p: en.ModelParams,
    opts: SolveOptions | None = None,
    h_t=None,
    *,
    base_crack=None,
    tensor: en.ElasticTensor | None = None,
    density: en.Density | None = None,
):
    """One step of the scheme: elastic solve plus greedy crack growth.

    ``h_t`` is the displacement datum at t_n (2x2 gradient or callable).
    ``base_crack`` adds pre-existing interfaces (a notch) to the history's
    cumulative crack.  Returns (field, step crack); the step crack contains
    the cumulative crack.  ``field.info['energy']`` is the incremental
    energy breakdown (surface charged on new interfaces only).
    """
    opts = opts or SolveOptions()
    if history.last_time is not None and not t_n > history.last_time:
        raise TimeOrderError(f"incremental_step: t_n={t_n} not after {history.last_time}")
    W = density or en.DistanceDensity()
    C = tensor or en.default_tensor(W)
    h_t = np.zeros((2, 2)) if h_t is None else h_t
    old = history.current.broken | _ids(base_crack)
    ev = _Evaluator(mesh, model, p, h_t, opts, C, W, prev_field)

    S = old
    fld, bulk = ev.solve(S)
    E_fixed = _fixed_bulk(mesh, model, fld, p, C, W)
    kappa = p.kappa

    def surface(s):
        return kappa * en.surface_length(mesh, s - old)

    E_cur = bulk + surface(S)
    for _ in range(opts.greedy_passes):
        thr = opts.break_threshold_tol * max(E_cur, kappa * mesh.dx)
        avail = bulk - E_fixed - thr
        if avail <= 0:
            break
        moves = candidate_moves(mesh, S, avail / kappa, opts)
        if model == NONLINEAR:
            ev.warm = fld
        best = None
        for new in moves:
            cand = S | new
            try:
                f2, b2 = ev.solve(cand, screening=True)
            except NoConvergenceError:
                continue
            tot = b2 + surface(cand)
            key = tuple(sorted(cand))
            if tot < E_cur - thr and (best is None or _better(tot, key, best[0], best[1], thr)):
                best = (tot, key, cand, f2, b2)
        if best is None:
            break
        _, _, S, fld, bulk = best
        if model == NONLINEAR:
            ev.warm = fld
            fld, bulk = ev.solve(S)
        E_cur = bulk + surface(S)
    fld.info = dict(getattr(fld, "info", {}) or {})
    fld.info["energy"] = _breakdown(mesh, model, fld, old, S, p, C, W)
    return fld, CrackState(S)


def _breakdown(mesh, model, fld, old, S, p, C, W) -> en.EnergyBreakdown:
    if model == LINEAR:
        return en.linear_energy(mesh, old, S, fld, p, C)
    return en.nonlinear_energy(mesh, old, S, fld, p, W)


def brute_force_step(
    mesh: Mesh,
    history: CrackHistory,
    t_n: float,
    model: str,
    p: en.ModelParams,
    h_t=None,
    opts: SolveOptions | None = None,
    *,
    prev_field: en.Field | None = None,
    base_crack=None,
    tensor: en.ElasticTensor | None = None,
    density: en.Density | None = None,
):
    """Global minimizer of the incremental functional by exhaustive enumeration.

    Subsets are visited by size; a subset is skipped once its surface cost
    alone exceeds the best total found.  Ties go to the lexicographically
    smallest sorted crack tuple.  Returns (field, crack, incremental energy).
    """
    opts = opts or SolveOptions()
    if history.last_time is not None and not t_n > history.last_time:
        raise TimeOrderError(f"brute_force_step: t_n={t_n} not after {history.last_time}")
    W = density or en.DistanceDensity()
    C = tensor or en.default_tensor(W)
    h_t = np.zeros((2, 2)) if h_t is None else h_t
    old = history.current.broken | _ids(base_crack)
    pool = [f for f in crackable_interfaces(mesh) if f not in old]
    if len(pool) > BRUTE_FORCE_LIMIT:
        raise TooLargeError(
            f"brute_force_step: {len(pool)} crackable intact interfaces exceed {BRUTE_FORCE_LIMIT}"
        )
    if model == NONLINEAR:
        opts = replace(opts, multistart=max(5, opts.multistart))
    ev = _Evaluator(mesh, model, p, h_t, opts, C, W, prev_field)
    best = None
    for r in range(len(pool) + 1):
        cost = p.kappa * mesh.dx * r
        if best is not None and cost > best[0] + 1e-12 * max(1.0, best[0]):
            break
        for sub in combinations(pool, r):
            S = old | frozenset(sub)
            try:
                fld, bulk = ev.solve(S)
            except NoConvergenceError:
                continue
            tot = bulk + p.kappa * en.surface_length(mesh, S - old)
            key = tuple(sorted(S))
            tol = 1e-12 * max(1.0, abs(tot))
            if best is None or _better(tot, key, best[0], best[1], tol):
                best = (tot, key, S, fld)
    if best is None:
        raise NoConvergenceError("brute_force_step: no subset produced a converged solve")
    _, _, S, fld = best
    E = _breakdown(mesh, model, fld, old, S, p, C, W)
    return fld, CrackState(S), E


# ---------------------------------------------------------------------------
# evolution
# ---------------------------------------------------------------------------


def evolve(
    mesh: Mesh,
    model: str,
    p: en.ModelParams,
    partition: TimePartition,
    program: BoundaryProgram,
    opts: SolveOptions | None = None,
    initial_crack=(),
    density: en.Density | None = None,
    stepper: Callable | None = None,
) -> Trajectory:
    """Run the incremental scheme over every node of the partition.

    At t = 0 the same step is taken from an empty history (plus the initial
    crack), so the initial state is a minimizer for h(0).
    """
    opts = opts or SolveOptions()
    W = density or en.DistanceDensity()
    C = en.default_tensor(W)
    init = _ids(initial_crack)
    traj = Trajectory(model, mesh, p, partition, program, density=W.name, initial_crack=init)
    history = CrackHistory()
    prev = None
    if model == NONLINEAR:
        prev = en.identity_field(mesh, init)
        prev.values += p.epsilon * program.h(0.0, prev.values)
    for n, t in enumerate(partition.times):
        t = float(t)
        A = program.grad(t)
        if stepper is not None:
            fld, crack = stepper(mesh, history, t, prev, model, p, opts, A, base_crack=init)
        else:
            fld, crack = incremental_step(
                mesh, history, t, prev, model, p, opts, A, base_crack=init, tensor=C, density=W
            )
        before = history.current.broken | init
        history = accumulate(history, t, CrackState(crack.broken - init))
        cum = CrackState(history.current.broken | init)
        inc = CrackState(crack.broken - before)
        if model == LINEAR:
            E = en.linear_energy(mesh, CrackState(), cum, fld, p, C)
        else:
            E = en.nonlinear_energy(mesh, CrackState(), cum, fld, p, W)
        traj.times.append(t)
        traj.fields.append(fld)
        traj.increments.append(inc)
        traj.cumulative.append(cum)
        traj.energies.append(E)
        traj.partitions.append(components(mesh, cum))
        prev = fld
    for obs in RUN_OBSERVERS:
        obs(traj)
    return traj


def run_evolution(config) -> Trajectory:
    """Build the mesh and loading from a run configuration and evolve."""
    from .mesh import build_mesh

    mesh = build_mesh(config.grid)
    model = config.model if config.model in (LINEAR, NONLINEAR) else NONLINEAR
    return evolve(
        mesh,
        model,
        config.params,
        TimePartition(config.partition_level),
        config.program(),
        config.solve,
        config.initial_crack,
        en.get_density(config.density),
    )


def step_displacement(traj: Trajectory, n: int) -> en.Field:
    """Displacement entering the work integrand at step n."""
    if traj.model == LINEAR:
        return traj.fields[n]
    from .linearize import linearized_displacement

    return linearized_displacement(traj.mesh, traj.partitions[n], traj.fields[n], traj.params)


def work_integral(traj: Trajectory, bp: BoundaryProgram, t_a: float, t_b: float) -> float:
    """Left-endpoint quadrature of the loading work over [t_a, t_b].

    Sum over steps t_a <= t_n < t_b of (t_{n+1} - t_n) times the integral of
    C e(u_n) : e(d/dt h(t_n)) over the whole outer domain.
    """
    if t_a > t_b:
        raise OutOfRangeError(f"work_integral: t_a={t_a} > t_b={t_b}")
    ia, ib = traj.step_index(t_a), traj.step_index(t_b)
    C = traj.tensor()
    mesh = traj.mesh
    total = 0.0
    for n in range(ia, ib):
        dt = traj.times[n + 1] - traj.times[n]
        rate = bp.grad_rate(traj.times[n]).reshape(4)
        if not rate.any():
            continue
        u = step_displacement(traj, n)
        grads = en.gauss_gradients(mesh, u).reshape(-1, 4).sum(axis=0)
        total += dt * mesh.cell_area / 4 * float(grads @ C.full @ rate)
    return total


def affine_competitor_energy(mesh: Mesh, p: en.ModelParams, A: np.ndarray, density=None) -> float:
    """Elastic energy of id + eps A x with no crack (second-gradient term vanishes)."""
    W = density or en.DistanceDensity()
    F = np.eye(2) + p.epsilon * np.asarray(A, dtype=float)
    area = mesh.spec.width * mesh.spec.height
    return p.epsilon**-2 * float(W.value(F)) * area
