"""Post-processing of nonlinear runs toward the linear limit.

Rescaled displacements, piecewise rotation removal, the gradient cutoff,
energy-balance residuals, interior work, the reflection extension across a
flat boundary, and the ladder convergence report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from .crack import DomainPartition, bad_set, crack_measure
from .errors import (
    DegenerateRotationError,
    FrameExcisedError,
    InconsistentTieError,
    InsufficientSamplesError,
    MismatchedConfigError,
    ParamsError,
)
from .mesh import Mesh


def rescale(y: en.Field, eps: float) -> en.Field:
    """(y - id) / eps on the same tie structure."""
    if not eps > 0:
        raise ParamsError(f"rescale: eps must be > 0 (got {eps})")
    return en.Field(y.dofs, (y.values - y.dofs.positions) / eps, en.DISPLACEMENT)


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class RotationAssignment:
    """Per-component rotation fitted to the mean gradient.

    The rotated field is ``R_j^T y`` on component j, so a rigid motion
    ``y = R x`` yields ``R_j = R`` and ``y_rot = x``.  ``strain_defect`` and
    ``grad_defect`` are the L2 norms of ``e(y_rot) - Id`` and
    ``grad y_rot - Id`` over the whole domain.
    """

    rotations: np.ndarray  # (n_components, 2, 2)
    partition: DomainPartition
    strain_defect: float = 0.0
    grad_defect: float = 0.0

    def angle(self, j: int) -> float:
        R = self.rotations[j]
        return float(np.arctan2(R[1, 0], R[0, 0]))


def _check_partition(mesh: Mesh, partition: DomainPartition, f: en.Field) -> None:
    intact = np.ones(mesh.n_ifaces, dtype=bool)
    if f.dofs.broken:
        intact[list(f.dofs.broken)] = False
    lab = partition.labels[mesh.iface_cells[intact]]
    if np.any(lab[:, 0] != lab[:, 1]):
        raise InconsistentTieError("partition separates cells that the field ties together")


def _l2(mesh: Mesh, G: np.ndarray) -> float:
    """L2 norm of a Gauss-point matrix field (n_cells, 4, 2, 2)."""
    return float(np.sqrt(np.sum(G * G) * mesh.cell_area / 4))


def component_rotations(mesh: Mesh, partition: DomainPartition, y: en.Field):
    """Fit R_j in SO(2) to the mean gradient of each frame-free component.

    Returns (RotationAssignment, y_rot).  Components touching the frame get
    the identity and are left untouched.
    """
    _check_partition(mesh, partition, y)
    k = partition.n_components
    R = np.broadcast_to(np.eye(2), (k, 2, 2)).copy()
    Gc = en.cell_gradients(mesh, y)
    vals = y.values.copy()
    for j in partition.interior:
        cells = partition.cells[j]
        mean = Gc[cells].mean(axis=0)
        if mean[0, 0] * mean[1, 1] - mean[0, 1] * mean[1, 0] <= 0:
            raise DegenerateRotationError(
                f"component_rotations: mean gradient of component {j} has det <= 0"
            )
        R[j] = en.nearest_rotation(mean)
        d = np.unique(y.dofs.slot_dof[cells])
        vals[d] = vals[d] @ R[j]  # rows: R^T y
    y_rot = en.Field(y.dofs, vals, en.DEFORMATION)
    Gg = en.gauss_gradients(mesh, y_rot) - np.eye(2)
    ra = RotationAssignment(R, partition, _l2(mesh, en.sym(Gg)), _l2(mesh, Gg))
    return ra, y_rot


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------


def cutoff_window(eps: float, gamma: float) -> tuple[float, float, float]:
    """(theta_minus, eta, theta_plus) with eta the geometric midpoint."""
    tm = eps ** ((9 * gamma - 10) / 12)
    tp = eps ** ((gamma - 2) / 4)
    eta = eps ** ((3 * gamma - 4) / 6)
    return tm, eta, tp


@dataclass(eq=False)
class CutoffRegion:
    eta: float
    theta_minus: float
    theta_plus: float
    inside: np.ndarray  # (n_cells,) bool
    uncracked_boundary: int = 0  # excised-boundary interfaces outside the crack


def cutoff(mesh: Mesh, u_aux: en.Field, p: en.ModelParams):
    """Zero the displacement on cells whose centroid gradient reaches eta.

    Returns (CutoffRegion, u_cut).  The cut field lives on a tie structure
    that also separates kept and excised cells.
    """
    tm, eta, tp = cutoff_window(p.epsilon, p.gamma)
    G = en.cell_gradients(mesh, u_aux)
    inside = np.abs(G).max(axis=(1, 2)) < eta
    if np.any(mesh.in_frame & ~inside):
        bad = np.flatnonzero(mesh.in_frame & ~inside)[:5].tolist()
        raise FrameExcisedError(
            f"cutoff: frame cells {bad} exceed eta={eta:.4g}; epsilon too large for the loading"
        )
    rim = mesh.cell_boundary(np.flatnonzero(inside)) if not inside.all() else set()
    broken = u_aux.dofs.broken | frozenset(rim)
    dofs = en.dof_map(mesh, broken)
    slots = u_aux.slot_values().copy()
    slots[~inside] = 0.0
    u_cut = en.Field.from_slots(dofs, slots, en.DISPLACEMENT)
    region = CutoffRegion(eta, tm, tp, inside, len(set(rim) - u_aux.dofs.broken))
    return region, u_cut


def linearized_displacement(
    mesh: Mesh, partition: DomainPartition, y: en.Field, p: en.ModelParams
) -> en.Field:
    """Rotation removal, rescaling and cutoff of a deformation."""
    _, y_rot = component_rotations(mesh, partition, y)
    _, u = cutoff(mesh, rescale(y_rot, p.epsilon), p)
    return u


# ---------------------------------------------------------------------------
# energy balance
# ---------------------------------------------------------------------------


@dataclass
class BalanceSeries:
    """sigma(t', t) = E_tot(t) - E_tot(t') - work(t', t)."""

    times: list
    consecutive: list  # sigma(t_n, t_{n+1})
    from_start: list  # sigma(0, t_n), first entry 0

    def max_positive(self, which: str = "consecutive") -> float:
        vals = getattr(self, which)
        return max([0.0] + [max(v, 0.0) for v in vals])


def balance_residual(traj, bp) -> BalanceSeries:
    from .solver import work_integral

    E = [e.total for e in traj.energies]
    t = traj.times
    piece = [work_integral(traj, bp, t[n], t[n + 1]) for n in range(len(t) - 1)]
    cons = [E[n + 1] - E[n] - piece[n] for n in range(len(piece))]
    cum = np.concatenate([[0.0], np.cumsum(piece)])
    start = [E[n] - E[0] - float(cum[n]) for n in range(len(E))]
    return BalanceSeries(list(t), cons, start)


def interior_work(traj, bp, rotations=None) -> float:
    """Loading work done on frame-free pieces, with their rotations applied to the rate.

    Left-endpoint quadrature of the sum over interior components of the
    integral of C e(u_n) : e(R_j d/dt h(t_n)).
    """
    from .solver import step_displacement

    mesh, C = traj.mesh, traj.tensor()
    w = mesh.cell_area / 4
    total = 0.0
    for n in range(len(traj.times) - 1):
        part = traj.partitions[n]
        if not part.interior:
            continue
        dt = traj.times[n + 1] - traj.times[n]
        rate = bp.grad_rate(traj.times[n])
        if not rate.any():
            continue
        if rotations is not None:
            R = rotations[n].rotations
        elif traj.model == "nonlinear":
            R = component_rotations(mesh, part, traj.fields[n])[0].rotations
        else:
            R = np.broadcast_to(np.eye(2), (part.n_components, 2, 2))
        G = en.gauss_gradients(mesh, step_displacement(traj, n))
        for j in part.interior:
            g = G[part.cells[j]].reshape(-1, 4).sum(axis=0)
            total += dt * w * float(g @ C.full @ (R[j] @ rate).reshape(4))
    return total


# ---------------------------------------------------------------------------
# reflection extension
# ---------------------------------------------------------------------------


def reflection_extend(phi_plus: np.ndarray, x2: np.ndarray):
    """Extend samples on the upper rectangle across x2 = 0.

    ``phi_plus`` has shape (n2 + 1, ...) with rows at heights ``x2 = j h``,
    j = 0..n2.  The lower rectangle has half the height; its rows at
    ``-j h`` (j = 1..n2/2) get ``3 phi(-x2) - 2 phi(-2 x2)``, written as
    ``phi + 2 (phi - phi2)`` so the value at x2 = 0 is reproduced exactly.
    Returns (heights, values) ordered bottom to top.
    """
    phi_plus = np.asarray(phi_plus, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    n2 = len(x2) - 1
    if n2 < 2 or n2 % 2 or phi_plus.shape[0] != n2 + 1:
        raise InsufficientSamplesError(
            "reflection_extend: need an even number (>= 2) of row intervals above x2 = 0"
        )
    h = x2[1] - x2[0]
    if x2[0] != 0 or not np.allclose(np.diff(x2), h, rtol=1e-12, atol=0):
        raise InsufficientSamplesError("reflection_extend: rows must be uniform starting at x2 = 0")
    j = np.arange(n2 // 2, 0, -1)
    a, b = phi_plus[j], phi_plus[2 * j]
    lower = a + 2 * (a - b)
    return np.concatenate([-j * h, x2]), np.concatenate([lower, phi_plus], axis=0)


# ---------------------------------------------------------------------------
# convergence report
# ---------------------------------------------------------------------------

REPORT_COLUMNS = (
    "epsilon",
    "time",
    "total_gap",
    "elastic_gap",
    "hessian",
    "disp_error_good",
    "measure_gt_1e-1",
    "measure_gt_1e-2",
    "bad_elastic",
    "balance_residual",
    "interior_work",
    "crack_length",
    "ref_crack_length",
)


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)  # dicts keyed by REPORT_COLUMNS

    def series(self, column: str, time: float) -> list:
        """Column values at one time, ordered as the ladder."""
        return [r[column] for r in self.rows if abs(r["time"] - time) < 1e-12]

    def epsilons(self) -> list:
        out = []
        for r in self.rows:
            if r["epsilon"] not in out:
                out.append(r["epsilon"])
        return out


def _displacement_of(traj, n: int) -> en.Field:
    from .solver import step_displacement

    return step_displacement(traj, n)


def _same_setup(a, b) -> bool:
    return a.mesh.spec == b.mesh.spec and a.program == b.program and a.density == b.density


def convergence_report(runs, linear_ref, times=(0.25, 0.5, 1.0)) -> ConvergenceReport:
    """Compare each run against the linear reference at the sampled times.

    Good and bad cells come from the reference crack at each time.  The
    displacement error is the L2 norm over good cells of the difference of
    the bilinear interpolants (2x2 Gauss).
    """
    for r in runs:
        if not _same_setup(r, linear_ref):
            raise MismatchedConfigError("convergence_report: runs differ in mesh, loading or density")
    mesh = linear_ref.mesh
    w = mesh.cell_area / 4
    out = ConvergenceReport()
    for r in runs:
        bal = balance_residual(r, r.program)
        eps = r.params.epsilon if r.model == "nonlinear" else 0.0
        for t in times:
            n, m = r.step_index(t), linear_ref.step_index(t)
            Er, El = r.energies[n], linear_ref.energies[m]
            bad, good = bad_set(mesh, linear_ref.cumulative[m])
            diff = _displacement_of(r, n).slot_values() - linear_ref.fields[m].slot_values()
            dq = np.einsum("ga,cai->cgi", en.GAUSS_N, diff)
            mag = np.linalg.norm(dq, axis=2)
            gmask = np.zeros(mesh.n_cells, dtype=bool)
            gmask[list(good)] = True
            err = float(np.sqrt(w * np.sum(mag[gmask] ** 2)))
            if bad:
                bcells = sorted(bad)
                if r.model == "nonlinear":
                    F = en.gauss_gradients(mesh, r.fields[n])[bcells]
                    bad_el = eps**-2 * w * float(en.dist2_so2(F).sum())
                else:
                    Eb = en.sym(en.gauss_gradients(mesh, r.fields[n])[bcells])
                    bad_el = 0.5 * w * float(r.tensor().Q(Eb).sum())
            else:
                bad_el = 0.0
            out.rows.append(
                {
                    "epsilon": eps,
                    "time": float(t),
                    "total_gap": abs(Er.total - El.total),
                    "elastic_gap": abs(Er.elastic - El.elastic),
                    "hessian": Er.hessian,
                    "disp_error_good": err,
                    "measure_gt_1e-1": w * float(np.sum(mag[gmask] > 1e-1)),
                    "measure_gt_1e-2": w * float(np.sum(mag[gmask] > 1e-2)),
                    "bad_elastic": bad_el,
                    "balance_residual": bal.from_start[n],
                    "interior_work": interior_work(_truncate(r, n), r.program),
                    "crack_length": crack_measure(mesh, r.cumulative[n]),
                    "ref_crack_length": crack_measure(mesh, linear_ref.cumulative[m]),
                }
            )
    return out


def _truncate(traj, n: int):
    """View of a trajectory up to and including step n."""
    from copy import copy

    t = copy(traj)
    for name in ("times", "fields", "increments", "cumulative", "energies", "partitions"):
        setattr(t, name, getattr(traj, name)[: n + 1])
    return t
