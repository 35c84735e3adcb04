import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qsfrac import energy as en
from qsfrac import linearize as lz
from qsfrac import scenarios as sc
from qsfrac import solver as sv
from qsfrac.crack import components
from qsfrac.errors import (
    DegenerateRotationError,
    FrameExcisedError,
    InconsistentTieError,
    InsufficientSamplesError,
    MismatchedConfigError,
    ParamsError,
)
from qsfrac.mesh import build_mesh

UNIT = build_mesh(sc.unit_grid(8))
RING = sc.block_ring(UNIT, 3, 3, 2, 2)
BLOCK = sc.block_cells(UNIT, 3, 3, 2, 2)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def scan_rotation(M, n=10_000):
    """(angle, misfit) minimizing |M - R(theta)|^2 over a uniform grid of n angles."""
    th = np.linspace(-np.pi, np.pi, n, endpoint=False)
    c, s = np.cos(th), np.sin(th)
    err = (M[0, 0] - c) ** 2 + (M[0, 1] + s) ** 2 + (M[1, 0] - s) ** 2 + (M[1, 1] - c) ** 2
    k = np.argmin(err)
    return th[k], err[k]


def block_motion(M, c=np.zeros(2)):
    """Identity outside the cut-off block, y = M x + c inside it."""
    d = en.dof_map(UNIT, RING)
    vals = d.positions.copy()
    inner = np.unique(d.slot_dof[BLOCK])
    vals[inner] = d.positions[inner] @ M.T + c
    return en.Field(d, vals)


def test_rescale():
    y = en.identity_field(UNIT)
    y.values += 0.02 * np.sin(y.values)
    u = lz.rescale(y, 0.02)
    assert np.allclose(u.values, np.sin(y.dofs.positions))
    assert u.kind == en.DISPLACEMENT
    with pytest.raises(ParamsError):
        lz.rescale(y, 0.0)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (2, 2), elements=st.floats(-2, 2, allow_nan=False)))
def test_rotation_fit_matches_angle_scan(M):
    assume(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0] > 0.05)
    part = components(UNIT, RING)
    ra, _ = lz.component_rotations(UNIT, part, block_motion(M))
    j = part.labels[BLOCK[0]]
    theta, misfit = scan_rotation(M)
    assert abs(np.angle(np.exp(1j * (ra.angle(j) - theta)))) <= 2 * np.pi / 10_000
    assert np.sum((M - ra.rotations[j]) ** 2) <= misfit + 1e-8
    assert np.linalg.det(ra.rotations[j]) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(ra.rotations[part.labels[0]], np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), arrays(float, 2, elements=st.floats(-1, 1)))
def test_rigid_piece_is_rotated_back(theta, c):
    part = components(UNIT, RING)
    ra, y_rot = lz.component_rotations(UNIT, part, block_motion(rot(theta), c))
    assert np.allclose(en.cell_gradients(UNIT, y_rot), np.eye(2), atol=1e-12)
    assert ra.strain_defect < 1e-12 and ra.grad_defect < 1e-12


def test_reflected_block_is_degenerate():
    part = components(UNIT, RING)
    with pytest.raises(DegenerateRotationError):
        lz.component_rotations(UNIT, part, block_motion(np.diag([1.0, -1.0])))


def test_partition_must_match_field_ties():
    with pytest.raises(InconsistentTieError):
        lz.component_rotations(UNIT, components(UNIT, RING), en.identity_field(UNIT))


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(0.67, 0.99))
def test_cutoff_window_ordering(eps, gamma):
    tm, eta, tp = lz.cutoff_window(eps, gamma)
    assert 1 <= tm < eta < tp
    assert eta == pytest.approx(np.sqrt(tm * tp), rel=1e-12)


def test_cutoff_excises_steep_cells():
    p = en.ModelParams(epsilon=0.01, gamma=0.7, beta=0.75)
    _, eta, _ = lz.cutoff_window(p.epsilon, p.gamma)
    u = en.Field.from_function(UNIT, en.dof_map(UNIT, RING), lambda X: 0 * X, en.DISPLACEMENT)
    inner = np.unique(u.dofs.slot_dof[BLOCK])
    u.values[inner] = 2 * eta * u.dofs.positions[inner]
    region, u_cut = lz.cutoff(UNIT, u, p)
    assert set(np.flatnonzero(~region.inside)) == set(BLOCK)
    assert region.uncracked_boundary == 0
    assert np.all(u_cut.slot_values()[BLOCK] == 0)


def test_cutoff_refuses_to_excise_frame():
    p = en.ModelParams(epsilon=0.01)
    _, eta, _ = lz.cutoff_window(p.epsilon, p.gamma)
    u = en.Field.from_function(UNIT, en.dof_map(UNIT), lambda X: 2 * eta * X, en.DISPLACEMENT)
    with pytest.raises(FrameExcisedError):
        lz.cutoff(UNIT, u, p)


# -- reflection --------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.floats(0.01, 1), arrays(float, (2, 3), elements=st.floats(-5, 5)))
def test_reflection_reproduces_affine_data(half, h, coef):
    n2 = 2 * half
    x2 = h * np.arange(n2 + 1)
    phi = coef[0] + np.outer(x2, coef[1])
    z, ext = lz.reflection_extend(phi, x2)
    assert np.allclose(ext, coef[0] + np.outer(z, coef[1]), atol=1e-9)
    assert z.min() == pytest.approx(-h * half)
    assert np.all(np.diff(z) > 0)


def test_reflection_trace_and_bad_input():
    x2 = np.linspace(0, 1, 5)
    phi = np.cos(3 * x2)
    z, ext = lz.reflection_extend(phi, x2)
    assert ext[list(z).index(0.0)] == phi[0]
    with pytest.raises(InsufficientSamplesError):
        lz.reflection_extend(phi[:4], x2[:4])
    with pytest.raises(InsufficientSamplesError):
        lz.reflection_extend(phi, x2 + 0.1)


# -- balance and report ---------------------------------------------------------


def crack_free_run(model, level=3, eps=0.1):
    p = en.ModelParams(epsilon=eps, kappa=1e6)
    return sv.evolve(UNIT, model, p, sv.TimePartition(level), sv.uniaxial_stretch(0.5))


def test_crack_free_balance_residual_is_delta_squared():
    traj = crack_free_run("linear")
    E1 = traj.energies[-1].total
    bal = lz.balance_residual(traj, traj.program)
    assert np.allclose(bal.consecutive, E1 / 64, rtol=1e-10)
    assert bal.from_start[-1] == pytest.approx(E1 / 8, rel=1e-10)
    assert bal.max_positive() == pytest.approx(E1 / 64, rel=1e-10)
    assert lz.interior_work(traj, traj.program) == 0.0


def test_report_rows_and_mismatch():
    ref = crack_free_run("linear", level=2)
    runs = [crack_free_run("nonlinear", level=2, eps=e) for e in (0.02, 0.01)]
    rep = lz.convergence_report(runs, ref)
    assert len(rep.rows) == 6 and set(rep.rows[0]) == set(lz.REPORT_COLUMNS)
    assert rep.epsilons() == [0.02, 0.01]
    gaps = rep.series("total_gap", 1.0)
    assert gaps[1] < gaps[0]
    other = sv.evolve(UNIT, "linear", en.ModelParams(), sv.TimePartition(2), sv.simple_shear(0.5))
    with pytest.raises(MismatchedConfigError):
        lz.convergence_report(runs, other)
