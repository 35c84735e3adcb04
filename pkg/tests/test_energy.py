import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qsfrac import energy as en
from qsfrac import scenarios as sc
from qsfrac.errors import InconsistentTieError, NonPositiveDefiniteError, ParamsError
from qsfrac.mesh import GridSpec, build_mesh, crackable_interfaces

matrices = arrays(float, (2, 2), elements=st.floats(-3, 3, allow_nan=False))
angles = st.floats(-np.pi, np.pi, allow_nan=False)


def rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


ANGLE_GRID = np.linspace(-np.pi, np.pi, 10_000, endpoint=False)
ROT_GRID = np.stack([rot(t) for t in ANGLE_GRID])


def grid_dist2(F):
    """Squared distance to SO(2) by scanning 10^4 rotation angles."""
    D = F[None] - ROT_GRID
    return float(np.einsum("kij,kij->k", D, D).min())


# -- density ---------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_distance_density_matches_rotation_scan(F):
    W = en.DistanceDensity()
    # angle spacing 6.3e-4 bounds the scan's overestimate by |F| * spacing^2
    tol = 1e-6 * (1 + np.abs(F).sum())
    assert abs(en.density_eval(W, F) - grid_dist2(F)) <= tol
    assert en.density_eval(W, F) == pytest.approx(float(en.dist2_so2(F)), abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(matrices, angles)
def test_frame_indifference(F, theta):
    for W in (en.DistanceDensity(), en.KirchhoffDetDensity()):
        a, b = W.value(rot(theta) @ F), W.value(F)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


@settings(max_examples=300, deadline=None)
@given(angles)
def test_zero_on_rotations(theta):
    assert en.DistanceDensity().value(rot(theta)) == 0.0
    assert en.KirchhoffDetDensity().value(rot(theta)) == pytest.approx(0, abs=1e-28)


def fd_grad(W, F, h=1e-6):
    G = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = h
            G[i, j] = (W.value(F + E) - W.value(F - E)) / (2 * h)
    return G


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_gradient_against_finite_differences(F):
    for W in (en.DistanceDensity(), en.KirchhoffDetDensity()):
        a = fd_grad(W, F)
        if W.name == "distance" and np.hypot(F[0, 0] + F[1, 1], F[1, 0] - F[0, 1]) < 1e-2:
            continue  # kink of the nearest rotation at the conformal origin
        assert np.allclose(en.density_grad(W, F), a, rtol=1e-5, atol=1e-5 * (1 + np.abs(F).max() ** 3))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_analytic_hessian_matches_default_fd(F):
    W = en.DistanceDensity()
    if np.hypot(F[0, 0] + F[1, 1], F[1, 0] - F[0, 1]) < 0.05:
        return
    assert np.allclose(W.hess(F), en.Density.hess(W, F), atol=1e-5)


def test_gradient_vanishes_at_identity_and_rho_zero_branch():
    W = en.DistanceDensity()
    assert np.all(W.grad(np.eye(2)) == 0)
    F = np.array([[1.0, 2.0], [2.0, -1.0]])  # purely anticonformal
    assert np.allclose(W.grad(F), 2 * (F - np.eye(2)))
    assert W.value(F) == pytest.approx(float(np.sum((F - np.eye(2)) ** 2)))


def test_unknown_density():
    with pytest.raises(ParamsError):
        en.get_density("neo-hookean")


# -- linearized tensor -------------------------------------------------------


def test_distance_tensor_is_twice_identity_on_sym():
    # W = dist^2 gives Q(A) = 2 |sym A|^2
    C = en.linearized_tensor(en.DistanceDensity())
    assert np.allclose(C.matrix, 2 * np.eye(3), atol=1e-6)
    assert C.skew_defect < 1e-6


def test_kirchhoff_tensor():
    # Q(A) = |sym A|^2 + (tr A)^2
    C = en.linearized_tensor(en.KirchhoffDetDensity())
    assert np.allclose(C.matrix, [[2, 1, 0], [1, 2, 0], [0, 0, 1]], atol=1e-6)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_tensor_ignores_skew_part(A):
    C = en.default_tensor()
    assert C.Q(A) == pytest.approx(C.Q(en.sym(A)), abs=1e-12)
    assert np.allclose(C.stress(A), C.stress(A).T)
    assert C.Q(A) == pytest.approx(float(np.sum(C.stress(A) * A)), abs=1e-10)


def test_tensor_rejects_non_convex_density():
    class Flat(en.Density):
        name = "flat"

        def value(self, F):
            return np.zeros(np.shape(F)[:-2])

    with pytest.raises(NonPositiveDefiniteError):
        en.linearized_tensor(Flat())


# -- fields and dofs ---------------------------------------------------------

MESH = build_mesh(GridSpec(6.0, 6.0, 6, 6, 1.0))


def test_dofs_of_intact_grid_are_nodes():
    d = en.dof_map(MESH)
    assert d.n_dof == MESH.n_nodes
    assert sorted(d.dof_node.tolist()) == list(range(MESH.n_nodes))
    assert np.allclose(d.positions, MESH.nodes[d.dof_node])


def test_breaking_a_ring_doubles_its_nodes():
    ring = sc.block_ring(MESH, 2, 2, 2, 2)
    d = en.dof_map(MESH, ring)
    # the 8 nodes on the block outline each split into an inner and an outer copy
    assert d.n_dof == MESH.n_nodes + 8
    y = en.identity_field(MESH, ring)
    assert np.allclose(en.cell_gradients(MESH, y), np.eye(2))


def test_transfer_preserves_slot_values():
    u = en.Field.from_function(MESH, en.dof_map(MESH), lambda X: np.sin(X), en.DISPLACEMENT)
    ids = crackable_interfaces(MESH)[::3]
    v = en.transfer(u, en.dof_map(MESH, ids))
    assert np.array_equal(u.slot_values(), v.slot_values())


@settings(max_examples=30, deadline=None)
@given(st.sets(st.sampled_from(crackable_interfaces(MESH)), max_size=20), st.integers(0, 2**31))
def test_gradient_operator_matches_einsum(ids, seed):
    d = en.dof_map(MESH, ids)
    vals = np.random.default_rng(seed).normal(size=(d.n_dof, 2))
    f = en.Field(d, vals, en.DISPLACEMENT)
    for where, ref in (("gauss", en.gauss_gradients), ("centroid", en.cell_gradients)):
        B = en.gradient_operator(MESH, d, where)
        assert np.allclose((B @ vals.ravel()).reshape(ref(MESH, f).shape), ref(MESH, f))


# -- energies ---------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_hessian_term_of_parabola(n):
    # y = (x1^2, 0): |grad^2 y|^2 = 4, and the quadrature misses one column of cells
    mesh = build_mesh(GridSpec(2.0, 1.0, 2 * n, n, 1.0 / n))
    y = en.Field.from_function(mesh, en.dof_map(mesh), lambda X: np.c_[X[:, 0] ** 2, 0 * X[:, 0]])
    got = en.discrete_hessian_term(mesh, (), y)
    assert got == pytest.approx(4 * 2.0 * (1 - mesh.dx / 2.0), rel=1e-12)


def test_hessian_term_richardson_limit():
    vals = []
    for n in (8, 16):
        mesh = build_mesh(GridSpec(2.0, 1.0, 2 * n, n, 1.0 / n))
        y = en.Field.from_function(mesh, en.dof_map(mesh), lambda X: np.c_[X[:, 0] ** 2, 0 * X[:, 0]])
        vals.append(en.discrete_hessian_term(mesh, (), y))
    assert 2 * vals[1] - vals[0] == pytest.approx(8.0, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(angles, arrays(float, 2, elements=st.floats(-5, 5)), st.sets(st.sampled_from(crackable_interfaces(MESH)), max_size=10))
def test_rigid_motion_costs_only_surface(theta, c, ids):
    p = en.ModelParams()
    R = rot(theta)
    y = en.Field.from_function(MESH, en.dof_map(MESH, ids), lambda X: X @ R.T + c)
    E = en.nonlinear_energy(MESH, (), ids, y, p)
    assert E.elastic <= 1e-20 and E.hessian <= 1e-20
    assert E.surface == pytest.approx(p.kappa * len(ids))


def test_affine_linear_energy_is_exact():
    A = np.array([[0.3, -0.1], [0.4, 0.2]])
    u = en.Field.from_function(MESH, en.dof_map(MESH), lambda X: X @ A.T, en.DISPLACEMENT)
    C = en.default_tensor()
    E = en.linear_energy(MESH, (), (), u, en.ModelParams(), C)
    assert E.elastic == pytest.approx(0.5 * C.Q(A) * 36.0, rel=1e-12)
    assert E.hessian == 0 and E.surface == 0


def test_nonlinear_energy_scaling():
    A = np.array([[0.01, 0.0], [0.0, 0.0]])
    p = en.ModelParams(epsilon=0.01)
    y = en.Field.from_function(MESH, en.dof_map(MESH), lambda X: X + X @ A.T)
    E = en.nonlinear_energy(MESH, (), (), y, p)
    # W(Id + A) = A11^2 exactly for this diagonal stretch
    assert E.elastic == pytest.approx(p.epsilon**-2 * 1e-4 * 36.0, rel=1e-9)


def test_surface_counts_only_new_interfaces():
    ids = crackable_interfaces(MESH)[:4]
    y = en.identity_field(MESH, ids)
    E = en.nonlinear_energy(MESH, ids[:2], ids, y, en.ModelParams(kappa=2.0))
    assert E.surface == pytest.approx(2 * 2.0)


def test_ties_must_match_crack():
    y = en.identity_field(MESH)
    with pytest.raises(InconsistentTieError):
        en.nonlinear_energy(MESH, (), crackable_interfaces(MESH)[:1], y, en.ModelParams())


@pytest.mark.parametrize(
    "kw", [dict(gamma=0.6), dict(beta=0.65, gamma=0.7), dict(beta=1.0), dict(epsilon=0.0), dict(kappa=-1.0)]
)
def test_param_invariants(kw):
    with pytest.raises(ParamsError):
        en.ModelParams(**kw).validate()
