import numpy as np
import numpy.testing as npt
import pytest
from numpy.polynomial import legendre as npleg

import sgeit
from sgeit import chaos, det_cem, fem, sgfem


@pytest.fixture(scope="module")
def tiny_sg():
    # 5 nodes, 2 electrodes, 1 pixel: 3 stochastic dims, order 60 at Q=2
    mesh = sgeit.make_disk_fixture(1, 4, 2, 0.5)
    part = sgeit.assign_pixels(mesh, np.array([[0.0, 0.0]]))
    sm = fem.assemble_spatial(mesh, part, 1.1, np.array([0.6]))
    a = np.array([100.0, 150.0])
    b = np.array([1000.0, 800.0])
    idx = chaos.iso_td(3, 2)
    system = sgfem.assemble_system(sm, chaos.moment_matrices(idx), a, b)
    return mesh, part, sm, idx, system, a, b


def dense_block_matrix(sm, a, b, y):
    """Deterministic electrode-model matrix at one parameter point."""
    n_d = sm.n_nodes
    n_el = sm.n_electrodes
    L = sm.n_pixels
    zeta = 0.5 * (a + b) + 0.5 * (b - a) * y[L:]
    delta = sm.A0.toarray()
    for l in range(L):
        delta = delta + y[l] * sm.A[l].toarray()
    for m in range(n_el):
        delta = delta + zeta[m] * sm.S[m].toarray()
    ups = np.column_stack(
        [zeta[i + 1] * sm.g[i + 1] - zeta[0] * sm.g[0] for i in range(n_el - 1)]
    )
    pi = np.full((n_el - 1, n_el - 1), zeta[0] * sm.lengths[0])
    pi[np.diag_indices(n_el - 1)] += zeta[1:] * sm.lengths[1:]
    B = np.zeros((n_d + n_el - 1, n_d + n_el - 1))
    B[:n_d, :n_d] = delta
    B[:n_d, n_d:] = ups
    B[n_d:, :n_d] = ups.T
    B[n_d:, n_d:] = pi
    return B


def test_system_matches_dense_quadrature_oracle(tiny_sg):
    """Whole Galerkin matrix vs brute-force integration of B(y) Psi Psi'."""
    mesh, part, sm, idx, system, a, b = tiny_sg
    basis = chaos.ChaosBasis(idx)
    x, w = npleg.leggauss(4)
    Y = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
    W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel() / 8.0
    n_g = len(idx)
    oracle = np.zeros((system.order, system.order))
    for y, wt in zip(Y, W):
        B = dense_block_matrix(sm, a, b, y)
        psi = basis.eval(y)
        oracle += wt * np.kron(B, np.outer(psi, psi))
    K = system.K.toarray()
    npt.assert_allclose(K, oracle, rtol=1e-10, atol=1e-12)


def test_system_bitwise_symmetric(tiny_sg):
    _, _, _, _, system, _, _ = tiny_sg
    diff = (system.K - system.K.T).toarray()
    assert np.abs(diff).max() == 0.0


def test_system_positive_definite(tiny_sg):
    _, _, _, _, system, _, _ = tiny_sg
    w = np.linalg.eigvalsh(system.K.toarray())
    assert w.min() > 0.0


def test_system_bookkeeping(tiny_sg):
    mesh, _, _, idx, system, _, _ = tiny_sg
    assert system.n_nodes == mesh.n_nodes
    assert system.n_electrodes == 2
    assert system.n_chaos == len(idx)
    assert system.order == (mesh.n_nodes + 1) * len(idx)
    assert system.K.shape == (system.order, system.order)


def test_assemble_system_rejects(tiny_sg):
    mesh, part, sm, idx, _, _, _ = tiny_sg
    mm = chaos.moment_matrices(idx)
    with pytest.raises(ValueError, match="electrode 1: invalid contact"):
        sgfem.assemble_system(sm, mm, np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError, match="electrode 2: invalid contact"):
        sgfem.assemble_system(sm, mm, np.array([1.0, 5.0]), np.array([2.0, 1.0]))
    with pytest.raises(ValueError, match="one contact bound pair"):
        sgfem.assemble_system(sm, mm, np.array([1.0]), np.array([2.0]))
    mm_small = chaos.moment_matrices(chaos.iso_td(2, 2))
    with pytest.raises(ValueError, match="moment matrices cover 2 dimensions"):
        sgfem.assemble_system(sm, mm_small, np.array([1.0, 1.0]), np.array([2.0, 2.0]))


def test_rhs_frozen_examples():
    mesh = sgeit.make_disk_fixture(2, 12, 3, 0.5)
    part = sgeit.assign_pixels(mesh, np.array([[0.0, 0.0]]))
    sm = fem.assemble_spatial(mesh, part, 1.0, np.array([0.5]))
    idx = chaos.iso_td(4, 1)
    system = sgfem.assemble_system(
        sm, chaos.moment_matrices(idx), np.full(3, 10.0), np.full(3, 1000.0)
    )
    n_g = len(idx)
    base = mesh.n_nodes * n_g

    c = sgfem.rhs_for_current(system, np.array([1.0, -1.0, 0.0]))
    assert c[base] == 2.0 and c[base + n_g] == 1.0
    c = sgfem.rhs_for_current(system, np.array([1.0, 0.0, -1.0]))
    assert c[base] == 1.0 and c[base + n_g] == 2.0
    # only the degree-0 voltage coefficients are loaded
    mask = np.ones(system.order, dtype=bool)
    mask[base::n_g] = False
    assert np.all(c[mask] == 0.0)

    with pytest.raises(ValueError, match="sum to zero"):
        sgfem.rhs_for_current(system, np.array([1.0, -0.5, 0.0]))
    with pytest.raises(ValueError, match="one current per electrode"):
        sgfem.rhs_for_current(system, np.array([1.0, -1.0]))


def test_solve_direct_and_pcg_agree(tiny_sg):
    # moderate contact bounds keep the system well conditioned for CG
    _, part, sm, idx, _, _, _ = tiny_sg
    system = sgfem.assemble_system(
        sm, chaos.moment_matrices(idx), np.array([1.0, 2.0]), np.array([5.0, 4.0])
    )
    pats = sgfem.standard_patterns(2)
    sol_d = sgfem.solve(system, pats, method="direct")
    sol_j = sgfem.solve(system, pats, method="pcg", precond="jacobi")
    sol_i = sgfem.solve(system, pats, method="pcg", precond="ilu")
    assert sol_d.method == "direct"
    assert sol_j.method == "pcg"
    # symmetry zeros carry solver noise ~tol, so an absolute floor applies
    npt.assert_allclose(sol_j.beta, sol_d.beta, rtol=1e-7, atol=1e-9)
    npt.assert_allclose(sol_i.beta, sol_d.beta, rtol=1e-7, atol=1e-9)
    assert sol_d.residuals.max() <= 1e-10
    assert sol_j.residuals.max() <= 1e-10


def test_solve_auto_picks_direct_below_limit(tiny_sg):
    _, _, _, _, system, _, _ = tiny_sg
    sol = sgfem.solve(system, sgfem.standard_patterns(2))
    assert sol.method == "direct"


def test_solve_rejects_bad_options(tiny_sg):
    _, part, sm, idx, _, _, _ = tiny_sg
    system = sgfem.assemble_system(
        sm, chaos.moment_matrices(idx), np.array([1.0, 2.0]), np.array([5.0, 4.0])
    )
    pats = sgfem.standard_patterns(2)
    with pytest.raises(ValueError, match="unknown solver method"):
        sgfem.solve(system, pats, method="qr")
    with pytest.raises(ValueError, match="unknown preconditioner"):
        sgfem.solve(system, pats, method="pcg", precond="amg")
    with pytest.raises(RuntimeError, match="PCG did not reach"):
        sgfem.solve(system, pats, method="pcg", maxiter=1)


def test_degree_zero_equals_deterministic_midpoint(tiny_sg):
    # Q=0 keeps only the parameter mean, and B(y) is affine in y
    mesh, part, sm, _, _, a, b = tiny_sg
    idx0 = chaos.iso_td(3, 0)
    system0 = sgfem.assemble_system(sm, chaos.moment_matrices(idx0), a, b)
    pats = sgfem.standard_patterns(2)
    sol = sgfem.solve(system0, pats)
    det = det_cem.solve_deterministic(
        mesh,
        part,
        det_cem.DeterministicSample(np.array([1.1]), 0.5 * (a + b)),
        pats,
    )
    npt.assert_allclose(sol.mean_voltages(), det.voltages, rtol=1e-12)


def test_mean_reciprocity():
    mesh = sgeit.make_disk_fixture(3, 12, 3, 0.5)
    part = sgeit.assign_pixels(mesh, np.array([[0.3, 0.0], [-0.3, 0.0]]))
    sm = fem.assemble_spatial(mesh, part, 1.1, np.array([0.5, 0.5]))
    idx = chaos.iso_td(5, 2)
    system = sgfem.assemble_system(
        sm, chaos.moment_matrices(idx), np.full(3, 50.0), np.full(3, 900.0)
    )
    pats = sgfem.standard_patterns(3)
    sol = sgfem.solve(system, pats)
    U = sol.mean_voltages()
    npt.assert_allclose(pats[0] @ U[1], pats[1] @ U[0], rtol=1e-9)


def test_expand_mean_free():
    out = sgfem.expand_mean_free(np.array([0.25, -1.5]))
    npt.assert_allclose(out, [-1.25, -0.25, 1.5])
    assert out.sum() == pytest.approx(0.0, abs=1e-15)


def test_standard_patterns():
    pats = sgfem.standard_patterns(4, amplitude=2.0)
    npt.assert_array_equal(
        pats,
        [[2.0, -2.0, 0.0, 0.0], [2.0, 0.0, -2.0, 0.0], [2.0, 0.0, 0.0, -2.0]],
    )
    npt.assert_array_equal(pats.sum(axis=1), 0.0)
