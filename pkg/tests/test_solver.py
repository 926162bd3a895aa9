import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import eigh

from plasmonic_eigs.fem import AssembledPencil, DofMap, MaterialPair, SparseSym, assemble
from plasmonic_eigs.solver import (LanczosConfig, count_between, count_below, residual_distance_bound,
                                   slicing_multiplicities, solve_smallest_modulus)

CFG = LanczosConfig(krylov_dim=24)


def _pencil(K, M):
    n = K.shape[0]
    dm = DofMap(np.arange(n), np.arange(n))
    return AssembledPencil(SparseSym.from_full(sp.csr_matrix(K)), SparseSym.from_full(sp.csr_matrix(M)), dm)


@pytest.fixture
def pencil(small_mesh):
    return assemble(small_mesh, MaterialPair())


def test_two_by_two():
    p = _pencil(np.diag([2.0, -3.0]), np.eye(2))
    res = solve_smallest_modulus(p, 1, 1, CFG)
    assert res.converged
    np.testing.assert_allclose(res.pos_values, [2.0], rtol=1e-12)
    np.testing.assert_allclose(res.neg_values, [-3.0], rtol=1e-12)


def test_matches_dense(pencil):
    lam = eigh(pencil.K.toarray(), pencil.M.toarray(), eigvals_only=True)
    res = solve_smallest_modulus(pencil, 4, 3, CFG)
    assert res.converged
    np.testing.assert_allclose(res.pos_values, lam[lam > 0][:4], rtol=1e-9)
    np.testing.assert_allclose(res.neg_values, lam[lam < 0][::-1][:3], rtol=1e-9)
    # M-orthonormal vectors
    V = np.column_stack([res.neg_vectors, res.pos_vectors])
    G = V.T @ (pencil.M @ V)
    np.testing.assert_allclose(G, np.eye(V.shape[1]), atol=1e-8)


def test_deterministic(pencil):
    a = solve_smallest_modulus(pencil, 3, 2, CFG)
    b = solve_smallest_modulus(pencil, 3, 2, CFG)
    np.testing.assert_array_equal(a.values(), b.values())
    np.testing.assert_array_equal(a.pos_vectors, b.pos_vectors)
    np.testing.assert_array_equal(a.neg_vectors, b.neg_vectors)


def test_residual_bound_holds(pencil):
    lam = eigh(pencil.K.toarray(), pencil.M.toarray(), eigvals_only=True)
    res = solve_smallest_modulus(pencil, 3, 2, CFG)
    for _, val, rho, vec in res.pairs():
        assert np.min(np.abs(lam - val)) <= rho + 1e-10 * abs(val)


def test_residual_bound_on_perturbed_pairs(pencil, rng):
    lam = eigh(pencil.K.toarray(), pencil.M.toarray(), eigvals_only=True)
    res = solve_smallest_modulus(pencil, 3, 2, CFG)
    for _, val, _, vec in res.pairs():
        for eps in (1e-4, 1e-2, 1e-1):
            v = vec + eps * rng.normal(size=vec.size) * np.abs(vec).max()
            mu = val * (1 + eps)
            rho = residual_distance_bound(pencil, mu, v)
            assert np.min(np.abs(lam - mu)) <= rho * (1 + 1e-12)


def test_shift_invariance(pencil):
    base = solve_smallest_modulus(pencil, 3, 2, CFG)
    shifted = AssembledPencil(SparseSym.from_full(pencil.K.full() + 5.0 * pencil.M.full()), pencil.M,
                              pencil.dofmap)
    lam = eigh(shifted.K.toarray(), shifted.M.toarray(), eigvals_only=True)
    res = solve_smallest_modulus(shifted, 2, 2, CFG, shift=5.0)
    # eigenvalues next to shift 5 of K + 5M are those next to 0 of K, moved by 5
    np.testing.assert_allclose(res.pos_values, base.pos_values[:2] + 5.0, rtol=1e-9)
    np.testing.assert_allclose(res.neg_values, base.neg_values[:2] + 5.0, rtol=1e-9)
    assert lam.size == pencil.n


def test_counts(pencil):
    lam = eigh(pencil.K.toarray(), pencil.M.toarray(), eigvals_only=True)
    assert count_below(pencil, 0.0) == np.sum(lam < 0)
    assert count_between(pencil, 0.0, 30.0) == np.sum((lam > 0) & (lam < 30))


def test_multiplicities_by_inertia():
    p = _pencil(np.diag([-4.0, -4.0, 1.0, 2.0, 2.0, 2.0, 9.0]), np.eye(7))
    out = slicing_multiplicities(p, [-4.0, -4.0, 1.0, 2.0, 2.0, 2.0])
    assert [m for _, m in out] == [2, 1, 3]


def test_krylov_too_small(pencil):
    with pytest.raises(ValueError):
        solve_smallest_modulus(pencil, 10, 10, LanczosConfig(krylov_dim=20))


def test_requesting_more_than_available_flags():
    p = _pencil(np.diag([1.0, 2.0, 3.0]), np.eye(3))
    res = solve_smallest_modulus(p, 2, 1, CFG)
    assert any("below" in f for f in res.flags)
    np.testing.assert_allclose(res.pos_values, [1.0, 2.0])
