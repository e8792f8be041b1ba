"""Block-Jacobi, additive Schwarz and harmonic-Ritz polynomial preconditioners."""
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_asm_apply, random_state

from hdgkit.errors import ArnoldiBreakdown
from hdgkit.hdglocal import assemble_element_operators, make_space
from hdgkit.krylov import GmresConfig, gmres, gmres_solve
from hdgkit.meshgrid import build_structured_quad
from hdgkit.pdemodels import burgers_dirichlet, burgers_model, sinsin_poisson
from hdgkit.precondkit import (Preconditioner, apply_poly, asm_blocks, build_asm, build_bj,
                               build_poly, build_preconditioner, compute_harmonic_ritz, identity,
                               leja_order)
from hdgkit.traceassembly import FaceBlockMatrix, assemble_global, to_dense


def system(n=3, k=1, model=None, seed=0):
    sp = make_space(build_structured_quad(n), k)
    model = model or sinsin_poisson()
    center = burgers_dirichlet if model.name == "burgers2d" else None
    ops = assemble_element_operators(model, random_state(sp, seed, center=center), sp)
    K, r = assemble_global(ops, sp.mesh)
    return sp, ops, K, r


def dense_op(A):
    class Op:
        n_dof = A.shape[0]

        def matvec(self, v):
            return A @ v

    return Op()


# ------------------------------------------------------------------ block Jacobi

def test_bj_of_scaled_identity():
    _, _, K, _ = system(2, 1)
    blocks = np.zeros_like(K.blocks)
    blocks[:, 0] = 2 * np.eye(K.bs)
    p = build_bj(FaceBlockMatrix.from_blocks(1, K.pf, 4, K.neighbor, blocks))
    np.testing.assert_allclose(p.bj_inv, 0.5 * np.broadcast_to(np.eye(K.bs), p.bj_inv.shape))


@pytest.mark.parametrize("model", [sinsin_poisson(), burgers_model()])
def test_bj_inverts_every_self_block(model):
    _, _, K, _ = system(3, 2, model)
    p = build_bj(K)
    eye = np.broadcast_to(np.eye(K.bs), (K.nf, K.bs, K.bs))
    np.testing.assert_allclose(p.bj_inv @ K.self_blocks(), eye, atol=1e-12)
    y = np.random.default_rng(0).standard_normal(K.n_dof)
    A = to_dense(K)
    D = np.zeros_like(A)
    for f in range(K.nf):
        s = slice(f * K.bs, (f + 1) * K.bs)
        D[s, s] = A[s, s]
    np.testing.assert_allclose(p.apply(y), np.linalg.solve(D, y), atol=1e-12)
    assert not p.apply(np.zeros(K.n_dof)).any()


def test_bj_exact_on_block_diagonal_operator():
    _, _, K, _ = system(2, 1)
    blocks = np.zeros_like(K.blocks)
    blocks[:, 0] = K.self_blocks()
    D = FaceBlockMatrix.from_blocks(1, K.pf, 4, K.neighbor, blocks)
    rhs = np.random.default_rng(1).standard_normal(D.n_dof)
    x, st_ = gmres_solve(D, build_bj(D), rhs)
    assert st_.iters == 1
    np.testing.assert_allclose(to_dense(D) @ x, rhs, atol=1e-10)


# ------------------------------------------------------------------ additive Schwarz

def test_asm_single_element_is_exact():
    sp, ops, K, r = system(1, 2)
    p = build_asm(ops, sp.mesh)
    np.testing.assert_allclose(p.apply(r), np.linalg.solve(to_dense(K), r), atol=1e-12)
    x, st_ = gmres_solve(K, p, r)
    assert st_.iters == 1


def test_asm_shared_face_enrichment():
    sp, ops, K, _ = system(2, 1)
    P = asm_blocks(ops, sp.mesh).reshape(sp.ne, 4, K.bs, 4, K.bs)
    kb = ops.kbar.reshape(sp.ne, 4, K.bs, 4, K.bs)
    f = sp.mesh.interior_faces[0]
    (e1, e2), (l1, l2) = sp.mesh.face_to_elements[f], sp.mesh.face_local_index[f]
    both = kb[e1, l1, :, l1] + kb[e2, l2, :, l2]
    np.testing.assert_allclose(P[e1, l1, :, l1], both)
    np.testing.assert_allclose(P[e2, l2, :, l2], both)


@pytest.mark.parametrize("model", [sinsin_poisson(), burgers_model()])
def test_asm_blocks_are_dense_restrictions(model):
    sp, ops, K, _ = system(3, 2, model)
    A = to_dense(K)
    P = asm_blocks(ops, sp.mesh)
    for e in range(sp.ne):
        idx = np.concatenate([np.arange(g * K.bs, (g + 1) * K.bs) for g in sp.mesh.element_to_face[e]])
        np.testing.assert_allclose(P[e], A[np.ix_(idx, idx)], atol=1e-12 * np.abs(A).max())


def test_asm_apply_matches_dense_oracle():
    sp, ops, K, _ = system(3, 2, burgers_model())
    A = to_dense(K)
    p = build_asm(ops, sp.mesh)
    Y = np.random.default_rng(2).standard_normal((50, K.n_dof))
    for y in Y:
        ref = dense_asm_apply(A, sp.mesh, K.bs, y)
        assert np.abs(p.apply(y) - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_bj_and_asm_are_linear(a, b, seed):
    sp, ops, K, _ = system(2, 1)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, K.n_dof))
    for p in (build_bj(K), build_asm(ops, sp.mesh)):
        lhs = p.apply(a * x + b * y)
        rhs = a * p.apply(x) + b * p.apply(y)
        assert np.abs(lhs - rhs).max() <= 1e-13 * max(1.0, np.abs(rhs).max()) * 10


@pytest.mark.parametrize("n", [3, 4, 5])
def test_asm_needs_fewer_iterations_than_bj_on_poisson(n):
    sp, ops, K, r = system(n, 2)
    cfg = GmresConfig(tol=1e-8)
    it_bj = gmres_solve(K, build_bj(K), r, cfg=cfg)[1].iters
    it_asm = gmres_solve(K, build_asm(ops, sp.mesh), r, cfg=cfg)[1].iters
    assert it_asm < it_bj


# ------------------------------------------------------------------ Leja / Ritz

def test_leja_cases():
    np.testing.assert_array_equal(leja_order([1]), [1])
    np.testing.assert_array_equal(leja_order([1, 10, 5]), [10, 1, 5])
    np.testing.assert_array_equal(leja_order([2 + 1j, 2 - 1j, 7]), [7, 2 + 1j, 2 - 1j])
    assert leja_order([]).size == 0
    with pytest.raises(ValueError):
        leja_order([1 + 1j, 2])


@settings(max_examples=30, deadline=None)
@given(vals=st.lists(st.floats(0.1, 100), min_size=1, max_size=12, unique=True))
def test_leja_is_a_permutation_starting_at_largest(vals):
    out = leja_order(vals)
    assert sorted(out.real) == sorted(vals)
    assert out[0].real == max(vals)


def test_ritz_of_identity_breaks_down_at_one():
    with pytest.warns(ArnoldiBreakdown):
        theta = compute_harmonic_ritz(lambda v: v.copy(), 6, 4)
    np.testing.assert_allclose(theta, [1.0])


@pytest.mark.parametrize("P", [1, 3, 8, 15, 40])
def test_ritz_of_diagonal_is_exact_spectrum(P):
    d = np.arange(1.0, P + 1)
    theta = compute_harmonic_ritz(lambda v: d * v, P, P, seed=3)
    assert theta.size == P
    np.testing.assert_allclose(np.sort(theta.real), d, atol=1e-10)
    assert np.abs(theta.imag).max() == 0


def test_ritz_conjugate_pair():
    A = np.array([[1.0, -2.0], [2.0, 1.0]])
    theta = compute_harmonic_ritz(lambda v: A @ v, 2, 2)
    np.testing.assert_allclose(theta, [1 + 2j, 1 - 2j], atol=1e-12)


def test_ritz_is_seed_deterministic():
    _, _, K, _ = system(3, 1, burgers_model())
    a = compute_harmonic_ritz(K.matvec, K.n_dof, 10, seed=5)
    b = compute_harmonic_ritz(K.matvec, K.n_dof, 10, seed=5)
    assert np.array_equal(a, b)
    with pytest.raises(ValueError):
        compute_harmonic_ritz(K.matvec, K.n_dof, 0)


# ------------------------------------------------------------------ polynomial

def test_poly_degree_one_real():
    p = Preconditioner("poly", ritz=np.array([4.0 + 0j]))
    y = np.array([1.0, -2.0])
    np.testing.assert_allclose(apply_poly(p, None, lambda v: 3 * v, y), y / 4)
    np.testing.assert_allclose(apply_poly(p, lambda v: 2 * v, lambda v: 3 * v, y), 2 * y / 4)


def test_poly_telescopes_with_unit_ritz_values():
    p = Preconditioner("poly", ritz=np.ones(5, dtype=complex))
    y = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(apply_poly(p, None, lambda v: v.copy(), y), y)


def test_poly_exact_on_known_spectrum():
    A = np.diag([1.0, 2.0, 3.0])
    p = Preconditioner("poly", ritz=leja_order([1, 2, 3]))
    y = np.array([1.0, 1.0, 1.0])
    np.testing.assert_allclose(apply_poly(p, None, lambda v: A @ v, y), [1, 0.5, 1 / 3], atol=1e-10)


@pytest.mark.parametrize("n,seed", [(6, 0), (12, 1), (20, 2)])
def test_poly_full_degree_is_exact_inverse(n, seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, n)) + 3 * np.eye(n)
    lam = np.sort(rng.uniform(1, 5, n))
    A = V @ np.diag(lam) @ np.linalg.inv(V)
    p = build_poly(dense_op(A), n)
    y = rng.standard_normal(n)
    z = p.apply(y)
    ref = np.linalg.solve(A, y)
    assert np.linalg.norm(z - ref) <= 1e-8 * np.linalg.norm(ref)
    x, st_ = gmres(lambda v: A @ v, y, cfg=GmresConfig(tol=1e-6), precond=p.apply)
    assert st_.iters == 1


def test_hybrid_poly_uses_preconditioned_operator():
    sp, ops, K, r = system(2, 1, burgers_model())
    base = build_bj(K)
    p = build_poly(K, K.n_dof, base)
    z = p.apply(r)
    ref = np.linalg.solve(to_dense(K), r)
    assert np.linalg.norm(z - ref) <= 1e-6 * np.linalg.norm(ref)
    assert p.label == "BJ-PP(%d)" % p.degree


def test_poly_reduces_iterations_on_burgers():
    sp, ops, K, r = system(8, 1, burgers_model())
    cfg = GmresConfig()
    plain = gmres_solve(K, build_bj(K), r, cfg=cfg)[1].iters
    hybrid = gmres_solve(K, build_preconditioner("bj", K, poly_degree=10), r, cfg=cfg)[1].iters
    assert hybrid < plain
    none = gmres_solve(K, identity(), r, cfg=cfg)[1].iters
    pp = gmres_solve(K, build_preconditioner("none", K, poly_degree=10), r, cfg=cfg)[1].iters
    assert pp <= none


def test_factory_labels_and_errors():
    sp, ops, K, _ = system(2, 1)
    assert build_preconditioner("none", K).label == "none"
    assert build_preconditioner("asm", K, ops, sp.mesh).label == "ASM"
    assert build_preconditioner("asm", K, ops, sp.mesh, 4).label == "ASM-PP(4)"
    assert build_preconditioner("none", K, poly_degree=3).label == "PP(3)"
    with pytest.raises(ValueError):
        build_preconditioner("ilu", K)
    with pytest.raises(ValueError):
        build_preconditioner("asm", K)


def test_refresh_changes_ritz_values_only_for_poly():
    _, _, K, _ = system(3, 1, burgers_model())
    p = build_preconditioner("bj", K, poly_degree=6, seed=0)
    before = p.ritz.copy()
    p.refresh(7)
    assert p.degree > 0
    assert not np.array_equal(before, p.ritz)
    b = build_bj(K)
    b.refresh(3)
    assert b.ritz is None


def test_near_zero_ritz_values_dropped():
    d = np.array([1e-16, 1.0, 2.0])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        theta = compute_harmonic_ritz(lambda v: d * v, 3, 3, seed=1)
    assert theta.size <= 3
    assert np.all(np.abs(theta) > 1e-10)
    assert caught
