import json

import numpy as np
import pytest

from conftest import assert_close, double_integrator
from quadimmerse.immersion import (
    RankAmbiguityWarning,
    algorithm1,
    build_ltv,
    decompose_stage,
    embed,
    immerse,
    immersion_report,
    krylov_rank,
    lift,
    numerical_rank,
    rank_factorize,
    single_output_immersion,
)
from quadimmerse.selftest import random_system
from quadimmerse.symcalc import tri_size, vech
from quadimmerse.sysmodel import LqoSystem, output_of, stacked_output


def krylov_rows(sys):
    rows = []
    for c in sys.C:
        X = c.full()
        for _ in range(tri_size(sys.n)):
            rows.append(vech(X))
            X = X @ sys.A + sys.A.T @ X
    return np.array(rows)


def same_row_span(P, Q):
    r = numerical_rank(np.vstack([P, Q]), warn=False)[0]
    return r == numerical_rank(P, warn=False)[0] == numerical_rank(Q, warn=False)[0]


# ---- lift -----------------------------------------------------------------

def test_lift_examples(rng):
    np.testing.assert_array_equal(lift([1.0, 2.0]), [1, 4, 4])
    np.testing.assert_array_equal(lift(np.zeros(3)), np.zeros(6))
    for _ in range(20):
        n = int(rng.integers(1, 6))
        C = rng.standard_normal((n, n))
        C = C + C.T
        x = rng.standard_normal(n)
        assert_close(0.5 * vech(C) @ lift(x), 0.5 * x @ C @ x)


# ---- single output --------------------------------------------------------

@pytest.mark.parametrize("nb", [1, 2, 3])
def test_single_double_integrator(nb):
    imm = single_output_immersion(double_integrator(nb))
    Z, I = np.zeros((nb, nb)), np.eye(nb)
    assert imm.m == 3
    np.testing.assert_array_equal(imm.basis[0].full(), np.eye(2 * nb))
    np.testing.assert_array_equal(imm.basis[1].full(), np.block([[Z, I], [I, Z]]))
    np.testing.assert_array_equal(imm.basis[2].full(), np.block([[Z, Z], [Z, 2 * I]]))
    np.testing.assert_array_equal(imm.alpha, np.zeros(3))


def test_single_example2(ex2):
    imm = single_output_immersion(ex2)
    assert imm.m == 2
    np.testing.assert_allclose(imm.alpha, [4.0, 4.0], atol=1e-10)
    assert imm.residual < 1e-12


def test_single_zero_drift(rng):
    C = rng.standard_normal((3, 3))
    sys = LqoSystem(np.zeros((3, 3)), np.zeros((3, 1)), (C + C.T,), np.zeros(3))
    imm = single_output_immersion(sys)
    assert imm.m == 1
    np.testing.assert_array_equal(imm.alpha, [0.0])


def test_single_linear_output_is_trivial():
    sys = LqoSystem(np.eye(2), np.zeros((2, 1)), (np.zeros((2, 2)),), [1.0, 0.0])
    imm = single_output_immersion(sys)
    assert imm.m == 0
    ltv = build_ltv(sys, imm)
    assert ltv.dim_z == 2
    np.testing.assert_array_equal(ltv.calA([3.0]), sys.A)


def test_single_needs_one_output(ex3):
    with pytest.raises(ValueError):
        single_output_immersion(ex3)


# ---- rank factorization ---------------------------------------------------

def test_rank_factorize_single_row():
    r = np.array([[1.0, -2.0, 0.5]])
    F, L0 = rank_factorize(r)
    np.testing.assert_array_equal(F, [[1.0]])
    np.testing.assert_array_equal(L0, r)


def test_rank_factorize_proportional():
    r = np.array([0.3, 1.0, -2.0, 0.0])
    F, L0 = rank_factorize(np.vstack([r, 2 * r]))
    assert L0.shape == (1, 4)
    assert_close(F @ L0, np.vstack([r, 2 * r]))
    np.testing.assert_allclose(F, [[1.0], [2.0]], atol=1e-14)


def test_rank_factorize_example3(ex3):
    Cbar = stacked_output(ex3).Cbar
    F, L0 = rank_factorize(Cbar)
    assert F.shape == (2, 2) and L0.shape == (2, 45)
    assert_close(F @ L0, Cbar)


def test_rank_factorize_random(rng):
    for _ in range(50):
        q, r, N = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(4, 10))
        Cbar = rng.standard_normal((q, r)) @ rng.standard_normal((r, N))
        F, L0 = rank_factorize(Cbar)
        assert F.shape[1] == L0.shape[0] == min(q, r)
        assert np.linalg.matrix_rank(F) == F.shape[1]
        assert np.linalg.matrix_rank(L0) == L0.shape[0]
        assert_close(F @ L0, Cbar)


def test_rank_factorize_zero():
    with pytest.raises(ValueError):
        rank_factorize(np.zeros((2, 3)))


# ---- decompose_stage -------------------------------------------------------

def test_decompose_all_dependent(rng):
    L0 = rng.standard_normal((2, 6))
    LA = np.array([[2.0, -1.0], [0.5, 0.0]]) @ L0
    P, Lnew, M, resid = decompose_stage([], L0, LA)
    assert Lnew.shape == (0, 6)
    np.testing.assert_array_equal(P, np.eye(2))
    assert_close(M[0], [[2.0, -1.0], [0.5, 0.0]], 1e-12)
    assert resid < 1e-14


def test_decompose_all_independent(rng):
    L0 = rng.standard_normal((2, 6))
    LA = rng.standard_normal((2, 6))
    P, Lnew, M, _ = decompose_stage([], L0, LA)
    np.testing.assert_array_equal(Lnew, LA)
    np.testing.assert_array_equal(P, np.eye(2))
    assert M[0].size == 0


def test_decompose_keeps_order(rng):
    L0 = rng.standard_normal((4, 10))
    new = rng.standard_normal((2, 10))
    LA = np.vstack([L0[1] - L0[2], new[0], 3 * L0[0], new[1]])
    P, Lnew, M, _ = decompose_stage([], L0, LA)
    np.testing.assert_array_equal(Lnew, new)
    np.testing.assert_array_equal(P, np.eye(4)[[1, 3, 0, 2]])
    # coefficients act on the permuted rows P @ L0 = L0[[1, 3, 0, 2]]
    assert_close(M[0], [[1, 0, 0, -1], [0, 0, 3, 0]], 1e-12)
    assert_close(M["new"], np.zeros((2, 2)), 1e-12)


def test_decompose_shape_mismatch(rng):
    with pytest.raises(ValueError):
        decompose_stage([], rng.standard_normal((2, 6)), rng.standard_normal((3, 6)))


def test_example3_stage1(ex3):
    imm = algorithm1(ex3)
    L0A = imm.Lbars[0] @ imm.Abar
    # the speed row is drift-invariant: 0.5 |v_a|^2 has zero drift derivative
    assert np.count_nonzero(np.abs(L0A).sum(axis=1) > 0) == 1
    assert imm.dims[1] == 1


# ---- Algorithm 1 -----------------------------------------------------------

def test_algorithm1_example3(ex3):
    imm = algorithm1(ex3)
    assert imm.m == 3
    assert imm.dims == (2, 1, 1)
    ltv = build_ltv(ex3, imm)
    assert ltv.dim_z == 13
    assert same_row_span(np.vstack(imm.Lbars), krylov_rows(ex3))
    assert krylov_rank(ex3) == 4


def test_algorithm1_example2_matches_single(ex2):
    imm = algorithm1(ex2)
    assert imm.m == 2 and imm.dims == (1, 1)
    single = single_output_immersion(ex2)
    assert same_row_span(np.vstack(imm.Lbars), np.array([b.packed for b in single.basis]))


def test_algorithm1_proportional_outputs(rng):
    C = rng.standard_normal((3, 3))
    C = C + C.T
    sys = LqoSystem(np.zeros((3, 3)), np.zeros((3, 1)), (C, 2 * C), rng.standard_normal((2, 3)))
    imm = algorithm1(sys)
    assert imm.dims == (1,) and imm.m == 1
    assert all(not np.any(M) for M in imm.Ms.values())


def test_algorithm1_linear_outputs():
    sys = LqoSystem(np.eye(2), np.ones((2, 1)), (np.zeros((2, 2)),) * 2, np.eye(2))
    imm = algorithm1(sys)
    assert imm.m == 0
    ltv = build_ltv(sys, imm)
    np.testing.assert_array_equal(ltv.calA([2.0]), sys.A)
    np.testing.assert_array_equal(ltv.calC, np.eye(2))


def test_algorithm1_invariants_random():
    rng = np.random.default_rng(11)
    for trial in range(60):
        sys = random_system(rng, structured=trial % 3 == 0)
        imm = algorithm1(sys)
        N = tri_size(sys.n)
        assert imm.n_aux <= N
        if imm.m == 0:
            continue
        stack = np.vstack(imm.Lbars)
        assert numerical_rank(stack, warn=False)[0] == imm.n_aux
        assert imm.n_aux == krylov_rank(sys)
        assert same_row_span(stack, krylov_rows(sys))
        for k in range(imm.m):
            scale = max(1.0, np.abs(imm.Lbars[k] @ imm.Abar).max())
            assert imm.stage_relation_residual(k) <= 1e-10 * scale
        # termination: the last stage maps into the accumulated span
        last = imm.Lbars[-1] @ imm.Abar
        assert numerical_rank(np.vstack([stack, last]), warn=False)[0] == imm.n_aux


def test_algorithm1_needs_row_on_new_block():
    # both rows of Lbar_0 Abar leave span(Lbar_0) but add one dimension together
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    C1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    C2 = np.array([[0.0, 0.0], [0.0, 1.0]])
    sys = LqoSystem(A, np.zeros((2, 0)), (C1, C2 + 0.5 * C1), np.zeros((2, 2)))
    imm = algorithm1(sys)
    assert imm.dims == (2, 1)
    assert imm.n_aux == krylov_rank(sys)
    np.testing.assert_allclose(imm.Ms[(0, 1)], [[0.5]], atol=1e-14)
    for k in range(imm.m):
        assert imm.stage_relation_residual(k) < 1e-12


# ---- extended system --------------------------------------------------------

def test_build_double_integrator_scalar():
    sys = double_integrator(1)
    ltv = build_ltv(sys, single_output_immersion(sys))
    assert ltv.dim_z == 5
    upper = ltv.A_const[:3, :3]
    np.testing.assert_array_equal(upper, [[0, 0, 0], [1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(ltv.calC, [[0, 0, 1, 0, 0]])
    np.testing.assert_array_equal(ltv.calB, [[0], [0], [0], [0], [1]])


@pytest.mark.parametrize("which", ["ex2", "ex3"])
def test_zero_input_block_structure(which, request):
    sys = request.getfixturevalue(which)
    ltv = build_ltv(sys, immerse(sys))
    A0 = ltv.calA(np.zeros(sys.p))
    np.testing.assert_array_equal(A0, ltv.A_const)
    np.testing.assert_array_equal(A0[ltv.n_aux :, : ltv.n_aux], 0.0)
    np.testing.assert_array_equal(A0[ltv.n_aux :, ltv.n_aux :], sys.A)
    np.testing.assert_array_equal(ltv.coupling_block(np.zeros(sys.p)), 0.0)


def test_calA_linear_in_u(ex3, rng):
    ltv = build_ltv(ex3, algorithm1(ex3))
    u1, u2 = rng.standard_normal(3), rng.standard_normal(3)
    A0 = ltv.calA(np.zeros(3))
    assert_close(ltv.calA(u1 + u2) - A0, (ltv.calA(u1) - A0) + (ltv.calA(u2) - A0), 1e-12)
    z = rng.standard_normal(ltv.dim_z)
    assert_close(ltv.rhs(z, u1), ltv.calA(u1) @ z + ltv.calB @ u1, 1e-12)


def test_calC_multi_structure(ex3):
    imm = algorithm1(ex3)
    ltv = build_ltv(ex3, imm)
    np.testing.assert_array_equal(ltv.calC[:, :2], 0.0)
    assert_close(ltv.calC[:, 2:4], imm.F @ imm.perms[0].T)
    np.testing.assert_array_equal(ltv.calC[:, 4:], ex3.d)


def test_embed_examples(ex2, ex3):
    imm = single_output_immersion(ex2)
    np.testing.assert_array_equal(embed(ex2, imm, np.zeros(2)), np.zeros(4))
    np.testing.assert_allclose(embed(ex2, imm, [1.0, 0.0]), [0.0, 0.5, 1.0, 0.0], atol=1e-15)
    ltv = build_ltv(ex3, algorithm1(ex3))
    x0 = np.array([0, 0, 2, 0, 1, 0, 0, 0, 1.0])
    np.testing.assert_allclose(ltv.calC @ ltv.embed(x0), output_of(ex3, x0), atol=1e-14)
    np.testing.assert_allclose(ltv.calC @ ltv.embed(x0), [2.0, 0.5], atol=1e-14)


def test_lifted_extended_dynamics_consistent(rng):
    # d/dt embed(x) == calA(u) embed(x) + calB u along xdot = A x + B u
    for trial in range(40):
        sys = random_system(rng, structured=trial % 4 == 0)
        ltv = build_ltv(sys, immerse(sys))
        x, u = rng.standard_normal(sys.n), rng.standard_normal(sys.p)
        xdot = sys.A @ x + sys.B @ u
        zdot = np.concatenate([ltv.embed_rows @ (lift_derivative(x, xdot)), xdot])
        assert_close(ltv.rhs(ltv.embed(x), u), zdot, 1e-10)
        assert_close(ltv.calC @ ltv.embed(x), output_of(sys, x), 1e-11)


def lift_derivative(x, xdot):
    from quadimmerse.symcalc import duplication

    D = duplication(x.size).D
    return D.T @ (np.kron(xdot, x) + np.kron(x, xdot))


def test_single_and_multi_agree_on_single_output(rng):
    for trial in range(20):
        sys = random_system(rng, q=1, structured=trial % 2 == 0)
        a, b = build_ltv(sys, single_output_immersion(sys)), build_ltv(sys, algorithm1(sys))
        assert a.dim_z == b.dim_z
        if a.n_aux:
            assert same_row_span(a.embed_rows, b.embed_rows)
        x = rng.standard_normal(sys.n)
        assert_close(a.calC @ a.embed(x), b.calC @ b.embed(x))


# ---- numerical rank ----------------------------------------------------------

def test_numerical_rank_basic():
    assert numerical_rank(np.zeros((2, 3)))[0] == 0
    assert numerical_rank(np.eye(3))[0] == 3
    big_small = np.array([[1e8, 0.0], [0.0, 1e-6]])
    # rows are scaled first, so magnitude differences do not hide rank
    assert numerical_rank(big_small)[0] == 2


def test_numerical_rank_ambiguity_warns():
    M = np.array([[1.0, 0, 0], [0, 1e-3, 0], [0, 0, 3e-4]])
    M = M + np.array([[0.0, 0, 0], [1, 0, 0], [1, 0, 0]])
    _, sv, _ = numerical_rank(M, warn=False)
    tol = np.sqrt(sv[1] * sv[2]) / sv[0]
    with pytest.warns(RankAmbiguityWarning, match="candidates 2 and 3"):
        r, _, _ = numerical_rank(M, tol=tol)
    assert r == 2


def test_report_is_json(ex2, ex3):
    for sys in (ex2, ex3):
        imm = immerse(sys)
        rep = json.loads(json.dumps(immersion_report(sys, imm)))
        assert rep["dim_z"] == sys.n + sum(rep["dims"])
    rep = immersion_report(ex3, algorithm1(ex3))
    assert rep["m"] == 3 and rep["dims"] == [2, 1, 1] and rep["n_aux"] == 4
    assert max(rep["residuals"]["stage_relation"]) < 1e-12
    rep2 = immersion_report(ex2, immerse(ex2))
    assert rep2["m"] == 2 and np.allclose(rep2["alpha"], [4, 4])
