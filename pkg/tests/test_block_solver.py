import numpy as np
import pytest
from numpy.testing import assert_allclose

from mcdyn.block_solver import (
    LOOP_NODE,
    BlockSystem,
    augment_loop_node,
    dense_ldu_factorize,
    dense_ldu_solve,
    ldu_inverse,
    pattern_report,
    sparse_ldu_factorize,
    sparse_ldu_solve,
)
from mcdyn.errors import DanglingConstraintError, SingularBlockError


def random_tree_system(rng, n_nodes, min_size=2, max_size=6):
    """Well-conditioned random block system over a random tree.

    Node i > 0 couples to a random earlier node; eliminating nodes in
    reverse creation order therefore processes children before parents.
    """
    sizes = [int(rng.integers(min_size, max_size + 1)) for _ in range(n_nodes)]
    diag = {i: rng.normal(size=(sizes[i], sizes[i])) + 4.0 * np.eye(sizes[i]) for i in range(n_nodes)}
    offdiag = {}
    for i in range(1, n_nodes):
        p = int(rng.integers(0, i))
        offdiag[(i, p)] = rng.normal(size=(sizes[i], sizes[p]))
        offdiag[(p, i)] = rng.normal(size=(sizes[p], sizes[i]))
    rhs = {i: rng.normal(size=sizes[i]) for i in range(n_nodes)}
    order = list(range(n_nodes - 1, -1, -1))
    return BlockSystem(diag=diag, offdiag=offdiag, order=order, rhs=rhs)


def random_loop_system(rng, n_nodes, n_attach=3):
    """Random tree plus a stacked node appended last, coupled to several nodes."""
    system = random_tree_system(rng, n_nodes)
    k = int(rng.integers(3, 7))
    system.diag[LOOP_NODE] = rng.normal(size=(k, k)) + 4.0 * np.eye(k)
    attach = rng.choice(n_nodes, size=min(n_attach, n_nodes), replace=False)
    for a in attach:
        sa = system.diag[int(a)].shape[0]
        system.offdiag[(LOOP_NODE, int(a))] = rng.normal(size=(k, sa))
        system.offdiag[(int(a), LOOP_NODE)] = rng.normal(size=(sa, k))
    system.rhs[LOOP_NODE] = rng.normal(size=k)
    system.order = system.order + [LOOP_NODE]
    return system


def solve_dense_reference(system):
    full, _ = system.assembled()
    return np.linalg.solve(full, system.assembled_rhs())


def sparse_solution_vector(system):
    fact = sparse_ldu_factorize(system.copy())
    sol = sparse_ldu_solve(fact)
    return np.concatenate([sol[n] for n in system.order]), fact


class TestLduInverse:
    def test_matches_numpy(self, rng):
        for k in (1, 2, 4, 6, 11):
            a = rng.normal(size=(k, k)) + 3.0 * np.eye(k)
            assert_allclose(ldu_inverse(a), np.linalg.inv(a), atol=1e-11)

    def test_zero_leading_minor_is_fine(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert_allclose(ldu_inverse(a), a, atol=1e-14)

    def test_singular_raises(self):
        with pytest.raises(SingularBlockError):
            ldu_inverse(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_relief_suppresses_deficient_directions(self):
        a = np.diag([2.0, 0.0])
        inv = ldu_inverse(a, pivot_relief=1e-10)
        assert_allclose(inv[0, 0], 0.5)
        # relieved direction contributes at most ~1/scale, not 1/epsilon
        assert abs(inv[1, 1]) <= 1.0


class TestDenseLdu:
    def test_identity(self):
        fact = dense_ldu_factorize(np.eye(5))
        assert_allclose(fact.l_matrix(), np.eye(5))
        assert_allclose(fact.d_matrix(), np.eye(5))
        assert_allclose(fact.u_matrix(), np.eye(5))
        b = np.arange(5.0)
        assert_allclose(dense_ldu_solve(fact, b), b)

    def test_two_by_two_hand_elimination(self):
        fact = dense_ldu_factorize(np.array([[4.0, 2.0], [1.0, 3.0]]))
        assert_allclose(fact.l_matrix(), [[1.0, 0.0], [0.25, 1.0]])
        assert_allclose(fact.d_matrix(), np.diag([4.0, 2.5]))
        assert_allclose(fact.u_matrix(), [[1.0, 0.5], [0.0, 1.0]])

    def test_reconstruction_scalarwise(self, rng):
        f = rng.normal(size=(6, 6)) + 4.0 * np.eye(6)
        fact = dense_ldu_factorize(f)
        assert np.abs(fact.reconstruct() - f).max() < 1e-10

    def test_reconstruction_blockwise(self, rng):
        sizes = [3, 2, 4, 1]
        n = sum(sizes)
        f = rng.normal(size=(n, n)) + 4.0 * np.eye(n)
        fact = dense_ldu_factorize(f, sizes)
        assert np.abs(fact.reconstruct() - f).max() < 1e-10

    def test_block_and_scalar_partitions_agree(self, rng):
        sizes = [2, 3, 2]
        n = sum(sizes)
        f = rng.normal(size=(n, n)) + 4.0 * np.eye(n)
        b = rng.normal(size=n)
        x_block = dense_ldu_solve(dense_ldu_factorize(f, sizes), b)
        x_scalar = dense_ldu_solve(dense_ldu_factorize(f), b)
        assert_allclose(x_block, x_scalar, atol=1e-11)

    def test_solve_residual(self, rng):
        f = rng.normal(size=(12, 12)) + 5.0 * np.eye(12)
        b = rng.normal(size=12)
        x = dense_ldu_solve(dense_ldu_factorize(f), b)
        assert np.linalg.norm(f @ x - b) / np.linalg.norm(b) < 1e-10

    def test_zero_rhs(self, rng):
        f = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
        assert_allclose(dense_ldu_solve(dense_ldu_factorize(f), np.zeros(4)), np.zeros(4))

    def test_scalar_zero_pivot_raises(self):
        # scalar partition cannot recover from a zero leading pivot
        with pytest.raises(SingularBlockError):
            dense_ldu_factorize(np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestSparseLdu:
    def test_single_node(self, rng):
        d = rng.normal(size=(6, 6)) + 4.0 * np.eye(6)
        b = rng.normal(size=6)
        system = BlockSystem(diag={0: d.copy()}, offdiag={}, order=[0], rhs={0: b})
        fact = sparse_ldu_factorize(system)
        assert_allclose(system.diag[0], d)
        sol = sparse_ldu_solve(fact)
        assert_allclose(sol[0], np.linalg.solve(d, b), atol=1e-11)

    @pytest.mark.parametrize("n_nodes", [2, 5, 9, 17])
    def test_tree_matches_dense_reference(self, rng, n_nodes):
        for _ in range(5):
            system = random_tree_system(rng, n_nodes)
            x_ref = solve_dense_reference(system)
            x_sparse, fact = sparse_solution_vector(system)
            rel = np.linalg.norm(x_sparse - x_ref) / np.linalg.norm(x_ref)
            assert rel < 1e-9
            assert fact.fill_count == 0

    def test_matches_in_package_dense_ldu(self, rng):
        system = random_tree_system(rng, 8)
        full, _ = system.assembled()
        sizes = [system.diag[n].shape[0] for n in system.order]
        x_dense = dense_ldu_solve(dense_ldu_factorize(full, sizes), system.assembled_rhs())
        x_sparse, _ = sparse_solution_vector(system)
        assert np.linalg.norm(x_sparse - x_dense) / np.linalg.norm(x_dense) < 1e-10

    def test_hundred_node_tree_no_fill(self, rng):
        system = random_tree_system(rng, 100, min_size=1, max_size=3)
        _, fact = sparse_solution_vector(system)
        assert fact.fill_count == 0

    def test_loop_system_matches_dense_reference(self, rng):
        for _ in range(5):
            system = random_loop_system(rng, 7)
            x_ref = solve_dense_reference(system)
            x_sparse, fact = sparse_solution_vector(system)
            rel = np.linalg.norm(x_sparse - x_ref) / np.linalg.norm(x_ref)
            assert rel < 1e-9
            # fill is confined to the stacked node's row and column
            for (i, j) in fact.fill_events:
                assert LOOP_NODE in (i, j)

    def test_sibling_permutation_invariance(self, rng):
        # two children under the root, each with one grandchild
        sizes = {0: 3, 1: 2, 2: 2, 3: 3, 4: 3}
        diag = {i: rng.normal(size=(s, s)) + 4.0 * np.eye(s) for i, s in sizes.items()}
        offdiag = {}
        for child, parent in [(1, 0), (2, 0), (3, 1), (4, 2)]:
            offdiag[(child, parent)] = rng.normal(size=(sizes[child], sizes[parent]))
            offdiag[(parent, child)] = rng.normal(size=(sizes[parent], sizes[child]))
        rhs = {i: rng.normal(size=s) for i, s in sizes.items()}
        sol_a = {}
        sol_b = {}
        for order, out in (([3, 1, 4, 2, 0], sol_a), ([4, 2, 3, 1, 0], sol_b)):
            system = BlockSystem(
                diag={k: v.copy() for k, v in diag.items()},
                offdiag={k: v.copy() for k, v in offdiag.items()},
                order=order,
                rhs={k: v.copy() for k, v in rhs.items()},
            )
            out.update(sparse_ldu_solve(sparse_ldu_factorize(system)))
        for i in sizes:
            assert_allclose(sol_a[i], sol_b[i], atol=1e-12)

    def test_deterministic_bitwise(self, rng):
        system = random_tree_system(rng, 10)
        x1, fact1 = sparse_solution_vector(system)
        x2, fact2 = sparse_solution_vector(system)
        assert np.array_equal(x1, x2)
        for key in fact1.system.offdiag:
            assert np.array_equal(fact1.system.offdiag[key], fact2.system.offdiag[key])

    def test_dangling_constraint_detected(self, rng):
        # zero-diagonal node eliminated before receiving any update
        diag = {0: np.zeros((3, 3)), 1: rng.normal(size=(6, 6)) + 4 * np.eye(6)}
        offdiag = {
            (0, 1): rng.normal(size=(3, 6)),
            (1, 0): rng.normal(size=(6, 3)),
        }
        system = BlockSystem(diag=diag, offdiag=offdiag, order=[0, 1], rhs={0: np.zeros(3), 1: np.zeros(6)})
        with pytest.raises(DanglingConstraintError):
            sparse_ldu_factorize(system)


class TestAugmentLoopNode:
    def test_empty_set_is_identity(self, rng):
        system = random_tree_system(rng, 4)
        assert augment_loop_node(system, set()) is system

    def test_stacking_layout(self, rng):
        system = random_tree_system(rng, 5)
        # pretend nodes 3 and 4 are loop constraints
        merged = augment_loop_node(system, {3, 4})
        assert merged.order[-1] == LOOP_NODE
        assert 3 not in merged.diag and 4 not in merged.diag
        assert merged.loop_layout == [(3, system.diag[3].shape[0]), (4, system.diag[4].shape[0])]
        total = sum(r for _, r in merged.loop_layout)
        assert merged.diag[LOOP_NODE].shape == (total, total)
        assert_allclose(
            merged.rhs[LOOP_NODE], np.concatenate([system.rhs[3], system.rhs[4]])
        )

    def test_report_mentions_fill(self, rng):
        system = random_loop_system(rng, 6)
        fact = sparse_ldu_factorize(system.copy())
        text = pattern_report(system, fact)
        assert "fill events" in text
        assert "order" in text
