import numpy as np
import pytest

from bandcov import build_patch_plan, chain_rotations, solve_wahba
from bandcov.factorize import PatchFactor

from oracles import RotationGrid, brute_force_procrustes, grid_resolution_bound, haar_orthogonal


def factor_list(plan, blocks):
    return [PatchFactor(index=l + 1, window=w, factor=np.asarray(b, dtype=float),
                        noise_var=0.0, eigenvalues=np.array([]))
            for l, (w, b) in enumerate(zip(plan.windows, blocks))]


class TestSolveWahba:
    def test_self_alignment_is_identity(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((6, 3))
        assert np.allclose(solve_wahba(a, a), np.eye(3), atol=1e-12)

    def test_one_dimensional_sign(self):
        target = np.array([[1.0], [1.0], [1.0]])
        source = -3.0 * target / 3.0
        assert np.allclose(solve_wahba(target, source), [[-1.0]])

    def test_exact_recovery_of_rotation(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((6, 2))
        q = haar_orthogonal(rng, 2)
        assert np.allclose(solve_wahba(a @ q, a), q, atol=1e-10)

    def test_output_is_orthogonal(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            t = rng.standard_normal((4, 3))
            s = rng.standard_normal((4, 3))
            o = solve_wahba(t, s)
            assert np.allclose(o.T @ o, np.eye(3), atol=1e-10)
            assert abs(abs(np.linalg.det(o)) - 1.0) < 1e-10

    def test_optimality_against_haar_comparators(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            r = int(rng.integers(1, 4))
            m = int(rng.integers(3, 11))
            t = rng.standard_normal((m, r))
            s = rng.standard_normal((m, r))
            o = solve_wahba(t, s)
            best = np.linalg.norm(s @ o - t)
            for _ in range(200):
                comp = haar_orthogonal(rng, r, det_sign=int(rng.choice([-1, 1])))
                assert best <= np.linalg.norm(s @ comp - t) + 1e-10

    def test_matches_grid_oracle_r2(self):
        rng = np.random.default_rng(4)
        grid = RotationGrid.build(2, steps=3600)
        for _ in range(20):
            t = rng.standard_normal((5, 2))
            s = rng.standard_normal((5, 2))
            o = solve_wahba(t, s)
            val = np.linalg.norm(s @ o - t)
            _, grid_best = brute_force_procrustes(t, s, grid)
            assert val <= grid_best + 1e-10
            assert grid_best <= val + grid_resolution_bound(s)

    def test_equivariance_under_right_rotation(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            r = int(rng.integers(1, 4))
            t = rng.standard_normal((6, r))
            s = rng.standard_normal((6, r))
            q = haar_orthogonal(rng, r, det_sign=int(rng.choice([-1, 1])))
            lhs = solve_wahba(t @ q, s @ q)
            rhs = q.T @ solve_wahba(t, s) @ q
            assert np.allclose(lhs, rhs, atol=1e-10)

    def test_wahba_perturbation_bound(self):
        # ||O_hat - O2' O1||_F <= 2 (a1 + a2) / sigma_r(A)
        rng = np.random.default_rng(6)
        for _ in range(1000):
            r = int(rng.integers(1, 4))
            m = int(rng.integers(r + 1, 11))
            a = rng.standard_normal((m, r))
            lam = np.linalg.svd(a, compute_uv=False)[-1]
            if lam < 0.3:
                continue
            o1 = haar_orthogonal(rng, r, det_sign=int(rng.choice([-1, 1])))
            o2 = haar_orthogonal(rng, r, det_sign=int(rng.choice([-1, 1])))
            e1 = rng.standard_normal((m, r))
            e2 = rng.standard_normal((m, r))
            e1 *= rng.uniform(0.0, 0.4) * lam / np.linalg.norm(e1)
            e2 *= rng.uniform(0.0, 0.4) * lam / np.linalg.norm(e2)
            target = a @ o1 + e1
            source = a @ o2 + e2
            o_hat = solve_wahba(target, source)
            bound = 2.0 * (np.linalg.norm(e1) + np.linalg.norm(e2)) / lam
            assert np.linalg.norm(o_hat - o2.T @ o1) <= bound + 1e-9


class TestChainRotations:
    def test_single_patch_chain_is_identity(self):
        plan = build_patch_plan(5, 5, 1)
        factors = factor_list(plan, [np.ones((5, 2))])
        chain = chain_rotations(factors, plan)
        assert len(chain.rotations) == 1
        assert np.array_equal(chain.rotations[0], np.eye(2))
        assert chain.overlap_min_sv == ()

    def test_exact_patches_align_to_common_frame(self):
        rng = np.random.default_rng(7)
        p, r = 12, 2
        plan = build_patch_plan(p, 6, 2)
        a = np.column_stack([np.cos(np.linspace(0, 1.5, p)),
                             np.sin(np.linspace(0, 1.5, p))])
        qs = [haar_orthogonal(rng, r, det_sign=int(rng.choice([-1, 1])))
              for _ in plan.windows]
        factors = factor_list(plan, [a[w - 1] @ q for w, q in zip(plan.windows, qs)])
        chain = chain_rotations(factors, plan)
        products = [q @ o for q, o in zip(qs, chain.rotations)]
        for prod in products[1:]:
            assert np.allclose(prod, products[0], atol=1e-9)

    def test_rank_deficient_overlap_completes_with_zero_diagnostic(self):
        plan = build_patch_plan(6, 4, 2)
        # overlap rows {3, 4} of both factors are rank one; perturbations
        # live in perpendicular directions
        f1 = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        f2 = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        factors = factor_list(plan, [f1, f2])
        chain = chain_rotations(factors, plan)
        assert len(chain.rotations) == 2
        assert np.allclose(chain.rotations[1].T @ chain.rotations[1], np.eye(2), atol=1e-10)
        assert chain.overlap_min_sv[0] == 0.0

    def test_deterministic_chain(self):
        rng = np.random.default_rng(8)
        plan = build_patch_plan(10, 5, 3)
        blocks = [rng.standard_normal((len(w), 2)) for w in plan.windows]
        c1 = chain_rotations(factor_list(plan, blocks), plan)
        c2 = chain_rotations(factor_list(plan, [b.copy() for b in blocks]), plan)
        for r1, r2 in zip(c1.rotations, c2.rotations):
            assert np.array_equal(r1, r2)
