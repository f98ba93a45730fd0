import numpy as np
import pytest

from bandcov import ConfigurationError, solve_wahba, sym_eig_descending, extract_factor
from bandcov.patching import PatchCovariance


def make_pc(matrix, index=1):
    matrix = np.asarray(matrix, dtype=float)
    k = matrix.shape[0]
    return PatchCovariance(index=index, window=np.arange(1, k + 1),
                           matrix=matrix, n_effective=10, mode="complete")


class TestSymEig:
    def test_identity(self):
        u, d = sym_eig_descending(np.eye(3))
        assert np.allclose(d, [1.0, 1.0, 1.0])
        assert np.allclose(u @ u.T, np.eye(3), atol=1e-12)

    def test_diagonal_permutation(self):
        u, d = sym_eig_descending(np.diag([1.0, 4.0, 2.0]))
        assert np.allclose(d, [4.0, 2.0, 1.0])
        # eigenvectors are signed unit vectors picking out columns 1, 2, 0
        assert np.allclose(np.abs(u), np.eye(3)[:, [1, 2, 0]], atol=1e-12)

    def test_reconstruction_random(self):
        rng = np.random.default_rng(5)
        s = rng.standard_normal((8, 8))
        s = s + s.T
        u, d = sym_eig_descending(s)
        assert np.all(np.diff(d) <= 0)
        assert np.linalg.norm(u @ np.diag(d) @ u.T - s) <= 1e-9 * np.linalg.norm(s)

    def test_sign_convention(self):
        rng = np.random.default_rng(6)
        s = rng.standard_normal((6, 6))
        s = s @ s.T
        u, _ = sym_eig_descending(s)
        for col in u.T:
            assert col[np.argmax(np.abs(col))] > 0

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        s = rng.standard_normal((5, 5))
        s = s + s.T
        u1, d1 = sym_eig_descending(s)
        u2, d2 = sym_eig_descending(s.copy())
        assert np.array_equal(u1, u2) and np.array_equal(d1, d2)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            sym_eig_descending(np.array([[1.0, np.nan], [np.nan, 1.0]]))


class TestExtractFactor:
    def test_hand_example_diag(self):
        pf = extract_factor(make_pc(np.diag([5.0, 1.0, 1.0])), rank=1)
        assert pf.noise_var == pytest.approx(1.0)
        assert np.allclose(pf.factor, [[2.0], [0.0], [0.0]], atol=1e-12)

    def test_pure_noise_gives_zero_factor(self):
        sigma2 = 0.7
        pf = extract_factor(make_pc(sigma2 * np.eye(4)), rank=2)
        assert pf.noise_var == pytest.approx(sigma2)
        assert np.array_equal(pf.factor, np.zeros((4, 2)))

    def test_noiseless_low_rank_reconstructs(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((6, 2))
        pf = extract_factor(make_pc(a @ a.T), rank=2)
        assert pf.noise_var == pytest.approx(0.0, abs=1e-12)
        assert np.linalg.norm(pf.factor @ pf.factor.T - a @ a.T) < 1e-10

    def test_columns_orthogonal(self):
        rng = np.random.default_rng(9)
        s = rng.standard_normal((7, 7))
        pf = extract_factor(make_pc(s @ s.T / 7 + 0.5 * np.eye(7)), rank=3)
        gram = pf.factor.T @ pf.factor
        assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-10

    def test_negative_clamp_zeroes_column(self):
        # pairwise-mode blocks can be indefinite: negative trailing eigenvalues
        # clamp the noise estimate at zero, and a negative leading eigenvalue
        # then yields an exactly-zero factor column
        pc = PatchCovariance(index=1, window=np.arange(1, 4),
                             matrix=np.diag([5.0, -1.0, -4.0]),
                             n_effective=10, mode="pairwise")
        pf = extract_factor(pc, rank=2)
        assert pf.noise_var == 0.0
        assert np.array_equal(pf.factor[:, 1], np.zeros(3))
        assert np.linalg.norm(pf.factor[:, 0]) == pytest.approx(np.sqrt(5.0))

    def test_reconstruction_identity(self):
        # factor product equals the truncated spectrum with noise subtracted
        rng = np.random.default_rng(10)
        s = rng.standard_normal((8, 8))
        s = s @ s.T / 8
        r = 3
        pf = extract_factor(make_pc(s), rank=r)
        u, d = sym_eig_descending(s)
        expected = (u[:, :r] * np.maximum(d[:r] - pf.noise_var, 0.0)) @ u[:, :r].T
        assert np.linalg.norm(pf.factor @ pf.factor.T - expected) < 1e-10

    def test_rank_too_large_rejected(self):
        with pytest.raises(ConfigurationError):
            extract_factor(make_pc(np.eye(3)), rank=3)


class TestFactorPerturbationBound:
    def test_gram_distance_controls_factor_distance(self):
        # min over orthogonal O of ||Mhat - M O||_F^2 is bounded by
        # ||Mhat Mhat' - M M'||_F^2 / (sigma_r(M) sigma_r(Mhat))
        rng = np.random.default_rng(11)
        checked = 0
        for _ in range(1000):
            r = int(rng.integers(1, 4))
            m = int(rng.integers(r + 1, r + 6))
            base = rng.standard_normal((m, r))
            hat = base + 0.3 * rng.standard_normal((m, r))
            s_m = np.linalg.svd(base, compute_uv=False)[-1]
            s_h = np.linalg.svd(hat, compute_uv=False)[-1]
            if s_m < 1e-6 or s_h < 1e-6:
                continue
            o = solve_wahba(hat, base)
            lhs = np.linalg.norm(hat - base @ o) ** 2
            rhs = np.linalg.norm(hat @ hat.T - base @ base.T) ** 2 / (s_m * s_h)
            assert lhs <= rhs * (1 + 1e-9)
            checked += 1
        assert checked >= 950
