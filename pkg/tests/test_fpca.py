import numpy as np
import pytest
from scipy import integrate

from fundiff.basis import make_fourier_basis, make_orthonormal_bspline_basis
from fundiff.curvefit import FittedSample
from fundiff.errors import BasisMismatchError, InvalidArgumentError
from fundiff.fpca import (
    CovKernel,
    ScoreMatrix,
    center_sample,
    compute_scores,
    estimate_cov_kernel,
    fpca_decompose,
    pooled_fpca,
    score_covariance,
)


def random_sample(basis, n, p, rng, scale=1.0):
    return FittedSample(basis, scale * rng.standard_normal((n, p, basis.size)))


class TestCovKernel:
    def test_outer_product_sum(self):
        b = make_fourier_basis(2)
        fx = FittedSample(b, np.array([[[1.0, 0.0]]]))
        fy = FittedSample(b, np.array([[[0.0, 1.0]]]))
        assert estimate_cov_kernel(fx, fy, 0).matrix == pytest.approx(np.eye(2))

    def test_zero_curves(self):
        b = make_fourier_basis(3)
        fx = FittedSample(b, np.zeros((4, 2, 3)))
        assert np.all(estimate_cov_kernel(fx, fx, 1).matrix == 0)

    def test_grid_kernel_oracle(self):
        # empirical kernel of the curves evaluated on a grid vs. the coefficient-space kernel
        rng = np.random.default_rng(0)
        b = make_fourier_basis(4)
        fx, fy = random_sample(b, 50, 1, rng), random_sample(b, 50, 1, rng)
        K = estimate_cov_kernel(fx, fy, 0)
        s = np.linspace(0, 1, 20)
        Bs = b(s)
        cx = fx.coeffs[:, 0] @ Bs.T
        cy = fy.coeffs[:, 0] @ Bs.T
        grid = cx.T @ cx / 50 + cy.T @ cy / 50
        assert np.abs(Bs @ K.matrix @ Bs.T - grid).max() < 1e-6

    def test_mismatch(self):
        rng = np.random.default_rng(1)
        fx = random_sample(make_fourier_basis(4), 3, 1, rng)
        fy = random_sample(make_fourier_basis(5), 3, 1, rng)
        with pytest.raises(BasisMismatchError):
            estimate_cov_kernel(fx, fy, 0)

    def test_psd_symmetric(self):
        rng = np.random.default_rng(2)
        b = make_orthonormal_bspline_basis(9)
        K = estimate_cov_kernel(random_sample(b, 5, 2, rng), random_sample(b, 7, 2, rng), 1).matrix
        assert np.abs(K - K.T).max() < 1e-10
        assert np.linalg.eigvalsh(K)[0] > -1e-8


class TestDecompose:
    b2 = make_fourier_basis(2)

    def test_diagonal(self):
        res = fpca_decompose(CovKernel(0, self.b2, np.diag([3.0, 1.0])), 2)
        assert res.eigenvalues == pytest.approx([3.0, 1.0])
        assert np.abs(res.eigenvectors) == pytest.approx(np.eye(2))

    def test_two_by_two(self):
        res = fpca_decompose(CovKernel(0, self.b2, np.array([[2.0, 1.0], [1.0, 2.0]])), 1)
        assert res.eigenvalues == pytest.approx([3.0])
        assert res.eigenvectors[:, 0] == pytest.approx(np.array([1.0, 1.0]) / np.sqrt(2))

    def test_sign_convention(self):
        res = fpca_decompose(CovKernel(0, self.b2, np.array([[1.0, -0.9], [-0.9, 2.0]])), 2)
        for k in range(2):
            v = res.eigenvectors[:, k]
            assert v[np.argmax(np.abs(v))] > 0

    def test_M_too_large(self):
        with pytest.raises(InvalidArgumentError):
            fpca_decompose(CovKernel(0, self.b2, np.eye(2)), 3)

    def test_tiny_negative_clipped(self):
        res = fpca_decompose(CovKernel(0, self.b2, np.diag([1.0, -1e-12])), 2)
        assert res.eigenvalues[1] == 0.0

    def test_degenerate_ordering_deterministic(self):
        K = CovKernel(0, make_fourier_basis(3), np.eye(3))
        a, b = fpca_decompose(K, 3), fpca_decompose(K, 3)
        assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()

    def test_eigenfunctions_orthonormal_by_quadrature(self):
        rng = np.random.default_rng(3)
        b = make_fourier_basis(6)
        A = rng.standard_normal((6, 6))
        res = fpca_decompose(CovKernel(0, b, A @ A.T), 3)
        s = np.linspace(0, 1, 2001)
        Phi = np.stack([res.eigenfunction(k)(s) for k in range(3)])
        G = integrate.simpson(Phi[:, None] * Phi[None], x=s, axis=-1)
        assert np.abs(G - np.eye(3)).max() < 1e-8


class TestScores:
    def test_curve_equal_to_eigenfunction(self):
        rng = np.random.default_rng(4)
        b = make_fourier_basis(5)
        fits = pooled_fpca(random_sample(b, 20, 2, rng), random_sample(b, 20, 2, rng), 3)
        coeffs = np.stack([fits[0].eigenvectors[:, 0], fits[1].eigenvectors[:, 0]])[None]
        sc = compute_scores(FittedSample(b, coeffs), fits)
        assert sc.scores[0] == pytest.approx(np.array([[1, 0, 0], [1, 0, 0]]), abs=1e-12)

    def test_zero_curve(self):
        rng = np.random.default_rng(5)
        b = make_fourier_basis(5)
        fits = pooled_fpca(random_sample(b, 20, 1, rng), random_sample(b, 20, 1, rng), 2)
        assert np.all(compute_scores(FittedSample(b, np.zeros((1, 1, 5))), fits).scores == 0)

    def test_quadrature_oracle(self):
        rng = np.random.default_rng(6)
        b = make_fourier_basis(6)
        fx, fy = random_sample(b, 10, 2, rng), random_sample(b, 10, 2, rng)
        fits = pooled_fpca(fx, fy, 3)
        sc = compute_scores(fx, fits).scores
        s = np.linspace(0, 1, 4001)
        for i in range(10):
            for j in range(2):
                for k in range(3):
                    q = integrate.simpson(fx.curve(i, j)(s) * fits[j].eigenfunction(k)(s), x=s)
                    assert abs(sc[i, j, k] - q) < 1e-6

    def test_basis_mismatch(self):
        rng = np.random.default_rng(7)
        fits = pooled_fpca(*(random_sample(make_fourier_basis(5), 4, 1, rng) for _ in range(2)), 2)
        with pytest.raises(BasisMismatchError):
            compute_scores(random_sample(make_fourier_basis(7), 4, 1, rng), fits)


class TestScoreCovariance:
    def test_single_outer(self):
        S = score_covariance(ScoreMatrix("X", np.array([[[1.0, 2.0]]]))).S
        assert S == pytest.approx(np.array([[1.0, 2.0], [2.0, 4.0]]))

    def test_zero(self):
        assert np.all(score_covariance(ScoreMatrix("X", np.zeros((3, 2, 2)))).S == 0)

    def test_monte_carlo(self):
        rng = np.random.default_rng(8)
        A = rng.standard_normal((4, 4))
        Sigma = A @ A.T + np.eye(4)
        draws = rng.multivariate_normal(np.zeros(4), Sigma, size=500)
        S = score_covariance(ScoreMatrix("X", draws.reshape(500, 2, 2)))
        assert np.linalg.norm(S.S - Sigma) / np.linalg.norm(Sigma) < 0.15
        assert S.block(1, 0) == pytest.approx(S.S[2:, :2])


def test_center_sample():
    rng = np.random.default_rng(9)
    f = random_sample(make_fourier_basis(3), 6, 2, rng)
    assert np.abs(center_sample(f).coeffs.mean(axis=0)).max() < 1e-15
