from pathlib import Path

import numpy as np
import pytest

from fundiff.errors import InvalidArgumentError, ShapeError
from fundiff.fudge import block_norms
from fundiff.jfgl import (
    JfglProblem,
    Penalty,
    fuse_elementwise,
    fuse_frobenius,
    jfgl_diff_edges,
    prox_ffgl2_pair,
    prox_ffgl_pair,
    prox_gfgl,
    solve_jfgl,
    theta_update,
)

DATA = Path(__file__).parent / "data"
TIGHT = dict(rho=100.0, tol=1e-9, max_iters=20000, inner_tol=1e-11, inner_max_iters=2000)


def covariances(seed, p=3, M=2, n=(80, 120)):
    rng = np.random.default_rng(seed)
    d = p * M
    out = []
    for nq in n:
        A = rng.standard_normal((nq, d)) @ (np.eye(d) + 0.3 * rng.standard_normal((d, d)))
        out.append(A.T @ A / nq)
    return out, list(n)


class TestThetaUpdate:
    def test_identity_hand(self):
        # S = I, Z = U = 0, rho = n: eigenvalues solve t - 1/t = -1
        T = theta_update(np.eye(3), 10.0, np.zeros((3, 3)), np.zeros((3, 3)), 10.0)
        assert T == pytest.approx((np.sqrt(5) - 1) / 2 * np.eye(3))

    def test_stationarity(self):
        rng = np.random.default_rng(0)
        S, _ = covariances(1)
        Z, U = rng.standard_normal((6, 6)), 0.1 * rng.standard_normal((6, 6))
        Z, U = Z + Z.T, U + U.T
        T = theta_update(S[0], 50.0, Z, U, 7.0)
        grad = -50.0 * (np.linalg.inv(T) - S[0]) + 7.0 * (T - Z + U)
        assert np.abs(grad).max() < 1e-9
        assert np.linalg.eigvalsh(T)[0] > 0

    def test_rejects_bad_rho(self):
        with pytest.raises(InvalidArgumentError):
            theta_update(np.eye(2), 1.0, np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


class TestProx:
    def test_fuse_frobenius_separates(self):
        z1, z2 = fuse_frobenius(np.array([[5.0]]), np.array([[1.0]]), 1.0)
        assert (z1[0, 0], z2[0, 0]) == pytest.approx((4.0, 2.0))

    def test_fuse_frobenius_merges(self):
        z1, z2 = fuse_frobenius(np.array([[1.5]]), np.array([[1.0]]), 1.0)
        assert (z1[0, 0], z2[0, 0]) == pytest.approx((1.25, 1.25))

    def test_fuse_elementwise(self):
        z1, z2 = fuse_elementwise(np.array([3.0, 0.2]), np.array([0.0, 0.0]), 0.5)
        assert z1 == pytest.approx([2.5, 0.1])
        assert z2 == pytest.approx([0.5, 0.1])

    def test_gfgl_hand(self):
        # off-diagonal entries 3 and 4: shrink each by 1 to (2, 3), then the group by 1
        A1 = np.array([[1.0, 3.0], [3.0, 1.0]])
        A2 = np.array([[2.0, 4.0], [4.0, 2.0]])
        Z1, Z2 = prox_gfgl([A1, A2], 1.0, 1.0, 1)
        scale = 1 - 1 / np.sqrt(13)
        assert Z1[0, 1] == pytest.approx(2 * scale)
        assert Z2[1, 0] == pytest.approx(3 * scale)
        assert (Z1[0, 0], Z2[1, 1]) == (1.0, 2.0)

    def test_gfgl_kills_group(self):
        Z1, Z2 = prox_gfgl([np.array([[1.0, 0.5], [0.5, 1.0]])] * 2, 0.1, 1.0, 1)
        assert Z1[0, 1] == 0 and Z2[0, 1] == 0

    def test_ffgl_pair_hand(self):
        # minimizer of 1/2 (z1-3)^2 + 1/2 (z2-1)^2 + 0.5(|z1| + |z2|) + 0.5|z1 - z2|
        z1, z2, ok = prox_ffgl_pair(np.array([[3.0]]), np.array([[1.0]]), 0.5, 0.5)
        assert ok and (z1[0, 0], z2[0, 0]) == pytest.approx((2.0, 1.0), abs=1e-7)

    @pytest.mark.parametrize("prox,fused", [(prox_ffgl_pair, "fro"), (prox_ffgl2_pair, "l1")])
    def test_pair_subgradient_optimality(self, prox, fused):
        rng = np.random.default_rng(2)
        A1, A2 = rng.standard_normal((3, 3)), rng.standard_normal((3, 3))
        a, b = 0.3, 0.4
        Z1, Z2, ok = prox(A1, A2, a, b, max_iters=5000, tol=1e-12)
        assert ok

        def f(z1, z2):
            d = z1 - z2
            pen = np.linalg.norm(d) if fused == "fro" else np.abs(d).sum()
            return (0.5 * np.sum((z1 - A1) ** 2) + 0.5 * np.sum((z2 - A2) ** 2)
                    + a * (np.linalg.norm(z1) + np.linalg.norm(z2)) + b * pen)

        best = f(Z1, Z2)
        for _ in range(200):
            e1, e2 = 1e-4 * rng.standard_normal((2, 3, 3))
            assert f(Z1 + e1, Z2 + e2) >= best - 1e-12

    def test_zero_a_closed_form(self):
        z1, z2, ok = prox_ffgl_pair(np.array([[5.0]]), np.array([[1.0]]), 0.0, 1.0)
        assert ok and (z1[0, 0], z2[0, 0]) == (4.0, 2.0)

    def test_negative_threshold(self):
        with pytest.raises(InvalidArgumentError):
            prox_gfgl([np.eye(2)], -1.0, 0.0, 1)


class TestSolver:
    @pytest.mark.parametrize("penalty", ["gfgl", "ffgl", "ffgl2", "fgl"])
    def test_zero_penalty_recovers_inverse(self, penalty):
        S, n = covariances(3)
        tx, ty = solve_jfgl(JfglProblem(S, n, 2, penalty=penalty, lam1=0.0, lam2=0.0, **TIGHT))
        assert tx.converged
        assert np.abs(tx.theta - np.linalg.inv(S[0])).max() < 1e-6
        assert np.abs(ty.theta - np.linalg.inv(S[1])).max() < 1e-6

    @pytest.mark.parametrize("penalty", ["ffgl", "ffgl2", "fgl"])
    def test_large_lam2_fuses(self, penalty):
        S, n = covariances(4)
        tx, ty = solve_jfgl(JfglProblem(S, n, 2, penalty=penalty, lam1=1.0, lam2=1e4, **TIGHT))
        assert np.array_equal(tx.theta, ty.theta)
        assert len(jfgl_diff_edges(tx, ty)) == 0

    @pytest.mark.parametrize("penalty", ["gfgl", "ffgl", "ffgl2"])
    def test_large_lam1_diagonal(self, penalty):
        S, n = covariances(5)
        tx, ty = solve_jfgl(JfglProblem(S, n, 2, penalty=penalty, lam1=1e4, lam2=1.0, **TIGHT))
        for t in (tx, ty):
            norms = block_norms(t.theta, 2)
            assert np.all(norms[~np.eye(3, dtype=bool)] == 0)

    def test_gfgl_many_groups(self):
        S, n = covariances(6, n=(50, 60, 70))
        est = solve_jfgl(JfglProblem(S, n, 2, penalty="gfgl", lam1=0.0, lam2=0.0, **TIGHT))
        assert len(est) == 3
        assert np.abs(est[2].theta - np.linalg.inv(S[2])).max() < 1e-6

    def test_fused_needs_two_groups(self):
        S, n = covariances(6, n=(50, 60, 70))
        with pytest.raises(InvalidArgumentError):
            JfglProblem(S, n, 2, penalty="ffgl")

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            JfglProblem([np.eye(4), np.eye(6)], [1, 1], 2)
        with pytest.raises(ShapeError):
            JfglProblem([np.eye(4)], [1, 1], 2)

    def test_fixed_rho_agrees(self):
        S, n = covariances(7)
        kw = dict(penalty="ffgl", lam1=4.0, lam2=6.0, **TIGHT)
        a = solve_jfgl(JfglProblem(S, n, 2, **kw))
        b = solve_jfgl(JfglProblem(S, n, 2, adaptive_rho=False, **kw))
        assert b[0].converged
        assert np.abs(a[0].theta - b[0].theta).max() < 1e-6

    def test_nonconvergence_reported(self):
        S, n = covariances(8)
        tx, _ = solve_jfgl(JfglProblem(S, n, 2, lam1=1.0, lam2=1.0, max_iters=2))
        assert not tx.converged and tx.iterations == 2

    def test_penalty_enum(self):
        assert Penalty("ffgl2") is Penalty.FFGL2
        with pytest.raises(ValueError):
            Penalty("glasso")


class TestConicReference:
    """Frozen solutions from an interior-point conic solver (see tests/oracles)."""

    ref = np.load(DATA / "jfgl_oracle.npz")

    @pytest.mark.parametrize("penalty", ["gfgl", "ffgl", "ffgl2"])
    @pytest.mark.parametrize("k", [0, 1])
    def test_matches(self, penalty, k):
        lam1, lam2 = self.ref["settings"][k]
        pr = JfglProblem(list(self.ref["S"]), list(self.ref["n"]), int(self.ref["M"]), penalty=penalty,
                         lam1=float(lam1), lam2=float(lam2), **TIGHT)
        tx, ty = solve_jfgl(pr)
        expected = self.ref[f"{penalty}_{k}"]
        assert tx.converged
        assert np.abs(tx.theta - expected[0]).max() < 1e-6
        assert np.abs(ty.theta - expected[1]).max() < 1e-6

    def test_exact_fusion_pattern(self):
        lam1, lam2 = self.ref["settings"][1]
        pr = JfglProblem(list(self.ref["S"]), list(self.ref["n"]), 2, penalty="ffgl2",
                         lam1=float(lam1), lam2=float(lam2), **TIGHT)
        tx, ty = solve_jfgl(pr)
        ref = self.ref["ffgl2_1"]
        fused_ref = block_norms(ref[0] - ref[1], 2) < 1e-6
        assert fused_ref.any()
        assert np.array_equal(block_norms(tx.theta - ty.theta, 2) == 0, fused_ref)


def test_gfgl_single_group_is_block_soft_threshold():
    from fundiff.fudge import block_soft_threshold

    A = np.random.default_rng(9).standard_normal((6, 6))
    A = A + A.T
    (Z,) = prox_gfgl([A], 0.7, 0.0, 2)
    expected = block_soft_threshold(A, 0.7, 2)
    for j in range(3):
        expected[2 * j:2 * j + 2, 2 * j:2 * j + 2] = A[2 * j:2 * j + 2, 2 * j:2 * j + 2]
    assert Z == pytest.approx(expected)


def test_identical_covariances_fuse():
    S, n = covariances(10)
    tx, ty = solve_jfgl(JfglProblem([S[0], S[0]], n, 2, penalty="ffgl", lam1=1.0, lam2=1e4, **TIGHT))
    assert np.abs(tx.theta - ty.theta).max() < 1e-6
