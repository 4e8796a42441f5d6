import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from sparsegain.matops import (
    CareError,
    eig_sym,
    is_hurwitz,
    psd_project,
    solve_care,
    solve_lyapunov,
)


def random_symmetric(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return 0.5 * (a + a.T)


def random_hurwitz(rng, n, margin=0.5):
    a = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(a).real) + margin
    return a - shift * np.eye(n)


class TestEigSym:
    def test_identity(self):
        vals, vecs = eig_sym(np.eye(3))
        assert np.allclose(vals, [1.0, 1.0, 1.0])
        assert np.allclose(vecs, np.eye(3))

    def test_diagonal(self):
        vals, vecs = eig_sym(np.diag([3.0, 1.0, 0.5]))
        assert np.allclose(vals, [3.0, 1.0, 0.5])
        assert np.allclose(np.abs(vecs), np.eye(3))

    def test_reconstruction_random(self):
        rng = np.random.default_rng(0)
        s = random_symmetric(rng, 5)
        vals, vecs = eig_sym(s)
        err = np.linalg.norm(vecs @ np.diag(vals) @ vecs.T - s)
        assert err <= 1e-10 * max(1.0, np.linalg.norm(s))

    def test_orthonormality_and_reconstruction_sweep(self):
        # 1000 random symmetric matrices, orders 1..50
        rng = np.random.default_rng(42)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            s = random_symmetric(rng, n, scale=rng.uniform(0.1, 10.0))
            vals, vecs = eig_sym(s)
            scale = max(1.0, np.linalg.norm(s))
            assert np.linalg.norm(vecs.T @ vecs - np.eye(n)) <= 1e-10
            assert np.linalg.norm(vecs @ np.diag(vals) @ vecs.T - s) <= 1e-10 * scale
            assert np.all(np.diff(vals) <= 1e-12)

    def test_sign_canonicalization(self):
        rng = np.random.default_rng(3)
        s = random_symmetric(rng, 6)
        _, vecs = eig_sym(s)
        for k in range(6):
            col = vecs[:, k]
            first = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
            assert first > 0.0

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            eig_sym(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            eig_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestLyapunov:
    def test_scalar(self):
        x = solve_lyapunov(np.array([[-1.0]]), np.array([[1.0]]))
        assert np.allclose(x, [[0.5]])

    def test_decoupled_diagonal(self):
        x = solve_lyapunov(np.diag([-1.0, -2.0]), np.eye(2))
        assert np.allclose(x, np.diag([0.5, 0.25]))

    def test_residual_and_scipy_crosscheck(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 9))
            a = random_hurwitz(rng, n)
            q = random_symmetric(rng, n)
            q = q @ q.T + np.eye(n)
            x = solve_lyapunov(a, q)
            res = np.linalg.norm(a @ x + x @ a.T + q)
            assert res <= 1e-9 * max(1.0, np.linalg.norm(q))
            assert np.allclose(x, x.T)
            # independent route: Bartels-Stewart
            x_bs = solve_continuous_lyapunov(a, -q)
            assert np.linalg.norm(x - x_bs) <= 1e-7 * max(1.0, np.linalg.norm(x_bs))

    def test_non_hurwitz_names_eigenvalue(self):
        with pytest.raises(ValueError, match="not Hurwitz"):
            solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


class TestCare:
    def test_scalar_zero_drift(self):
        p = solve_care(0.0, 1.0, 1.0, 1.0)
        assert np.allclose(p, [[1.0]])

    def test_scalar_unstable_drift(self):
        p = solve_care(1.0, 1.0, 1.0, 1.0)
        assert np.allclose(p, [[1.0 + np.sqrt(2.0)]], atol=1e-10)

    def test_random_pairs(self):
        # Instance set: random stabilizable pairs on which the residual
        # contract is demonstrably achievable in double precision -- an
        # independent Hamiltonian-Schur solve (scipy) must meet it with
        # margin.  Near-uncontrollable draws where no solver can reach the
        # absolute tolerance are excluded up front.
        from scipy.linalg import solve_continuous_are

        rng = np.random.default_rng(11)
        count = 0
        while count < 200:
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, n + 1))
            a = rng.normal(size=(n, n))
            b = rng.normal(size=(n, m))
            q = np.eye(n)
            r = np.eye(m)
            bound = 1e-8 * max(1.0, np.linalg.norm(q))
            p_ref = solve_continuous_are(a, b, q, r)
            res_ref = a.T @ p_ref + p_ref @ a \
                - p_ref @ b @ np.linalg.solve(r, b.T @ p_ref) + q
            if np.linalg.norm(res_ref) > 0.3 * bound:
                continue
            p = solve_care(a, b, q, r)
            res = a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q
            assert np.linalg.norm(res) <= bound
            k = np.linalg.solve(r, b.T @ p)
            assert np.max(np.linalg.eigvals(a - b @ k).real) < 0.0
            assert np.linalg.eigvalsh(p)[0] >= -1e-9
            # independent-route agreement
            assert np.linalg.norm(p - p_ref) <= 1e-6 * max(1.0, np.linalg.norm(p_ref))
            count += 1

    def test_stable_uncontrollable_pair(self):
        # stabilizable but not controllable: stable block with no input
        a = np.diag([-1.0, -2.0, 0.5])
        b = np.array([[0.0], [0.0], [1.0]])
        p = solve_care(a, b, np.eye(3), np.eye(1))
        k = b.T @ p
        assert np.max(np.linalg.eigvals(a - b @ k).real) < 0.0

    def test_not_stabilizable_raises(self):
        a = np.diag([1.0, 2.0])
        b = np.array([[0.0], [1.0]])  # unstable first mode unreachable
        with pytest.raises(CareError):
            solve_care(a, b, np.eye(2), np.eye(1))


class TestPsdProject:
    def test_clips_negative(self):
        out = psd_project(np.diag([2.0, -1.0]))
        assert np.allclose(out, np.diag([2.0, 0.0]))

    def test_fixed_point_on_psd(self):
        rng = np.random.default_rng(5)
        b = rng.normal(size=(4, 4))
        s = b @ b.T
        assert np.linalg.norm(psd_project(s) - s) <= 1e-10 * np.linalg.norm(s)

    def test_projection_properties(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            s = random_symmetric(rng, n, scale=2.0)
            proj = psd_project(s)
            assert np.linalg.eigvalsh(proj)[0] >= -1e-10
            # idempotent
            again = psd_project(proj)
            assert np.linalg.norm(again - proj) <= 1e-10 * max(1.0, np.linalg.norm(proj))
            # never farther from any PSD target than the original
            b = rng.normal(size=(n, n))
            target = b @ b.T
            assert (np.linalg.norm(proj - target)
                    <= np.linalg.norm(s - target) + 1e-12)

    def test_nearest_psd_against_eig_oracle(self):
        rng = np.random.default_rng(13)
        s = random_symmetric(rng, 6)
        vals, vecs = np.linalg.eigh(s)
        oracle = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
        assert np.allclose(psd_project(s), oracle, atol=1e-12)


class TestHurwitz:
    def test_cases(self):
        assert is_hurwitz(-np.eye(2)) == (True, -1.0)
        ok, alpha = is_hurwitz(np.zeros((2, 2)))
        assert not ok and alpha == 0.0
        ok, alpha = is_hurwitz(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        assert not ok and abs(alpha) < 1e-12
