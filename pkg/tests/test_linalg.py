import numpy as np
import pytest

from transfer_stab import linalg
from transfer_stab.data import LinearSystem, simulate


def test_spectral_radius_examples():
    assert linalg.spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert linalg.spectral_radius([[1.021]]) == pytest.approx(1.021, abs=1e-12)
    # companion matrix of z^2 - 0.25
    assert linalg.spectral_radius([[0.0, 0.25], [1.0, 0.0]]) == pytest.approx(0.5, abs=1e-12)


def test_spectral_radius_rejects_bad_input():
    with pytest.raises(ValueError):
        linalg.spectral_radius(np.ones((2, 3)))
    with pytest.raises(ValueError):
        linalg.spectral_radius([[np.nan]])


def test_is_psd_examples():
    assert linalg.is_psd(np.diag([1.0, 0.0]), 0.0)
    assert linalg.is_psd(np.diag([1.0, -1e-12]), 1e-9)
    assert not linalg.is_psd(np.diag([1.0, -1.0]), 1e-9)
    with pytest.raises(ValueError):
        linalg.is_psd(np.eye(2), -1.0)


def test_sym_eig_examples():
    _, lam = linalg.sym_eig(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(lam, [1.0, 3.0], atol=1e-14)
    _, lam = linalg.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(lam, [1.0, 3.0], atol=1e-14)


def test_sym_eig_reconstruction():
    rng = np.random.default_rng(0)
    for _ in range(50):
        G = rng.standard_normal((6, 6))
        S = G + G.T
        U, lam = linalg.sym_eig(S)
        np.testing.assert_allclose(U @ U.T, np.eye(6), atol=1e-12)
        err = np.linalg.norm(U.T @ np.diag(lam) @ U - S)
        assert err < 1e-10 * (1 + np.linalg.norm(S))
        assert np.all(np.diff(lam) >= 0)


def test_psd_sqrt_examples():
    np.testing.assert_allclose(linalg.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)
    np.testing.assert_array_equal(linalg.psd_sqrt(np.zeros((3, 3))), np.zeros((3, 3)))
    rng = np.random.default_rng(1)
    G = rng.standard_normal((5, 3))
    A = G @ G.T
    R = linalg.psd_sqrt(A)
    np.testing.assert_allclose(R @ R, A, atol=1e-9)
    # idempotence on a PSD root
    np.testing.assert_allclose(linalg.psd_sqrt(R @ R), R, atol=1e-8)


def test_psd_sqrt_clamps_and_rejects():
    R = linalg.psd_sqrt(np.diag([1.0, -1e-12]))
    np.testing.assert_allclose(R, np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        linalg.psd_sqrt(np.diag([1.0, -1.0]))
    # a noise-level matrix is accepted when the reference scale is supplied
    R = linalg.psd_sqrt(np.array([[-1e-12]]), scale=10.0)
    assert R[0, 0] == 0.0


def test_operator_norm_examples():
    assert linalg.operator_norm(np.diag([1.0, -3.0])) == pytest.approx(3.0)
    assert linalg.operator_norm([3.0, 4.0]) == pytest.approx(5.0)
    rng = np.random.default_rng(2)
    for _ in range(100):
        A, B = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
        assert linalg.operator_norm(A @ B) <= linalg.operator_norm(A) * linalg.operator_norm(B) + 1e-12


def test_spectral_radius_bounded_by_norm():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        M = rng.standard_normal((4, 4))
        assert linalg.spectral_radius(M) <= linalg.operator_norm(M) * (1 + 1e-12)


def test_rank_examples():
    assert linalg.rank_with_tol(np.eye(2, 4)) == 2
    u, v = np.array([1.0, 2, 3]), np.array([0.5, -1, 2])
    assert linalg.rank_with_tol(np.outer(u, v)) == 1
    rng = np.random.default_rng(4)
    d = simulate(LinearSystem([[1.021]], [[0.041]]), [1.0], rng.uniform(-10, 10, (1, 10)))
    assert linalg.rank_with_tol(d.W0) == 2
    with pytest.raises(ValueError):
        linalg.rank_with_tol(np.eye(2), 0.0)


def test_rank_invariances():
    rng = np.random.default_rng(5)
    for _ in range(20):
        M = rng.standard_normal((5, 3)) @ rng.standard_normal((3, 7))
        r = linalg.rank_with_tol(M)
        assert r == 3
        assert linalg.rank_with_tol(M[rng.permutation(5)]) == r
        T = np.eye(5) + 0.1 * rng.standard_normal((5, 5))
        assert linalg.rank_with_tol(T @ M) == r


def test_expm_examples():
    np.testing.assert_allclose(linalg.expm(np.zeros((3, 3))), np.eye(3), atol=0)
    a = np.array([0.3, -1.2, 2.0])
    np.testing.assert_allclose(linalg.expm(np.diag(a)), np.diag(np.exp(a)), rtol=1e-14)
    # nilpotent block: exp([[0,1],[0,0]]) = [[1,1],[0,1]]
    np.testing.assert_allclose(linalg.expm([[0.0, 1.0], [0.0, 0.0]]), [[1.0, 1.0], [0.0, 1.0]], atol=1e-15)


def test_expm_rotation_accuracy():
    for t in (0.1, 1.0, 5.0, 10.0):
        E = linalg.expm([[0.0, -t], [t, 0.0]])
        np.testing.assert_allclose(E, [[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]], atol=1e-10)


def test_sym_inv():
    S = np.array([[4.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(linalg.sym_inv(S) @ S, np.eye(2), atol=1e-14)
    with pytest.raises(np.linalg.LinAlgError):
        linalg.sym_inv(np.diag([1.0, 0.0]))


def test_as_sym_rejects_asymmetric():
    with pytest.raises(ValueError):
        linalg.as_sym([[1.0, 2.0], [0.0, 1.0]], tol=1e-9)
    S = linalg.as_sym([[1.0, 2.0], [2.0 + 1e-15, 1.0]], tol=1e-9)
    assert np.array_equal(S, S.T)
