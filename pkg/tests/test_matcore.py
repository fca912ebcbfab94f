import numpy as np
import pytest
import scipy.sparse as sp

from ctoqw_spectral import matcore
from ctoqw_spectral.errors import DimensionError


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def test_vec_stacks_rows():
    np.testing.assert_array_equal(matcore.vec([[1, 2], [3, 4]]), [1, 2, 3, 4])
    np.testing.assert_array_equal(matcore.unvec([1, 2, 3, 4], 2), [[1, 2], [3, 4]])


def test_vec_rejects_non_square():
    with pytest.raises(DimensionError):
        matcore.vec(np.zeros((2, 3)))


def test_unvec_rejects_wrong_length():
    with pytest.raises(DimensionError):
        matcore.unvec(np.zeros(5), 2)


def test_kron_identity(rng):
    a, b, x = random_matrix(rng, 3), random_matrix(rng, 3), random_matrix(rng, 3)
    np.testing.assert_allclose(matcore.kron(a, b) @ matcore.vec(x), matcore.vec(a @ x @ b.T), atol=1e-12)


def test_sandwich_is_vec_of_conjugation(rng):
    b, x = random_matrix(rng, 2), random_matrix(rng, 2)
    expected = matcore.vec(b @ x @ b.conj().T)
    np.testing.assert_allclose(matcore.sandwich(b) @ matcore.vec(x), expected, atol=1e-12)


def test_left_and_right_multiplication(rng):
    m, x = random_matrix(rng, 3), random_matrix(rng, 3)
    np.testing.assert_allclose(matcore.left_mult(m) @ matcore.vec(x), matcore.vec(m @ x), atol=1e-12)
    np.testing.assert_allclose(matcore.right_mult(m) @ matcore.vec(x), matcore.vec(x @ m), atol=1e-12)


def test_hermitian_and_antihermitian_parts_recombine(rng):
    m = random_matrix(rng, 3)
    h, k = matcore.hermitian_part(m), matcore.antihermitian_part(m)
    assert matcore.is_hermitian(h)
    assert matcore.is_hermitian(k)
    np.testing.assert_allclose(h + 1j * k, m, atol=1e-12)


def test_eig_hermitian_rejects_non_hermitian():
    with pytest.raises(DimensionError):
        matcore.eig_hermitian([[1, 2], [0, 1]])


def test_eig_hermitian_is_ascending_and_unitary(rng):
    m = random_matrix(rng, 4)
    values, vectors = matcore.eig_hermitian(m + m.conj().T)
    assert np.all(np.diff(values) >= 0)
    np.testing.assert_allclose(vectors.conj().T @ vectors, np.eye(4), atol=1e-12)


def test_sqrt_psd_squares_back(rng):
    g = random_matrix(rng, 3)
    m = g @ g.conj().T
    root = matcore.sqrt_psd(m)
    assert matcore.is_hermitian(root, 1e-10, relative=True)
    np.testing.assert_allclose(root @ root, m, atol=1e-10)


def test_sqrt_psd_rejects_negative_eigenvalue():
    with pytest.raises(DimensionError):
        matcore.sqrt_psd(np.diag([1.0, -1.0]))


def test_inv_sqrt_pd():
    m = np.diag([4.0, 9.0])
    np.testing.assert_allclose(matcore.inv_sqrt_pd(m), np.diag([0.5, 1 / 3]), atol=1e-14)


def test_expm_of_diagonal():
    np.testing.assert_allclose(matcore.expm(np.diag([-1.0, -2.0]), 0.5), np.diag(np.exp([-0.5, -1.0])), atol=1e-14)


def test_expm_rejects_non_finite():
    with pytest.raises(DimensionError):
        matcore.expm(np.array([[np.nan, 0], [0, 1]]))


def test_expm_action_matches_eigendecomposition(rng):
    # G = V diag(λ) V^{-1} with e^{tG} v known without scipy's expm
    for _ in range(100):
        d = int(rng.integers(2, 7))
        q, _ = np.linalg.qr(random_matrix(rng, d))
        vectors = q @ (np.eye(d) + 0.1 * np.triu(random_matrix(rng, d), 1))
        lam = -rng.uniform(0, 3, d) + 1j * rng.uniform(-2, 2, d)
        g = vectors @ np.diag(lam) @ np.linalg.inv(vectors)
        v = random_matrix(rng, d)[0]
        t = float(rng.uniform(0.1, 2.0))
        expected = vectors @ (np.exp(t * lam) * np.linalg.solve(vectors, v))
        scale = np.linalg.norm(expected)
        np.testing.assert_allclose(matcore.expm_action(g, v, t), expected, atol=1e-10 * scale)
        np.testing.assert_allclose(matcore.expm_action(sp.csr_array(g), v, t), expected, atol=1e-8 * scale)


def test_sparse_expm_action_rejects_non_finite():
    g = sp.csr_array(np.array([[np.inf, 0.0], [0.0, -1.0]]))
    with pytest.raises(DimensionError):
        matcore.expm_action(g, np.ones(2), 1.0)


def test_expm_action_at_zero_returns_copy():
    v = np.array([1.0, 2.0])
    out = matcore.expm_action(np.eye(2), v, 0.0)
    np.testing.assert_array_equal(out, v)
    assert out is not v


def test_expm_action_rejects_negative_time():
    with pytest.raises(DimensionError):
        matcore.expm_action(np.eye(2), np.ones(2), -1.0)


def test_kron_is_associative(rng):
    for _ in range(100):
        a, b, c = (random_matrix(rng, int(rng.integers(1, 4))) for _ in range(3))
        left = matcore.kron(matcore.kron(a, b), c)
        np.testing.assert_allclose(left, matcore.kron(a, matcore.kron(b, c)), atol=1e-12)


def test_sandwich_commutes_with_adjoint(rng):
    for _ in range(100):
        b = random_matrix(rng, int(rng.integers(1, 5)))
        np.testing.assert_allclose(matcore.sandwich(b).conj().T, matcore.sandwich(b.conj().T), atol=1e-12)


def test_vec_and_unvec_are_inverse(rng):
    for _ in range(100):
        d = int(rng.integers(1, 6))
        x = random_matrix(rng, d)
        np.testing.assert_array_equal(matcore.unvec(matcore.vec(x), d), x)
        v = random_matrix(rng, d * d)[0]
        np.testing.assert_array_equal(matcore.vec(matcore.unvec(v, d)), v)
