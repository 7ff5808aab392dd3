import numpy as np
import pytest

from oqs_apo.qmat import (BipartiteShape, DensityOperator, IDENTITY_2, SIGMA_1,
                          SIGMA_2, SIGMA_3, SIGMA_MINUS, SIGMA_PLUS,
                          anticommutator, commutator, dagger, matrix_exp,
                          partial_trace_env, partial_trace_system,
                          random_density, random_pure_density, tensor,
                          von_neumann_entropy)


def test_tensor_identities():
    assert np.allclose(tensor(IDENTITY_2, IDENTITY_2), np.eye(4))
    assert np.allclose(tensor(SIGMA_3, IDENTITY_2), np.diag([1, 1, -1, -1]))


def test_tensor_against_index_oracle():
    b = np.diag(np.sqrt([1.0, 2.0]), 1).astype(complex)  # 3-level mode
    out = tensor(SIGMA_PLUS, b)
    for i in range(6):
        for j in range(6):
            expect = SIGMA_PLUS[i // 3, j // 3] * b[i % 3, j % 3]
            assert out[i, j] == pytest.approx(expect)


def test_partial_trace_product_state():
    rng = np.random.default_rng(7)
    for d in (2, 3, 5):
        rho_s = random_density(2, rng).matrix
        rho_e = random_density(d, rng).matrix
        shape = BipartiteShape(2, d)
        assert np.max(np.abs(partial_trace_env(tensor(rho_s, rho_e), shape)
                             - rho_s)) < 1e-12
        assert np.max(np.abs(partial_trace_system(tensor(rho_s, rho_e), shape)
                             - rho_e)) < 1e-12


def test_partial_trace_bell_state():
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1 / np.sqrt(2)
    rho = np.outer(bell, bell.conj())
    out = partial_trace_env(rho, BipartiteShape(2, 2))
    assert np.max(np.abs(out - IDENTITY_2 / 2)) < 1e-12


def test_partial_trace_index_sum_oracle():
    rng = np.random.default_rng(11)
    shape = BipartiteShape(2, 5)
    rho = random_density(10, rng).matrix
    out = partial_trace_env(rho, shape)
    manual = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(5):
                manual[i, j] += rho[i * 5 + k, j * 5 + k]
    assert np.max(np.abs(out - manual)) < 1e-14
    assert abs(np.trace(out) - np.trace(rho)) < 1e-12


def test_tensor_then_trace_recovers_factor():
    rng = np.random.default_rng(13)
    rho_s = random_density(2, rng).matrix
    m_e = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    out = partial_trace_env(tensor(rho_s, m_e), BipartiteShape(2, 3))
    assert np.max(np.abs(out - rho_s * np.trace(m_e))) < 1e-12


def test_partial_trace_dimension_mismatch():
    with pytest.raises(ValueError):
        partial_trace_env(np.eye(6), BipartiteShape(2, 2))


def test_matrix_exp_zero_is_identity():
    assert np.allclose(matrix_exp(np.zeros((3, 3)), 2.7j), np.eye(3))


def test_matrix_exp_pauli_closed_form():
    # exp(-i (pi/2) sigma_1) = -i sigma_1
    out = matrix_exp(SIGMA_1, -1j * np.pi / 2)
    assert np.max(np.abs(out - (-1j) * SIGMA_1)) < 1e-12


def test_matrix_exp_group_inverse():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    h = 0.5 * (h + dagger(h))
    u = matrix_exp(h, -1j * 0.7)
    v = matrix_exp(h, 1j * 0.7)
    assert np.max(np.abs(u @ v - np.eye(6))) < 1e-12


def test_matrix_exp_antihermitian_is_unitary():
    rng = np.random.default_rng(5)
    for _ in range(10):
        h = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        h = 0.5 * (h + dagger(h))
        u = matrix_exp(-1j * h)
        assert np.max(np.abs(u @ dagger(u) - np.eye(8))) <= 1e-10


def test_matrix_exp_general_matches_scipy():
    import scipy.linalg
    rng = np.random.default_rng(9)
    m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.allclose(matrix_exp(m, 0.3), scipy.linalg.expm(0.3 * m))


def test_matrix_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        matrix_exp(np.array([[np.inf, 0], [0, 1]]))
    with pytest.raises(ValueError):
        matrix_exp(np.zeros((65, 65)))


def test_entropy_pure_and_mixed():
    rng = np.random.default_rng(17)
    assert von_neumann_entropy(random_pure_density(4, rng)) < 1e-12
    assert von_neumann_entropy(IDENTITY_2 / 2) == pytest.approx(np.log(2))
    assert von_neumann_entropy(np.diag([0.9, 0.1])) == pytest.approx(
        -0.9 * np.log(0.9) - 0.1 * np.log(0.1))
    assert von_neumann_entropy(np.diag([0.9, 0.1])) == pytest.approx(0.325083, abs=1e-6)


def test_entropy_unitary_invariance():
    rng = np.random.default_rng(19)
    rho = random_density(5, rng).matrix
    h = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    u = matrix_exp(0.5 * (h + dagger(h)), -1j)
    assert abs(von_neumann_entropy(u @ rho @ dagger(u))
               - von_neumann_entropy(rho)) <= 1e-10


def test_entropy_rejects_negative_spectrum():
    with pytest.raises(ValueError):
        von_neumann_entropy(np.diag([1.1, -0.1]))


def test_commutator_algebra():
    assert np.allclose(commutator(SIGMA_1, SIGMA_2), 2j * SIGMA_3)
    h = SIGMA_1 + 0.3 * SIGMA_3
    assert np.max(np.abs(commutator(h, h))) == 0
    assert np.allclose(anticommutator(SIGMA_PLUS, SIGMA_MINUS), IDENTITY_2)
    with pytest.raises(ValueError):
        commutator(np.eye(2), np.eye(3))


def test_density_operator_validation():
    DensityOperator(np.diag([0.5, 0.5]))
    with pytest.raises(ValueError):
        DensityOperator(np.array([[0.5, 0.4], [0.1, 0.5]]))  # not hermitian
    with pytest.raises(ValueError):
        DensityOperator(np.diag([0.9, 0.9]))  # trace != 1
    with pytest.raises(ValueError):
        DensityOperator(np.diag([1.2, -0.2]))  # negative eigenvalue
    # relaxed floor admits small transient negativity
    DensityOperator(np.diag([1.0 + 1e-7, -1e-7]), tolerance=1e-6)
