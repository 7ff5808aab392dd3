import numpy as np
import pytest

from oqs_apo import dephasing
from oqs_apo.frame import (decompose, evolve_decomposition, pauli_frame,
                           reconstruct, reduced_initial)
from oqs_apo.qmat import (BipartiteShape, IDENTITY_2, SIGMA_1, SIGMA_3,
                          partial_trace_env, random_density,
                          random_pure_density, tensor)

SQ2 = np.sqrt(2.0)


def bell_state():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / SQ2
    return np.outer(v, v.conj())


def number_superposition(c0, c1, n, dim):
    # C0 |0>|vac> + C1 |1>|n> on a truncated mode
    vac = np.zeros(dim)
    vac[0] = 1
    exc = np.zeros(dim)
    exc[n] = 1
    psi = c0 * np.kron([0, 1], vac) + c1 * np.kron([1, 0], exc)
    return np.outer(psi, psi.conj()).astype(complex)


def test_pauli_frame_operators():
    fr = pauli_frame()
    assert np.allclose(fr.d_ops[3], SIGMA_3 / SQ2)
    assert np.allclose(fr.d_ops[1], SIGMA_1 / SQ2)
    assert np.allclose(fr.f_ops[0], IDENTITY_2 / SQ2)
    assert np.allclose(fr.d_ops[0],
                       (IDENTITY_2 - SIGMA_1 - np.array([[0, -1j], [1j, 0]])
                        - SIGMA_3) / SQ2)


def test_pauli_frame_duality():
    fr = pauli_frame()
    assert np.trace(fr.f_ops[3] @ fr.d_ops[3]) == pytest.approx(1.0, abs=1e-12)
    assert np.trace(fr.f_ops[3] @ fr.d_ops[1]) == pytest.approx(0.0, abs=1e-12)
    assert fr.duality_defect() < 1e-12


def test_decompose_product_state():
    rng = np.random.default_rng(23)
    rho_s = random_density(2, rng).matrix
    rho_e = random_density(4, rng).matrix
    dec = decompose(tensor(rho_s, rho_e), BipartiteShape(2, 4))
    for term in dec.terms:
        assert np.max(np.abs(term.env_state.matrix - rho_e)) < 1e-12


def test_decompose_number_superposition_weights():
    # the w_3 = 2|C1|^2 of the source text is sqrt(2) times the Tr-normalized
    # weight paired with D_3 = sigma_3/sqrt(2)
    c = 1 / SQ2
    dec = decompose(number_superposition(c, c, 1, 3), BipartiteShape(2, 3))
    term3 = dec.term_by_index(3)
    assert term3.weight == pytest.approx(SQ2 * c ** 2, abs=1e-12)
    assert SQ2 * term3.weight == pytest.approx(2 * c ** 2, abs=1e-12)
    assert SQ2 * term3.weight == pytest.approx(1.0, abs=1e-12)
    for a in (0, 1, 2):
        assert dec.term_by_index(a).weight == pytest.approx(1 / SQ2, abs=1e-12)


def test_decompose_drops_zero_weight_term():
    rng = np.random.default_rng(29)
    rho_e = random_density(3, rng).matrix
    ket0 = np.array([[0, 0], [0, 1]], dtype=complex)  # |0><0|, <0|F_3|0> = 0
    dec = decompose(tensor(ket0, rho_e), BipartiteShape(2, 3))
    assert dec.term_by_index(3) is None
    assert len(dec.terms) < 4


def test_round_trip_random_states():
    rng = np.random.default_rng(31)
    for d in range(2, 7):
        shape = BipartiteShape(2, d)
        for _ in range(100):
            rho = random_density(2 * d, rng)
            dec = decompose(rho, shape)
            back = reconstruct(dec)
            assert np.max(np.abs(back.matrix - rho.matrix)) <= 1e-10
            assert len(dec.terms) <= 4
            assert dec.weight_trace_sum() == pytest.approx(1.0, abs=1e-10)
            for term in dec.terms:
                assert term.env_state.eigenvalues().min() >= -1e-9


def test_round_trip_maximally_entangled():
    dec = decompose(bell_state(), BipartiteShape(2, 2))
    assert np.max(np.abs(reconstruct(dec).matrix - bell_state())) <= 1e-10


def test_reduced_initial():
    rng = np.random.default_rng(37)
    rho_s = random_density(2, rng).matrix
    rho_e = random_density(3, rng).matrix
    dec = decompose(tensor(rho_s, rho_e), BipartiteShape(2, 3))
    assert np.max(np.abs(reduced_initial(dec).matrix - rho_s)) < 1e-10
    dec_bell = decompose(bell_state(), BipartiteShape(2, 2))
    assert np.max(np.abs(reduced_initial(dec_bell).matrix - IDENTITY_2 / 2)) < 1e-12


def test_reduced_initial_matches_partial_trace():
    rng = np.random.default_rng(41)
    for d in (2, 5):
        shape = BipartiteShape(2, d)
        rho = random_density(2 * d, rng)
        dec = decompose(rho, shape)
        pt = partial_trace_env(rho.matrix, shape)
        assert np.max(np.abs(reduced_initial(dec).matrix - pt)) <= 1e-10


def test_reduced_initial_mixedness_grows_with_r():
    # discretized correlated dephasing state: larger |r| means a more mixed
    # reduced state (larger entanglement of the pure global state)
    from oqs_apo import engine
    params = dephasing.DephasingParams(1.0, 1.0)
    q = np.linspace(-8, 8, 101)
    entropies = []
    for r in (0.0, 1.0, 2.0):
        state = dephasing.gaussian_state(1 / SQ2, 1 / SQ2, r, params)
        rho_se = engine.dephasing_grid_state(state, q)
        dec = decompose(rho_se, BipartiteShape(2, q.size))
        from oqs_apo.qmat import von_neumann_entropy
        entropies.append(von_neumann_entropy(reduced_initial(dec)))
    assert entropies[0] < entropies[1] < entropies[2]


def test_identity_operation_preserves_terms():
    rng = np.random.default_rng(43)
    rho = random_density(6, rng)
    shape = BipartiteShape(2, 3)
    d1 = decompose(rho, shape)
    d2 = decompose(rho.matrix.copy(), shape)
    for t1, t2 in zip(d1.terms, d2.terms):
        assert t1.index == t2.index
        assert np.max(np.abs(t1.weight * t1.env_state.matrix
                             - t2.weight * t2.env_state.matrix)) < 1e-14


def test_evolve_decomposition_identity():
    rng = np.random.default_rng(47)
    rho = random_density(8, rng)
    dec = decompose(rho, BipartiteShape(2, 4))
    out = evolve_decomposition(dec, [t.system_op for t in dec.terms])
    assert np.max(np.abs(out.matrix - reduced_initial(dec).matrix)) < 1e-12


def test_evolve_decomposition_dephasing_closed_form():
    # applying the exact kappa_a(t) to the off-diagonals of D_a reproduces
    # the coherence assembly of the dephasing module
    from oqs_apo import engine
    params = dephasing.DephasingParams(1.0, 1.0)
    state = dephasing.gaussian_state(1 / SQ2, 1 / SQ2, 1.0, params)
    q = np.linspace(-8, 8, 201)
    rho_se = engine.dephasing_grid_state(state, q)
    dec = decompose(rho_se, BipartiteShape(2, q.size))
    t = 1.3
    evolved = []
    for term in dec.terms:
        p = np.real(np.diagonal(term.env_state.matrix))
        kappa = np.sum(p * np.exp(-1j * params.xi * q * t))
        d_t = term.system_op.copy()
        d_t[0, 1] *= kappa
        d_t[1, 0] *= np.conj(kappa)
        evolved.append(d_t)
    out = evolve_decomposition(dec, evolved)
    expect = dephasing.coherence(state, params, "exact", t)
    assert abs(out.matrix[0, 1] - expect) < 2e-3  # grid discretization error


def test_evolve_decomposition_apo_long_time_diagonal():
    params = dephasing.DephasingParams(1.0, 1.0)
    state = dephasing.gaussian_state(1 / SQ2, 1 / SQ2, 1.0, params)
    val = dephasing.coherence(state, params, "apo2", 50.0)
    assert abs(val) < 1e-12


def test_evolve_decomposition_trace_error():
    rng = np.random.default_rng(53)
    rho = random_density(4, rng)
    dec = decompose(rho, BipartiteShape(2, 2))
    bad = [2.0 * t.system_op for t in dec.terms]
    with pytest.raises(RuntimeError):
        evolve_decomposition(dec, bad)


def test_decompose_requires_qubit_system():
    with pytest.raises(ValueError):
        decompose(np.eye(9) / 9, BipartiteShape(3, 3))
