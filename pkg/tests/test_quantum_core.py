import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fftransmon.quantum_core import (
    TWO_PI,
    concurrence,
    expectation,
    expm_hermitian,
    from_pauli,
    is_unitary,
    label_index,
    log_unitary,
    outcome_probabilities,
    partial_trace,
    pauli_basis,
    pauli_decompose,
    pauli_labels,
    pauli_matrix,
    product_state,
    propagate,
    purity,
    sample_counts,
    validate_density_matrix,
)


def random_hermitian(d, rng, scale=1.0):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (A + A.conj().T)


def random_state(d, rng):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


seeds = st.integers(0, 2**31 - 1)


def test_label_order_is_base_four():
    assert pauli_labels(1) == ("I", "X", "Y", "Z")
    assert pauli_labels(2)[:5] == ("II", "IX", "IY", "IZ", "XI")
    assert label_index("ZX") == 3 * 4 + 1
    with pytest.raises(ValueError):
        label_index("ZA")


def test_leftmost_label_acts_on_first_factor():
    assert np.allclose(pauli_matrix("ZI"), np.kron(np.diag([1, -1]), np.eye(2)))


def test_pauli_basis_orthogonal():
    P = pauli_basis(2)
    gram = np.einsum("aij,bji->ab", P, P)
    assert np.allclose(gram, 4 * np.eye(16))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_decompose_round_trip(seed):
    rng = np.random.default_rng(seed)
    H = random_hermitian(4, rng)
    H -= np.trace(H) / 4 * np.eye(4)
    coeffs = pauli_decompose(H)
    assert "II" not in coeffs or abs(coeffs["II"]) < 1e-12
    assert np.allclose(from_pauli(coeffs, 2), H)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 3))
def test_expm_is_unitary(seed, n):
    rng = np.random.default_rng(seed)
    U = expm_hermitian(random_hermitian(2**n, rng, 5.0), 0.7)
    assert is_unitary(U, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0.05, 2.0))
def test_log_exp_round_trip(seed, t):
    rng = np.random.default_rng(seed)
    H = random_hermitian(4, rng)
    H -= np.trace(H) / 4 * np.eye(4)
    # keep every eigenphase inside the principal branch
    w = np.linalg.eigvalsh(H)
    H *= 0.45 / (t * max(np.ptp(w), 1e-9))
    assert np.allclose(log_unitary(expm_hermitian(H, TWO_PI * t), t), H, atol=1e-9)


def test_log_unitary_rejects_nonunitary():
    with pytest.raises(ValueError):
        log_unitary(np.diag([1.0, 2.0]), 1.0)
    with pytest.raises(ValueError):
        log_unitary(np.eye(2), 0.0)


def test_log_unitary_ignores_global_phase():
    H = from_pauli({"X": 0.1}, 1)
    U = np.exp(0.3j) * expm_hermitian(H, TWO_PI)
    assert np.allclose(log_unitary(U, 1.0), H)


def test_propagate_orders_segments():
    X, Z = pauli_matrix("X"), pauli_matrix("Z")
    U = propagate([(X, 0.3), (Z, 0.2)])
    assert np.allclose(U, expm_hermitian(Z, 0.2) @ expm_hermitian(X, 0.3))
    with pytest.raises(ValueError):
        propagate([(X, -1.0)])


def test_product_state_and_expectations():
    rho = product_state(("+", "1"))
    assert np.isclose(expectation(rho, "XI"), 1)
    assert np.isclose(expectation(rho, "IZ"), -1)
    assert np.isclose(expectation(product_state(("+i",)), "Y"), 1)
    assert np.isclose(purity(rho), 1)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_partial_trace_keeps_trace(seed):
    rng = np.random.default_rng(seed)
    rho = random_state(8, rng)
    for keep in ([0], [1, 2], [0, 2]):
        red = partial_trace(rho, keep)
        assert np.isclose(np.trace(red), 1)
        validate_density_matrix(red)


def test_partial_trace_of_product():
    a, b = product_state(("0",)), product_state(("+",))
    assert np.allclose(partial_trace(np.kron(a, b), [1]), b)
    assert np.allclose(partial_trace(np.kron(a, b), [0]), a)


def test_concurrence_limits():
    bell = np.zeros((4, 4))
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.isclose(concurrence(bell), 1)
    assert np.isclose(concurrence(product_state(("0", "+"))), 0, atol=1e-12)


def test_readout_flip_mixes_outcomes():
    p = outcome_probabilities(product_state(("0",)), "Z", 0.1)
    assert np.allclose(p, [0.9, 0.1])
    with pytest.raises(ValueError):
        outcome_probabilities(product_state(("0",)), "Z", 0.5)


def test_exact_counts_are_probabilities():
    rec = sample_counts(product_state(("+", "0")), "XZ", None)
    assert rec.shots is None
    assert np.isclose(rec.expectation("XZ"), 1)
    assert np.isclose(rec.expectation("XI"), 1)


def test_expectation_rejects_wrong_axis():
    rec = sample_counts(product_state(("0",)), "Z", None)
    with pytest.raises(ValueError):
        rec.expectation("X")


def test_sampling_is_seeded():
    rho = product_state(("+", "+i"))
    a = sample_counts(rho, "XZ", 1000, 0.02, 5).counts
    b = sample_counts(rho, "XZ", 1000, 0.02, 5).counts
    assert np.array_equal(a, b)


def test_born_rule_convergence():
    # |<Z>| error of cos(theta/2)^2 preparation shrinks with shots
    theta = 1.1
    psi = np.array([np.cos(theta / 2), np.sin(theta / 2)])
    rho = np.outer(psi, psi.conj())
    truth = np.cos(theta)
    rng = np.random.default_rng(0)
    err = [np.mean([abs(sample_counts(rho, "Z", n, 0.0, rng).expectation("Z") - truth) for _ in range(200)])
           for n in (100, 10000)]
    assert err[1] < err[0] / 5


def test_shot_noise_scales_as_inverse_sqrt():
    rho = product_state(("+",))
    rng = np.random.default_rng(1)
    stds = []
    shots = (256, 1024, 4096, 16384)
    for n in shots:
        vals = [sample_counts(rho, "Z", n, 0.0, rng).expectation("Z") for _ in range(400)]
        stds.append(np.std(vals))
    slope = np.polyfit(np.log(shots), np.log(stds), 1)[0]
    assert abs(slope + 0.5) < 0.05
    # variance of a fair +/-1 outcome is 1
    assert np.allclose(np.array(stds) * np.sqrt(shots), 1, atol=0.1)


def test_validate_density_matrix_rejects_bad_states():
    with pytest.raises(ValueError):
        validate_density_matrix(np.diag([1.2, -0.2]))
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(2))
