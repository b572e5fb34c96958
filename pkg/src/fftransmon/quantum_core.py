"""Dense linear algebra for small qubit registers.

Operators and density matrices are plain complex ``numpy`` arrays. Pauli
labels are strings over ``IXYZ`` with the leftmost character acting on the
most significant tensor factor; the canonical label order is the base-4
integer with ``I=0, X=1, Y=2, Z=3``.

Rates are ordinary frequencies in MHz and times are in microseconds. Where a
rate enters an exponential it is multiplied by ``2*pi``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

TWO_PI = 2.0 * np.pi

_SINGLE = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Rotations taking each measurement basis onto the computational basis.
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_BASIS_CHANGE = {
    "X": _HADAMARD,
    "Y": _HADAMARD @ np.diag([1, -1j]),
    "Z": np.eye(2, dtype=complex),
}

# Single-qubit preparation states by label.
STATE_VECTORS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "-i": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def _check_label(label: str) -> str:
    if not isinstance(label, str) or not label:
        raise ValueError("Pauli label must be a non-empty string")
    bad = set(label) - set("IXYZ")
    if bad:
        raise ValueError(f"invalid Pauli character(s) {sorted(bad)} in {label!r}")
    return label


@lru_cache(maxsize=None)
def _pauli_cached(label: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in label:
        out = np.kron(out, _SINGLE[ch])
    out.setflags(write=False)
    return out


def pauli_matrix(label: str) -> np.ndarray:
    """Return the ``2**n x 2**n`` tensor product named by ``label``."""
    return _pauli_cached(_check_label(label))


@lru_cache(maxsize=None)
def pauli_labels(n: int) -> tuple[str, ...]:
    """All ``4**n`` labels in canonical order."""
    if n < 1:
        raise ValueError("need at least one qubit")
    return tuple("".join(p) for p in itertools.product("IXYZ", repeat=n))


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> np.ndarray:
    """Stack of all n-qubit Pauli matrices, shape ``(4**n, 2**n, 2**n)``."""
    basis = np.array([pauli_matrix(lab) for lab in pauli_labels(n)])
    basis.setflags(write=False)
    return basis


def label_index(label: str) -> int:
    """Position of ``label`` in the canonical ordering."""
    idx = 0
    for ch in _check_label(label):
        idx = 4 * idx + "IXYZ".index(ch)
    return idx


def n_qubits_of(mat: np.ndarray) -> int:
    dim = mat.shape[0]
    n = int(round(np.log2(dim)))
    if mat.ndim != 2 or mat.shape[1] != dim or 2**n != dim:
        raise ValueError(f"expected a square 2^n matrix, got shape {mat.shape}")
    return n


def is_hermitian(mat: np.ndarray, atol: float = 1e-10) -> bool:
    mat = np.asarray(mat)
    return mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.allclose(mat, mat.conj().T, atol=atol, rtol=0)


def is_unitary(mat: np.ndarray, atol: float = 1e-10) -> bool:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        return False
    return np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))) <= atol


def pauli_decompose(H: np.ndarray, n: int | None = None, atol: float = 1e-10) -> dict[str, float]:
    """Real Pauli coefficients ``c_L = Tr(H P_L) / 2**n`` for every label.

    Raises ``ValueError`` for non-Hermitian input, whose imaginary coefficients
    would otherwise be dropped.
    """
    H = np.asarray(H, dtype=complex)
    nq = n_qubits_of(H)
    if n is not None and n != nq:
        raise ValueError(f"operator acts on {nq} qubits, not {n}")
    scale = max(1.0, float(np.max(np.abs(H))))
    if not is_hermitian(H, atol=atol * scale):
        raise ValueError("pauli_decompose needs a Hermitian operator")
    coeffs = np.einsum("kij,ji->k", pauli_basis(nq), H).real / H.shape[0]
    return dict(zip(pauli_labels(nq), coeffs.tolist()))


def from_pauli(coeffs: dict[str, float], n: int | None = None) -> np.ndarray:
    """Inverse of :func:`pauli_decompose`: ``sum_L c_L P_L``."""
    if n is None:
        if not coeffs:
            raise ValueError("cannot infer register size from an empty map")
        n = len(next(iter(coeffs)))
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for label, c in coeffs.items():
        if len(label) != n:
            raise ValueError(f"label {label!r} does not act on {n} qubits")
        out += c * pauli_matrix(label)
    return out


def expm_hermitian(H: np.ndarray, t: float = 1.0) -> np.ndarray:
    """``exp(-i H t)`` for Hermitian ``H`` via eigendecomposition."""
    w, v = np.linalg.eigh(H)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagate(segments: Iterable[tuple[np.ndarray, float]]) -> np.ndarray:
    """Product of ``exp(-i H_k dt_k)`` with the first segment acting first.

    Generators are in rad/us. An empty list gives the identity (on a 1x1
    space, which broadcasts; pass at least one segment to fix the dimension).
    """
    U = None
    for H, dt in segments:
        H = np.asarray(H, dtype=complex)
        if dt <= 0:
            raise ValueError("segment durations must be positive")
        if not is_hermitian(H, atol=1e-10 * max(1.0, float(np.max(np.abs(H))))):
            raise ValueError("propagate needs Hermitian generators")
        step = expm_hermitian(H, dt)
        U = step if U is None else step @ U
    if U is None:
        return np.eye(1, dtype=complex)
    return U


def log_unitary(U: np.ndarray, t: float) -> np.ndarray:
    """Traceless Hermitian ``H`` (MHz) with ``exp(-2 pi i H t) = U`` up to phase.

    Eigenphases are taken on the principal branch ``(-pi, pi]``; a phase that
    sits on the cut is assigned to ``+pi``.
    """
    U = np.asarray(U, dtype=complex)
    if t <= 0:
        raise ValueError("t must be positive")
    if not is_unitary(U, atol=1e-6):
        raise ValueError("log_unitary needs a unitary operator")
    T, Z = scipy.linalg.schur(U, output="complex")
    phases = np.angle(np.diag(T))
    phases = np.where(phases < -np.pi + 1e-12, phases + TWO_PI, phases)
    H = (Z * (-phases / (TWO_PI * t))) @ Z.conj().T
    H = 0.5 * (H + H.conj().T)
    H -= np.trace(H).real / H.shape[0] * np.eye(H.shape[0])
    return H


# --- states -----------------------------------------------------------------


def product_state(labels: Sequence[str]) -> np.ndarray:
    """Density matrix of a product of single-qubit states like ``("0", "+i")``."""
    psi = np.ones(1, dtype=complex)
    for lab in labels:
        try:
            psi = np.kron(psi, STATE_VECTORS[lab])
        except KeyError:
            raise ValueError(f"unknown preparation label {lab!r}") from None
    return np.outer(psi, psi.conj())


def validate_density_matrix(rho: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    n_qubits_of(rho)
    if not is_hermitian(rho, atol=1e-10):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-8:
        raise ValueError("density matrix trace differs from one")
    if np.linalg.eigvalsh(rho).min() < -atol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.real(np.einsum("ij,ji->", rho, rho)))


def expectation(rho: np.ndarray, op: np.ndarray | str) -> float:
    """``Re Tr(rho op)``; ``op`` may be a Pauli label."""
    if isinstance(op, str):
        op = pauli_matrix(op)
    return float(np.real(np.einsum("ij,ji->", rho, op)))


def partial_trace(rho: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    """Reduced state on the qubits in ``keep``, in the order given."""
    rho = np.asarray(rho)
    n = n_qubits_of(rho)
    keep = list(keep)
    if len(set(keep)) != len(keep) or any(not 0 <= q < n for q in keep):
        raise ValueError(f"keep set {keep} invalid for {n} qubits")
    if not keep:
        raise ValueError("keep set must be non-empty")
    drop = [q for q in range(n) if q not in keep]
    t = rho.reshape([2] * (2 * n))
    # contract dropped pairs, highest index first so axes stay valid
    for q in sorted(drop, reverse=True):
        nq = t.ndim // 2
        t = np.trace(t, axis1=q, axis2=q + nq)
    remaining = sorted(keep)
    order = [remaining.index(q) for q in keep]
    k = len(keep)
    t = t.transpose(order + [k + o for o in order])
    return t.reshape(2**k, 2**k)


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit state."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError("concurrence is defined for two qubits")
    yy = pauli_matrix("YY")
    tilde = yy @ rho.conj() @ yy
    ev = np.sqrt(np.abs(np.linalg.eigvals(rho @ tilde)))
    ev = np.sort(ev)[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


# --- measurement ------------------------------------------------------------


@dataclass
class MeasurementRecord:
    """Outcome tallies for one (preparation, basis, duration) experiment.

    ``counts[k]`` is the tally of outcome bitstring ``format(k, "0nb")``,
    leftmost bit belonging to the first measured qubit. With ``shots=None``
    the tallies are exact probabilities.
    """

    basis: str
    counts: np.ndarray
    shots: int | None
    prep: tuple[str, ...] | None = None
    duration: float | None = None
    qubits: tuple[int, ...] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.counts))

    def probabilities(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.total

    def as_dict(self) -> dict[str, float]:
        n = len(self.basis)
        return {format(k, f"0{n}b"): v for k, v in enumerate(self.counts.tolist()) if v}

    def expectation(self, label: str) -> float:
        """Parity expectation of ``label`` (``I`` or the measured axis per qubit)."""
        n = len(self.basis)
        if len(label) != n:
            raise ValueError(f"label {label!r} does not match basis {self.basis!r}")
        mask = 0
        for pos, (lab, b) in enumerate(zip(label, self.basis)):
            if lab == "I":
                continue
            if lab != b:
                raise ValueError(f"{label!r} is not diagonal in basis {self.basis!r}")
            mask |= 1 << (n - 1 - pos)
        return float(np.dot(_parity_signs(n, mask), self.probabilities()))


@lru_cache(maxsize=None)
def _parity_signs(n: int, mask: int) -> np.ndarray:
    k = np.arange(2**n)
    bits = np.zeros(2**n, dtype=int)
    m = k & mask
    while np.any(m):
        bits ^= m & 1
        m >>= 1
    return 1.0 - 2.0 * bits


def basis_rotation(basis: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for ch in basis:
        try:
            out = np.kron(out, _BASIS_CHANGE[ch])
        except KeyError:
            raise ValueError(f"cannot measure in basis {ch!r}; marginalize instead") from None
    return out


def _apply_readout_flip(probs: np.ndarray, n: int, flips: Sequence[float]) -> np.ndarray:
    t = probs.reshape([2] * n)
    for q, f in enumerate(flips):
        if f:
            conf = np.array([[1 - f, f], [f, 1 - f]])
            t = np.moveaxis(np.tensordot(conf, t, axes=([1], [q])), 0, q)
    return t.reshape(-1)


def outcome_probabilities(rho: np.ndarray, basis: str, readout_flip: float | Sequence[float] = 0.0) -> np.ndarray:
    """Outcome distribution for measuring ``rho`` in ``basis`` with symmetric flips."""
    n = len(basis)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (2**n, 2**n):
        raise ValueError(f"basis {basis!r} does not match state of shape {rho.shape}")
    R = basis_rotation(basis)
    probs = np.real(np.einsum("ij,jk,ik->i", R, rho, R.conj()))
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    flips = np.broadcast_to(np.asarray(readout_flip, dtype=float), (n,))
    if np.any(flips < 0) or np.any(flips >= 0.5):
        raise ValueError("readout flip probabilities must lie in [0, 0.5)")
    return _apply_readout_flip(probs, n, flips)


def sample_counts(
    rho: np.ndarray,
    basis: str,
    shots: int | None,
    readout_flip: float | Sequence[float] = 0.0,
    rng: np.random.Generator | int | None = None,
) -> MeasurementRecord:
    """Sample measurement outcomes of ``rho`` in a Pauli ``basis``.

    Bits are flipped independently with probability ``readout_flip``. The
    flips are folded into the outcome distribution before a single
    multinomial draw, which has the same law as flipping each sampled bit.
    ``shots=None`` returns exact probabilities.
    """
    probs = outcome_probabilities(rho, basis, readout_flip)
    if shots is None:
        return MeasurementRecord(basis=basis, counts=probs, shots=None)
    if shots < 1:
        raise ValueError("shots must be positive")
    rng = np.random.default_rng(rng)
    counts = rng.multinomial(int(shots), probs)
    return MeasurementRecord(basis=basis, counts=counts, shots=int(shots))
