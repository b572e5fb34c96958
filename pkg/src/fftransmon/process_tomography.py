"""Process tomography: circuits, linear-inversion reconstruction and rate extraction."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .quantum_core import (
    TWO_PI,
    label_index,
    log_unitary,
    pauli_basis,
    pauli_decompose,
    pauli_labels,
    product_state,
)
from .rates import RateTable
from .schedules import PulseSchedule, cr_schedule, idle, merge
from .simulator import Circuit

PREP_STATES = ("0", "1", "+", "+i")
MEASURE_BASES = "XYZ"
DISPLAY_THRESHOLD = 0.2  # MHz; smaller unwanted rates are hidden in reports
THREE_QUBIT_EXPECTED = ("IIZ", "IXI", "IXZ", "ZII", "ZXI")


@dataclass
class ChiMatrix:
    """Pauli-basis process matrix with trace one and its dominant eigenvalue."""

    n: int
    entries: np.ndarray
    lambda0: float
    ptm: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def labels(self) -> tuple[str, ...]:
        return pauli_labels(self.n)


# --- channel representations --------------------------------------------------


def _pauli_stack(n: int) -> np.ndarray:
    return pauli_basis(n)


def chi_from_superop(S: np.ndarray) -> np.ndarray:
    """``chi`` with ``Lambda(rho) = sum chi_mn P_m rho P_n`` from a row-major superoperator."""
    d = int(round(math.sqrt(S.shape[0])))
    n = int(round(math.log2(d)))
    P = _pauli_stack(n)
    S4 = S.reshape(d, d, d, d)  # S[(i j), (k l)] = sum chi_mn P_m[i, k] P_n[l, j]
    return np.einsum("mik,nlj,ijkl->mn", P.conj(), P.conj(), S4) / d**2


def chi_from_unitary(U: np.ndarray) -> np.ndarray:
    d = U.shape[0]
    n = int(round(math.log2(d)))
    v = np.einsum("mji,ji->m", _pauli_stack(n).conj(), U) / d
    return np.outer(v, v.conj())


def superop_from_ptm(R: np.ndarray) -> np.ndarray:
    """Row-major superoperator of the channel with Pauli transfer matrix ``R``."""
    n = int(round(math.log(R.shape[0], 4)))
    d = 2**n
    P = _pauli_stack(n).reshape(4**n, d * d)
    return np.einsum("pq,pa,qb->ab", R, P, P.conj()) / d


def ptm_from_superop(S: np.ndarray) -> np.ndarray:
    d = int(round(math.sqrt(S.shape[0])))
    n = int(round(math.log2(d)))
    P = _pauli_stack(n).reshape(4**n, d * d)
    return np.real(np.einsum("pa,ab,qb->pq", P.conj(), S, P)) / d


def depolarizing_chi(n: int, p: float) -> np.ndarray:
    """``rho -> (1 - p) rho + p I/d`` in the Pauli basis."""
    chi = np.full(4**n, p / 4**n, dtype=complex)
    chi[0] += 1 - p
    return np.diag(chi)


def project_cp(chi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip negative eigenvalues and renormalize to trace one. Returns ``(chi, eigenvalues)``."""
    chi = 0.5 * (chi + chi.conj().T)
    w, v = np.linalg.eigh(chi)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValueError("process matrix has no positive part")
    w = w / w.sum()
    return (v * w) @ v.conj().T, w


# --- circuits and reconstruction --------------------------------------------


def qpt_circuits(n_device: int, qubits: Sequence[int], schedule: PulseSchedule) -> list[Circuit]:
    """All preparation and basis combinations on ``qubits``; other qubits start in ``0``."""
    qubits = tuple(qubits)
    circuits = []
    for preps in itertools.product(PREP_STATES, repeat=len(qubits)):
        full = ["0"] * n_device
        for q, s in zip(qubits, preps):
            full[q] = s
        for basis in itertools.product(MEASURE_BASES, repeat=len(qubits)):
            circuits.append(Circuit(tuple(full), schedule, qubits, "".join(basis)))
    return circuits


def _input_matrix(k: int) -> np.ndarray:
    labels = pauli_labels(k)
    cols = []
    for preps in itertools.product(PREP_STATES, repeat=k):
        rho = product_state(preps)
        cols.append([np.real(np.trace(rho @ P)) for P in pauli_basis(k)])
    return np.array(cols).T  # [label, prep]


def pauli_expectations(records, k: int) -> np.ndarray:
    """Table ``E[label, prep]`` averaging every basis compatible with each label."""
    labels = pauli_labels(k)
    n_bases = 3**k
    n_preps = 4**k
    if len(records) != n_preps * n_bases:
        raise ValueError(f"expected {n_preps * n_bases} records, got {len(records)}")
    E = np.zeros((4**k, n_preps))
    for pi in range(n_preps):
        block = records[pi * n_bases:(pi + 1) * n_bases]
        for li, label in enumerate(labels):
            vals = [
                rec.expectation(label)
                for rec in block
                if all(a == "I" or a == b for a, b in zip(label, rec.basis))
            ]
            E[li, pi] = np.mean(vals)
    return E


def reconstruct(records, k: int, cond_limit: float = 1e8) -> ChiMatrix:
    """Linear inversion of tomography records into a CP-projected ``ChiMatrix``."""
    S = _input_matrix(k)
    cond = float(np.linalg.cond(S))
    diagnostics = {"condition_number": cond}
    if cond > cond_limit:
        diagnostics["ill_conditioned"] = True
        warnings.warn(f"tomography inversion is ill-conditioned (cond={cond:.3g})", stacklevel=2)
    E = pauli_expectations(records, k)
    R = E @ np.linalg.inv(S)
    chi = chi_from_superop(superop_from_ptm(R))
    trace = np.trace(chi).real
    chi = chi / trace
    raw = np.linalg.eigvalsh(0.5 * (chi + chi.conj().T))
    chi, w = project_cp(chi)
    diagnostics["raw_min_eigenvalue"] = float(raw.min())
    diagnostics["raw_trace"] = float(trace)
    return ChiMatrix(k, chi, float(w.max()), R, diagnostics)


def run_qpt(provider, qubits: Sequence[int], schedule: PulseSchedule, shots: int | None) -> ChiMatrix:
    """Full process tomography of ``schedule`` on ``qubits`` in one provider session."""
    qubits = list(qubits)
    if not 1 <= len(qubits) <= 3:
        raise ValueError("process tomography supports 1 to 3 qubits")
    if shots is not None and shots < 256:
        raise ValueError("use at least 256 shots per circuit")
    records = provider.run(qpt_circuits(provider.n_qubits, qubits, schedule), shots)
    return reconstruct(records, len(qubits))


# --- unitary and rates ------------------------------------------------------------


def dominant_unitary(chi: ChiMatrix | np.ndarray, gap_tol: float = 1e-6) -> tuple[float, np.ndarray]:
    """Closest unitary to the dominant eigenvector of ``chi``, with that eigenvalue.

    The identity coefficient of the result is real and non-negative.
    """
    mat = chi.entries if isinstance(chi, ChiMatrix) else np.asarray(chi)
    n = int(round(math.log(mat.shape[0], 4)))
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    top = w[-1]
    if len(w) > 1 and top - w[-2] < gap_tol:
        tied = [i for i in range(len(w)) if top - w[i] < gap_tol]
        warnings.warn("dominant eigenvalue is degenerate; using lexicographic tie-break", stacklevel=2)
        idx = max(tied, key=lambda i: tuple(np.round(np.abs(v[:, i]), 9)))
    else:
        idx = len(w) - 1
    vec = v[:, idx]
    vec = vec / np.linalg.norm(vec)
    U = np.einsum("m,mij->ij", vec, pauli_basis(n))
    U, _ = scipy.linalg.polar(U)
    coeffs = np.einsum("mji,ji->m", pauli_basis(n).conj(), U)
    ref = coeffs[0] if abs(coeffs[0]) > 1e-9 else coeffs[np.argmax(np.abs(coeffs) > 1e-9)]
    U = U * np.exp(-1j * np.angle(ref))
    return float(w[idx]), U


def centered_unitary(U: np.ndarray) -> np.ndarray:
    """``U`` times the global phase that gives determinant one and the tightest eigenphases.

    Tomography fixes the global phase by convention, which can push an
    eigenphase across the branch cut even when the generator is small. Among
    the ``d`` determinant-one representatives the one whose principal
    eigenphases sum to zero with the least spread is returned.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    base = U * np.exp(-1j * np.angle(np.linalg.det(U)) / d)
    best, best_score = base, None
    for k in range(d):
        cand = base * np.exp(2j * np.pi * k / d)
        ph = np.angle(np.linalg.eigvals(cand))
        score = (round(abs(ph.sum()), 9) > 0, float(np.sum(ph**2)))
        if best_score is None or score < best_score:
            best, best_score = cand, score
    return best


def effective_rates(U: np.ndarray, t: float, atol: float = 0.0) -> RateTable:
    """Pauli coefficients (MHz) of the principal-branch generator of ``U`` at time ``t``.

    The global phase of ``U`` carries no information and is first chosen by
    ``centered_unitary``.
    """
    H = log_unitary(centered_unitary(U), t)
    coeffs = pauli_decompose(H)
    return RateTable({k: (v if abs(v) > atol else 0.0) for k, v in coeffs.items()}, {"duration": t})


@dataclass
class BranchResult:
    rates: RateTable
    corrections: dict[str, list[int]]
    corrected: dict[str, list[float]]
    residuals: dict[str, float]
    ambiguous: list[str]


def _resolve_label(values, unit, k_max, tol):
    best = None
    for r, u in zip(values, unit):
        for k0 in range(-k_max, k_max + 1):
            c = r + k0 * u
            ks = np.clip(np.rint((c - values) / unit), -k_max, k_max).astype(int)
            corr = values + ks * unit
            res = float(np.std(corr, ddof=1))
            # feasible first, then anchored at the shortest duration, then fewest corrections
            score = (res > tol, abs(int(ks[0])), int(np.abs(ks).sum()), res)
            if best is None or score < best[0]:
                best = (score, ks, corr, res)
    return best


def resolve_branch(
    tables: Sequence[tuple[float, RateTable]],
    k_max: int | None = None,
    tol: float = 0.05,
) -> BranchResult:
    """Pick per-label branch corrections that make rates duration-independent.

    Every rate may be shifted by ``k / (2**n t)`` MHz (``n`` the label
    length), which is the step a single wrapped eigenphase produces on a
    sum of commuting Pauli terms. For each label the integer corrections
    with ``|k| <= k_max`` are chosen to bring the sample standard deviation
    across durations below ``tol``. Among such choices the one leaving the
    shortest duration uncorrected is preferred (durations on a regular grid
    admit aliased constant solutions, and short durations wrap least), then
    the fewest total corrections, then the smaller spread. Labels with no such choice are flagged
    ambiguous and fall back to the plain mean.
    """
    if len({t for t, _ in tables}) < 3 or len(tables) != len({t for t, _ in tables}):
        raise ValueError("branch resolution needs at least three distinct durations")
    tables = sorted(tables, key=lambda x: x[0])
    ts = np.array([t for t, _ in tables])
    labels = sorted(set().union(*(tab.rates for _, tab in tables)), key=label_index)
    if not labels:
        return BranchResult(RateTable({}, {"durations": ts.tolist()}), {}, {}, {}, [])
    n = len(labels[0])
    if k_max is None:
        k_max = 3 * 2 ** (n - 1)
    unit = 1.0 / (2**n * ts)
    rates, corrections, corrected, residuals, ambiguous = {}, {}, {}, {}, []
    for label in labels:
        values = np.array([tab[label] for _, tab in tables])
        score, ks, corr, res = _resolve_label(values, unit, k_max, tol)
        if score[0]:
            ambiguous.append(label)
            ks = np.zeros(len(ts), dtype=int)
            corr = values
            res = float(np.std(values, ddof=1))
        rates[label] = float(np.mean(corr))
        corrections[label] = ks.tolist()
        corrected[label] = corr.tolist()
        residuals[label] = res
    if ambiguous:
        warnings.warn(f"branch resolution ambiguous for {ambiguous}", stacklevel=2)
    meta = {"durations": ts.tolist(), "residuals": residuals, "ambiguous": ambiguous}
    return BranchResult(RateTable(rates, meta), corrections, corrected, residuals, ambiguous)


def unwrap_generators(durations: Sequence[float], unitaries: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Generators (MHz) of ``unitaries`` on mutually consistent log branches.

    Durations are visited in increasing order. The first generator is the
    principal one; each later eigenphase is shifted by the multiple of
    ``2 pi`` that brings it closest to the phase predicted by the mean of
    the generators found so far. This follows the branch even when terms do
    not commute, as long as neighbouring durations are close enough that
    the running estimate predicts phases to within ``pi``.
    """
    order = np.argsort(durations)
    out: list[np.ndarray | None] = [None] * len(durations)
    found: list[np.ndarray] = []
    for idx in order:
        t = float(durations[idx])
        U = np.asarray(unitaries[idx])
        if not found:
            H = log_unitary(centered_unitary(U), t)
        else:
            ref = np.mean(found, axis=0)
            T, Z = scipy.linalg.schur(U, output="complex")
            phases = np.angle(np.diag(T))
            predicted = np.real(np.einsum("ij,jk,ki->i", Z.conj().T, ref, Z)) * -2 * np.pi * t
            # a global phase is free: align it before choosing branches
            offset = np.angle(np.mean(np.exp(1j * (phases - predicted))))
            shifted = phases - offset
            m = np.rint((predicted - shifted) / (2 * np.pi))
            H = (Z * (-(shifted + 2 * np.pi * m) / (2 * np.pi * t))) @ Z.conj().T
            H = 0.5 * (H + H.conj().T)
            H -= np.trace(H).real / H.shape[0] * np.eye(H.shape[0])
        found.append(H)
        out[idx] = H
    return out


def constant_rates(durations: Sequence[float], generators: Sequence[np.ndarray]) -> BranchResult:
    """Duration-independent rates from branch-consistent generators.

    Shot noise on a rate falls off as ``1/t``, so durations are weighted by
    ``t**2``. Residuals are the unweighted sample spread.
    """
    tables = [(float(t), RateTable(pauli_decompose(H), {"duration": float(t)})) for t, H in zip(durations, generators)]
    ts = np.array([t for t, _ in tables])
    weights = ts**2 / np.sum(ts**2)
    labels = sorted(set().union(*(tab.rates for _, tab in tables)), key=label_index)
    rates, corrected, residuals = {}, {}, {}
    for label in labels:
        vals = np.array([tab[label] for _, tab in tables])
        rates[label] = float(np.dot(weights, vals))
        corrected[label] = vals.tolist()
        residuals[label] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    meta = {"durations": ts.tolist(), "residuals": residuals, "ambiguous": []}
    return BranchResult(RateTable(rates, meta), {k: [0] * len(ts) for k in labels}, corrected, residuals, [])


def fit_constant_generator(
    durations: Sequence[float], unitaries: Sequence[np.ndarray], H0: np.ndarray
) -> tuple[np.ndarray, float]:
    """Single generator ``H`` (MHz) whose evolutions best match all ``unitaries``.

    Minimizes ``sum_t min_a |V_t - exp(i a) exp(-2 pi i H t)|_F^2`` from the
    start ``H0``. Unlike averaging per-duration logarithms, this does not
    amplify noise on terms that anticommute with a large term at durations
    where that term's eigenphase gap nears a multiple of ``2 pi``. Returns
    ``(H, rms residual)``.
    """
    d = H0.shape[0]
    n = int(round(math.log2(d)))
    basis = pauli_basis(n)[1:]
    ts = [float(t) for t in durations]
    Vs = [np.asarray(V) for V in unitaries]
    x0 = np.real(np.einsum("kij,ji->k", basis, H0)) / d

    def resid(x):
        H = np.einsum("k,kij->ij", x, basis)
        w, v = np.linalg.eigh(H)
        out = []
        for t, V in zip(ts, Vs):
            U = (v * np.exp(-1j * TWO_PI * w * t)) @ v.conj().T
            ov = np.trace(U.conj().T @ V)
            D = V - (ov / abs(ov) if abs(ov) > 0 else 1.0) * U
            out.append(D.real.ravel())
            out.append(D.imag.ravel())
        return np.concatenate(out)

    sol = scipy.optimize.least_squares(resid, x0, x_scale=0.1)
    H = np.einsum("k,kij->ij", sol.x, basis)
    return H, float(np.sqrt(np.mean(sol.fun**2)))


# eigenphase spread (units of pi) at the shortest duration above which the
# branch choice is reported as unreliable
BRANCH_EDGE = 0.9


def rates_from_tomography(
    provider,
    qubits: Sequence[int],
    schedules: Sequence[PulseSchedule],
    shots: int | None,
) -> tuple[BranchResult, list[ChiMatrix]]:
    """Tomography at every schedule duration, then branch-consistent constant rates.

    All schedules go to the provider in a single session. Durations that are
    all multiples of a common step cannot tell a rate from one shifted by a
    common wrap period, so the shortest duration must keep the generator's
    eigenphase spread below pi. If the result puts it close to pi a warning
    is issued and ``meta["branch_edge"]`` holds the spread in units of pi.
    """
    k = len(qubits)
    per = 4**k * 3**k
    circuits = [c for s in schedules for c in qpt_circuits(provider.n_qubits, qubits, s)]
    records = provider.run(circuits, shots)
    chis, unitaries = [], []
    for i, _ in enumerate(schedules):
        chi = reconstruct(records[i * per:(i + 1) * per], k)
        chis.append(chi)
        unitaries.append(dominant_unitary(chi)[1])
    durations = [s.duration for s in schedules]
    gens = unwrap_generators(durations, unitaries)
    result = constant_rates(durations, gens)
    H, rms = fit_constant_generator(durations, unitaries, result.rates.operator())
    meta = dict(result.rates.meta, unitary_fit_rms=rms, averaged_rates=dict(result.rates.rates))
    ev = np.linalg.eigvalsh(H)
    edge = 2 * min(durations) * (ev[-1] - ev[0])
    if edge > BRANCH_EDGE:
        meta["branch_edge"] = float(edge)
        warnings.warn(f"eigenphase spread {edge:.2f} pi at the shortest duration: rates may sit on a wrapped "
                      "branch; add a shorter duration", stacklevel=2)
    result.rates = RateTable(pauli_decompose(H), meta)
    return result, chis


# --- multi-qubit experiments ------------------------------------------------------


# The shortest duration anchors the log branch: the eigenphase spread of a
# generator the size of the measured rates stays below pi there.
DEFAULT_DURATIONS = (0.04, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)


def _protocol_schedules(q1, q2, q3, Omega, phase, durations):
    def build(kind, t):
        if kind == "idle":
            return idle(t)
        a = cr_schedule(q1, q2, Omega, phase, t)
        b = cr_schedule(q3, q2, Omega, phase, t)
        return {"drive_q1": a, "drive_q3": b, "drive_both": merge(a, b)}[kind]

    return {kind: [build(kind, t) for t in durations] for kind in ("idle", "drive_q1", "drive_q3", "drive_both")}


@dataclass
class AdditivityReport:
    """Rates of the four protocols on ``(q1, q2)``, the predicted sum and deviations."""

    protocols: dict[str, BranchResult | None]
    predicted: dict[str, float]
    deviations: dict[str, float]
    lambda0: dict[str, list[float]]
    labels: list[str]
    missing: list[str] = field(default_factory=list)

    def rate(self, protocol: str, label: str) -> float | None:
        res = self.protocols.get(protocol)
        return None if res is None else res.rates[label]

    def rows(self) -> list[dict]:
        out = []
        for label in self.labels:
            row = {"label": label}
            for name in ("idle", "drive_q1", "drive_q3", "drive_both"):
                row[name] = self.rate(name, label)
            row["predicted"] = self.predicted.get(label)
            row["deviation"] = self.deviations.get(label)
            out.append(row)
        return out

    def to_table(self, threshold: float = 0.0) -> str:
        """Tab-separated text, one row per label, fixed column order."""
        cols = ["label", "idle", "drive_q1", "drive_q3", "drive_both", "predicted", "deviation"]
        lines = ["\t".join(cols)]
        for row in self.rows():
            shown = [row[c] for c in cols[1:6] if row[c] is not None]
            if threshold and shown and max(abs(v) for v in shown) < threshold:
                continue
            lines.append("\t".join(
                row["label"] if c == "label" else ("NA" if row[c] is None else f"{row[c]:.6f}") for c in cols
            ))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "columns": ["label", "idle", "drive_q1", "drive_q3", "drive_both", "predicted", "deviation"],
            "rows": self.rows(),
            "lambda0": self.lambda0,
            "missing": self.missing,
        }


def additivity_suite(
    provider,
    q1: int,
    q2: int,
    q3: int,
    Omega: float,
    durations: Sequence[float] = DEFAULT_DURATIONS,
    shots: int | None = 4096,
    phase: float = 0.0,
) -> AdditivityReport:
    """Idle, each drive alone and both drives together, all tomographed on ``(q1, q2)``."""
    if len({q1, q2, q3}) != 3:
        raise ValueError("additivity needs three distinct qubits")
    protocols: dict[str, BranchResult | None] = {}
    lambda0: dict[str, list[float]] = {}
    missing = []
    for name, schedules in _protocol_schedules(q1, q2, q3, Omega, phase, durations).items():
        try:
            res, chis = rates_from_tomography(provider, (q1, q2), schedules, shots)
        except Exception as exc:  # a failed protocol leaves a hole in the report
            warnings.warn(f"protocol {name} failed: {exc}", stacklevel=2)
            protocols[name] = None
            missing.append(name)
            continue
        protocols[name] = res
        lambda0[name] = [c.lambda0 for c in chis]
    labels = list(pauli_labels(2)[1:])
    predicted, deviations = {}, {}
    if not any(p in missing for p in ("idle", "drive_q1", "drive_q3")):
        for label in labels:
            predicted[label] = sum(protocols[p].rates[label] for p in ("idle", "drive_q1", "drive_q3"))
            if "drive_both" not in missing:
                deviations[label] = abs(predicted[label] - protocols["drive_both"].rates[label])
    return AdditivityReport(protocols, predicted, deviations, lambda0, labels, missing)


@dataclass
class ThreeQubitResult:
    rates: RateTable
    expected: tuple[str, ...]
    spurious: dict[str, float]
    ratio: float
    lambda0: list[float]


def three_qubit_qpt(
    provider,
    q1: int,
    q2: int,
    q3: int,
    Omega: float,
    durations: Sequence[float] = (0.04,),
    shots: int | None = 1024,
    phase: float = 0.0,
) -> ThreeQubitResult:
    """Three-qubit tomography under both cross-resonance drives at once.

    Rates are labelled in ``(q1, q2, q3)`` order. The five labels a sum of
    the two pairwise generators can produce are marked expected; the ratio
    compares the largest other rate with the smallest expected one.
    """
    schedules = _protocol_schedules(q1, q2, q3, Omega, phase, durations)["drive_both"]
    qubits = (q1, q2, q3)
    if len(durations) >= 2:
        res, chis = rates_from_tomography(provider, qubits, schedules, shots)
        table = res.rates
    else:
        chi = run_qpt(provider, qubits, schedules[0], shots)
        chis = [chi]
        table = effective_rates(dominant_unitary(chi)[1], durations[0])
    spurious = {k: v for k, v in table.rates.items() if k not in THREE_QUBIT_EXPECTED}
    smallest = min(abs(table[k]) for k in THREE_QUBIT_EXPECTED)
    worst = max((abs(v) for v in spurious.values()), default=0.0)
    ratio = worst / smallest if smallest > 0 else math.inf
    table.meta.update({"qubits": list(qubits), "expected": list(THREE_QUBIT_EXPECTED), "Omega": Omega})
    return ThreeQubitResult(table, THREE_QUBIT_EXPECTED, spurious, ratio, [c.lambda0 for c in chis])
