"""Static description of a fixed-frequency transmon device.

All rates are ordinary frequencies in MHz, times in microseconds and phases
in radians.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .quantum_core import pauli_matrix
from .rates import MEASURED_RATES, RateTable


@dataclass(frozen=True)
class AwgModel:
    """Imperfect waveform generator between requested and delivered amplitude.

    ``amplitude_step`` is the output resolution in MHz (0 disables
    quantization); ``gain_nonlinearity`` is a cubic gain coefficient in
    1/MHz^2; ``phase_offset`` is added to every drive phase. With
    ``min_one_step`` a nonzero request never rounds down to silence.
    """

    amplitude_step: float = 0.0
    gain_nonlinearity: float = 0.0
    phase_offset: float = 0.0
    min_one_step: bool = False

    def __post_init__(self):
        if self.amplitude_step < 0:
            raise ValueError("amplitude_step must be non-negative")


def _round_half_away(x: float) -> float:
    return math.copysign(math.floor(abs(x) + 0.5), x)


def awg_apply(model: AwgModel, requested: float) -> float:
    """Amplitude (MHz) actually delivered for a ``requested`` amplitude."""
    if requested < 0:
        raise ValueError("requested amplitude must be non-negative")
    amp = requested * (1.0 + model.gain_nonlinearity * requested**2)
    step = model.amplitude_step
    if step == 0:
        return amp
    levels = _round_half_away(amp / step)
    if model.min_one_step and levels == 0 and requested > 0:
        levels = 1.0
    return levels * step


@dataclass(frozen=True)
class TlsSpec:
    """A two-level defect dispersively coupled to one qubit."""

    qubit: int
    chi: float
    p_excited: float = 0.5
    lifetime: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_excited <= 1.0:
            raise ValueError("p_excited must lie in [0, 1]")
        if self.lifetime is not None and self.lifetime <= 0:
            raise ValueError("TLS lifetime must be positive")


@dataclass(frozen=True)
class CrRule:
    """``c = k * Omega**omega_power * J**j_power * f(phase + phase0)``.

    ``phase_mode`` selects ``f``: ``"none"`` (1), ``"cos"`` or ``"sin"``.
    """

    k: float
    omega_power: int = 1
    j_power: int = 1
    phase_mode: str = "none"
    phase0: float = 0.0

    def __post_init__(self):
        if self.phase_mode not in ("none", "cos", "sin"):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")

    def rate(self, Omega: float, J: float, phase: float) -> float:
        if Omega == 0 and self.omega_power > 0:
            return 0.0
        value = self.k * Omega**self.omega_power * J**self.j_power
        if self.phase_mode == "cos":
            value *= math.cos(phase + self.phase0)
        elif self.phase_mode == "sin":
            value *= math.sin(phase + self.phase0)
        return value


def _default_rules(J_ref: float = 2.0, Omega_ref: float = 36.0) -> dict[str, CrRule]:
    # Magnitudes follow the measured table at the reference point; the
    # entangling axis is aligned with X at zero phase.
    jo = J_ref * Omega_ref
    jjo = J_ref**2 * Omega_ref
    return {
        "ZI": CrRule(MEASURED_RATES["ZI"] / Omega_ref**2, omega_power=2, j_power=0),
        "ZX": CrRule(MEASURED_RATES["ZX"] / jo, phase_mode="cos"),
        "ZY": CrRule(MEASURED_RATES["ZX"] / jo, phase_mode="sin"),
        "IX": CrRule(MEASURED_RATES["IX"] / jo),
        "IY": CrRule(MEASURED_RATES["IY"] / jjo, j_power=2),
        "IZ": CrRule(MEASURED_RATES["IZ"] / jjo, j_power=2),
        "ZZ": CrRule(MEASURED_RATES["ZZ"] / jjo, j_power=2),
    }


@dataclass(frozen=True)
class CrossResonanceModel:
    """Injected coefficient rules for the effective cross-resonance generator."""

    rules: Mapping[str, CrRule] = field(default_factory=_default_rules)

    @classmethod
    def measured(cls, J: float = 2.0, Omega: float = 36.0) -> "CrossResonanceModel":
        """Rules that reproduce the measured table exactly at ``(J, Omega)``, phase 0."""
        amp = -math.hypot(MEASURED_RATES["ZX"], MEASURED_RATES["ZY"])
        theta = math.atan2(MEASURED_RATES["ZY"] / amp, MEASURED_RATES["ZX"] / amp)
        jo, jjo = J * Omega, J**2 * Omega
        return cls({
            "ZI": CrRule(MEASURED_RATES["ZI"] / Omega**2, omega_power=2, j_power=0),
            "ZX": CrRule(amp / jo, phase_mode="cos", phase0=theta),
            "ZY": CrRule(amp / jo, phase_mode="sin", phase0=theta),
            "IX": CrRule(MEASURED_RATES["IX"] / jo),
            "IY": CrRule(MEASURED_RATES["IY"] / jjo, j_power=2),
            "IZ": CrRule(MEASURED_RATES["IZ"] / jjo, j_power=2),
            "ZZ": CrRule(MEASURED_RATES["ZZ"] / jjo, j_power=2),
        })

    @classmethod
    def ideal(cls, J: float = 2.0, Omega: float = 36.0) -> "CrossResonanceModel":
        """Only the dominant ZI, ZX/ZY and IX terms."""
        rules = _default_rules(J, Omega)
        return cls({k: rules[k] for k in ("ZI", "ZX", "ZY", "IX")})

    @classmethod
    def from_rates(cls, rates: Mapping[str, float], J: float, Omega: float) -> "CrossResonanceModel":
        """Rules that reproduce arbitrary two-qubit ``rates`` at ``(J, Omega)``, phase 0.

        Every label scales linearly in ``Omega``; use this to inject a fixed
        generator for oracle tests.
        """
        return cls({lab: CrRule(float(c) / (J * Omega)) for lab, c in rates.items()})


@dataclass(frozen=True)
class DeviceConfig:
    """Frequencies, couplings, noise and defect environment of a device."""

    omega: tuple[float, ...]
    alpha: tuple[float, ...] | None = None
    couplings: Mapping[tuple[int, int], float] = field(default_factory=dict)
    T1: tuple[float | None, ...] | None = None
    T2: tuple[float | None, ...] | None = None
    readout_flip: tuple[float, ...] | None = None
    detuning: tuple[float, ...] | None = None
    awg: AwgModel = field(default_factory=AwgModel)
    tls: tuple[TlsSpec, ...] = ()
    cr_model: CrossResonanceModel = field(default_factory=CrossResonanceModel)

    def __post_init__(self):
        n = len(self.omega)
        if n < 1:
            raise ValueError("device needs at least one qubit")
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("omega", tuple(float(w) for w in self.omega))
        for name, default in (("alpha", -330.0), ("T1", None), ("T2", None),
                              ("readout_flip", 0.0), ("detuning", 0.0)):
            value = getattr(self, name)
            if value is None or np.isscalar(value):
                value = (default if value is None else value,) * n
            value = tuple(value)
            if len(value) != n:
                raise ValueError(f"{name} needs {n} entries")
            set_(name, value)
        if any(a > 0 for a in self.alpha):
            raise ValueError("transmon anharmonicities must be <= 0")
        if any(not 0.0 <= f < 0.5 for f in self.readout_flip):
            raise ValueError("readout flip probabilities must lie in [0, 0.5)")
        for t1, t2 in zip(self.T1, self.T2):
            if t1 is not None and t1 <= 0 or t2 is not None and t2 <= 0:
                raise ValueError("coherence times must be positive")
            if t1 is not None and t2 is not None and t2 > 2 * t1 * (1 + 1e-12):
                raise ValueError("T2 cannot exceed 2*T1")
        couplings = {}
        for (i, j), J in dict(self.couplings).items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("coupling graph cannot contain self-loops")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"coupling ({i}, {j}) refers to a missing qubit")
            key = (min(i, j), max(i, j))
            couplings[key] = float(J)
            gap = abs(self.omega[i] - self.omega[j])
            if gap == 0 or abs(J) / gap > 0.1:
                warnings.warn(f"coupling {key} is not weak compared with the qubit detuning", stacklevel=3)
        set_("couplings", couplings)
        set_("tls", tuple(self.tls))
        for spec in self.tls:
            if not 0 <= spec.qubit < n:
                raise ValueError(f"TLS attached to missing qubit {spec.qubit}")

    @property
    def n(self) -> int:
        return len(self.omega)

    def coupling(self, i: int, j: int) -> float:
        return self.couplings.get((min(i, j), max(i, j)), 0.0)

    def connected(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.couplings

    def replace(self, **changes) -> "DeviceConfig":
        return replace(self, **changes)


def _ladder(levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, levels)), k=1).astype(complex)


def _embed(op: np.ndarray, site: int, n: int, levels: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    eye = np.eye(levels, dtype=complex)
    for k in range(n):
        out = np.kron(out, op if k == site else eye)
    return out


def build_duffing_hamiltonian(cfg: DeviceConfig, levels: int) -> np.ndarray:
    """Static lab-frame coupled Duffing oscillators, truncated to ``levels`` (MHz)."""
    if levels not in (2, 3):
        raise ValueError("levels must be 2 or 3")
    n = cfg.n
    a = _ladder(levels)
    ad = a.conj().T
    dim = levels**n
    H = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        H += cfg.omega[i] * _embed(ad @ a, i, n, levels)
        H += cfg.alpha[i] * _embed(ad @ ad @ a @ a, i, n, levels)
    quad = a - ad
    for (i, j), J in cfg.couplings.items():
        H += J * _embed(quad, i, n, levels) @ _embed(quad, j, n, levels)
    return H


def _pauli_on(n: int, sites: Mapping[int, str]) -> np.ndarray:
    return pauli_matrix("".join(sites.get(k, "I") for k in range(n)))


def build_qubit_hamiltonian(cfg: DeviceConfig) -> np.ndarray:
    """Two-level model ``sum w_i/2 Z_i + sum J_ij Y_i Y_j`` (MHz), no drives."""
    n = cfg.n
    H = sum(0.5 * w * _pauli_on(n, {i: "Z"}) for i, w in enumerate(cfg.omega))
    for (i, j), J in cfg.couplings.items():
        H = H + J * _pauli_on(n, {i: "Y", j: "Y"})
    return np.asarray(H, dtype=complex)


def cross_resonance_rates(cfg: DeviceConfig, control: int, target: int, Omega: float, phase: float) -> RateTable:
    """Effective generator of a drive on ``control`` at the ``target`` frequency.

    Labels are two characters, control first. This is injected ground truth:
    the coefficients come from ``cfg.cr_model``, not from perturbation theory.
    """
    if not cfg.connected(control, target):
        raise ValueError(f"qubits {control} and {target} are not coupled")
    if Omega < 0:
        raise ValueError("drive amplitude must be non-negative")
    J = cfg.coupling(control, target)
    rates = {lab: rule.rate(Omega, J, phase) for lab, rule in cfg.cr_model.rules.items()}
    meta = {"control": control, "target": target, "Omega": Omega, "phase": phase}
    return RateTable(rates, meta)


@dataclass(frozen=True)
class TlsSampler:
    """Distribution from which a drifting defect environment is redrawn.

    Each draw picks a defect count uniformly from ``counts`` and, per defect,
    ``chi`` uniformly in ``chi_range`` and ``p_excited`` uniformly in
    ``p_range``.
    """

    qubit: int = 0
    counts: tuple[int, ...] = (0, 1, 2, 3)
    chi_range: tuple[float, float] = (0.01, 0.05)
    p_range: tuple[float, float] = (0.2, 0.8)
    lifetime: float | None = None

    def draw(self, rng: np.random.Generator) -> tuple[TlsSpec, ...]:
        count = int(rng.choice(self.counts))
        return tuple(
            TlsSpec(self.qubit, float(rng.uniform(*self.chi_range)), float(rng.uniform(*self.p_range)), self.lifetime)
            for _ in range(count)
        )


def two_qubit_table_operator(rates: RateTable, n: int, control: int, target: int) -> np.ndarray:
    """Embed a (control, target) rate table into an ``n``-qubit generator (MHz)."""
    dim = 2**n
    H = np.zeros((dim, dim), dtype=complex)
    for label, c in rates.rates.items():
        if len(label) != 2:
            raise ValueError("expected two-qubit labels")
        sites = {}
        if label[0] != "I":
            sites[control] = label[0]
        if label[1] != "I":
            sites[target] = label[1]
        H += c * _pauli_on(n, sites)
    return H


def validate_qubits(cfg: DeviceConfig, qubits: Sequence[int]) -> None:
    if any(not 0 <= q < cfg.n for q in qubits):
        raise ValueError(f"qubits {list(qubits)} outside device of {cfg.n}")
