"""Effective-Hamiltonian rate tables (Pauli coefficients in MHz)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quantum_core import from_pauli, label_index, pauli_decompose

# Cross-resonance rates measured on hardware at a 36 MHz drive; labels are
# (control, target).
MEASURED_RATES = {
    "ZX": -0.4915,
    "ZY": -0.0332,
    "ZZ": 0.0294,
    "IX": 0.4168,
    "IY": 0.0649,
    "IZ": -0.0756,
    "ZI": 3.0810,
}

# Row order used when printing two-qubit cross-resonance tables.
RATE_ORDER = ("ZX", "ZY", "ZZ", "IX", "IY", "IZ", "ZI")


@dataclass
class RateTable:
    """Map from Pauli label to rate in MHz plus free-form metadata.

    The identity label is never stored (the generator is traceless).
    """

    rates: dict[str, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        width = None
        for label, value in self.rates.items():
            label_index(label)
            if width is None:
                width = len(label)
            elif len(label) != width:
                raise ValueError("all labels in a rate table must have equal length")
            if set(label) == {"I"}:
                continue
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"rate for {label} is not finite")
            clean[label] = value
        self.rates = dict(sorted(clean.items(), key=lambda kv: label_index(kv[0])))
        if width is not None:
            self.meta.setdefault("n_qubits", width)

    @property
    def n_qubits(self) -> int | None:
        return self.meta.get("n_qubits")

    def __getitem__(self, label: str) -> float:
        return self.rates.get(label, 0.0)

    def get(self, label: str, default: float = 0.0) -> float:
        return self.rates.get(label, default)

    def labels(self) -> list[str]:
        return list(self.rates)

    def operator(self) -> np.ndarray:
        """Hermitian generator ``sum_L c_L P_L`` in MHz."""
        return from_pauli(self.rates, self.n_qubits)

    @classmethod
    def from_operator(cls, H: np.ndarray, meta: dict | None = None, atol: float = 0.0) -> "RateTable":
        coeffs = pauli_decompose(H)
        return cls({k: v for k, v in coeffs.items() if abs(v) > atol}, dict(meta or {}))

    def significant(self, threshold: float) -> dict[str, float]:
        return {k: v for k, v in self.rates.items() if abs(v) >= threshold}

    def to_dict(self) -> dict:
        return {"rates_mhz": dict(self.rates), "meta": self.meta}

    @classmethod
    def from_dict(cls, data: dict) -> "RateTable":
        return cls(dict(data["rates_mhz"]), dict(data.get("meta", {})))
