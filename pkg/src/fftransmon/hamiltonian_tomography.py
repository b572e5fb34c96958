"""Cross-resonance rates from eight Rabi-type experiments.

Six experiments prepare the control in ``0`` or ``1`` (target in ``0``)
and follow the target Bloch vector in X, Y and Z. Each control state sees
a target field ``c_IA +/- c_ZA``; fitting both fields gives the six
target-dependent rates. Two more experiments prepare ``++`` and ``--``
and watch the control X expectation, which precesses at ``2|c_ZI +/- c_ZX|``
and so measures the control Stark shift.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize

from .fitting import BlochFit, CosineFit, fit_bloch_series, fit_damped_cosine
from .quantum_core import TWO_PI, expm_hermitian, from_pauli, pauli_matrix, product_state
from .rates import RateTable
from .schedules import PulseSchedule, ResonantTone, cr_schedule
from .simulator import Circuit, make_prep

CR_LABELS = ("ZX", "ZY", "ZZ", "IX", "IY", "IZ", "ZI")


@dataclass
class RabiSeries:
    """Expectation values of one measured qubit against drive duration."""

    prep: str
    basis: str
    measured_qubit: int
    times: np.ndarray
    values: np.ndarray
    shots: int | None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(np.abs(self.values) > 1 + 1e-9):
            raise ValueError("expectation values must lie in [-1, 1]")

    def to_rows(self) -> list[dict]:
        return [
            {"time": float(t), "value": float(v), "shots": self.shots, "prep": self.prep, "basis": self.basis}
            for t, v in zip(self.times, self.values)
        ]


def check_times(times: Sequence[float], min_points: int = 12) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.size < min_points:
        raise ValueError(f"need at least {min_points} time points")
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be non-negative and strictly increasing")
    return times


def measure_series(
    provider,
    prep: dict[int, str],
    schedules: Sequence[PulseSchedule],
    qubit: int,
    basis: str,
    shots: int | None,
    prep_label: str,
) -> RabiSeries:
    """One provider session: the same preparation and basis at every schedule."""
    full = make_prep(provider.n_qubits, prep)
    circuits = [Circuit(full, s, (qubit,), basis) for s in schedules]
    records = provider.run(circuits, shots)
    values = [rec.expectation(basis) for rec in records]
    times = [s.duration for s in schedules]
    return RabiSeries(prep_label, basis, qubit, times, np.clip(values, -1, 1), shots)


def _cr_schedules(control, target, Omega, phase, times, tones=()):
    return [cr_schedule(control, target, Omega, phase, float(t), tones=tones) for t in times]


def collect_cr_series(
    provider,
    control: int,
    target: int,
    Omega: float,
    phase: float,
    times: Sequence[float],
    shots: int | None,
    bases: str = "XYZ",
    tones: Sequence[ResonantTone] = (),
) -> list[RabiSeries]:
    """Target X, Y, Z series for control ``0`` then control ``1``; one session each.

    ``tones`` are extra resonant drives played alongside the cross-resonance pulse.
    """
    times = check_times(times)
    schedules = _cr_schedules(control, target, Omega, phase, times, tones)
    out = []
    for c_state in ("0", "1"):
        for basis in bases:
            series = measure_series(
                provider, {control: c_state, target: "0"}, schedules, target, basis, shots, c_state + "0"
            )
            series.meta.update({"control": control, "target": target, "Omega": Omega, "phase": phase})
            out.append(series)
    return out


def fit_bloch(series_x: RabiSeries, series_y: RabiSeries, series_z: RabiSeries, **kwargs) -> BlochFit:
    """Joint fit of the three target series of one control state."""
    t = series_x.times
    if not (np.array_equal(t, series_y.times) and np.array_equal(t, series_z.times)):
        raise ValueError("series must share times")
    return fit_bloch_series(t, series_x.values, series_y.values, series_z.values, **kwargs)


def combine_rates(fit0: BlochFit, fit1: BlochFit) -> RateTable:
    """Six target-dependent rates from the fields seen with control ``0`` and ``1``."""
    rates = {}
    for axis, a0, a1 in zip("XYZ", fit0.field, fit1.field):
        rates["I" + axis] = 0.5 * (a0 + a1)
        rates["Z" + axis] = 0.5 * (a0 - a1)
    return RateTable(rates, {"decay": 0.5 * (fit0.decay + fit1.decay)})


@dataclass
class StarkData:
    series: tuple[RabiSeries, RabiSeries]
    fits: tuple[CosineFit, CosineFit]

    @property
    def f_plus(self) -> float:
        return self.fits[0].frequency

    @property
    def f_minus(self) -> float:
        return self.fits[1].frequency

    @property
    def flags(self) -> list[str]:
        return sorted({f for fit in self.fits for f in fit.flags})


def _stark_data(provider, control, target, Omega, times, shots, phase=0.0, tones=()) -> StarkData:
    times = check_times(times)
    schedules = _cr_schedules(control, target, Omega, phase, times, tones)
    series, fits = [], []
    for s in ("+", "-"):
        ser = measure_series(provider, {control: s, target: s}, schedules, control, "X", shots, s + s)
        series.append(ser)
        fits.append(fit_damped_cosine(ser.times, ser.values))
    return StarkData(tuple(series), tuple(fits))


def stark_shift_experiment(
    provider,
    control: int,
    target: int,
    Omega: float,
    times: Sequence[float],
    shots: int | None,
    phase: float = 0.0,
) -> float:
    """Unsigned Stark rate ``(f_plus + f_minus) / 4`` (MHz) from two sessions.

    ``f_plus`` and ``f_minus`` are the control X oscillation frequencies for
    ``++`` and ``--`` preparations, ``2|c_ZI +/- c_ZX|``; their quarter sum is
    ``max(|c_ZI|, |c_ZX|)``.
    """
    data = _stark_data(provider, control, target, Omega, times, shots, phase)
    if data.flags:
        warnings.warn(f"Stark fits flagged: {data.flags}", stacklevel=2)
    return 0.25 * (data.f_plus + data.f_minus)


def _control_x_model(rates: dict[str, float], times: np.ndarray, prep: str) -> np.ndarray:
    H = from_pauli(rates, 2)
    w, v = np.linalg.eigh(H)
    rho0 = product_state((prep, prep))
    rho_e = v.conj().T @ rho0 @ v
    X_e = v.conj().T @ pauli_matrix("XI") @ v
    ph = np.exp(-1j * TWO_PI * np.outer(times, w))
    # <X>(t) = sum_ij ph_i rho_ij conj(ph_j) X_ji
    return np.real(np.sum((ph @ (rho_e * X_e.T)) * ph.conj(), axis=1))


def refine_stark(rates: dict[str, float], data: StarkData, zi0: float) -> tuple[float, float]:
    """Signed ``c_ZI`` by fitting both control traces with the full two-qubit model.

    The six target-dependent rates are held fixed; amplitude and decay are
    free per trace. Both ``+zi0`` and ``-zi0`` are tried as starts. Returns ``(c_ZI, rms residual)``.
    """
    t = data.series[0].times
    ys = [s.values for s in data.series]

    def resid(p):
        zi = p[0]
        full = dict(rates, ZI=zi)
        out = []
        for k, prep in enumerate(("+", "-")):
            amp, decay = p[1 + 2 * k], p[2 + 2 * k]
            out.append(amp * np.exp(-decay * t) * _control_x_model(full, t, prep) - ys[k])
        return np.concatenate(out)

    # the two signs are separate basins when c_ZX is small, so start from both
    best = None
    for start in (zi0, -zi0):
        sol = scipy.optimize.least_squares(resid, [start, 1.0, 0.0, 1.0, 0.0],
                                           bounds=([-np.inf, 0, 0, 0, 0], [np.inf, 1.5, 10, 1.5, 10]))
        if best is None or sol.cost < best.cost:
            best = sol
    return float(best.x[0]), float(np.sqrt(np.mean(best.fun**2)))


def signed_stark(c_zx: float, f_plus: float, f_minus: float) -> float:
    """``c_ZI`` with sign from the two Stark frequencies and a known ``c_ZX``.

    ``(f_plus + f_minus)/4`` and ``|f_plus - f_minus|/4`` are the larger and
    smaller of ``|c_ZI|`` and ``|c_ZX|``; whichever is not ``|c_ZX|`` is
    taken as ``|c_ZI|``. ``f_plus > f_minus`` means the two share a sign.
    """
    big = 0.25 * (f_plus + f_minus)
    small = 0.25 * abs(f_plus - f_minus)
    mag = small if abs(big - abs(c_zx)) < abs(small - abs(c_zx)) else big
    if c_zx == 0 or f_plus == f_minus:
        return mag
    return mag * (math.copysign(1.0, c_zx) if f_plus > f_minus else -math.copysign(1.0, c_zx))


def cr_hamiltonian_tomography(
    provider,
    control: int,
    target: int,
    Omega: float,
    phase: float,
    times: Sequence[float],
    shots: int | None,
    stark_times: Sequence[float] | None = None,
    refine: bool = True,
    tones: Sequence[ResonantTone] = (),
) -> RateTable:
    """Seven-label cross-resonance rate table from exactly eight provider sessions.

    ``stark_times`` (default ``times``) must resolve oscillations at about
    ``2 (|c_ZI| + |c_ZX|)`` MHz. The sign of ``c_ZI`` follows from which
    preparation oscillates faster given the fitted sign of ``c_ZX``; with
    ``refine`` the value is then polished by a two-qubit model fit of both
    Stark traces.
    """
    start = getattr(provider, "sessions", None)
    series = collect_cr_series(provider, control, target, Omega, phase, times, shots, tones=tones)
    fit0 = fit_bloch(*series[:3])
    fit1 = fit_bloch(*series[3:])
    table = combine_rates(fit0, fit1)
    data = _stark_data(provider, control, target, Omega, times if stark_times is None else stark_times, shots, phase, tones)
    if start is not None and provider.sessions - start != 8:
        raise RuntimeError(f"expected 8 provider sessions, used {provider.sessions - start}")
    zi = signed_stark(table["ZX"], data.f_plus, data.f_minus)
    flags = sorted(set(fit0.flags) | set(fit1.flags) | set(data.flags))
    meta = {
        "control": control, "target": target, "Omega": Omega, "phase": phase,
        "shots": shots, "sessions": 8, "stark_unsigned": 0.25 * (data.f_plus + data.f_minus),
        "f_plus": data.f_plus, "f_minus": data.f_minus,
        "fits": {"control0": fit0.to_dict(), "control1": fit1.to_dict()},
        "decay": 0.5 * (fit0.decay + fit1.decay),
        "series": [
            {"prep": ser.prep, "basis": ser.basis, "qubit": ser.measured_qubit,
             "times": ser.times.tolist(), "values": ser.values.tolist()}
            for ser in (*series, *data.series)
        ],
    }
    if refine:
        zi, rms = refine_stark(dict(table.rates), data, zi)
        meta["stark_refine_rms"] = rms
    rates = dict(table.rates, ZI=zi)
    if flags:
        meta["quality_flags"] = flags
        warnings.warn(f"Hamiltonian tomography fits flagged: {flags}", stacklevel=2)
    return RateTable({k: rates[k] for k in CR_LABELS}, meta)
