"""Drive calibration: phase nulling, low-amplitude tomography and cancellation pulses."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .device import AwgModel, awg_apply
from .fitting import bloch_trajectory, fit_bloch_series
from .hamiltonian_tomography import RabiSeries, check_times, collect_cr_series, combine_rates, fit_bloch, measure_series
from .rates import RateTable
from .schedules import ResonantTone, resonant_schedule


def _wrap(angle: float) -> float:
    """Angle in ``(-pi, pi]``."""
    a = (angle + math.pi) % (2 * math.pi) - math.pi
    return math.pi if a == -math.pi else a


# --- phase calibration ------------------------------------------------------------


@dataclass
class PhaseCalibration:
    phase: float
    c_zy: float
    calls: int
    history: list[tuple[float, float]]
    flagged: bool = False


def measure_zy(provider, control, target, Omega, phase, times, shots) -> float:
    """``c_ZY`` from the six target series at one drive phase."""
    series = collect_cr_series(provider, control, target, Omega, phase, times, shots)
    return combine_rates(fit_bloch(*series[:3]), fit_bloch(*series[3:]))["ZY"]


def calibrate_phase(
    provider,
    control: int,
    target: int,
    Omega: float,
    tol: float = 0.01,
    times: Sequence[float] | None = None,
    shots: int | None = 1024,
    phase_tol: float = 0.005,
    max_calls: int = 20,
) -> PhaseCalibration:
    """Drive phase that nulls ``c_ZY``, by bisection on measured ``c_ZY(phase)``.

    The bracket ``[-pi/2, pi/2]`` is tried first so that the returned root
    keeps the sign of ``c_ZX`` seen at zero phase; ``[pi/2, 3 pi/2]`` is the
    fallback. Iteration stops once ``|c_ZY| < tol`` and the bracket is
    narrower than ``phase_tol``; the result interpolates linearly inside the
    final bracket.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if times is None:
        times = np.linspace(0.0, 10.0, 101)
    history: list[tuple[float, float]] = []

    def f(phase):
        value = measure_zy(provider, control, target, Omega, phase, times, shots)
        history.append((phase, value))
        return value

    def no_root(a, b):
        return a * b > 0 or a == b == 0

    lo, hi = -math.pi / 2, math.pi / 2
    f_lo, f_hi = f(lo), f(hi)
    if no_root(f_lo, f_hi):
        lo, hi, f_lo = hi, hi + math.pi, f_hi
        f_hi = f(hi)
        if no_root(f_lo, f_hi):
            warnings.warn("no sign change of c_ZY over a full turn; drive too weak to calibrate", stacklevel=2)
            best = min(history, key=lambda h: abs(h[1]))
            return PhaseCalibration(_wrap(best[0]), best[1], len(history), history, True)
    while len(history) < max_calls:
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_lo * f_mid <= 0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if abs(f_mid) < tol and hi - lo < phase_tol:
            break
    root = lo - f_lo * (hi - lo) / (f_hi - f_lo) if f_hi != f_lo else 0.5 * (lo + hi)
    flagged = min(abs(f_lo), abs(f_hi)) >= tol
    return PhaseCalibration(_wrap(root), min(f_lo, f_hi, key=abs), len(history), history, flagged)


# --- low-amplitude single-qubit tomography -------------------------------------------


@dataclass
class SingleQubitFit:
    """Drive field seen by one qubit.

    ``hX, hY, hZ`` are in MHz and scaled so that ``rabi = hypot(hX, hY)`` is
    the Rabi frequency (turns per microsecond of the Bloch vector) and
    ``hZ`` the detuning; they are twice the Pauli coefficients of the
    generator.
    """

    hX: float
    hY: float
    hZ: float
    T2: float
    residual: float
    requested_phase: float = 0.0
    amplitude: float = 1.0
    flags: list[str] = field(default_factory=list)
    rabi_upper_bound: float | None = None

    @property
    def rabi(self) -> float:
        return math.hypot(self.hX, self.hY)

    @property
    def phase(self) -> float:
        return math.atan2(self.hY, self.hX)

    @property
    def phase_error(self) -> float:
        return _wrap(self.phase - self.requested_phase)

    @property
    def detuning(self) -> float:
        return self.hZ

    def to_dict(self) -> dict:
        return {
            "hX": self.hX, "hY": self.hY, "hZ": self.hZ, "T2": self.T2, "rabi": self.rabi,
            "phase_error": self.phase_error, "detuning": self.detuning, "residual": self.residual,
            "amplitude": self.amplitude, "flags": list(self.flags), "rabi_upper_bound": self.rabi_upper_bound,
        }


def low_amplitude_tomography(
    provider,
    qubit: int,
    Omega_requested: float,
    times: Sequence[float],
    shots: int | None,
    phase: float = 0.0,
) -> list[RabiSeries]:
    """X, Y, Z series of ``qubit`` from ``0`` under a resonant drive; spectators stay in ``0``."""
    if Omega_requested < 0:
        raise ValueError("requested amplitude must be non-negative")
    times = check_times(times)
    schedules = [resonant_schedule(qubit, Omega_requested, float(t), math.cos(phase), math.sin(phase)) for t in times]
    out = []
    for basis in "XYZ":
        series = measure_series(provider, {qubit: "0"}, schedules, qubit, basis, shots, "0")
        series.meta.update({"Omega_requested": Omega_requested, "phase": phase})
        out.append(series)
    return out


def synthetic_single_qubit_series(
    times, rabi: float, phase: float, detuning: float, T2: float | None, shots: int | None = None, rng=None
) -> list[RabiSeries]:
    """Series generated from a known field with binomial shot noise (for oracles)."""
    times = np.asarray(times, dtype=float)
    decay = 0.0 if T2 is None else 1.0 / T2
    r = bloch_trajectory(times, 0.5 * rabi * math.cos(phase), 0.5 * rabi * math.sin(phase), 0.5 * detuning, decay)
    rng = np.random.default_rng(rng)
    out = []
    for basis, vals in zip("XYZ", r):
        if shots is not None:
            p = np.clip((1 + vals) / 2, 0, 1)
            vals = 2 * rng.binomial(shots, p) / shots - 1
        out.append(RabiSeries("0", basis, 0, times, vals, shots))
    return out


def fit_single_qubit(series: Sequence[RabiSeries], requested_phase: float = 0.0, max_decay: float = 10.0) -> SingleQubitFit:
    """Joint fit of X, Y, Z series to damped precession about ``(hX, hY, hZ)``.

    If fewer than 1.5 periods are visible the field is not reported and a
    Rabi-frequency upper bound is given instead.
    """
    sx, sy, sz = series
    t = sx.times
    fit = fit_bloch_series(t, sx.values, sy.values, sz.values, fit_decay=True, max_decay=max_decay)
    T2 = math.inf if fit.decay <= 0 else 1.0 / fit.decay
    flags = list(fit.flags)
    # decay invisible over the window: T2 sits at its upper bound
    if fit.decay * (t[-1] - t[0]) < 1e-4:
        flags.append("T2-at-bound")
    out = SingleQubitFit(2 * fit.omega_x, 2 * fit.omega_y, 2 * fit.delta, T2, fit.residual,
                         requested_phase, fit.amplitude, flags)
    if "under-resolved" in flags:
        out.rabi_upper_bound = 1.5 / (t[-1] - t[0])
    return out


@dataclass
class ErrorReport:
    """Requested against delivered drive parameters."""

    requested_amplitude: float
    delivered_amplitude: float
    requested_phase: float
    delivered_phase: float
    requested_detuning: float
    delivered_detuning: float

    @property
    def amplitude_error(self) -> float:
        return self.delivered_amplitude - self.requested_amplitude

    @property
    def relative_amplitude_error(self) -> float:
        if self.requested_amplitude <= 0:
            return math.nan
        return abs(self.amplitude_error) / self.requested_amplitude

    @property
    def phase_error(self) -> float:
        return _wrap(self.delivered_phase - self.requested_phase)

    @property
    def detuning_error(self) -> float:
        return self.delivered_detuning - self.requested_detuning

    def to_dict(self) -> dict:
        return {
            "requested_amplitude": self.requested_amplitude, "delivered_amplitude": self.delivered_amplitude,
            "amplitude_error": self.amplitude_error, "relative_amplitude_error": self.relative_amplitude_error,
            "requested_phase": self.requested_phase, "delivered_phase": self.delivered_phase,
            "phase_error": self.phase_error, "requested_detuning": self.requested_detuning,
            "delivered_detuning": self.delivered_detuning, "detuning_error": self.detuning_error,
        }

    def summary(self) -> str:
        return (
            f"amplitude requested {self.requested_amplitude:.4f} MHz, delivered {self.delivered_amplitude:.4f} MHz, "
            f"error {self.amplitude_error:+.4f} MHz ({100 * self.relative_amplitude_error:.1f}%)\n"
            f"phase error {self.phase_error / math.pi:+.3f} pi rad\n"
            f"detuning requested {self.requested_detuning:.4f} MHz, delivered {self.delivered_detuning:.4f} MHz"
        )


def error_report(fit: SingleQubitFit, requested_amplitude: float, requested_phase: float = 0.0,
                 requested_detuning: float = 0.0) -> ErrorReport:
    return ErrorReport(requested_amplitude, fit.rabi, requested_phase, fit.phase, requested_detuning, fit.detuning)


# --- cancellation pulses ---------------------------------------------------------


@dataclass
class Compensation:
    """Resonant drive on one qubit that adds the field ``(x, y, z)`` (Pauli coefficients, MHz)."""

    qubit: int
    x: float
    y: float
    z: float
    requested_amplitude: float
    delivered_amplitude: float
    flagged: bool = False
    note: str = ""

    def tone(self) -> ResonantTone | None:
        """Tone whose requested amplitude ``Omega`` and envelope realize the field.

        ``Omega * |h_xy| / 2`` sets the transverse part and ``Omega * h_z / 2``
        the Z part; ``Omega`` is the smallest value keeping every ``|h| <= 1``.
        """
        xy = math.hypot(self.x, self.y)
        Omega = max(2 * xy, 2 * abs(self.z))
        if Omega == 0:
            return None
        return ResonantTone(self.qubit, Omega, 2 * self.x / Omega, 2 * self.y / Omega, 2 * self.z / Omega)


@dataclass
class CancellationPlan:
    compensations: list[Compensation]
    residual: RateTable
    flags: list[str]

    @property
    def tones(self) -> tuple[ResonantTone, ...]:
        return tuple(t for t in (c.tone() for c in self.compensations) if t is not None)

    def to_dict(self) -> dict:
        return {
            "compensations": [c.__dict__ for c in self.compensations],
            "residual": self.residual.to_dict(),
            "flags": self.flags,
        }


def synthesize_cancellation(
    rates: RateTable,
    target: RateTable,
    control: int = 0,
    target_qubit: int = 1,
    awg: AwgModel | None = None,
) -> CancellationPlan:
    """Single-qubit drives that turn ``rates`` into ``target``.

    Labels are two characters, control first. Transverse compensation passes
    through the waveform generator, so its amplitude is quantized; when the
    delivered amplitude differs from the request the compensation is
    flagged and the residual uses the achievable value. Z compensation is a
    frame change and is exact. Two-qubit labels pass through unchanged;
    naming one in ``target`` with a different value is an error.
    """
    awg = awg or AwgModel()
    for lab in set(rates.rates) | set(target.rates):
        if len(lab) != 2:
            raise ValueError("cancellation works on two-qubit rate tables")
    # single-qubit labels missing from the target mean zero; two-qubit labels
    # missing from it are left as they are
    for lab in target.rates:
        if "I" not in lab and abs(rates[lab] - target[lab]) > 1e-12:
            raise ValueError(f"target changes two-qubit label {lab}; only single-qubit control exists")
    comps, flags = [], []
    residual = dict(rates.rates)
    for qubit, pos in ((control, 0), (target_qubit, 1)):
        def label(axis):
            return axis + "I" if pos == 0 else "I" + axis

        need = {a: -(rates[label(a)] - target[label(a)]) for a in "XYZ"}
        xy = math.hypot(need["X"], need["Y"])
        requested = 2 * xy
        delivered = awg_apply(awg, requested) if requested > 0 else 0.0
        flagged = requested > 0 and abs(delivered - requested) > 1e-12
        scale = delivered / requested if requested > 0 else 0.0
        achieved = {"X": need["X"] * scale, "Y": need["Y"] * scale, "Z": need["Z"]}
        note = ""
        if flagged:
            note = f"amplitude {requested:.4f} MHz not representable; nearest achievable {delivered:.4f} MHz"
            flags.append(f"{label('X')}/{label('Y')} compensation on qubit {qubit}: {note}")
        for a in "XYZ":
            residual[label(a)] = rates[label(a)] + achieved[a]
        comps.append(Compensation(qubit, need["X"], need["Y"], need["Z"], requested, delivered, flagged, note))
    meta = {"control": control, "target": target_qubit}
    return CancellationPlan(comps, RateTable(residual, meta), flags)

