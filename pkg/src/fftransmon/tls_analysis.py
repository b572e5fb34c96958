"""Idle-delay experiments on a qubit coupled to two-level defects.

A defect coupled through ``(chi/2) Z_q Z_tls`` shifts the qubit frequency by
``+chi`` or ``-chi`` depending on its state. A mixed defect state therefore
makes the X expectation beat between two frequencies, and the purity of the
qubit dips and revives with period ``1 / (2 chi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.signal

from .fitting import EXACT_RMS
from .schedules import idle
from .simulator import Circuit, make_prep

TWO_PI = 2.0 * np.pi


@dataclass
class DelayDataset:
    """Expectation values ``values[rep, k]`` of one basis after ``delays[k]`` of idling."""

    qubit: int
    basis: str
    delays: np.ndarray
    values: np.ndarray
    timestamps: list[float]
    shots: int | None = None
    repetitions_requested: int | None = None
    errors: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("delays must be increasing")
        if self.values.size and self.values.shape[1] != self.delays.size:
            raise ValueError("values need one column per delay")
        if np.any(np.abs(self.values) > 1 + 1e-9):
            raise ValueError("expectation values must lie in [-1, 1]")

    @property
    def repetitions(self) -> int:
        return self.values.shape[0] if self.values.size else 0

    def to_rows(self) -> list[dict]:
        rows = []
        for r in range(self.repetitions):
            for d, v in zip(self.delays, self.values[r]):
                rows.append({"repetition": r, "timestamp": self.timestamps[r], "delay": float(d), "value": float(v)})
        return rows


def _delay_circuits(n, qubit, delays, basis, prep):
    return [Circuit(make_prep(n, {qubit: prep}), idle(float(d)), (qubit,), basis) for d in delays]


def run_delay_scan(
    provider,
    qubit: int,
    basis: str,
    delays: Sequence[float],
    shots: int | None,
    repetitions: int = 1,
    prep: str = "+",
) -> DelayDataset:
    """Idle-delay scans, one provider session per repetition.

    Before every repetition after the first the provider's ``respawn`` (if
    any) redraws the defect environment. A failing repetition ends the scan
    and the partial dataset records the error.
    """
    delays = np.asarray(delays, dtype=float)
    rows, stamps, errors = [], [], []
    for rep in range(repetitions):
        try:
            if rep > 0 and hasattr(provider, "respawn"):
                provider.respawn()
            records = provider.run(_delay_circuits(provider.n_qubits, qubit, delays, basis, prep), shots)
        except Exception as exc:
            errors.append(f"repetition {rep}: {exc}")
            break
        rows.append([rec.expectation(basis) for rec in records])
        stamps.append(float(records[0].meta.get("timestamp", rep)) if records else float(rep))
    values = np.clip(np.array(rows, dtype=float), -1, 1) if rows else np.zeros((0, delays.size))
    return DelayDataset(qubit, basis, delays, values, stamps, shots, repetitions, errors)


# --- two-frequency fit --------------------------------------------------------------


@dataclass
class TwoCosineFit:
    """``(c0 cos(2 pi f0 t) + c1 cos(2 pi f1 t)) exp(-t / T2star)`` with ``f0 <= f1``."""

    c0: float
    c1: float
    f0: float
    f1: float
    T2star: float
    residual: float
    flags: list[str] = field(default_factory=list)

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        env = np.exp(-t / self.T2star) if math.isfinite(self.T2star) else 1.0
        return (self.c0 * np.cos(TWO_PI * self.f0 * t) + self.c1 * np.cos(TWO_PI * self.f1 * t)) * env

    def to_dict(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "f0": self.f0, "f1": self.f1, "T2star": self.T2star,
                "residual": self.residual, "flags": list(self.flags)}


def synthetic_delay_series(delays, c0: float, c1: float, f0: float, f1: float, T2star: float,
                           shots: int | None = None, rng=None) -> np.ndarray:
    """Two-cosine decay with binomial shot noise on each point (for oracles)."""
    clean = TwoCosineFit(c0, c1, f0, f1, T2star, 0.0).predict(delays)
    if shots is None:
        return clean
    p = np.clip((1 + clean) / 2, 0, 1)
    return 2 * np.random.default_rng(rng).binomial(shots, p) / shots - 1


def spectral_peaks(t, y, count: int = 2, pad: int = 16) -> list[float]:
    """Frequencies (MHz) of the ``count`` largest periodogram peaks, largest first."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    dt = np.median(np.diff(t))
    grid = np.arange(t[0], t[-1] + 0.5 * dt, dt)
    yg = np.interp(grid, t, y)
    m = pad * len(grid)
    power = np.abs(np.fft.rfft(yg, n=m))
    freqs = np.fft.rfftfreq(m, dt)
    idx, _ = scipy.signal.find_peaks(power)
    if power[0] > power[1]:
        idx = np.concatenate([[0], idx])
    idx = sorted(idx, key=lambda i: -power[i])[:count]
    return [float(freqs[i]) for i in idx]


def _fit(t, y, p0, two: bool):
    # parameters: (weight, frequency) per cosine, then decay rate
    k = 2 if two else 1

    def parts(p):
        env = np.exp(-p[-1] * t)
        ph = [TWO_PI * p[2 * i + 1] * t for i in range(k)]
        return env, ph

    def resid(p):
        env, ph = parts(p)
        return sum(p[2 * i] * np.cos(ph[i]) for i in range(k)) * env - y

    def jac(p):
        env, ph = parts(p)
        cols = []
        for i in range(k):
            cols.append(np.cos(ph[i]) * env)
            cols.append(-p[2 * i] * TWO_PI * t * np.sin(ph[i]) * env)
        cols.append(-t * (resid(p) + y))
        return np.column_stack(cols)

    lo = [-1.5, 0.0] * k + [0.0]
    hi = [1.5, np.inf] * k + [np.inf]
    return scipy.optimize.least_squares(resid, p0, jac=jac, bounds=(lo, hi), max_nfev=200)


def fit_two_cosine(delays, values, residual_threshold: float = 0.05, restarts: int = 5) -> TwoCosineFit:
    """Two-frequency damped fit initialised from the two largest spectral peaks.

    Falls back to a single cosine when a second frequency does not improve
    the fit (flag ``f1-unresolved``). Fits with RMS residual above
    ``residual_threshold`` are flagged ``poor-fit``; weights whose sum
    leaves ``[0.8, 1.2]`` are flagged ``weights``.
    """
    t = np.asarray(delays, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 25:
        raise ValueError("need at least 25 delay points")
    span = t[-1] - t[0]
    df = 1.0 / span
    peaks = spectral_peaks(t, y, 2)
    g0 = 2.0 / span
    fp = peaks[0]
    starts = []
    if len(peaks) >= 2:
        starts += [(w, peaks[0], 1 - w, peaks[1]) for w in (0.5, 0.7, 0.3)]
    for k in range(1, restarts + 1):
        starts.append((0.5, max(fp - 0.5 * k * df, 0.0), 0.5, fp + 0.5 * k * df))
    best2 = None
    for wa, fa, wb, fb in starts:
        sol = _fit(t, y, [wa, fa, wb, fb, g0], True)
        if best2 is None or sol.cost < best2.cost:
            best2 = sol
    best1 = None
    for fa in (fp, max(fp - 0.25 * df, 0.0), fp + 0.25 * df):
        sol = _fit(t, y, [float(np.clip(y[0], -1, 1)) or 1.0, fa, g0], False)
        if best1 is None or sol.cost < best1.cost:
            best1 = sol
    flags = []
    # the second cosine must pay for its two extra parameters
    dof2, dof1 = max(1, t.size - 5), max(1, t.size - 3)
    exact1 = math.sqrt(2 * best1.cost / t.size) < EXACT_RMS
    if not exact1 and best2.cost / dof2 < 0.9 * best1.cost / dof1:
        c0, f0, c1, f1, g = best2.x
        if f0 > f1:
            c0, f0, c1, f1 = c1, f1, c0, f0
        fun = best2.fun
    else:
        c0, f0, g = best1.x
        c1, f1 = 0.0, f0
        fun = best1.fun
        flags.append("f1-unresolved")
    rms = float(np.sqrt(np.mean(fun**2)))
    T2 = math.inf if g <= 0 else 1.0 / g
    if rms > residual_threshold:
        flags.append("poor-fit")
    if not 0.8 <= c0 + c1 <= 1.2:
        flags.append("weights")
    return TwoCosineFit(float(c0), float(c1), float(f0), float(f1), float(T2), rms, flags)


# --- purity ---------------------------------------------------------------------


def bloch_to_purity(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip Bloch vectors (rows) into the unit ball; return ``(clipped, purity)``."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    norm = np.linalg.norm(r, axis=1)
    scale = np.where(norm > 1, 1.0 / np.maximum(norm, 1e-300), 1.0)
    r = r * scale[:, None]
    return r, 0.5 * (1 + np.sum(r**2, axis=1))


def purity_scan(provider, qubit: int, delays: Sequence[float], shots: int | None, prep: str = "+") -> list[tuple[float, float]]:
    """Purity of ``qubit`` after each idle delay from X, Y, Z tomography in one session."""
    delays = np.asarray(delays, dtype=float)
    circuits = [c for b in "XYZ" for c in _delay_circuits(provider.n_qubits, qubit, delays, b, prep)]
    records = provider.run(circuits, shots)
    m = delays.size
    r = np.array([[records[a * m + k].expectation("XYZ"[a]) for a in range(3)] for k in range(m)])
    _, pur = bloch_to_purity(r)
    return [(float(d), float(p)) for d, p in zip(delays, pur)]


def detect_revivals(times, purity, prominence: float = 0.02) -> list[tuple[float, float]]:
    """Local purity maxima after the first significant minimum, as ``(time, prominence)``."""
    times = np.asarray(times, dtype=float)
    purity = np.asarray(purity, dtype=float)
    if purity.size < 20:
        raise ValueError("need at least 20 purity points")
    minima, _ = scipy.signal.find_peaks(-purity, prominence=prominence)
    if minima.size == 0:
        return []
    first = minima[0]
    peaks, props = scipy.signal.find_peaks(purity, prominence=prominence)
    return [(float(times[i]), float(p)) for i, p in zip(peaks, props["prominences"]) if i > first]


# --- repetitions ------------------------------------------------------------------


@dataclass
class EnsembleStats:
    delays: np.ndarray
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    fits: list[TwoCosineFit | None]
    f0_spread: float
    unstable: bool

    def table(self) -> list[dict]:
        return [{"delay": float(d), "mean": float(m), "min": float(lo), "max": float(hi)}
                for d, m, lo, hi in zip(self.delays, self.mean, self.low, self.high)]


def ensemble_statistics(dataset: DelayDataset, fit: bool = True, spread_threshold: float = 0.01) -> EnsembleStats:
    """Pointwise mean and min/max envelope; optionally a fit per repetition.

    ``f0_spread`` is the standard deviation of fitted ``f0`` across
    repetitions; above ``spread_threshold`` MHz the environment is flagged
    unstable.
    """
    if dataset.repetitions < 2:
        raise ValueError("ensemble statistics need at least two repetitions")
    v = dataset.values
    fits: list[TwoCosineFit | None] = []
    if fit:
        for row in v:
            try:
                fits.append(fit_two_cosine(dataset.delays, row))
            except (ValueError, RuntimeError):
                fits.append(None)
    f0s = [f.f0 for f in fits if f is not None]
    spread = float(np.std(f0s)) if len(f0s) > 1 else 0.0
    return EnsembleStats(dataset.delays, v.mean(axis=0), v.min(axis=0), v.max(axis=0), fits, spread,
                         spread > spread_threshold)


def tls_frequencies(detuning: float, chi: float) -> tuple[float, float]:
    """X-expectation frequencies of a qubit detuned by ``detuning`` with one defect of coupling ``chi``."""
    a, b = abs(detuning - chi), abs(detuning + chi)
    return (min(a, b), max(a, b))
