"""Least-squares fitters shared by the tomography and calibration code."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.stats

FOUR_PI = 4.0 * np.pi
TWO_PI = 2.0 * np.pi
EXACT_RMS = 1e-4  # residual below which data count as noiseless; shot noise sits near 1e-2


def bloch_trajectory(t, ax: float, ay: float, az: float, decay: float = 0.0, amplitude: float = 1.0) -> np.ndarray:
    """Bloch vector at times ``t`` starting from ``(0, 0, 1)`` under ``H = ax X + ay Y + az Z`` (MHz).

    The vector precesses about ``(ax, ay, az)`` at ``2 |a|`` turns per
    microsecond and is scaled by ``amplitude * exp(-decay t)``. Returns an
    array of shape ``(3, len(t))``.
    """
    t = np.asarray(t, dtype=float)
    a = np.array([ax, ay, az], dtype=float)
    norm = np.linalg.norm(a)
    env = amplitude * np.exp(-decay * t)
    if norm == 0:
        out = np.zeros((3, t.size))
        out[2] = env
        return out
    n = a / norm
    theta = FOUR_PI * norm * t
    c, s = np.cos(theta), np.sin(theta)
    r0 = np.array([0.0, 0.0, 1.0])
    cross = np.cross(n, r0)
    r = np.outer(r0, c) + np.outer(cross, s) + np.outer(n * n[2], 1 - c)
    return r * env


def dominant_frequency(t: np.ndarray, y: np.ndarray, pad: int = 8) -> float:
    """Frequency (MHz) of the largest non-DC peak of a zero-padded periodogram."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    dt = np.median(np.diff(t))
    # resample onto a uniform grid; tomography times are usually uniform already
    grid = np.arange(t[0], t[-1] + 0.5 * dt, dt)
    yg = np.interp(grid, t, y)
    m = pad * len(grid)
    power = np.abs(np.fft.rfft(yg * np.hanning(len(grid)), n=m))
    freqs = np.fft.rfftfreq(m, dt)
    power[0] = 0.0
    return float(freqs[int(np.argmax(power))])


@dataclass
class BlochFit:
    """Fitted effective field on one qubit (Pauli coefficients in MHz)."""

    omega_x: float
    omega_y: float
    delta: float
    decay: float
    residual: float
    amplitude: float = 1.0
    flags: list[str] = field(default_factory=list)
    stderr: dict[str, float] = field(default_factory=dict)

    @property
    def field(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.delta])

    @property
    def generalized_rabi(self) -> float:
        return float(np.linalg.norm(self.field))

    def predict(self, t) -> np.ndarray:
        return bloch_trajectory(t, self.omega_x, self.omega_y, self.delta, self.decay, self.amplitude)

    def to_dict(self) -> dict:
        return {
            "omega_x": self.omega_x, "omega_y": self.omega_y, "delta": self.delta,
            "decay": self.decay, "amplitude": self.amplitude, "residual": self.residual,
            "flags": list(self.flags), "stderr": dict(self.stderr),
        }


def _bloch_guesses(t, data) -> list[np.ndarray]:
    x, y, z = data
    f = dominant_frequency(t, z) if np.ptp(z) > 1e-9 else dominant_frequency(t, np.hypot(x, y))
    mag = max(f / 2, 1e-3)
    # early-time slopes fix the transverse direction: dX/dt = 4 pi a_y, dY/dt = -4 pi a_x
    k = max(3, min(len(t) // 8, 8))
    sx = np.polyfit(t[:k], x[:k], 1)[0]
    sy = np.polyfit(t[:k], y[:k], 1)[0]
    az_abs = math.sqrt(min(max(np.mean(z) / max(np.max(np.abs(z)), 1e-9), 0.0), 1.0)) * mag
    perp = math.sqrt(max(mag**2 - az_abs**2, 0.0))
    phi = math.atan2(sx, -sy) if abs(sx) + abs(sy) > 1e-9 else 0.0
    sign = np.sign(np.mean(x) * math.cos(phi) + np.mean(y) * math.sin(phi)) or 1.0
    guesses = []
    for s in (sign, -sign):
        for dphi in (0.0, 0.5, -0.5):
            for frac in (1.0, 0.5):
                az = s * az_abs * frac
                p = math.sqrt(max(mag**2 - az**2, 0.0)) if frac != 1.0 else perp
                guesses.append(np.array([p * math.cos(phi + dphi), p * math.sin(phi + dphi), az]))
    return guesses


def fit_bloch_series(
    t,
    x,
    y,
    z,
    fit_decay: bool = True,
    fit_amplitude: bool = True,
    max_decay: float = 10.0,
    restarts: int = 5,
    ridge: float = 1e-3,
    null_level: float = 0.01,
) -> BlochFit:
    """Joint least-squares fit of X, Y and Z expectation series to damped precession.

    Field components are bounded by the sampling limit ``1 / (4 dt)`` so
    aliased fields cannot fit the samples. A weak ``ridge`` penalty on the
    field picks the smallest field among exact fits; it matters only when
    the data cannot determine the field (for example a field along Z acting
    on the initial Z state).

    The fit is compared with a no-field model (Z decaying in place) by an
    F-test; unless the field improves the fit at significance
    ``null_level`` the field is reported as zero and flagged
    ``no-precession``.
    """
    t = np.asarray(t, dtype=float)
    data = np.array([x, y, z], dtype=float)
    if data.shape != (3, t.size):
        raise ValueError("series must share the time grid")

    def unpack(p):
        ax, ay, az = p[:3]
        k = 3
        decay = p[k] if fit_decay else 0.0
        k += fit_decay
        amp = p[k] if fit_amplitude else 1.0
        return ax, ay, az, decay, amp

    def resid(p):
        return np.concatenate([(bloch_trajectory(t, *unpack(p)) - data).ravel(), ridge * np.asarray(p[:3])])

    nyquist = 0.25 / np.min(np.diff(t)) if t.size > 1 else np.inf
    lo = [-nyquist] * 3 + ([0.0] if fit_decay else []) + ([0.0] if fit_amplitude else [])
    hi = [nyquist] * 3 + ([max_decay] if fit_decay else []) + ([1.5] if fit_amplitude else [])
    best = None
    amp0 = float(min(1.0, max(np.max(np.abs(data)), 0.1)))
    for g in _bloch_guesses(t, data)[: max(1, restarts) * 3]:
        g = np.clip(g, -0.99 * nyquist, 0.99 * nyquist)
        p0 = list(g) + ([0.01] if fit_decay else []) + ([amp0] if fit_amplitude else [])
        try:
            sol = scipy.optimize.least_squares(resid, p0, bounds=(lo, hi), x_scale="jac")
        except ValueError:
            continue
        if best is None or sol.cost < best.cost:
            best = sol
        if np.sqrt(np.mean(sol.fun[:-3] ** 2)) < EXACT_RMS:
            break  # exact data: no other start can do better
    if best is None:
        raise RuntimeError("Bloch fit failed for every starting point")
    ax, ay, az, decay, amp = unpack(best.x)
    flags = []
    cost = float(np.sum(best.fun[:-3] ** 2))
    null_cost, null_decay, null_amp = _null_fit(t, data, fit_decay, fit_amplitude, max_decay)
    n_free = len(best.x)
    dof = data.size - n_free
    if dof > 0 and null_level > 0:
        gain = null_cost - cost
        F = (gain / 3) / max(cost / dof, 1e-300)
        if gain <= 1e-8 * data.size or F < scipy.stats.f.ppf(1 - null_level, 3, dof):
            ax = ay = az = 0.0
            decay, amp, cost = null_decay, null_amp, null_cost
            flags.append("no-precession")
    rms = float(np.sqrt(cost / data.size))
    stderr = _stderr(best, ["omega_x", "omega_y", "delta"] + (["decay"] if fit_decay else [])
                     + (["amplitude"] if fit_amplitude else []))
    fit = BlochFit(float(ax), float(ay), float(az), float(decay), rms, float(amp), flags, stderr)
    if rms > 0.15:
        fit.flags.append("unreliable")
    if not flags and 2 * fit.generalized_rabi * (t[-1] - t[0]) < 1.5:
        fit.flags.append("under-resolved")
    if fit_decay and decay >= max_decay * (1 - 1e-6):
        fit.flags.append("decay-at-bound")
    return fit


def _null_fit(t, data, fit_decay, fit_amplitude, max_decay) -> tuple[float, float, float]:
    """Best ``(cost, decay, amplitude)`` with no field: only Z moves, by decay."""
    if not (fit_decay or fit_amplitude):
        return float(np.sum((bloch_trajectory(t, 0, 0, 0) - data) ** 2)), 0.0, 1.0

    def resid(p):
        decay = p[0] if fit_decay else 0.0
        amp = p[-1] if fit_amplitude else 1.0
        return (bloch_trajectory(t, 0, 0, 0, decay, amp) - data).ravel()

    p0 = ([0.0] if fit_decay else []) + ([float(np.clip(data[2, 0], 0.0, 1.5))] if fit_amplitude else [])
    lo = ([0.0] if fit_decay else []) + ([0.0] if fit_amplitude else [])
    hi = ([max_decay] if fit_decay else []) + ([1.5] if fit_amplitude else [])
    sol = scipy.optimize.least_squares(resid, p0, bounds=(lo, hi), xtol=1e-12, ftol=1e-12)
    decay = float(sol.x[0]) if fit_decay else 0.0
    amp = float(sol.x[-1]) if fit_amplitude else 1.0
    return float(np.sum(sol.fun**2)), decay, amp


def _stderr(sol, names) -> dict[str, float]:
    J = sol.jac
    dof = max(1, J.shape[0] - J.shape[1])
    s2 = 2 * sol.cost / dof
    try:
        cov = np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return {}
    return {n: float(math.sqrt(max(cov[i, i], 0.0))) for i, n in enumerate(names)}


@dataclass
class CosineFit:
    """``amplitude * cos(2 pi frequency t + phase) * exp(-decay t) + offset``."""

    frequency: float
    amplitude: float
    phase: float
    decay: float
    offset: float
    residual: float
    flags: list[str] = field(default_factory=list)

    def predict(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.cos(TWO_PI * self.frequency * t + self.phase) * np.exp(-self.decay * t) + self.offset


def fit_damped_cosine(t, y, restarts: int = 5) -> CosineFit:
    """Single damped cosine fit with a periodogram frequency guess."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    f0 = dominant_frequency(t, y)
    df = 1.0 / (t[-1] - t[0])

    def model(p):
        a, f, ph, g, c = p
        return a * np.cos(TWO_PI * f * t + ph) * np.exp(-g * t) + c

    best = None
    a0 = 0.5 * np.ptp(y)
    for k in range(max(1, restarts)):
        fg = max(f0 + (k - restarts // 2) * 0.25 * df, 1e-6)
        for ph in (0.0, np.pi):
            p0 = [a0, fg, ph, 0.05, float(np.mean(y))]
            sol = scipy.optimize.least_squares(
                lambda p: model(p) - y, p0,
                bounds=([0, 0, -4 * np.pi, 0, -1.5], [1.5, np.inf, 4 * np.pi, np.inf, 1.5]),
            )
            if best is None or sol.cost < best.cost:
                best = sol
        if np.sqrt(np.mean(best.fun**2)) < EXACT_RMS:
            break
    a, f, ph, g, c = best.x
    ph = (ph + np.pi) % (2 * np.pi) - np.pi
    rms = float(np.sqrt(np.mean(best.fun**2)))
    fit = CosineFit(float(f), float(a), float(ph), float(g), float(c), rms)
    if f * (t[-1] - t[0]) < 1.5:
        fit.flags.append("under-resolved")
    if rms > 0.15:
        fit.flags.append("unreliable")
    return fit
