"""Time evolution of drive schedules and a sampling measurement provider.

The engine cuts the schedule at every point where a generator may jump
(segment and sample edges, ramp edges, requested output times). Intervals
with a constant generator are exponentiated exactly; intervals whose
generator varies (ramps, detuned carriers, counter-rotating terms, lab-frame
carriers) are split into midpoint substeps whose rotation angle stays below
``max_phase_step``. Relaxation and dephasing enter as Kraus maps after every
step of at most ``dt_sample``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate

from .device import DeviceConfig, TlsSampler, awg_apply, cross_resonance_rates
from .quantum_core import (
    TWO_PI,
    MeasurementRecord,
    expm_hermitian,
    partial_trace,
    product_state,
    sample_counts,
)
from .schedules import PulseSchedule, Segment

_P = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1.0, -1.0]).astype(complex),
}

FRAMES = ("rotating", "lab")
CR_MODES = ("effective", "explicit")


def _site_op(nsites: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for k in range(nsites):
        out = np.kron(out, ops.get(k, _P["I"]))
    return out


def _superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    # row-major vectorization: vec(A rho B) = (A kron B^T) vec(rho)
    return sum(np.kron(K, K.conj()) for K in kraus)


def _amplitude_damping(gamma: float) -> list[np.ndarray]:
    return [
        np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def _dephasing(coherence: float) -> list[np.ndarray]:
    # off-diagonals shrink by ``coherence``
    return [math.sqrt((1 + coherence) / 2) * _P["I"], math.sqrt((1 - coherence) / 2) * _P["Z"]]


@dataclass
class EvolutionMap:
    """A unitary or a row-major superoperator on the full simulated space."""

    kind: str
    matrix: np.ndarray

    def apply(self, rho: np.ndarray) -> np.ndarray:
        if self.kind == "unitary":
            U = self.matrix
            return U @ rho @ U.conj().T
        d = rho.shape[0]
        return (self.matrix @ rho.reshape(-1)).reshape(d, d)


class _Engine:
    def __init__(self, cfg: DeviceConfig, frame: str, rwa: bool, cr_mode: str,
                 max_phase_step: float, refine: bool):
        if frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if cr_mode not in CR_MODES:
            raise ValueError(f"cr_mode must be one of {CR_MODES}")
        if frame == "lab" and cr_mode == "effective":
            cr_mode = "explicit"
        self.cfg, self.frame, self.rwa, self.cr_mode = cfg, frame, rwa, cr_mode
        self.max_phase_step, self.refine = max_phase_step, refine
        n, nt = cfg.n, len(cfg.tls)
        self.n, self.nsites = n, n + nt
        self.dim = 2**self.nsites
        self.ops = {
            p: [_site_op(self.nsites, {k: _P[p]}) for k in range(self.nsites)] for p in "XYZ"
        }
        Z = self.ops["Z"]
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for q in range(n):
            offset = cfg.detuning[q] + (cfg.omega[q] if frame == "lab" else 0.0)
            H += 0.5 * offset * Z[q]
        for k, tls in enumerate(cfg.tls):
            H += 0.5 * tls.chi * Z[tls.qubit] @ Z[n + k]
        self.couple_explicit = frame == "lab" or cr_mode == "explicit"
        if frame == "lab":
            Y = self.ops["Y"]
            for (i, j), J in cfg.couplings.items():
                H += J * Y[i] @ Y[j]
        self.H_static = H
        self.noisy = any(t is not None for t in cfg.T1 + cfg.T2) or any(
            s.lifetime is not None for s in cfg.tls
        )
        self._noise_cache: dict[float, np.ndarray] = {}
        self._interval_cache: dict = {}
        self._cr_cache: dict[tuple, np.ndarray] = {}

    # -- generators --------------------------------------------------------

    def _rot(self, q: int, t: float) -> tuple[float, float]:
        th = TWO_PI * self.cfg.omega[q] * t
        return math.cos(th), math.sin(th)

    def _coupling(self, t: float) -> np.ndarray:
        X, Y = self.ops["X"], self.ops["Y"]
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for (i, j), J in self.cfg.couplings.items():
            if self.rwa:
                d = TWO_PI * (self.cfg.omega[i] - self.cfg.omega[j]) * t
                H += 0.5 * J * (math.cos(d) * (X[i] @ X[j] + Y[i] @ Y[j])
                                + math.sin(d) * (X[i] @ Y[j] - Y[i] @ X[j]))
            else:
                ci, si = self._rot(i, t)
                cj, sj = self._rot(j, t)
                H += J * (Y[i] * ci + X[i] * si) @ (Y[j] * cj + X[j] * sj)
        return H

    def _drive(self, q: int, seg: Segment, tau: float, t: float, dt_sample: float) -> np.ndarray:
        cfg = self.cfg
        X, Y, Z = self.ops["X"], self.ops["Y"], self.ops["Z"]
        hx, hy, hz = seg.envelope(tau, dt_sample)
        requested = seg.amplitude * math.hypot(hx, hy)
        A = awg_apply(cfg.awg, requested) if requested > 0 else 0.0
        psi = math.atan2(hy, hx) + cfg.awg.phase_offset
        carrier = q if seg.carrier_target is None else seg.carrier_target
        H = np.zeros((self.dim, self.dim), dtype=complex)
        if self.frame == "rotating":
            if hz:
                H += 0.5 * seg.amplitude * hz * Z[q]
            if A == 0:
                return H
            if carrier != q and self.cr_mode == "effective":
                key = (q, carrier, A, psi)
                if key not in self._cr_cache:
                    table = cross_resonance_rates(cfg, q, carrier, A, psi)
                    op = np.zeros((self.dim, self.dim), dtype=complex)
                    for label, c in table.rates.items():
                        term = np.eye(self.dim, dtype=complex)
                        for site, p in ((q, label[0]), (carrier, label[1])):
                            if p != "I":
                                term = term @ self.ops[p][site]
                        op += c * term
                    self._cr_cache[key] = op
                return H + self._cr_cache[key]
            f_c = cfg.omega[carrier] + seg.detuning
            if self.rwa:
                ang = psi + TWO_PI * (f_c - cfg.omega[q]) * t
                return H + 0.5 * A * (math.cos(ang) * X[q] + math.sin(ang) * Y[q])
            D = A * math.cos(TWO_PI * f_c * t + psi)
            c, s = self._rot(q, t)
            return H + D * (c * X[q] - s * Y[q])
        # lab frame: the Z envelope becomes a phase ramp on the carrier
        if A == 0:
            return H
        f_c = cfg.omega[carrier] + seg.detuning
        ramp = -TWO_PI * seg.amplitude * _hz_integral(seg, tau, dt_sample)
        D = A * math.cos(TWO_PI * f_c * t + psi + ramp)
        return H + D * X[q]

    def generator(self, schedule: PulseSchedule, active, t: float) -> np.ndarray:
        H = self.H_static.copy()
        if self.couple_explicit and self.frame == "rotating" and self.cfg.couplings:
            H += self._coupling(t)
        for ch, seg, start in active:
            H += self._drive(ch.qubit, seg, t - start, t, schedule.dt_sample)
        return H

    def _interval_info(self, schedule: PulseSchedule, a: float, b: float):
        """Active segments on ``[a, b]`` and the fastest explicit time dependence (MHz)."""
        mid = 0.5 * (a + b)
        active = []
        varying = False
        fastest = 0.0
        cfg = self.cfg
        if mid < schedule.duration:
            for ch in schedule.channels:
                seg, start, tau = ch.locate(mid)
                if seg is None or seg.duration == 0:
                    continue
                active.append((ch, seg, start))
                r = seg.ramp_time
                if r > 0 and (tau < r or tau > seg.duration - r):
                    varying = True
                    fastest = max(fastest, 1.0 / r)
                if seg.amplitude == 0:
                    continue
                carrier = ch.qubit if seg.carrier_target is None else seg.carrier_target
                f_c = cfg.omega[carrier] + seg.detuning
                if self.frame == "lab":
                    varying = True
                    fastest = max(fastest, abs(f_c) + seg.amplitude)
                elif carrier != ch.qubit and self.cr_mode == "effective":
                    pass
                elif self.rwa:
                    delta = f_c - cfg.omega[ch.qubit]
                    if delta != 0:
                        varying = True
                        fastest = max(fastest, abs(delta))
                else:
                    varying = True
                    fastest = max(fastest, f_c + cfg.omega[ch.qubit])
        if self.couple_explicit and self.frame == "rotating":
            for (i, j) in cfg.couplings:
                if self.rwa and cfg.omega[i] == cfg.omega[j]:
                    continue
                varying = True
                fastest = max(fastest, abs(cfg.omega[i] - cfg.omega[j]) if self.rwa
                              else cfg.omega[i] + cfg.omega[j])
        return active, varying, fastest

    # -- noise -------------------------------------------------------------

    def noise_superop(self, h: float) -> np.ndarray:
        key = round(h, 15)
        if key in self._noise_cache:
            return self._noise_cache[key]
        cfg = self.cfg
        S = np.eye(self.dim**2, dtype=complex)
        channels: list[tuple[int, list[np.ndarray]]] = []
        for q in range(self.n):
            t1, t2 = cfg.T1[q], cfg.T2[q]
            if t1 is not None:
                channels.append((q, _amplitude_damping(1 - math.exp(-h / t1))))
            rate = (1.0 / t2 if t2 is not None else 0.0) - (0.5 / t1 if t1 is not None and t2 is not None else 0.0)
            if rate > 0:
                channels.append((q, _dephasing(math.exp(-rate * h))))
        for k, tls in enumerate(cfg.tls):
            if tls.lifetime is not None:
                channels.append((self.n + k, _amplitude_damping(1 - math.exp(-h / tls.lifetime))))
        for site, kraus in channels:
            S = _superop([_site_op(self.nsites, {site: K}) for K in kraus]) @ S
        self._noise_cache[key] = S
        return S

    # -- propagation -------------------------------------------------------

    def _lift(self, U: np.ndarray) -> np.ndarray:
        return np.kron(U, U.conj())

    def interval_map(self, schedule: PulseSchedule, a: float, b: float) -> np.ndarray:
        L = b - a
        active, varying, fastest = self._interval_info(schedule, a, b)
        dt = schedule.dt_sample
        if not varying:
            H = self.generator(schedule, active, 0.5 * (a + b))
            if not self.noisy:
                return expm_hermitian(H, TWO_PI * L)
            m = max(1, math.ceil(L / dt - 1e-9))
            h = L / m
            # equal idle intervals recur in delay scans
            key = (H.tobytes(), round(h, 15), m)
            if key not in self._interval_cache:
                step = self.noise_superop(h) @ self._lift(expm_hermitian(H, TWO_PI * h))
                self._interval_cache[key] = np.linalg.matrix_power(step, m)
            return self._interval_cache[key]
        H_mid = self.generator(schedule, active, 0.5 * (a + b))
        norm = np.linalg.norm(H_mid, 2) + fastest
        m_needed = math.ceil(TWO_PI * norm * L / self.max_phase_step - 1e-9)
        if not self.refine and L / max(1, m_needed) < min(L, dt) - 1e-12:
            required = self.max_phase_step / (TWO_PI * norm)
            raise ValueError(
                f"dt_sample {dt} too coarse for generator norm {norm:.4g} MHz; need dt <= {required:.3g} us"
            )
        m = max(1, m_needed, math.ceil(L / dt - 1e-9))
        h = L / m
        M = None
        for k in range(m):
            U = expm_hermitian(self.generator(schedule, active, a + (k + 0.5) * h), TWO_PI * h)
            if self.noisy:
                U = self.noise_superop(h) @ self._lift(U)
            M = U if M is None else U @ M
        return M

    def maps(self, schedule: PulseSchedule, times: Sequence[float]) -> list[EvolutionMap]:
        times = [float(t) for t in times]
        if any(t < 0 for t in times):
            raise ValueError("output times must be non-negative")
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("output times must be sorted")
        end = max([schedule.duration] + times)
        pts = sorted({p for p in schedule.breakpoints() if p <= end} | set(times) | {0.0})
        kind = "superop" if self.noisy else "unitary"
        size = self.dim**2 if self.noisy else self.dim
        M = np.eye(size, dtype=complex)
        out: list[EvolutionMap] = []
        pending = list(times)
        while pending and pending[0] <= 0:
            out.append(EvolutionMap(kind, M.copy()))
            pending.pop(0)
        for a, b in zip(pts, pts[1:]):
            if b - a <= 1e-12:
                continue
            M = self.interval_map(schedule, a, b) @ M
            while pending and pending[0] <= b + 1e-12:
                out.append(EvolutionMap(kind, M.copy()))
                pending.pop(0)
        return out


def _hz_integral(seg: Segment, tau: float, dt_sample: float) -> float:
    if seg.ramp_time == 0:
        return seg.hz_integral(tau, dt_sample)
    value, _ = scipy.integrate.quad(lambda s: seg.envelope(s, dt_sample)[2], 0.0, tau, limit=200)
    return value


def tls_initial_state(cfg: DeviceConfig) -> np.ndarray:
    rho = np.ones((1, 1), dtype=complex)
    for tls in cfg.tls:
        rho = np.kron(rho, np.diag([1 - tls.p_excited, tls.p_excited]).astype(complex))
    return rho


def evolution_maps(
    cfg: DeviceConfig,
    schedule: PulseSchedule,
    times: Sequence[float] | None = None,
    frame: str = "rotating",
    rwa: bool = True,
    cr_mode: str = "effective",
    max_phase_step: float = 0.1,
    refine: bool = True,
) -> list[EvolutionMap]:
    """Maps from time 0 to each output time, on qubits plus attached defects."""
    engine = _Engine(cfg, frame, rwa, cr_mode, max_phase_step, refine)
    return engine.maps(schedule, [schedule.duration] if times is None else times)


def simulate_schedule(
    cfg: DeviceConfig,
    schedule: PulseSchedule,
    init: np.ndarray,
    frame: str = "rotating",
    times: Sequence[float] | None = None,
    rwa: bool = True,
    cr_mode: str = "effective",
    keep_tls: bool = False,
    max_phase_step: float = 0.1,
    refine: bool = True,
) -> list[np.ndarray]:
    """Density matrices of the device at each of ``times`` (default: the end).

    ``init`` is a state of the qubits; defects start in their diagonal mixed
    state and are traced out unless ``keep_tls``. Times beyond the schedule
    continue with idle evolution. With ``refine=False`` a ``dt_sample`` too
    coarse for ``max_phase_step`` raises instead of substepping.

    In the rotating frame ``cr_mode="effective"`` replaces each drive on
    one qubit at another qubit's frequency by the injected generator from
    ``cross_resonance_rates`` (and drops the static coupling, which that
    generator already accounts for); ``"explicit"`` keeps the qubit model
    with its coupling and the actual drives.
    """
    init = np.asarray(init, dtype=complex)
    if init.shape != (2**cfg.n, 2**cfg.n):
        raise ValueError(f"initial state must be {2**cfg.n}x{2**cfg.n}")
    if abs(np.trace(init) - 1) > 1e-8:
        raise ValueError("initial state must have unit trace")
    full = np.kron(init, tls_initial_state(cfg))
    out = []
    for M in evolution_maps(cfg, schedule, times, frame, rwa, cr_mode, max_phase_step, refine):
        rho = M.apply(full)
        if not keep_tls and cfg.tls:
            rho = partial_trace(rho, range(cfg.n))
        out.append(rho)
    return out


def lab_to_rotating(cfg: DeviceConfig, rho: np.ndarray, t: float) -> np.ndarray:
    """Express a lab-frame qubit state in the frame rotating at the qubit frequencies."""
    phase = np.zeros(2**cfg.n)
    for q, w in enumerate(cfg.omega):
        z = np.array([1.0 if not (k >> (cfg.n - 1 - q)) & 1 else -1.0 for k in range(2**cfg.n)])
        phase += 0.5 * TWO_PI * w * t * z
    R = np.exp(1j * phase)
    return R[:, None] * rho * R.conj()[None, :]


def to_drive_frame(rho: np.ndarray, n: int, qubit: int, z_angle: float) -> np.ndarray:
    """Undo the carrier phase ramp of a Z envelope on ``qubit``.

    ``z_angle`` is ``2 pi Omega int h^Z``; a lab-frame state mapped with
    ``lab_to_rotating`` and then with this function matches the rotating-frame
    simulation, where the Z envelope acts as a direct Z generator.
    """
    z = np.array([1.0 if not (k >> (n - 1 - qubit)) & 1 else -1.0 for k in range(2**n)])
    R = np.exp(-0.5j * z_angle * z)
    return R[:, None] * rho * R.conj()[None, :]


# --- providers ----------------------------------------------------------------


@dataclass(frozen=True)
class Circuit:
    """Prepare ``prep`` (one label per device qubit), run ``schedule``, measure.

    ``measure`` lists the qubits read out, ``basis`` holds one of ``XYZ``
    per measured qubit.
    """

    prep: tuple[str, ...]
    schedule: PulseSchedule
    measure: tuple[int, ...]
    basis: str

    def __post_init__(self):
        object.__setattr__(self, "prep", tuple(self.prep))
        object.__setattr__(self, "measure", tuple(self.measure))
        if len(self.basis) != len(self.measure):
            raise ValueError("basis needs one axis per measured qubit")


def make_prep(n: int, states: dict[int, str]) -> tuple[str, ...]:
    """Preparation tuple with ``states`` on the given qubits and ``0`` elsewhere."""
    return tuple(states.get(q, "0") for q in range(n))


class SimulatedDevice:
    """Measurement provider backed by the schedule simulator.

    Every ``run`` call is one session; ``sessions`` counts them. Circuits
    whose schedules differ only in duration share one simulation. Sampling
    uses a generator seeded once, so a fixed seed and call sequence give
    identical data. ``respawn`` redraws the defect environment from
    ``tls_sampler`` to model drift between repetitions.
    """

    def __init__(
        self,
        cfg: DeviceConfig,
        seed: int | None = None,
        frame: str = "rotating",
        rwa: bool = True,
        cr_mode: str = "effective",
        tls_sampler: TlsSampler | None = None,
    ):
        self.cfg = cfg
        self.frame, self.rwa, self.cr_mode = frame, rwa, cr_mode
        self.rng = np.random.default_rng(seed)
        self.tls_sampler = tls_sampler
        self.sessions = 0
        self.clock = 0.0

    @property
    def n_qubits(self) -> int:
        return self.cfg.n

    def respawn(self) -> None:
        if self.tls_sampler is not None:
            self.cfg = self.cfg.replace(tls=self.tls_sampler.draw(self.rng))

    def _final_states(self, circuits: Sequence[Circuit]) -> list[np.ndarray]:
        groups: dict = {}
        for idx, c in enumerate(circuits):
            if len(c.prep) != self.cfg.n:
                raise ValueError(f"prep must list {self.cfg.n} qubit states")
            key = c.schedule.prefix_key()
            key = ("single", c.schedule) if key is None else key
            groups.setdefault(key, []).append(idx)
        tls = tls_initial_state(self.cfg)
        states: list[np.ndarray | None] = [None] * len(circuits)
        for idxs in groups.values():
            durations = sorted({circuits[i].schedule.duration for i in idxs})
            longest = max((circuits[i].schedule for i in idxs), key=lambda s: s.duration)
            maps = evolution_maps(self.cfg, longest, durations, self.frame, self.rwa, self.cr_mode)
            by_duration = dict(zip(durations, maps))
            cache: dict = {}
            for i in idxs:
                c = circuits[i]
                ck = (c.prep, c.schedule.duration)
                if ck not in cache:
                    rho = by_duration[c.schedule.duration].apply(np.kron(product_state(c.prep), tls))
                    cache[ck] = partial_trace(rho, range(self.cfg.n)) if self.cfg.tls else rho
                states[i] = cache[ck]
        return states

    def run(self, circuits: Sequence[Circuit], shots: int | None) -> list[MeasurementRecord]:
        """Execute ``circuits`` as one session; ``shots=None`` gives exact probabilities."""
        circuits = list(circuits)
        states = self._final_states(circuits)
        session = self.sessions
        self.sessions += 1
        records = []
        for c, rho in zip(circuits, states):
            reduced = rho if list(c.measure) == list(range(self.cfg.n)) else partial_trace(rho, c.measure)
            flips = [self.cfg.readout_flip[q] for q in c.measure]
            rec = sample_counts(reduced, c.basis, shots, flips, self.rng)
            rec.prep, rec.duration, rec.qubits = c.prep, c.schedule.duration, c.measure
            rec.meta = {"session": session, "timestamp": self.clock}
            self.clock += 1.0
            records.append(rec)
        return records


class ChannelProvider:
    """Provider applying a user-supplied channel per schedule.

    ``channel(schedule)`` returns a unitary or a row-major superoperator on
    ``n`` qubits. Used to inject exact ground-truth processes.
    """

    def __init__(self, n: int, channel: Callable[[PulseSchedule], np.ndarray],
                 readout_flip: float | Sequence[float] = 0.0, seed: int | None = None):
        self.n = n
        self.channel = channel
        self.readout_flip = np.broadcast_to(np.asarray(readout_flip, dtype=float), (n,))
        self.rng = np.random.default_rng(seed)
        self.sessions = 0

    @property
    def n_qubits(self) -> int:
        return self.n

    def run(self, circuits: Sequence[Circuit], shots: int | None) -> list[MeasurementRecord]:
        self.sessions += 1
        cache: dict = {}
        records = []
        for c in circuits:
            key = c.schedule
            if key not in cache:
                M = np.asarray(self.channel(c.schedule), dtype=complex)
                cache[key] = EvolutionMap("unitary" if M.shape[0] == 2**self.n else "superop", M)
            rho = cache[key].apply(product_state(c.prep))
            reduced = rho if list(c.measure) == list(range(self.n)) else partial_trace(rho, c.measure)
            rec = sample_counts(reduced, c.basis, shots, [self.readout_flip[q] for q in c.measure], self.rng)
            rec.prep, rec.duration, rec.qubits = c.prep, c.schedule.duration, c.measure
            records.append(rec)
        return records
