"""Drive programs: per-qubit channels of piecewise-constant segments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Envelope = "float | tuple[float, ...]"


def _as_env(value):
    if np.isscalar(value):
        return float(value)
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class Segment:
    """One stretch of drive on a channel.

    ``carrier_target`` picks the carrier frequency (that qubit's frequency
    plus ``detuning``); ``None`` means the channel's own qubit. Envelopes are
    dimensionless, either a constant or samples on the schedule's
    ``dt_sample`` grid, and are multiplied by a cosine ramp of length
    ``ramp_time`` at both edges.
    """

    duration: float
    amplitude: float = 0.0
    hx: float | tuple[float, ...] = 0.0
    hy: float | tuple[float, ...] = 0.0
    hz: float | tuple[float, ...] = 0.0
    carrier_target: int | None = None
    detuning: float = 0.0
    ramp_time: float = 0.0

    def __post_init__(self):
        for name in ("hx", "hy", "hz"):
            object.__setattr__(self, name, _as_env(getattr(self, name)))
        if self.duration < 0:
            raise ValueError("segment duration must be non-negative")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative; encode sign in the envelope")
        if self.ramp_time < 0 or 2 * self.ramp_time > self.duration + 1e-12:
            raise ValueError("ramp_time must fit twice inside the segment")
        hx, hy, hz = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (self.hx, self.hy, self.hz))
        if np.any(np.abs(hz) > 1 + 1e-12) or np.any(np.abs(hx) > 1 + 1e-12) or np.any(np.abs(hy) > 1 + 1e-12):
            raise ValueError("envelope components must satisfy |h| <= 1")
        if hx.size == hy.size and np.any(np.hypot(hx, hy) > 1 + 1e-9):
            raise ValueError("envelope components must satisfy |hx + i hy| <= 1")

    @property
    def sampled(self) -> bool:
        return any(isinstance(getattr(self, n), tuple) for n in ("hx", "hy", "hz"))

    @property
    def constant(self) -> bool:
        return not self.sampled and self.ramp_time == 0

    def envelope(self, tau: float, dt_sample: float) -> tuple[float, float, float]:
        """``(hx, hy, hz)`` at local time ``tau``, ramp included."""
        vals = []
        for name in ("hx", "hy", "hz"):
            v = getattr(self, name)
            if isinstance(v, tuple):
                k = min(int(tau / dt_sample + 1e-9), len(v) - 1)
                v = v[k]
            vals.append(v)
        r = self.ramp_time
        if r > 0:
            if tau < r:
                scale = 0.5 * (1 - math.cos(math.pi * tau / r))
            elif tau > self.duration - r:
                scale = 0.5 * (1 - math.cos(math.pi * (self.duration - tau) / r))
            else:
                scale = 1.0
            vals = [v * scale for v in vals]
        return tuple(vals)

    def hz_integral(self, tau: float, dt_sample: float) -> float:
        """``int_0^tau hz`` (unramped samples; ramps are handled by the stepper)."""
        hz = self.hz
        if not isinstance(hz, tuple):
            return hz * tau
        k = min(int(tau / dt_sample + 1e-9), len(hz))
        return float(sum(hz[:k]) * dt_sample + (hz[k] if k < len(hz) else 0.0) * (tau - k * dt_sample))


@dataclass(frozen=True)
class Channel:
    qubit: int
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def locate(self, t: float) -> tuple[Segment | None, float, float]:
        """Segment active at ``t`` with its start time and local time."""
        start = 0.0
        for seg in self.segments:
            if t < start + seg.duration or (seg is self.segments[-1] and t <= start + seg.duration):
                return seg, start, t - start
            start += seg.duration
        return None, start, 0.0


@dataclass(frozen=True)
class PulseSchedule:
    """Simultaneous drive channels of a common total ``duration`` (us)."""

    duration: float
    channels: tuple[Channel, ...] = ()
    dt_sample: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.duration < 0:
            raise ValueError("schedule duration must be non-negative")
        if self.dt_sample <= 0:
            raise ValueError("dt_sample must be positive")
        for ch in self.channels:
            if abs(ch.duration - self.duration) > 1e-9:
                raise ValueError("all channels must span the schedule duration")
            for seg in ch.segments:
                if seg.sampled:
                    steps = seg.duration / self.dt_sample
                    if abs(steps - round(steps)) > 1e-6:
                        raise ValueError("dt_sample must divide every sampled segment duration")
                    for name in ("hx", "hy", "hz"):
                        v = getattr(seg, name)
                        if isinstance(v, tuple) and len(v) != round(steps):
                            raise ValueError(f"{name} has {len(v)} samples, expected {round(steps)}")

    def breakpoints(self) -> list[float]:
        """Times where some channel's generator may jump."""
        pts = {0.0, self.duration}
        for ch in self.channels:
            start = 0.0
            for seg in ch.segments:
                pts.add(start)
                pts.add(start + seg.duration)
                if seg.ramp_time > 0:
                    pts.add(start + seg.ramp_time)
                    pts.add(start + seg.duration - seg.ramp_time)
                if seg.sampled:
                    k = round(seg.duration / self.dt_sample)
                    pts.update(start + i * self.dt_sample for i in range(k))
                start += seg.duration
        return sorted(pts)

    def prefix_key(self):
        """Hashable key shared by schedules that differ only in duration.

        Such schedules are prefixes of one another, so one simulation of the
        longest serves them all. ``None`` if the schedule is not stretchable.
        """
        parts = []
        for ch in self.channels:
            if len(ch.segments) != 1 or not ch.segments[0].constant:
                return None
            s = ch.segments[0]
            parts.append((ch.qubit, s.amplitude, s.hx, s.hy, s.hz, s.carrier_target, s.detuning))
        return ("stretch", tuple(parts))

    def stretched(self, duration: float) -> "PulseSchedule":
        """Copy with every single constant segment set to ``duration``."""
        if self.prefix_key() is None:
            raise ValueError("schedule is not stretchable")
        chans = tuple(
            Channel(ch.qubit, (Segment(duration, s.amplitude, s.hx, s.hy, s.hz, s.carrier_target, s.detuning),))
            for ch in self.channels for s in ch.segments
        )
        return PulseSchedule(duration, chans, self.dt_sample)


@dataclass(frozen=True)
class ResonantTone:
    """A constant resonant drive: amplitude ``Omega`` with envelope ``(hx, hy, hz)``."""

    qubit: int
    amplitude: float
    hx: float = 0.0
    hy: float = 0.0
    hz: float = 0.0

    def channel(self, duration: float, ramp_time: float = 0.0) -> Channel:
        return Channel(self.qubit, (Segment(duration, self.amplitude, self.hx, self.hy, self.hz, ramp_time=ramp_time),))


def idle(duration: float) -> PulseSchedule:
    return PulseSchedule(duration)


def cr_channel(control: int, target: int, Omega: float, phase: float, duration: float, ramp_time: float = 0.0) -> Channel:
    seg = Segment(duration, Omega, math.cos(phase), math.sin(phase), 0.0, carrier_target=target, ramp_time=ramp_time)
    return Channel(control, (seg,))


def cr_schedule(
    control: int,
    target: int,
    Omega: float,
    phase: float,
    duration: float,
    tones: Sequence[ResonantTone] = (),
    ramp_time: float = 0.0,
) -> PulseSchedule:
    """Cross-resonance drive on ``control`` at the ``target`` frequency, plus extra tones."""
    chans = [cr_channel(control, target, Omega, phase, duration, ramp_time)]
    chans += [tone.channel(duration, ramp_time) for tone in tones]
    return PulseSchedule(duration, tuple(chans))


def resonant_schedule(
    qubit: int, Omega: float, duration: float, hx: float = 1.0, hy: float = 0.0, hz: float = 0.0, ramp_time: float = 0.0
) -> PulseSchedule:
    return PulseSchedule(duration, (ResonantTone(qubit, Omega, hx, hy, hz).channel(duration, ramp_time),))


def merge(*schedules: PulseSchedule) -> PulseSchedule:
    """Run schedules of equal duration simultaneously."""
    if not schedules:
        raise ValueError("nothing to merge")
    T = schedules[0].duration
    if any(abs(s.duration - T) > 1e-9 for s in schedules):
        raise ValueError("merged schedules must have equal duration")
    dt = min(s.dt_sample for s in schedules)
    return PulseSchedule(T, tuple(ch for s in schedules for ch in s.channels), dt)
