"""Idle qubit next to two-level defects.

A defect in a mixed state shifts the qubit frequency up or down, so the X
expectation of an idling |+> state beats between two frequencies while Z
stays flat. The qubit purity dips and comes back, which classical dephasing
cannot do. Redrawing the defects between repetitions makes the fitted
frequencies drift.
"""
import numpy as np

from fftransmon.device import DeviceConfig, TlsSampler, TlsSpec
from fftransmon.simulator import SimulatedDevice
from fftransmon.tls_analysis import (
    detect_revivals,
    ensemble_statistics,
    fit_two_cosine,
    purity_scan,
    run_delay_scan,
    tls_frequencies,
)

delays = np.linspace(0, 60, 241)
cfg = DeviceConfig(omega=(5000.0,), T1=200.0, T2=40.0, detuning=0.21, tls=(TlsSpec(0, 0.03),))
x = run_delay_scan(SimulatedDevice(cfg, seed=1), 0, "X", delays, 1024)
z = run_delay_scan(SimulatedDevice(cfg, seed=2), 0, "Z", delays, 1024)
fit = fit_two_cosine(delays, x.values[0])
print(f"X basis: f0 {fit.f0:.4f}, f1 {fit.f1:.4f} MHz (model {tls_frequencies(0.21, 0.03)}), "
      f"weights {fit.c0:.2f}/{fit.c1:.2f}, T2* {fit.T2star:.1f} us")


def oscillation_power(y):
    # variance left after removing the slow relaxation drift
    return np.var(y - np.polyval(np.polyfit(delays, y, 2), delays))


ratio = oscillation_power(z.values[0]) / oscillation_power(x.values[0])
print(f"Z basis: <Z> drifts from {z.values[0][0]:+.2f} to {z.values[0][-1]:+.2f} by relaxation; "
      f"oscillation power {ratio:.1%} of the X basis")

pur_delays = np.linspace(0, 50, 201)
quantum = purity_scan(SimulatedDevice(DeviceConfig(omega=(5000.0,), T2=100.0, tls=(TlsSpec(0, 0.03),))), 0,
                      pur_delays, None)
classical = purity_scan(SimulatedDevice(DeviceConfig(omega=(5000.0,), T2=100.0)), 0, pur_delays, None)
print("purity revivals with a defect:", [(round(t, 2), round(p, 3)) for t, p in detect_revivals(*zip(*quantum))])
print("purity revivals with dephasing only:", detect_revivals(*zip(*classical)))

drift = SimulatedDevice(DeviceConfig(omega=(5000.0,), T2=200.0, detuning=0.21), tls_sampler=TlsSampler(), seed=4)
stats = ensemble_statistics(run_delay_scan(drift, 0, "X", delays, 1024, repetitions=10))
print(f"10 repetitions, redrawn defects: f0 spread {stats.f0_spread:.4f} MHz, unstable {stats.unstable}")
print(f"envelope width at 20 us: {np.interp(20, delays, stats.high - stats.low):.2f}")
