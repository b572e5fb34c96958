"""What a waveform generator does to weak resonant drives.

A moderate request is compressed by the output nonlinearity; a request below
one amplitude step is rounded up to a full step. Both carry a phase offset
and the qubit sits slightly off resonance. State tomography of the driven
qubit, fitted to damped precession, exposes all three errors.
"""
import math

import numpy as np

from fftransmon.calibration import error_report, fit_single_qubit, low_amplitude_tomography
from fftransmon.device import AwgModel, DeviceConfig
from fftransmon.simulator import SimulatedDevice

times = np.linspace(0, 20, 201)
cases = [
    # requested amplitude (MHz), generator model, qubit detuning (MHz)
    (1.5, AwgModel(gain_nonlinearity=(1.44 / 1.5 - 1) / 1.5**2, phase_offset=-0.04 * math.pi), 0.05),
    (0.07, AwgModel(amplitude_step=0.16, min_one_step=True, phase_offset=0.65 * math.pi), 0.07),
]
for requested, awg, detuning in cases:
    cfg = DeviceConfig(omega=(5000.0,), T1=60.0, T2=31.69, detuning=detuning, awg=awg)
    series = low_amplitude_tomography(SimulatedDevice(cfg, seed=3), 0, requested, times, 1024)
    fit = fit_single_qubit(series)
    print(f"request {requested} MHz, fitted T2 {fit.T2:.1f} us, flags {fit.flags or 'none'}")
    print(error_report(fit, requested).summary())
    print()
