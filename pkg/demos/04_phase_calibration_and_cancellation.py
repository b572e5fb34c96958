"""Turn a raw cross-resonance drive into a pure ZX interaction.

First the drive phase is bisected until the ZY rate vanishes. Then the
single-qubit rates measured by Hamiltonian tomography are cancelled with
simultaneous compensation tones, once with an ideal generator and once
with a coarse amplitude step that cannot represent the needed tone.
"""
import warnings

import numpy as np

from fftransmon.calibration import calibrate_phase, synthesize_cancellation
from fftransmon.device import AwgModel, CrossResonanceModel, DeviceConfig
from fftransmon.hamiltonian_tomography import cr_hamiltonian_tomography
from fftransmon.rates import RateTable
from fftransmon.simulator import SimulatedDevice

warnings.simplefilter("ignore")
times, stark = np.linspace(0, 10, 201), np.linspace(0, 2, 201)


def device(step=0.0, offset=0.0):
    return DeviceConfig(omega=(5000.0, 5100.0), couplings={(0, 1): 2.0}, cr_model=CrossResonanceModel.measured(),
                        awg=AwgModel(amplitude_step=step, phase_offset=offset))


cal = calibrate_phase(SimulatedDevice(device(offset=0.3), seed=1), 0, 1, 36.0)
print(f"phase calibration: {cal.phase:+.4f} rad after {cal.calls} calls, residual ZY {cal.c_zy:+.4f} MHz")

for step in (0.0, 0.09):
    cfg = device(step)
    before = cr_hamiltonian_tomography(SimulatedDevice(cfg, seed=2), 0, 1, 36.0, 0.0, times, 4096, stark_times=stark)
    plan = synthesize_cancellation(before, RateTable({k: before[k] for k in ("ZX", "ZY", "ZZ")}), awg=cfg.awg)
    after = cr_hamiltonian_tomography(SimulatedDevice(cfg, seed=3), 0, 1, 36.0, 0.0, times, 4096,
                                      stark_times=stark, tones=plan.tones)
    print(f"\namplitude step {step} MHz")
    for flag in plan.flags:
        print("  flagged:", flag)
    for label in ("ZX", "IX", "IY", "IZ", "ZI"):
        print(f"  {label}: {before[label]:+.4f} -> {after[label]:+.4f} MHz")
