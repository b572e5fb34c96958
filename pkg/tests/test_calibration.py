import math
import warnings

import numpy as np
import pytest

from fftransmon.calibration import (
    calibrate_phase,
    error_report,
    fit_single_qubit,
    low_amplitude_tomography,
    synthesize_cancellation,
    synthetic_single_qubit_series,
)
from fftransmon.device import AwgModel, CrossResonanceModel, DeviceConfig
from fftransmon.hamiltonian_tomography import cr_hamiltonian_tomography
from fftransmon.rates import MEASURED_RATES, RateTable
from fftransmon.simulator import SimulatedDevice

LOW_TIMES = np.linspace(0, 20, 201)


def cr_device(model, offset=0.0, **kw):
    return DeviceConfig(omega=(5000.0, 5100.0), couplings={(0, 1): 2.0}, cr_model=model,
                        awg=AwgModel(phase_offset=offset), **kw)


# --- phase calibration ------------------------------------------------------------


def test_phase_calibration_undoes_injected_offset():
    dev = SimulatedDevice(cr_device(CrossResonanceModel.ideal(), 0.3), seed=1)
    cal = calibrate_phase(dev, 0, 1, 36.0)
    assert abs(cal.phase + 0.3) < 0.01
    assert cal.calls <= 20 and not cal.flagged


def test_phase_calibration_without_offset():
    cal = calibrate_phase(SimulatedDevice(cr_device(CrossResonanceModel.ideal()), seed=2), 0, 1, 36.0)
    assert abs(cal.phase) < 0.01


def test_phase_calibration_includes_native_zy_angle():
    # the measured table has its own ZY component, so nulling it rotates a further atan(ZY/ZX)
    native = math.atan(MEASURED_RATES["ZY"] / MEASURED_RATES["ZX"])
    cfg = cr_device(CrossResonanceModel.measured(), 0.3)
    cal = calibrate_phase(SimulatedDevice(cfg, seed=3), 0, 1, 36.0)
    assert abs(cal.phase - (-0.3 - native)) < 0.01
    check = SimulatedDevice(cfg, seed=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tab = cr_hamiltonian_tomography(check, 0, 1, 36.0, cal.phase, np.linspace(0, 10, 101), 1024,
                                        stark_times=np.linspace(0, 2, 101))
    assert abs(tab["ZY"]) <= 0.04


def test_phase_bisection_halves_bracket():
    cal = calibrate_phase(SimulatedDevice(cr_device(CrossResonanceModel.ideal(), 0.3), seed=1), 0, 1, 36.0)
    phases = [p for p, _ in cal.history[2:]]
    widths = np.abs(np.diff(phases))
    assert np.allclose(widths[1:] / widths[:-1], 0.5)


def test_phase_calibration_flags_missing_drive():
    with pytest.warns(UserWarning):
        cal = calibrate_phase(SimulatedDevice(cr_device(CrossResonanceModel.ideal()), seed=0), 0, 1, 0.0, shots=None)
    assert cal.flagged
    with pytest.raises(ValueError):
        calibrate_phase(SimulatedDevice(cr_device(CrossResonanceModel.ideal())), 0, 1, 36.0, tol=0.0)


# --- low-amplitude tomography -----------------------------------------------------


def test_moderate_amplitude_is_compressed():
    g = (1.44 / 1.5 - 1) / 1.5**2
    cfg = DeviceConfig(omega=(5000.0,), awg=AwgModel(gain_nonlinearity=g))
    fit = fit_single_qubit(low_amplitude_tomography(SimulatedDevice(cfg), 0, 1.5, np.linspace(0, 5, 101), None))
    assert abs(fit.rabi - 1.44) < 1e-6


def test_tiny_amplitude_rounds_up_with_phase_and_detuning_errors():
    awg = AwgModel(amplitude_step=0.16, min_one_step=True, phase_offset=0.65 * math.pi)
    cfg = DeviceConfig(omega=(5000.0,), detuning=0.07, awg=awg)
    fit = fit_single_qubit(low_amplitude_tomography(SimulatedDevice(cfg), 0, 0.07, LOW_TIMES, None))
    rep = error_report(fit, 0.07)
    assert abs(fit.rabi - 0.16) < 1e-6
    assert abs(rep.phase_error - 0.65 * math.pi) < 1e-6
    assert abs(fit.detuning - 0.07) < 1e-6
    assert "phase error +0.650 pi" in rep.summary()


def test_zero_amplitude_shows_no_oscillation():
    cfg = DeviceConfig(omega=(5000.0,), T1=20.0, T2=30.0)
    series = low_amplitude_tomography(SimulatedDevice(cfg), 0, 0.0, LOW_TIMES, None)
    fit = fit_single_qubit(series)
    assert fit.rabi == 0.0 and "no-precession" in fit.flags
    with pytest.raises(ValueError):
        low_amplitude_tomography(SimulatedDevice(cfg), 0, -1.0, LOW_TIMES, None)


@pytest.mark.parametrize("rabi,phase,detuning", [(0.16, 0.65 * math.pi, 0.07), (1.44, -0.04 * math.pi, 0.05)])
def test_synthetic_fit_within_ten_percent(rabi, phase, detuning):
    fit = fit_single_qubit(synthetic_single_qubit_series(LOW_TIMES, rabi, phase, detuning, 31.69, 1024, 7))
    assert abs(fit.rabi - rabi) < 0.1 * rabi
    assert abs(fit.phase_error - phase) < 0.05 * math.pi
    assert abs(fit.detuning - detuning) < 0.1 * detuning
    assert abs(fit.T2 - 31.69) < 0.1 * 31.69


def test_undamped_x_field_flags_t2_bound():
    fit = fit_single_qubit(synthetic_single_qubit_series(LOW_TIMES, 0.3, 0.0, 0.0, None))
    assert "T2-at-bound" in fit.flags


def test_fit_is_a_fixed_point():
    first = fit_single_qubit(synthetic_single_qubit_series(LOW_TIMES, 0.16, 0.65 * math.pi, 0.07, 31.69, 1024, 3))
    again = fit_single_qubit(synthetic_single_qubit_series(LOW_TIMES, first.rabi, first.phase, first.detuning, first.T2))
    assert abs(again.rabi - first.rabi) < 1e-6
    assert abs(again.phase - first.phase) < 1e-6
    assert abs(again.detuning - first.detuning) < 1e-6


def test_short_window_reports_upper_bound():
    fit = fit_single_qubit(synthetic_single_qubit_series(np.linspace(0, 2, 40), 0.2, 0.0, 0.0, None))
    assert fit.rabi_upper_bound == pytest.approx(0.75)


def test_phase_and_detuning_estimates_unbiased():
    pe, de = [], []
    for seed in range(100):
        fit = fit_single_qubit(synthetic_single_qubit_series(LOW_TIMES, 0.16, 0.65 * math.pi, 0.07, 31.69, 1024, seed))
        pe.append(fit.phase_error)
        de.append(fit.detuning)
    for vals, truth in ((pe, 0.65 * math.pi), (de, 0.07)):
        assert abs(np.mean(vals) - truth) < 3 * np.std(vals) / math.sqrt(len(vals))


# --- cancellation -----------------------------------------------------------------


def test_cancellation_of_table_to_pure_zx():
    plan = synthesize_cancellation(RateTable(MEASURED_RATES), RateTable({"ZX": MEASURED_RATES["ZX"]}))
    ctrl, tgt = plan.compensations
    assert math.isclose(tgt.x, -MEASURED_RATES["IX"]) and math.isclose(ctrl.z, -MEASURED_RATES["ZI"])
    assert math.isclose(tgt.y, -MEASURED_RATES["IY"]) and math.isclose(tgt.z, -MEASURED_RATES["IZ"])
    for label in ("IX", "IY", "IZ", "ZI"):
        assert abs(plan.residual[label]) < 1e-12
    assert plan.residual["ZX"] == MEASURED_RATES["ZX"]
    assert not plan.flags


def test_pure_entangler_needs_no_compensation():
    plan = synthesize_cancellation(RateTable({"ZX": 0.5}), RateTable({"ZX": 0.5}))
    assert plan.tones == ()


def test_quantized_compensation_is_flagged():
    # 0.065 MHz of Rabi frequency needed, output step 0.09 MHz
    plan = synthesize_cancellation(RateTable({"ZX": 0.5, "IX": 0.0325}), RateTable({"ZX": 0.5}),
                                   awg=AwgModel(amplitude_step=0.09))
    tgt = plan.compensations[1]
    assert tgt.flagged and math.isclose(tgt.delivered_amplitude, 0.09)
    assert "nearest achievable 0.0900" in plan.flags[0]


def test_cancellation_rejects_two_qubit_changes():
    with pytest.raises(ValueError):
        synthesize_cancellation(RateTable({"ZX": 0.5, "ZZ": 0.1}), RateTable({"ZX": 0.5, "ZZ": 0.0}))


def test_closed_loop_cancellation():
    cfg = cr_device(CrossResonanceModel.measured())
    times, stark = np.linspace(0, 10, 201), np.linspace(0, 2, 201)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        before = cr_hamiltonian_tomography(SimulatedDevice(cfg, seed=1), 0, 1, 36.0, 0.0, times, 4096, stark_times=stark)
        plan = synthesize_cancellation(before, RateTable({"ZX": before["ZX"], "ZY": before["ZY"], "ZZ": before["ZZ"]}))
        after = cr_hamiltonian_tomography(SimulatedDevice(cfg, seed=2), 0, 1, 36.0, 0.0, times, 4096,
                                          stark_times=stark, tones=plan.tones)
    for label in ("IX", "IY", "IZ", "ZI"):
        assert abs(after[label]) < 0.02
    assert abs(after["ZX"] - before["ZX"]) < 0.02 * abs(before["ZX"])
