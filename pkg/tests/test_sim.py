import dataclasses
import math

import numpy as np
import pytest

from erecho import sim
from erecho.analytic import stark_echo_amplitude
from erecho.core import Detect, OpticalPulse, PulseArea, PulseSequence, ShfModulation, ValidationError
from erecho.fitting import fit_echo_decay, fit_recovery
from erecho.presets import CHIP1H, CHIP3H
from erecho.units import to_si

PURE_T2 = dataclasses.replace(CHIP1H, bath=None)


def _cfg(**kw):
    base = dict(n_ions=2000, seed=1, block_size=512)
    base.update(kw)
    return sim.SimConfig(**base)


def test_deterministic_across_workers_and_reruns():
    seq = sim.two_pulse_sequence(1e-6)
    a = sim.simulate(CHIP3H, seq, _cfg())
    b = sim.simulate(CHIP3H, seq, _cfg(workers=4))
    c = sim.simulate(CHIP3H, seq, _cfg())
    assert np.array_equal(a.field, b.field) and np.array_equal(a.field, c.field)
    assert np.array_equal(a.field_var, b.field_var)


def test_seed_changes_realisation():
    seq = sim.two_pulse_sequence(1e-6)
    a = sim.simulate(CHIP3H, seq, _cfg())
    b = sim.simulate(CHIP3H, seq, _cfg(seed=2))
    assert not np.array_equal(a.field, b.field)


@pytest.mark.parametrize("spec", [PURE_T2, CHIP3H])
def test_bloch_norm_conserved(spec):
    seq = sim.three_pulse_sequence(0.5e-6, 5e-6)
    tr = sim.simulate(spec, seq, _cfg())
    assert tr.max_norm_drift <= 1e-9


def test_norm_drift_ignores_saturation_shrink():
    seq = sim.saturation_sequence(2e-6, tau=0.5e-6, saturation=1e-6, power_scale=0.5)
    tr = sim.simulate(PURE_T2, seq, _cfg())
    assert tr.max_norm_drift <= 1e-9


def test_echo_peak_at_two_tau_random_configs():
    rng = np.random.default_rng(2024)
    misses = []
    for trial in range(50):
        dur = float(rng.choice([16e-9, 24e-9, 32e-9, 48e-9]))
        tau = float(rng.uniform(0.3e-6, 3e-6))
        bw = float(rng.choice([2e-9, 4e-9]))
        t2 = float(rng.uniform(5e-6, 80e-6))
        spec = dataclasses.replace(PURE_T2, t2_optical=t2)
        cfg = sim.SimConfig(n_ions=1000, seed=trial, detection_bin=bw,
                            time_step=min(4e-9, dur / 4),
                            laser_detuning=float(rng.uniform(-1e9, 1e9)))
        seq = sim.two_pulse_sequence(tau, dur, detect_half_bins=12, bin_width=bw)
        tr = sim.simulate(spec, seq, cfg)
        t_echo = tr.marker("primary_echo")
        assert t_echo == pytest.approx(dur / 2 + 2 * tau, abs=1e-15)
        if abs(tr.peak_time - t_echo) > tr.bin_width * (1 + 1e-9):
            misses.append((trial, tr.peak_time, t_echo))
    assert not misses


def test_stimulated_echo_marker():
    tr = sim.simulate(PURE_T2, sim.three_pulse_sequence(1e-6, 4e-6), _cfg())
    assert abs(tr.peak_time - tr.marker("stimulated_echo")) <= tr.bin_width


def test_standard_error_scales_as_inverse_sqrt_n():
    seq = sim.two_pulse_sequence(1e-6)
    se = {}
    for n in (1000, 10_000, 100_000):
        tr = sim.simulate(PURE_T2, seq, sim.SimConfig(n_ions=n, seed=0, block_size=4096))
        j = tr.nearest_bin(tr.marker("primary_echo"))
        se[n] = math.sqrt(tr.field_var[j, 0] + tr.field_var[j, 1])
    for n in (1000, 10_000):
        assert se[n] / se[100_000] == pytest.approx(math.sqrt(100_000 / n), rel=0.2)


def test_empirical_spread_matches_reported_error():
    seq = sim.two_pulse_sequence(1e-6)
    vals, ses = [], []
    for seed in range(30):
        tr = sim.simulate(PURE_T2, seq, sim.SimConfig(n_ions=1000, seed=seed))
        j = tr.nearest_bin(tr.marker("primary_echo"))
        vals.append(tr.field[j])
        ses.append(math.sqrt(tr.field_var[j, 0] + tr.field_var[j, 1]))
    spread = math.sqrt(np.var(np.real(vals), ddof=1) + np.var(np.imag(vals), ddof=1))
    assert spread == pytest.approx(np.mean(ses), rel=0.35)


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
def test_intensity_quadratic_in_amplitude(c):
    seq = sim.two_pulse_sequence(1e-6)
    a = sim.simulate(PURE_T2, seq, _cfg())
    b = sim.simulate(PURE_T2, seq, _cfg(amplitude_scale=c))
    assert np.allclose(b.intensity, c ** 2 * a.intensity, rtol=1e-12)


def test_no_decay_without_dephasing():
    spec = dataclasses.replace(PURE_T2, t2_optical=math.inf)
    curve = sim.two_pulse_decay(spec, _cfg(), [0.5e-6, 2e-6, 8e-6])
    assert np.allclose(curve.ordinate, curve.ordinate[0], rtol=1e-9)


def test_detect_only_sequence_gives_zero():
    seq = PulseSequence([Detect(0.0, 40e-9)])
    tr = sim.simulate(PURE_T2, seq, _cfg())
    assert np.all(tr.intensity == 0.0)


def test_out_of_band_ions_not_driven():
    seq = sim.two_pulse_sequence(1e-6)
    cfg = _cfg(sample_full_line=True, n_ions=5000)
    tr = sim.simulate(PURE_T2, seq, cfg)
    assert tr.participating_fraction < 0.01
    assert tr.max_norm_drift <= 1e-9


def test_shf_modulation_cases():
    curve = sim.two_pulse_decay(PURE_T2, _cfg(), [0.5e-6, 1e-6, 1.5e-6, 2e-6])
    assert np.array_equal(sim.apply_shf_modulation(curve, 0.0, 1e6).ordinate, curve.ordinate)
    f = 1.0 / (2 * 1e-6)
    mod = sim.apply_shf_modulation(curve, 1.0, f)
    assert mod.ordinate[1] == pytest.approx(0.0, abs=1e-12 * curve.ordinate[1])
    # one full period returns to the unmodulated value
    mod = sim.apply_shf_modulation(curve, 0.7, 1.0 / 2e-6)
    assert mod.ordinate[3] == pytest.approx(curve.ordinate[3], rel=1e-12)
    with pytest.raises(ValueError):
        sim.apply_shf_modulation(curve, 1.5, f)


def test_shf_in_spec_applies_to_decay():
    spec = dataclasses.replace(PURE_T2, shf_modulation=ShfModulation(0.5, 1e6))
    a = sim.two_pulse_decay(PURE_T2, _cfg(), [0.5e-6, 0.75e-6])
    b = sim.two_pulse_decay(spec, _cfg(), [0.5e-6, 0.75e-6])
    assert b.ordinate[0] == pytest.approx(a.ordinate[0] * 0.5, rel=1e-12)


def test_two_pulse_decay_refit_small():
    taus = np.linspace(0.3e-6, 6e-6, 10)
    curve = sim.two_pulse_decay(PURE_T2, sim.SimConfig(n_ions=20_000, seed=0), taus)
    res = fit_echo_decay(curve)
    assert res.params["T2"] == pytest.approx(9.7e-6, rel=0.1)


def test_stark_gated_matches_quadrature():
    field = to_si(40.0, "V/cm")
    lengths = np.linspace(0, 3e-6, 6)
    curve = sim.stark_gated_echo(CHIP1H, sim.SimConfig(n_ions=20_000, seed=0, block_size=4096),
                                 lengths, field)
    assert curve.ordinate[0] == pytest.approx(1.0, abs=1e-12)
    ref = stark_echo_amplitude(field * lengths, CHIP1H.stark_k, "sin4")
    z = (curve.ordinate[1:] - ref[1:]) / curve.sigma[1:]
    assert np.all(np.abs(z) < 4)


def test_saturation_recovery_limits():
    waits = np.geomspace(1e-4, 20.0, 30)
    y = sim.saturation_recovery(CHIP1H, None, waits).ordinate
    assert y[0] < 0.8
    assert y[-1] == pytest.approx(1.0, abs=1e-6)
    assert np.all(np.diff(y) >= -1e-12)
    flat = sim.saturation_recovery(CHIP1H, None, waits, power_scale=0.0).ordinate
    assert np.allclose(flat, 1.0, atol=1e-12)


def test_saturation_recovery_round_trip_fast_optical_decay():
    spec = dataclasses.replace(CHIP1H, t1_optical=1e-7)
    waits = np.geomspace(1e-4, 5.0, 40)
    curve = sim.saturation_recovery(spec, None, waits, pump_rate=1e7)
    res = fit_recovery(curve)
    assert res.params["t1_short"] == pytest.approx(9.4e-3, rel=1e-3)
    assert res.params["t1_long"] == pytest.approx(0.53, rel=1e-3)


def test_budget_exceeded_message():
    cfg = sim.SimConfig(n_ions=10_000, memory_budget=1000)
    with pytest.raises(sim.BudgetExceeded, match="memory budget allows 1,000"):
        sim.three_pulse_sweep(CHIP3H, cfg, [0.5e-6, 1e-6], [1e-3])


@pytest.mark.parametrize("kw,needle", [
    (dict(n_ions=5), "n_ions"),
    (dict(detection_bin=0.0), "detection_bin"),
    (dict(workers=0), "workers"),
])
def test_config_validation(kw, needle):
    errs = sim.validate_config(sim.SimConfig(**kw))
    assert any(needle in e for e in errs)
    with pytest.raises(ValidationError):
        sim.simulate(PURE_T2, sim.two_pulse_sequence(1e-6), sim.SimConfig(**kw))


def test_time_step_against_pulse_duration():
    seq = sim.two_pulse_sequence(1e-6, pulse_duration=8e-9)
    assert any("time_step" in e for e in sim.validate_config(sim.SimConfig(), seq))


def test_overlapping_pulses_rejected():
    seq = PulseSequence([OpticalPulse(0.0, 50e-9, PulseArea.HALF_PI),
                         OpticalPulse(20e-9, 50e-9, PulseArea.PI), Detect(1e-6, 40e-9)])
    with pytest.raises(ValidationError):
        sim.simulate(PURE_T2, seq, _cfg())


def test_sweep_grid_errors():
    with pytest.raises(ValueError, match="ascending"):
        sim.two_pulse_decay(PURE_T2, _cfg(), [2e-6, 1e-6])
    with pytest.raises(ValueError, match="pulse duration"):
        sim.two_pulse_decay(PURE_T2, _cfg(), [10e-9, 1e-6])
