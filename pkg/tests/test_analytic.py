import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from erecho import analytic as an
from erecho.core import DephasingParams
from erecho.presets import CHIP1H_SD, CHIP3H_SD, STARK_K
from erecho.units import to_si


@pytest.mark.parametrize("t2,gamma_khz,tol", [(9.7e-6, 32.8, 0.5), (64.1e-6, 5.0, 0.1)])
def test_linewidth_pairs(t2, gamma_khz, tol):
    assert an.homogeneous_linewidth(t2) / 1e3 == pytest.approx(gamma_khz, abs=tol)


@given(st.floats(1e-9, 1.0))
def test_linewidth_inverse(t2):
    assert an.t2_from_linewidth(an.homogeneous_linewidth(t2)) == pytest.approx(t2, rel=1e-14)


def test_linewidth_rejects_nonpositive():
    with pytest.raises(an.DomainError):
        an.homogeneous_linewidth(0.0)


def test_echo_decay_values():
    assert an.echo_decay(0.0, 2.0, 1e-5) == 2.0
    # I0 exp(-4 tau / T2) at tau = T2/4 is I0/e
    assert an.echo_decay(2.5e-6, 1.0, 1e-5) == pytest.approx(math.exp(-1), rel=1e-15)
    assert an.echo_decay(2.5e-6, 1.0, 1e-5, x=2.0) == pytest.approx(math.exp(-1), rel=1e-15)
    with pytest.raises(an.DomainError):
        an.echo_decay(1e-6, 1.0, 1e-5, x=0.5)


@given(st.floats(0, 1e-3), st.floats(0, 1e-3), st.floats(1e-6, 1e-3))
def test_echo_decay_monotone(a, b, t2):
    lo, hi = sorted((a, b))
    assert an.echo_decay(hi, 1.0, t2) <= an.echo_decay(lo, 1.0, t2)


def test_temperature_broadening_linear():
    assert an.temperature_broadening(0.5, 30e3, 111e3) == pytest.approx(85.5e3)


def test_effective_linewidth_chip1h_at_1ms():
    val = an.effective_linewidth(CHIP1H_SD, 1e-3)
    assert val == pytest.approx(215e3, rel=0.15)
    # independent evaluation of the same law
    p = CHIP1H_SD
    ref = p.gamma0 + p.gamma_sd / 2 * (1 - math.exp(-p.rate_r * 1e-3)) + p.gamma_tls * math.log(10)
    assert val == pytest.approx(ref, rel=1e-14)


def test_chip3h_paramagnetic_asymptote():
    p = CHIP3H_SD
    assert p.gamma0 + p.gamma_sd / 2 == pytest.approx(27.6e3, abs=1e-9)
    assert an.sd_bath_only(1e3, p.gamma0, p.gamma_sd, p.rate_r) == pytest.approx(27.6e3, rel=1e-15)


def test_effective_linewidth_below_t0():
    with pytest.raises(an.DomainError, match="t0"):
        an.effective_linewidth(CHIP3H_SD, 1e-5)


@given(st.floats(1e-4, 10.0), st.floats(1e-4, 10.0))
def test_effective_linewidth_nondecreasing(a, b):
    lo, hi = sorted((a, b))
    assert an.effective_linewidth(CHIP1H_SD, hi) >= an.effective_linewidth(CHIP1H_SD, lo) - 1e-9


def test_submodels_are_special_cases():
    t = np.geomspace(1e-4, 1, 9)
    p = CHIP3H_SD
    full = an.sd_full(t, p.gamma0, p.gamma_sd, p.rate_r, 0.0, p.t0)
    assert np.allclose(full, an.sd_bath_only(t, p.gamma0, p.gamma_sd, p.rate_r), rtol=1e-15)
    full = an.sd_full(t, p.gamma0, 0.0, p.rate_r, p.gamma_tls, p.t0)
    assert np.allclose(full, an.sd_tls_only(t, p.gamma0, p.gamma_tls, p.t0), rtol=1e-15)


# Stark amplitude against an independent adaptive integrator

def _scipy_amp(area, k, kernel):
    w = (lambda t: np.sin(t) ** 4) if kernel == "sin4" else (lambda t: np.cos(t) ** 4)
    norm = integrate.quad(w, 0, math.pi / 2)[0]
    f = lambda t: math.cos(2 * math.pi * k * area * math.cos(t)) * w(t)  # noqa: E731
    return integrate.quad(f, 0, math.pi / 2, limit=500, epsabs=1e-13)[0] / norm


@pytest.mark.parametrize("kernel", ["sin4", "cos4"])
@pytest.mark.parametrize("area", [0.0, 1e-4, 1.2e-3, 5e-3, 3e-2])
def test_stark_amplitude_vs_scipy(kernel, area):
    assert an.stark_echo_amplitude(area, STARK_K, kernel) == pytest.approx(
        _scipy_amp(area, STARK_K, kernel), abs=1e-8)


def test_stark_ninety_percent_extinction():
    area = to_si(120.0, "V*us/cm")
    amp = an.stark_echo_amplitude(area, to_si(5.8, "kHz/(V/cm)"), "sin4")
    assert 0.05 <= amp <= 0.15


def test_cos4_first_zero_at_500_V_per_cm():
    t = an.stark_extinction_time(to_si(500.0, "V/cm"), STARK_K, "cos4")
    assert t == pytest.approx(95e-9, rel=0.2)
    assert abs(an.stark_echo_amplitude(to_si(500.0, "V/cm") * t, STARK_K, "cos4")) < 1e-2


@given(st.floats(0, 0.05))
def test_stark_amplitude_bounded(area):
    assert -1.0 <= an.stark_echo_amplitude(area, STARK_K, "sin4") <= 1.0


def test_stark_dk_matches_finite_difference():
    area = np.array([1e-4, 1e-3, 4e-3])
    d = an.stark_amplitude_dk(area, STARK_K, "sin4", 256)
    h = 1e-3
    fd = (an.stark_echo_amplitude(area, STARK_K + h, "sin4", order=256)
          - an.stark_echo_amplitude(area, STARK_K - h, "sin4", order=256)) / (2 * h)
    assert np.allclose(d, fd, rtol=1e-6, atol=1e-12)


def test_extinction_unreachable():
    with pytest.raises(an.ExtinctionUnreachable) as err:
        an.stark_extinction_time(1.0, STARK_K, "sin4", max_area=1e-5)
    assert err.value.min_abs_amplitude > 0.9


def test_recovery_and_lorentzian():
    assert an.double_exp_recovery(0.0, 1.0, 0.5, 9.4e-3, 0.5, 0.53) == 0.0
    assert an.double_exp_recovery(1e6, 1.0, 0.5, 9.4e-3, 0.5, 0.53) == 1.0
    assert an.lorentzian(1532.8e-9 + 0.14e-9, 1532.8e-9, 0.28e-9, 2.0, 1.0) == pytest.approx(2.0)
    with pytest.raises(an.DomainError):
        an.lorentzian(0.0, 0.0, -1.0, 1.0)


def test_od_bookkeeping():
    od = an.od_from_efficiency(1.5e-5)
    assert od == pytest.approx(0.0155, abs=0.001)
    eff = an.echo_efficiency_from_od(od)
    assert float(eff) == pytest.approx(1.5e-5, rel=1e-12)
    assert eff.ratio == pytest.approx(16.0, rel=1e-3)
    assert an.od_from_efficiency(1.5e-5, "exact") == pytest.approx(math.sqrt(1.5e-5), rel=1e-5)


@given(st.floats(0, 0.99))
def test_od_efficiency_round_trip(eta):
    for form in an.EfficiencyForm:
        od = an.od_from_efficiency(eta, form)
        assert an.echo_efficiency_from_od(od).value(form) == pytest.approx(eta, rel=1e-9, abs=1e-300)


def test_dephasing_params_validation():
    with pytest.raises(ValueError):
        an.effective_linewidth(DephasingParams(-1.0, 0.0, 1.0, 0.0, 1e-4), 1e-3)
