import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erecho.core import SweepCurve
from erecho.fitting import (MODELS, FitError, UnknownModel, check_jacobian, fit,
                            fit_echo_decay, fit_linear_broadening, fit_recovery,
                            fit_spectral_diffusion, fit_stark_modulation, fit_submodels,
                            get_model)
from erecho.presets import CHIP1H_SD, CHIP3H_SD, STARK_K

from .conftest import noisy

T0 = 1e-4

# registry id -> (abscissa, true parameters, model options, x unit, y unit)
CASES = {
    "echo_decay": (np.linspace(0.05, 1.0, 20) * 64.1e-6,
                   {"I0": 1.0, "T2": 64.1e-6, "x": 1.0}, {}, "s", "a.u."),
    "spectral_diffusion": (np.geomspace(1e-4, 4e-3, 10),
                           {"gamma0": 6.2e3, "gamma_sd": 42.8e3, "rate_r": 300.0,
                            "gamma_tls": 1.4e3}, {"t0": T0}, "s", "Hz"),
    "sd_tls_only": (np.geomspace(1e-4, 4e-3, 10), {"gamma0": 6.2e3, "gamma_tls": 1.4e3},
                    {"t0": T0}, "s", "Hz"),
    "sd_bath_only": (np.geomspace(1e-4, 4e-3, 10),
                     {"gamma0": 6.2e3, "gamma_sd": 42.8e3, "rate_r": 300.0}, {"t0": T0}, "s", "Hz"),
    "recovery_2exp": (np.geomspace(1e-3, 5.0, 30),
                      {"a_inf": 1.0, "a_short": 0.5, "t1_short": 9.4e-3, "a_long": 0.5,
                       "t1_long": 0.53}, {}, "s", "1"),
    "lorentzian": (np.linspace(1531.8e-9, 1533.8e-9, 41),
                   {"center": 1532.8e-9, "fwhm": 0.28e-9, "amplitude": 1.0, "offset": 0.05},
                   {}, "m", "a.u."),
    "linear_broadening": (np.linspace(0.1, 1.0, 10), {"gamma0p": 30e3, "alpha": 111e3},
                          {}, "K", "Hz"),
    "stark_sin4": (np.linspace(0.0, 0.012, 20), {"k": STARK_K, "a0": 1.0}, {}, "V*s/m", "1"),
    "stark_cos4": (np.linspace(0.0, 0.012, 20), {"k": STARK_K, "a0": 1.0}, {}, "V*s/m", "1"),
}


def _curve(model_id, y=None, sigma=None):
    x, p, opts, xu, yu = CASES[model_id]
    if y is None:
        y = get_model(model_id).evaluate(x, p, **opts)
    return SweepCurve(x, y, sigma=sigma, x_unit=xu, y_unit=yu)


def test_every_model_has_a_case():
    assert set(CASES) == set(MODELS)


@pytest.mark.parametrize("model_id", sorted(CASES))
def test_zero_noise_round_trip(model_id):
    _, truth, opts, _, _ = CASES[model_id]
    res = fit(_curve(model_id), model_id, **opts)
    assert res.converged, res.message
    for name, val in truth.items():
        assert res.params[name] == pytest.approx(val, rel=1e-6, abs=1e-12 * abs(val)), name


@pytest.mark.parametrize("model_id", sorted(CASES))
def test_jacobian_matches_finite_differences(model_id):
    x, truth, opts, _, _ = CASES[model_id]
    assert check_jacobian(model_id, x, truth, **opts) < 1e-6


@pytest.mark.parametrize("model_id", sorted(CASES))
@pytest.mark.parametrize("p_shift", [0.7, 1.3])
def test_jacobian_away_from_truth(model_id, p_shift):
    x, truth, opts, _, _ = CASES[model_id]
    params = {k: v * p_shift if k not in ("x", "center") else v for k, v in truth.items()}
    assert check_jacobian(model_id, x, params, **opts) < 1e-6


@pytest.mark.parametrize("model_id", sorted(CASES))
def test_scale_equivariance(model_id):
    # scaling the ordinate by c scales the amplitude-like parameters by c
    c = 3.7
    spec = get_model(model_id)
    x, truth, opts, _, _ = CASES[model_id]
    curve = _curve(model_id)
    base = fit(curve, model_id, **opts)
    scaled = fit(curve.scaled(c), model_id, **opts)
    for name in spec.param_names:
        factor = c if name in spec.scale_params else 1.0
        assert scaled.params[name] == pytest.approx(factor * base.params[name],
                                                     rel=1e-9, abs=1e-9 * abs(truth[name] or 1)), name


def test_unknown_model_lists_ids():
    with pytest.raises(UnknownModel) as err:
        get_model("nope")
    assert "nope" in str(err.value) and "echo_decay" in str(err.value)


def test_too_few_points():
    x = np.array([1e-3, 2e-3, 3e-3])
    curve = SweepCurve(x, np.ones(3), x_unit="s", y_unit="1")
    with pytest.raises(FitError, match="need at least 6"):
        fit(curve, "recovery_2exp")
    with pytest.raises(FitError, match=">= 5"):
        fit_spectral_diffusion(curve)


def test_nan_index_reported():
    y = np.ones(10)
    y[6] = np.nan
    curve = SweepCurve(np.arange(1.0, 11.0), y, x_unit="K", y_unit="Hz")
    with pytest.raises(FitError, match="index 6"):
        fit(curve, "linear_broadening")


def test_two_point_linear_is_exact():
    curve = SweepCurve(np.array([0.1, 0.5]), np.array([41.1e3, 85.5e3]), x_unit="K", y_unit="Hz")
    res = fit_linear_broadening(curve)
    assert res.params["alpha"] == pytest.approx(111e3, rel=1e-12)
    assert res.params["gamma0p"] == pytest.approx(30e3, rel=1e-12)
    assert all(math.isnan(v) for v in res.stderr.values())


def test_fixed_and_unknown_parameters():
    curve = _curve("echo_decay")
    res = fit(curve, "echo_decay", fixed={"x": 1.0})
    assert res.stderr["x"] == 0.0
    with pytest.raises(FitError, match="no parameter"):
        fit(curve, "echo_decay", fixed={"bogus": 1.0})


def test_free_stretch_exponent():
    x, _, _, xu, yu = CASES["echo_decay"]
    y = get_model("echo_decay").evaluate(x, {"I0": 2.0, "T2": 20e-6, "x": 1.6})
    res = fit_echo_decay(SweepCurve(x, y, x_unit=xu, y_unit=yu), free_x=True)
    assert res.params["x"] == pytest.approx(1.6, rel=1e-6)


def test_fit_result_round_trip():
    from erecho.core import FitResult
    res = fit(_curve("lorentzian"), "lorentzian")
    back = FitResult.from_dict(res.to_dict())
    assert back.params == res.params
    assert np.array_equal(back.covariance, res.covariance)


def test_recovery_reports_short_constant_first():
    x, _, _, xu, yu = CASES["recovery_2exp"]
    y = get_model("recovery_2exp").evaluate(x, {"a_inf": 1.0, "a_short": 0.3, "t1_short": 0.53,
                                                "a_long": 0.7, "t1_long": 9.4e-3})
    res = fit_recovery(SweepCurve(x, y, x_unit=xu, y_unit=yu))
    assert res.params["t1_short"] == pytest.approx(9.4e-3, rel=1e-6)
    assert res.params["a_short"] == pytest.approx(0.7, rel=1e-6)


def test_stark_fit_wrapper_and_kernel_choice():
    curve = _curve("stark_cos4")
    assert fit_stark_modulation(curve, "cos4").params["k"] == pytest.approx(STARK_K, rel=1e-6)
    with pytest.raises(FitError, match=">= 5"):
        fit_stark_modulation(SweepCurve(curve.abscissa[:4], curve.ordinate[:4]))


# noisy recovery at the measured parameter values (seed 0 realisations).
# Synthetic curves carry the generator's own error bars: with multiplicative
# noise an unweighted fit gives miscalibrated intervals.


def _weighted(x, clean, rel=0.05, seed=0, **kw):
    return SweepCurve(x, noisy(clean, rel, seed), sigma=rel * np.abs(clean), **kw)

@pytest.mark.parametrize("t2", [874e-9, 9.7e-6, 64.1e-6])
def test_noisy_echo_decay(t2):
    x = np.linspace(0.05, 1.0, 20) * t2
    clean = get_model("echo_decay").evaluate(x, {"I0": 1.0, "T2": t2, "x": 1.0})
    res = fit_echo_decay(_weighted(x, clean, x_unit="s", y_unit="a.u."))
    assert res.params["T2"] == pytest.approx(t2, rel=0.05)


def test_sparse_long_recovery():
    x = np.geomspace(10e-3, 5.0, 12)
    truth = {"a_inf": 1.0, "a_short": 0.1, "t1_short": 9.4e-3, "a_long": 0.9, "t1_long": 1.63}
    res = fit_recovery(_weighted(x, get_model("recovery_2exp").evaluate(x, truth),
                                 x_unit="s", y_unit="1"))
    assert res.params["t1_long"] == pytest.approx(1.63, rel=0.2)


def test_single_exponential_collapses_one_amplitude():
    x = np.geomspace(1e-3, 5.0, 30)
    y = 1.0 - np.exp(-x / 0.53)
    res = fit_recovery(SweepCurve(x, y, x_unit="s", y_unit="1"))
    amps = sorted([abs(res.params["a_short"]), abs(res.params["a_long"])])
    assert amps[0] < 1e-3 or res.params["t1_short"] == pytest.approx(res.params["t1_long"], rel=1e-3)


def test_lorentzian_symmetry_and_offset():
    x = np.linspace(-1.0, 1.0, 41)
    y = 1.0 / (1.0 + (x / 0.3) ** 2)
    a = fit(SweepCurve(x, y), "lorentzian")
    assert a.params["center"] == pytest.approx(0.0, abs=1e-9)
    b = fit(SweepCurve(x, y + 7.0), "lorentzian")
    assert b.params["fwhm"] == pytest.approx(a.params["fwhm"], rel=1e-8)
    assert b.params["offset"] == pytest.approx(a.params["offset"] + 7.0, rel=1e-8)


def test_noisy_linear_broadening():
    x, truth, _, xu, yu = CASES["linear_broadening"]
    res = fit_linear_broadening(_weighted(x, get_model("linear_broadening").evaluate(x, truth),
                                          x_unit=xu, y_unit=yu))
    assert res.params["alpha"] == pytest.approx(111e3, rel=0.05)


def test_flat_linear_broadening():
    res = fit_linear_broadening(SweepCurve(np.linspace(0.1, 1, 10), np.full(10, 30e3)))
    assert res.params["alpha"] == pytest.approx(0.0, abs=1e-6)


def test_noisy_stark():
    x, truth, _, xu, yu = CASES["stark_sin4"]
    y = get_model("stark_sin4").evaluate(x, truth)
    # additive: a relative error is meaningless at the zero crossings
    y = y + np.random.default_rng(0).normal(0, 0.05, x.size)
    res = fit_stark_modulation(SweepCurve(x, y, sigma=np.full(x.size, 0.05), x_unit=xu, y_unit=yu))
    assert res.params["k"] == pytest.approx(STARK_K, abs=5.0)


def test_stark_area_rescaling():
    curve = _curve("stark_sin4")
    res = fit_stark_modulation(curve.replace(abscissa=curve.abscissa * 2.0))
    assert res.params["k"] == pytest.approx(STARK_K / 2.0, rel=1e-6)


def test_stark_flat_curve():
    res = fit_stark_modulation(SweepCurve(np.linspace(0, 0.012, 10), np.ones(10)))
    assert res.params["k"] == pytest.approx(0.0, abs=1e-3)
    assert res.params["a0"] == pytest.approx(1.0, rel=1e-9)


def test_covariance_coverage():
    # 1 sigma intervals should cover the truth in roughly 68% of trials
    x = np.linspace(0.05, 1.0, 20) * 64.1e-6
    clean = get_model("echo_decay").evaluate(x, {"I0": 1.0, "T2": 64.1e-6, "x": 1.0})
    hits = 0
    for seed in range(100):
        res = fit_echo_decay(_weighted(x, clean, seed=seed, x_unit="s", y_unit="a.u."))
        hits += abs(res.params["T2"] - 64.1e-6) <= res.stderr["T2"]
    assert hits >= 60


# spectral diffusion: compare against an independent optimiser, since the
# per-parameter recovery on noisy data is a statistical question

@pytest.mark.parametrize("seed", range(8))
def test_spectral_diffusion_reaches_global_minimum(seed):
    from scipy.optimize import least_squares

    x = np.geomspace(1e-4, 4e-3, 10)
    sd = CHIP3H_SD
    truth = np.array([sd.gamma0, sd.gamma_sd, sd.rate_r, sd.gamma_tls])
    model = get_model("spectral_diffusion")
    y = noisy(model.evaluate(x, truth, t0=T0), 0.05, seed=seed)
    res = fit_spectral_diffusion(SweepCurve(x, y, x_unit="s", y_unit="Hz"), t0=T0)
    f = lambda q: model.evaluate(x, q, t0=T0) - y  # noqa: E731
    ref = min(least_squares(f, s0, bounds=([0] * 4, [np.inf, np.inf, 1e6, np.inf]),
                            x_scale=truth, xtol=1e-14, ftol=1e-14).cost
              for s0 in (truth, truth * [1, 100, 0.01, 1]))
    assert 0.5 * res.residual_norm ** 2 <= ref * (1 + 1e-6)


def test_chip3h_asymptote_from_noisy_fit():
    x = np.geomspace(1e-4, 4e-3, 10)
    sd = CHIP3H_SD
    clean = get_model("spectral_diffusion").evaluate(
        x, [sd.gamma0, sd.gamma_sd, sd.rate_r, sd.gamma_tls], t0=T0)
    res = fit_spectral_diffusion(_weighted(x, clean, x_unit="s", y_unit="Hz"), t0=T0)
    assert res.converged
    assert res.params["gamma0"] == pytest.approx(6.2e3, rel=0.2)


def test_bath_only_residuals_consistent_with_noise():
    from scipy.stats import chi2

    x = np.geomspace(1e-4, 4e-3, 10)
    sd = CHIP3H_SD
    clean = get_model("sd_bath_only").evaluate(x, [sd.gamma0, sd.gamma_sd, sd.rate_r])
    res = fit(_weighted(x, clean, x_unit="s", y_unit="Hz"), "spectral_diffusion",
              fixed={"gamma_tls": 0.0}, t0=T0)
    # weighted residual norm squared is chi-squared with n - 3 dof
    assert chi2.ppf(0.001, 7) < res.residual_norm ** 2 < chi2.ppf(0.999, 7)


def test_tls_only_data_ties():
    x = np.geomspace(1e-4, 4e-3, 10)
    from scipy.stats import f as f_dist

    clean = get_model("sd_tls_only").evaluate(x, [6.2e3, 1.4e3], t0=T0)
    rep = fit_submodels(_weighted(x, clean, x_unit="s", y_unit="Hz"), t0=T0)
    full, tls = rep.results["spectral_diffusion"], rep.results["sd_tls_only"]
    assert full.residual_norm <= tls.residual_norm * (1 + 1e-9)
    # nested-model F statistic: the two extra parameters buy only noise
    F = ((tls.residual_norm ** 2 - full.residual_norm ** 2) / 2) / (full.residual_norm ** 2 / 6)
    assert F < f_dist.ppf(0.999, 2, 6)


def test_constant_curve_submodels():
    x = np.geomspace(1e-4, 4e-3, 10)
    rep = fit_submodels(SweepCurve(x, np.full(10, 5e3), x_unit="s", y_unit="Hz"), t0=T0)
    for r in rep.results.values():
        assert r.converged
        assert r.params["gamma0"] == pytest.approx(5e3, rel=1e-6)
        for k in ("gamma_sd", "gamma_tls"):
            if k in r.params:
                assert r.params[k] * (0.5 if k == "gamma_sd" else 1.0) < 1e-3


@pytest.mark.parametrize("sd,hi", [(CHIP3H_SD, 4e-3), (CHIP1H_SD, 1e-3)])
def test_submodel_ranking(sd, hi):
    x = np.geomspace(1e-4, hi, 10)
    y = get_model("spectral_diffusion").evaluate(
        x, [sd.gamma0, sd.gamma_sd, sd.rate_r, sd.gamma_tls], t0=T0)
    rep = fit_submodels(SweepCurve(x, y, x_unit="s", y_unit="Hz"), t0=T0)
    assert rep.ranking == ["spectral_diffusion", "sd_bath_only", "sd_tls_only"]
    assert "sd_tls_only" in rep.table()


@settings(max_examples=25)
@given(t2=st.floats(1e-7, 1e-3), i0=st.floats(1e-3, 1e3))
def test_echo_decay_round_trip_property(t2, i0):
    x = np.linspace(0.05, 1.0, 12) * t2
    y = get_model("echo_decay").evaluate(x, {"I0": i0, "T2": t2, "x": 1.0})
    res = fit_echo_decay(SweepCurve(x, y, x_unit="s", y_unit="a.u."))
    assert res.params["T2"] == pytest.approx(t2, rel=1e-6)
    assert res.params["I0"] == pytest.approx(i0, rel=1e-6)
