import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ar1_closed_form, psi_by_long_division
from sinkarima.arima import (
    ArimaModel,
    Residuals,
    aic,
    fit_ar,
    fit_ma_on_residuals,
    forecast,
    is_stationary_ar,
    load_model,
    make_invertible,
    psi_weights,
    residual_diagnostics,
    save_model,
    SelectionBounds,
    select_model,
)
from sinkarima.errors import (
    DegenerateVariance,
    HorizonTooLarge,
    InsufficientHistory,
    NotStationarizable,
    SeriesTooShort,
)
from sinkarima.series import acf
from sinkarima.synth import ProcessSpec, random_stable_ar, simulate_arma


def ar1(phi=0.5, mean=0.0, sigma2=1.0):
    return ArimaModel([phi], [], 0, mean, sigma2, 0.0, 100)


class TestAic:
    def test_unit_variance(self):
        assert aic(1.0, 100, 1) == 2.0

    def test_e_variance(self):
        assert aic(math.e, 100, 0) == pytest.approx(100.0)

    def test_formula(self):
        assert aic(0.8, 250, 4) == pytest.approx(250 * math.log(0.8) + 8)

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            aic(0.0, 10, 1)

    @given(st.floats(1e-6, 1e6), st.integers(1, 10_000), st.integers(0, 50))
    def test_monotone(self, s2, n, k):
        assert aic(s2, n, k + 1) > aic(s2, n, k)
        assert aic(s2 * 1.01, n, k) > aic(s2, n, k)


class TestFitAr:
    def test_order_zero(self, ar1_series):
        fit = fit_ar(ar1_series, 0)
        assert len(fit.phi) == 0
        np.testing.assert_allclose(fit.residuals.values, ar1_series - ar1_series.mean())

    def test_order_one_is_lag1_acf(self, ar1_series):
        fit = fit_ar(ar1_series, 1)
        assert fit.phi[0] == pytest.approx(acf(ar1_series, 1).coefficients[1], abs=1e-15)
        assert len(fit.residuals) == len(ar1_series) - 1

    def test_recovers_ar2(self):
        x = simulate_arma(ProcessSpec(phi=(0.5, 0.3), n=2000), 0)
        np.testing.assert_allclose(fit_ar(x, 2).phi, [0.5, 0.3], atol=0.05)

    def test_recovers_ar2_most_seeds(self):
        hits = sum(
            np.all(np.abs(fit_ar(simulate_arma(ProcessSpec(phi=(0.5, 0.3), n=2000), s), 2).phi - [0.5, 0.3]) <= 0.05)
            for s in range(50)
        )
        assert hits >= 45

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            fit_ar([1.0, 2.0, 3.0], 1)


class TestFitMa:
    def test_order_zero(self, rng):
        r = rng.standard_normal(300)
        fit = fit_ma_on_residuals(Residuals(r), 0)
        assert len(fit.theta) == 0
        assert fit.sigma2 == pytest.approx(np.mean(r ** 2))

    def test_recovers_ma1(self):
        x = simulate_arma(ProcessSpec(theta=(0.6,), n=5000), 5)
        assert fit_ma_on_residuals(x - x.mean(), 1).theta[0] == pytest.approx(0.6, abs=0.05)

    def test_white_noise_small_theta(self):
        # each estimate has sd ~ 1/sqrt(n), so about 95% should sit inside 2/sqrt(n)
        inside = []
        for seed in range(40):
            e = np.random.default_rng(seed).standard_normal(2000)
            inside.extend(np.abs(fit_ma_on_residuals(e, 3).theta) < 2 / np.sqrt(2000))
        assert np.mean(inside) >= 0.9

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            fit_ma_on_residuals(np.ones(4), 2)

    def test_reflection_keeps_invertible_root(self):
        assert make_invertible([0.5]) == pytest.approx([0.5])
        # 1 + 2z has root -1/2; reflected polynomial is 1 + z/2
        assert make_invertible([2.0]) == pytest.approx([0.5])

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_reflection_result_is_invertible(self, theta):
        out = make_invertible(theta)
        coeffs = np.concatenate(([1.0], out))
        coeffs = coeffs[: 1 + max([i for i, c in enumerate(coeffs) if abs(c) > 1e-9], default=0)]
        roots = np.roots(coeffs[::-1]) if len(coeffs) > 1 else np.array([])
        assert np.all(np.abs(roots) >= 1 - 1e-6)


class TestSelectModel:
    def test_white_noise(self):
        x = np.random.default_rng(0).standard_normal(2000)
        assert select_model(x).order == (0, 0, 0)

    def test_ar2_never_underfit(self):
        # exact recovery is a Monte-Carlo rate (see the acceptance suite); AIC does not underfit here
        for seed in range(10):
            model = select_model(simulate_arma(ProcessSpec(phi=(0.5, 0.3), n=2000), seed))
            assert model.p >= 2 and model.d == 0
            assert model.diagnostics.passed

    def test_random_walk_with_drift_gets_differenced(self):
        x = np.cumsum(0.2 + np.random.default_rng(2).standard_normal(1000))
        assert select_model(x).d == 1

    def test_not_stationarizable(self):
        x = np.cumsum(np.random.default_rng(2).standard_normal(1000))
        with pytest.raises(NotStationarizable):
            select_model(x, bounds=SelectionBounds(d_max=0))

    def test_too_short(self):
        with pytest.raises(SeriesTooShort):
            select_model(np.random.default_rng(0).standard_normal(150))

    def test_deterministic(self, ar1_series):
        a, b = select_model(ar1_series), select_model(ar1_series)
        assert a.same_fit(b) and a.aic == b.aic

    def test_total_aic_counts_all_parameters(self, ar1_series):
        m = select_model(ar1_series)
        resid_len = len(ar1_series) - m.p
        assert m.aic == pytest.approx(aic(m.sigma2, resid_len, m.p + m.q + 1))

    def test_refine_never_worse(self):
        x = simulate_arma(ProcessSpec(phi=(0.5,), theta=(0.4,), n=1500), 9)
        plain = select_model(x)
        refined = select_model(x, refine=True)
        assert refined.sigma2 <= plain.sigma2


class TestDiagnostics:
    def test_correct_model_passes(self):
        x = simulate_arma(ProcessSpec(phi=(0.6,), n=2000), 4)
        assert residual_diagnostics(ArimaModel([0.6], [], 0, 0.0, 1.0, 0.0, 2000), x).passed

    def test_underfit_fails(self):
        x = simulate_arma(ProcessSpec(phi=(0.9,), n=2000), 4)
        assert not residual_diagnostics(ArimaModel([], [], 0, 0.0, 1.0, 0.0, 2000), x).passed

    def test_white_noise_passes(self, white_noise):
        model = ArimaModel([], [], 0, float(white_noise.mean()), 1.0, 0.0, 1000)
        rep = residual_diagnostics(model, white_noise)
        assert rep.passed and rep.n_lags == 20


class TestForecast:
    def test_ar1_points(self):
        fc = forecast(ar1(), [1.0, 2.0, 8.0], 5)
        np.testing.assert_allclose(fc.points, [4, 2, 1, 0.5, 0.25], atol=1e-12)
        assert fc.origin_index == 2

    def test_ar1_std_errors(self):
        fc = forecast(ar1(), [8.0], 3)
        np.testing.assert_allclose(fc.std_errors, [1, math.sqrt(1.25), math.sqrt(1.3125)], atol=1e-12)

    def test_white_noise_model(self):
        fc = forecast(ArimaModel([], [], 0, 3.5, 4.0, 0.0, 100), [1.0, 9.0], 4)
        np.testing.assert_allclose(fc.points, 3.5)
        np.testing.assert_allclose(fc.std_errors, 2.0)

    @given(st.floats(-0.95, 0.95), st.floats(-50, 50), st.floats(-50, 50), st.integers(1, 25))
    def test_ar1_closed_form(self, phi, mean, last, h):
        fc = forecast(ar1(phi, mean), [mean, last], h)
        np.testing.assert_allclose(fc.points, ar1_closed_form(phi, mean, last, h), atol=1e-9)

    def test_random_walk_integration(self):
        # ARIMA(0,1,0): flat forecast at the last value, variance grows linearly
        model = ArimaModel([], [], 1, 0.0, 2.0, 0.0, 100)
        fc = forecast(model, [3.0, 5.0, 4.0], 4)
        np.testing.assert_allclose(fc.points, 4.0)
        np.testing.assert_allclose(fc.std_errors ** 2, [2, 4, 6, 8])

    def test_drift_integration(self):
        model = ArimaModel([], [], 1, 0.5, 1.0, 0.0, 100)
        fc = forecast(model, [0.0, 1.0, 2.0], 3)
        np.testing.assert_allclose(fc.points, [2.5, 3.0, 3.5])

    def test_ma_uses_last_innovation(self):
        # MA(1) with zero-started filter: e = [2, 1 - 0.5*2] = [2, 0]
        model = ArimaModel([], [0.5], 0, 0.0, 1.0, 0.0, 100)
        fc = forecast(model, [2.0, 1.0], 2)
        np.testing.assert_allclose(fc.points, [0.0, 0.0])
        fc = forecast(model, [2.0, 3.0], 2)
        np.testing.assert_allclose(fc.points, [1.0, 0.0])

    def test_horizon_limits(self):
        with pytest.raises(HorizonTooLarge):
            forecast(ar1(), [1.0], 26)
        with pytest.raises(ValueError):
            forecast(ar1(), [1.0], 0)

    def test_insufficient_history(self):
        model = ArimaModel([0.3, 0.2], [0.1], 1, 0.0, 1.0, 0.0, 100)
        with pytest.raises(InsufficientHistory):
            forecast(model, [1.0, 2.0], 3)

    @given(st.integers(0, 4), st.integers(0, 4), st.integers(0, 2), st.integers(0, 2**32 - 1))
    @settings(max_examples=80, deadline=None)
    def test_psi_matches_long_division(self, p, q, d, seed):
        r = np.random.default_rng(seed)
        phi, theta = random_stable_ar(r, p), r.uniform(-1.5, 1.5, q)
        np.testing.assert_allclose(psi_weights(phi, theta, 25, d),
                                   psi_by_long_division(list(phi), list(theta), 25, d), atol=1e-9, rtol=1e-9)


class TestModelDocument:
    def test_round_trip(self, tmp_path):
        m = ArimaModel([0.5, -0.2], [0.3], 1, 2.0, 0.7, 123.4, 500)
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back.same_fit(m) and back.aic == m.aic and back.n_train == 500

    def test_rejects_other_versions(self):
        doc = ArimaModel([], [], 0, 0.0, 1.0, 0.0, 10).to_document()
        doc["version"] = 99
        with pytest.raises(ValueError):
            ArimaModel.from_document(doc)

    def test_non_stationary_rejected(self):
        assert not is_stationary_ar([1.2])
        with pytest.raises(ValueError):
            ArimaModel([1.2], [], 0, 0.0, 1.0, 0.0, 100)
