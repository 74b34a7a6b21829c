import numpy as np
import pytest

from impactlab import diffusivity as df
from impactlab.discrete import Family, KernelSpec, Role
from impactlab.irf import power_law_tim
from impactlab.linmodels import LinearModel
from impactlab.marketdata import LmfFlowParams, lmf_signs

N = 2**18


def flow_params(ar=(0.5,), alpha=1.0, noise=0.0, M=20, a=1.5, horizon=N, seed=0):
    return df.StationaryFlowParams(ar, alpha, LmfFlowParams(M, a, horizon, seed=seed), noise, horizon, seed)


@pytest.fixture(scope="module")
def lmf_ensemble():
    """Eight independent AR(1)-filtered LMF flows and their innovations."""
    p = flow_params(seed=2)
    pairs = [df.simulate_stationary_flow(df.path_params(p, k), return_innovations=True) for k in range(8)]
    v, eta = (np.array(x) for x in zip(*pairs))
    return v, eta


def bartlett_se(phi, k, n):
    """Large-sample standard error of the lag-k sample ACF of an AR(1)."""
    var = ((1 + phi**2) * (1 - phi ** (2 * k)) / (1 - phi**2) - 2 * k * phi ** (2 * k)) / n
    return np.sqrt(var)


# --------------------------------------------------------------------------
# flow simulation


def test_params_validation():
    with pytest.raises(ValueError):
        flow_params(alpha=2.0)
    with pytest.raises(ValueError):
        flow_params(noise=-1.0)
    assert flow_params(ar=0.3).ar_coeffs == (0.3,)


def test_nonstationary_refused():
    with pytest.raises(df.NonStationaryError):
        df.simulate_stationary_flow(flow_params(ar=(1.0,), horizon=100))
    with pytest.raises(df.NonStationaryError):
        df.simulate_stationary_flow(flow_params(ar=(0.6, 0.5), horizon=100))


def test_deterministic():
    p = flow_params(noise=1.0, horizon=5000, seed=9)
    np.testing.assert_array_equal(df.simulate_stationary_flow(p), df.simulate_stationary_flow(p))


def test_filter_matches_direct_recursion():
    p = flow_params(ar=(0.5, -0.2), noise=0.3, horizon=2000, seed=4)
    v, eta = df.simulate_stationary_flow(p, return_innovations=True)
    ref = np.zeros_like(eta)
    for t in range(len(eta)):
        ref[t] = eta[t] + sum(c * ref[t - i] for i, c in enumerate(p.ar_coeffs, 1) if t >= i)
    np.testing.assert_allclose(v, ref, atol=1e-12)


def test_ar1_short_memory():
    n = 100_000
    v = df.simulate_stationary_flow(flow_params(alpha=0.0, noise=1.0, horizon=n, seed=1))
    r = df.acf(v, 20)
    for k in range(1, 21):
        assert abs(r[k] - 0.5**k) < 3 * bartlett_se(0.5, k, n)


def test_long_memory_flow_exponent(lmf_ensemble):
    v, _ = lmf_ensemble
    g, se = df.long_memory_exponent(np.mean([df.acf(x, 1000) for x in v], axis=0))
    assert 0.35 <= g <= 0.65
    assert se > 0


def test_ar_filter_preserves_exponent(lmf_ensemble):
    v, eta = lmf_ensemble
    gv, sv = df.long_memory_exponent(np.mean([df.acf(x, 1000) for x in v], axis=0))
    ge, se = df.long_memory_exponent(np.mean([df.acf(x, 1000) for x in eta], axis=0))
    assert abs(gv - ge) < 2 * np.hypot(sv, se)


def test_ensemble_acf_matches_manual_average():
    p = flow_params(noise=0.5, horizon=20_000, M=5, seed=3)
    manual = np.mean([df.acf(df.simulate_stationary_flow(df.path_params(p, k)), 100) for k in range(3)], axis=0)
    np.testing.assert_allclose(df.ensemble_acf(p, 3, 100), manual)
    with pytest.raises(ValueError):
        df.ensemble_acf(p, 0, 100)


# --------------------------------------------------------------------------
# ACF


def test_acf_matches_direct_sum():
    x = np.random.default_rng(0).standard_normal(500)
    y = x - x.mean()
    ref = np.array([y[: len(y) - k] @ y[k:] for k in range(50)]) / (y @ y)
    np.testing.assert_allclose(df.acf(x, 49), ref, atol=1e-12)


def test_acf_white_signs():
    n = 100_000
    s = lmf_signs(LmfFlowParams(1, 1.5, n, seed=5, max_length=1))
    r = df.acf(s, 100)
    assert r[0] == 1.0
    assert np.mean(np.abs(r[1:]) < 3 / np.sqrt(n)) >= 0.95


def test_acf_ar1_lag_one():
    v = df.simulate_stationary_flow(flow_params(alpha=0.0, noise=1.0, horizon=50_000, seed=7))
    assert df.acf(v, 10)[1] == pytest.approx(0.5, abs=0.02)


@pytest.mark.parametrize("period", [8, 25, 64])
def test_acf_cosine_peak(period):
    x = np.cos(2 * np.pi * np.arange(20_000) / period)
    r = df.acf(x, int(1.5 * period))
    assert np.argmax(r[period // 2:]) + period // 2 == period


def test_acf_errors():
    with pytest.raises(ValueError, match="constant"):
        df.acf(np.ones(100), 10)
    with pytest.raises(ValueError, match="4 \\* max_lag"):
        df.acf(np.arange(40.0), 10)


# --------------------------------------------------------------------------
# exponent fits and spectra


def test_exponent_exact_power_law():
    lags = np.arange(1001, dtype=float)
    lags[0] = 1.0
    g, se = df.long_memory_exponent(lags**-0.5)
    assert g == pytest.approx(0.5, abs=1e-10)
    assert se < 1e-10


def test_exponent_errors_on_white_noise():
    r = df.acf(np.random.default_rng(2).standard_normal(10_000), 1000)
    with pytest.raises(ValueError, match="not positive"):
        df.long_memory_exponent(r)
    with pytest.raises(ValueError, match="decade"):
        df.long_memory_exponent(np.ones(2000), (10, 50))
    with pytest.raises(ValueError):
        df.long_memory_exponent(np.ones(500))


@pytest.mark.parametrize("d, expected", [(0.5, 4.0), (0.3, 1 / 0.49), (0.7, 1 / 0.09)])
def test_amplification_formula(d, expected):
    assert df.amplification([d]) == pytest.approx(expected)


@pytest.mark.parametrize("d", [0.3, 0.5, 0.7])
def test_empirical_amplification(d):
    v, eta = df.simulate_stationary_flow(flow_params(ar=(d,), noise=1.0, seed=11), return_innovations=True)
    assert df.empirical_amplification(v, eta) == pytest.approx(df.amplification([d]), rel=0.25)


def test_spectral_slope_white_noise():
    x = np.random.default_rng(3).standard_normal((8, N))
    assert abs(df.spectral_slope(x)) < 0.1


def test_spectral_slope_long_memory(lmf_ensemble):
    v, _ = lmf_ensemble
    slope, amp = df.spectral_check(v, (0.5,))
    assert slope == pytest.approx(-0.5, abs=0.2)
    assert amp == 4.0


def test_spectral_too_short():
    with pytest.raises(ValueError):
        df.spectral_slope(np.ones(1000))


# --------------------------------------------------------------------------
# price diffusivity


def test_variance_iid_permanent_impact_is_diffusive():
    s = np.random.default_rng(4).choice([-1.0, 1.0], N)
    assert df.price_variance_scaling(s, 0.0) == pytest.approx(1.0, abs=0.1)


def test_variance_iid_tim_kernel_is_diffusive():
    # price changes driven only by the current trade: a random walk
    s = np.random.default_rng(5).choice([-1.0, 1.0], N)
    assert df.price_variance_scaling(s, LinearModel.tim([1.0, 0.0], [0.0])) == pytest.approx(1.0, abs=0.1)
    # a fully transient TIM (G(1) = 0) makes prices stationary instead
    assert df.price_variance_scaling(s, power_law_tim(1, g_exponent=50.0)) < 0.1


def test_variance_long_memory(lmf_ensemble):
    v, _ = lmf_ensemble
    assert df.price_variance_scaling(v[0], 0.25) == pytest.approx(1.0, abs=0.1)
    assert df.price_variance_scaling(v[0], 0.0) > 1.2
    spec = KernelSpec(Family.POWER_LAW, 0.25, Role.PRICE_G)
    assert df.price_variance_scaling(v[0], spec) == pytest.approx(df.price_variance_scaling(v[0], 0.25))


def test_variance_length_check():
    with pytest.raises(ValueError):
        df.price_variance_scaling(np.ones(1000))


def test_report(lmf_ensemble):
    v, _ = lmf_ensemble
    acf_vals = np.mean([df.acf(x, 1000) for x in v], axis=0)
    rep = df.long_memory_report(v[0], (0.5,), acf_vals=acf_vals)
    row = rep.as_row()
    assert set(row) == {"gamma_hat", "gamma_se", "spectral_slope", "variance_exponent", "amplification", "flagged"}
    assert all(np.isfinite(row[k]) for k in row if k != "flagged")
    assert rep.gamma_se >= 0
    assert rep.flagged == (abs(rep.gamma_hat - (1 + rep.spectral_slope)) > 0.2)
