"""Long memory of order flow and diffusivity of propagator prices.

The market flow is ``v_t = sum_i d_i v_{t-i} + eta_t`` with innovations
``eta_t = eps_t + alpha V_t``, where ``V_t`` is the signed child-order flow
of many overlapping metaorders (LMF superposition). A short AR filter only
rescales the low-frequency spectrum by ``1 / phi(1)^2``, so ``v`` inherits
the ACF exponent of ``V``. Prices built by a power-law propagator
``g_i = i^{-delta}`` stay diffusive when ``delta = (1 - gamma) / 2``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .discrete import Family, KernelSpec
from .linmodels import LinearModel
from .marketdata import LmfFlowParams, lmf_signs

N_SEGMENTS = 8
MIN_SPECTRAL_LENGTH = 2**14
MIN_PRICE_LENGTH = 10**5


class NonStationaryError(ValueError):
    pass


@dataclass(frozen=True)
class StationaryFlowParams:
    ar_coeffs: tuple
    alpha: float
    metaorder_flow: LmfFlowParams
    noise_std: float
    horizon: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(x) for x in np.atleast_1d(self.ar_coeffs)))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class LongMemoryReport:
    gamma_hat: float
    gamma_se: float
    spectral_slope: float
    variance_exponent: float
    amplification: float
    flagged: bool = False  # ACF and spectral exponents disagree by more than 0.2

    def as_row(self) -> dict:
        return dataclasses.asdict(self)


def _ar_radius(d) -> float:
    d = np.asarray(d, dtype=float)
    if d.size == 0 or not d.any():
        return 0.0
    # roots of z^p - d_1 z^{p-1} - ... - d_p are the inverse roots of phi
    return float(np.max(np.abs(np.roots(np.concatenate([[1.0], -d])))))


def simulate_stationary_flow(p: StationaryFlowParams, return_innovations: bool = False):
    """Market flow ``v`` (and optionally ``eta``) for the stationary multi-metaorder model."""
    if _ar_radius(p.ar_coeffs) >= 1.0:
        raise NonStationaryError(f"AR coefficients {p.ar_coeffs} are not stationary")
    eta = np.zeros(p.horizon)
    if p.alpha > 0:
        flow = dataclasses.replace(p.metaorder_flow, horizon=p.horizon)
        eta += p.alpha * flow.child_size * lmf_signs(flow).astype(float)
    if p.noise_std > 0:
        rng = np.random.default_rng(np.random.SeedSequence([p.seed, 1]))
        eta += rng.normal(0.0, p.noise_std, p.horizon)
    v = signal.lfilter([1.0], np.concatenate([[1.0], -np.asarray(p.ar_coeffs)]), eta)
    return (v, eta) if return_innovations else v


def acf(series, max_lag: int) -> np.ndarray:
    """Biased (1/n) sample autocorrelation for lags ``0..max_lag``."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n <= 4 * max_lag:
        raise ValueError(f"series length {n} must exceed 4 * max_lag = {4 * max_lag}")
    x = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    f = np.fft.rfft(x, nfft)
    cov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    if not cov[0] > 1e-300 * n:
        raise ValueError("constant series: autocorrelation undefined")
    return cov / cov[0]


def path_params(p: StationaryFlowParams, index: int) -> StationaryFlowParams:
    """Copy of ``p`` with independent seeds for ensemble member ``index``."""
    s1, s2 = np.random.SeedSequence([p.seed, index]).generate_state(2, np.uint64)
    flow = dataclasses.replace(p.metaorder_flow, seed=int(s1))
    return dataclasses.replace(p, metaorder_flow=flow, seed=int(s2))


def ensemble_acf(p: StationaryFlowParams, n_paths: int, max_lag: int) -> np.ndarray:
    """ACF averaged over ``n_paths`` independent realisations of the flow.

    Averaging keeps the per-path length while cutting the large sampling
    spread of long-memory ACF estimates.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    return np.mean([acf(simulate_stationary_flow(path_params(p, k)), max_lag) for k in range(n_paths)], axis=0)


def long_memory_exponent(acf_vals, fit_range: tuple[int, int] = (10, 1000)) -> tuple[float, float]:
    """Negated log-log slope of the ACF over ``lag_lo..lag_hi`` with its OLS standard error.

    The OLS error ignores the strong correlation between neighbouring ACF
    lags, so it understates the true sampling spread.
    """
    lo, hi = fit_range
    if lo < 1 or hi / lo < 10:
        raise ValueError("fit range must start at lag >= 1 and span at least a decade")
    vals = np.asarray(acf_vals, dtype=float)
    if hi >= len(vals):
        raise ValueError(f"acf has only {len(vals)} lags, need {hi + 1}")
    lags = np.arange(lo, hi + 1)
    r = vals[lo:hi + 1]
    if np.any(r <= 0):
        raise ValueError("ACF is not positive over the fit range; use a longer series or a shorter range")
    fit = stats.linregress(np.log(lags), np.log(r))
    return float(-fit.slope), float(fit.stderr)


def _welch(series):
    """Averaged periodogram; a 2-D input is treated as independent paths and averaged too."""
    x = np.asarray(series, dtype=float)
    n = x.shape[-1]
    if n < MIN_SPECTRAL_LENGTH:
        raise ValueError(f"spectral estimates need at least {MIN_SPECTRAL_LENGTH} points, got {n}")
    # 8 half-overlapping segments cover (8 + 1) / 2 segment lengths
    seg = (2 * n) // (N_SEGMENTS + 1)
    f, pxx = signal.welch(x, window="hann", nperseg=seg, noverlap=seg // 2, detrend="constant")
    return f, pxx if pxx.ndim == 1 else pxx.mean(axis=0)


def spectral_slope(series, bins: tuple[int, int] = (2, 20)) -> float:
    """Log-log slope of the averaged periodogram over frequency bins ``bins`` (inclusive).

    The default skips the first bin, which is biased by the taper and mean
    removal, and spans one decade above it.
    """
    f, pxx = _welch(series)
    lo, hi = bins
    fit = stats.linregress(np.log(f[lo:hi + 1]), np.log(pxx[lo:hi + 1]))
    return float(fit.slope)


def amplification(ar_coeffs) -> float:
    """Low-frequency gain ``1 / phi(1)^2`` of the AR filter."""
    phi1 = 1.0 - float(np.sum(ar_coeffs))
    if phi1 == 0:
        return np.inf
    return 1.0 / phi1**2


def spectral_check(series, ar_coeffs) -> tuple[float, float]:
    """(spectral_slope, amplification) for a filtered flow and its AR coefficients."""
    return spectral_slope(series), amplification(ar_coeffs)


def empirical_amplification(v, eta, max_freq: float = 2e-3) -> float:
    """Ratio of the low-frequency spectra of ``v`` and its innovations ``eta``.

    Both periodograms are averaged over the resolved bins below ``max_freq``
    (cycles per step); the lowest bin is dropped.
    """
    f, pv = _welch(v)
    _, pe = _welch(eta)
    sel = (f > 0) & (f <= max_freq)
    sel[:2] = False
    if not sel.any():
        raise ValueError("no resolved frequencies below max_freq; use a longer series")
    return float(pv[sel].sum() / pe[sel].sum())


def _propagator_prices(flow: np.ndarray, kernel) -> np.ndarray:
    n = len(flow)
    if isinstance(kernel, LinearModel):
        return np.cumsum(signal.lfilter(kernel.b, [1.0], flow))
    if isinstance(kernel, KernelSpec):
        g = kernel.coefficients(n - 1)
    else:
        g = np.arange(1, n, dtype=float) ** -float(kernel)
    # p_t = sum_{i>=1} g_i v_{t-i}
    return np.concatenate([[0.0], signal.fftconvolve(flow, g)[: n - 1]])


def price_variance_scaling(flow, kernel=0.25, taus=None, burn: int | None = None) -> float:
    """Log-log slope of ``Var[p_{t+tau} - p_t]`` against ``tau``.

    ``kernel`` is a propagator exponent ``delta`` (``g_i = i^{-delta}``), a
    :class:`KernelSpec` for the price, or a fitted TIM whose ``b`` acts as
    the lag profile of price changes. A slope of 1 means diffusive prices.
    """
    flow = np.asarray(flow, dtype=float)
    if len(flow) < MIN_PRICE_LENGTH:
        raise ValueError(f"flow must have at least {MIN_PRICE_LENGTH} points")
    if isinstance(kernel, KernelSpec) and kernel.family is not Family.POWER_LAW and kernel.family is not Family.EXPONENTIAL:
        raise ValueError("unsupported kernel")
    if taus is None:
        taus = np.unique(np.round(np.logspace(0, 3, 31)).astype(int))
    taus = np.asarray(taus, dtype=int)
    if burn is None:
        burn = 10 * int(taus.max())
    p = _propagator_prices(flow - flow.mean(), kernel)[burn:]
    if len(p) <= 10 * taus.max():
        raise ValueError("flow too short for the requested lags")
    var = np.array([np.var(p[t:] - p[:-t]) for t in taus])
    return float(np.polyfit(np.log(taus), np.log(var), 1)[0])


def long_memory_report(v, ar_coeffs, delta: float = 0.25, fit_range: tuple[int, int] = (10, 1000),
                       acf_vals=None) -> LongMemoryReport:
    """All exponent-level diagnostics for one simulated flow.

    ``acf_vals`` replaces the single-path ACF, e.g. with :func:`ensemble_acf`.
    """
    if acf_vals is None:
        acf_vals = acf(v, fit_range[1])
    g, se = long_memory_exponent(acf_vals, fit_range)
    slope, amp = spectral_check(v, ar_coeffs)
    var_exp = price_variance_scaling(v, delta)
    return LongMemoryReport(g, se, slope, var_exp, amp, flagged=abs(g - (1 + slope)) > 0.2)
