"""Impulse responses and expected metaorder price trajectories for linear models.

A metaorder adds ``child_size`` to the order flow at trades ``t = 1..T``.
With the pre-history averaged out (state zero at ``t = 0``) the expected
state obeys ``z_t = Gamma z_{t-1} + child_size * e2`` during execution and
``z_t = Gamma z_{t-1}`` afterwards; the price is the cumulative sum of the
expected price changes, normalised to 0 at ``k = 0``.

Two engines compute the same path: :func:`trajectory_closed` evaluates the
closed-form sums through O(p) solves against ``I - Gamma`` plus vector
propagation, and :func:`trajectory_iter` runs the lag recursion directly
on the model coefficients.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

from .csvio import fmt, write_csv
from .linmodels import CompanionSystem, LinearModel, STATIONARITY_EPS


class Kappa(enum.Enum):
    VOLUME_COUPLED = 1  # child orders feed the volume autoregression
    PRICE_ONLY = 0  # child orders hit the price equation only


class NonStationaryError(ValueError):
    pass


@dataclass(frozen=True)
class MetaorderSpec:
    child_size: float
    duration_T: int
    horizon: int
    kappa: Kappa = Kappa.VOLUME_COUPLED

    def __post_init__(self):
        object.__setattr__(self, "kappa", Kappa(self.kappa))
        if self.child_size == 0:
            raise ValueError("child_size must be nonzero")
        if not 1 <= self.duration_T <= self.horizon:
            raise ValueError("need 1 <= duration_T <= horizon")


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    price: np.ndarray
    volume: np.ndarray
    meta: Any = None

    def __post_init__(self):
        if not (len(self.times) == len(self.price) == len(self.volume)):
            raise ValueError("trajectory arrays must have equal length")

    @property
    def T(self) -> int:
        return int(self.meta.duration_T if isinstance(self.meta, MetaorderSpec) else self.meta.T)

    @property
    def horizon(self) -> int:
        return int(self.times[-1])


def standard_irf(cs: CompanionSystem, h: int, shock: float = 1.0) -> float:
    """Price-change response ``h`` trades after a single structural volume shock."""
    if h < 0:
        raise ValueError("h must be >= 0")
    x = cs.e2
    for _ in range(h):
        x = cs.matvec(x)
    return float(x[0] * shock)


def _require_stable(cs: CompanionSystem):
    if not cs.spectral_radius < 1 - STATIONARITY_EPS:
        raise NonStationaryError(
            f"spectral radius {cs.spectral_radius:.6g} >= 1: closed form needs (I - Gamma)^-1; "
            "use trajectory_iter instead"
        )


def trajectory_closed(cs: CompanionSystem, meta: MetaorderSpec) -> Trajectory:
    """Closed-form expected trajectory of a volume-coupled metaorder.

    During execution (k <= T)::

        p_k = delta * e1' (I - G)^-1 [k I - G (I - G)^-1 (I - G^k)] e2

    and afterwards ``p_{T+j} = p_T + e1' G (I - G)^-1 (I - G^j) z_T`` with
    ``z_T = delta (I - G)^-1 (I - G^T) e2``. With ``w = (I - G)^-1 e2`` and
    ``u = (I - G)^-1 w`` the execution phase reduces to
    ``delta * (k w_0 - (G u)_0 + (G^{k+1} u)_0)``.
    """
    if meta.kappa is not Kappa.VOLUME_COUPLED:
        raise ValueError("closed form applies to the volume-coupled metaorder; use trajectory_iter")
    _require_stable(cs)
    delta, T, H = meta.child_size, meta.duration_T, meta.horizon
    price = np.zeros(H + 1)
    volume = np.zeros(H + 1)

    w = cs.solve_shifted(cs.e2)
    u = cs.solve_shifted(w)
    x = cs.matvec(u)  # G^{k+1} u
    y = w.copy()  # G^k w
    gu0 = x[0]
    for k in range(T + 1):
        price[k] = k * w[0] - gu0 + x[0]
        volume[k] = w[1] - y[1]
        if k < T:
            x = cs.matvec(x)
            y = cs.matvec(y)
    price[: T + 1] *= delta
    volume[: T + 1] *= delta
    volume[0] = 0.0

    z = delta * (w - y)
    q = cs.matvec(cs.solve_shifted(z))  # G (I - G)^-1 z_T
    x = q.copy()
    for j in range(1, H - T + 1):
        x = cs.matvec(x)
        z = cs.matvec(z)
        price[T + j] = price[T] + q[0] - x[0]
        volume[T + j] = z[1]
    return Trajectory(np.arange(H + 1), price, volume, meta)


def trajectory_iter(model: LinearModel, meta: MetaorderSpec) -> Trajectory:
    """Deterministic-skeleton recursion of the model with the metaorder added."""
    p, delta, T, H = model.p, meta.child_size, meta.duration_T, meta.horizon
    coupled = meta.kappa is Kappa.VOLUME_COUPLED
    # p leading zeros stand for the averaged-out pre-history
    dp = np.zeros(p + H + 1)
    v = np.zeros(p + H + 1)
    a, b1, c, d, b0 = model.a[::-1], model.b[:0:-1], model.c[::-1], model.d[::-1], model.b[0]
    has_dp_lags = model.a.any() or model.c.any()
    for t in range(1, H + 1):
        i = p + t
        src = delta if t <= T else 0.0
        v_lags = v[i - p:i]
        if coupled:
            vt = d @ v_lags + src
            if has_dp_lags:
                vt += c @ dp[i - p:i]
        else:
            vt = src
        dpt = b1 @ v_lags + b0 * vt
        if has_dp_lags:
            dpt += a @ dp[i - p:i]
        v[i] = vt
        dp[i] = dpt
    price = np.concatenate([[0.0], np.cumsum(dp[p + 1:])])
    volume = v[p:].copy()
    return Trajectory(np.arange(H + 1), price, volume, meta)


def concavity_flags(cs: CompanionSystem, meta: MetaorderSpec) -> tuple[np.ndarray, np.ndarray]:
    """Curvature conditions on a buy metaorder's expected price path.

    ``during[k]`` (k = 0..T) is ``e1' G^{k+1} e2 > 0`` and ``after[k]``
    (k = 0..horizon-T-2) is ``e1' G^{k+1} (I - G^T) e2 < 0``. In terms of
    the path, ``during[k]`` holds iff ``p_{k+2} - 2 p_{k+1} + p_k > 0``
    while both neighbours lie inside the execution (k <= T-2), and
    ``after[k]`` holds iff the second difference centred on ``T+k+1`` is
    positive, i.e. the post-execution relaxation is convex there.
    Exact zeros are reported as False.
    """
    _require_stable(cs)
    T, H = meta.duration_T, meta.horizon
    x = cs.e2
    gt = cs.e2
    during = np.zeros(T + 1, dtype=bool)
    for k in range(T + 1):
        x = cs.matvec(x)
        during[k] = x[0] > 0
    for _ in range(T):
        gt = cs.matvec(gt)
    y = cs.e2 - gt
    n_after = max(H - T - 1, 0)
    after = np.zeros(n_after, dtype=bool)
    for k in range(n_after):
        y = cs.matvec(y)
        after[k] = y[0] < 0
    return during, after


@dataclass(frozen=True)
class ImpactMetrics:
    peak: float
    long_term: float
    reversion_ratio: float | None

    def __iter__(self):
        return iter((self.peak, self.long_term, self.reversion_ratio))


def impact_metrics(traj: Trajectory) -> ImpactMetrics:
    """Peak (price at T), long-term (price at horizon) and reversion ratio.

    ``reversion_ratio`` is None when the peak is exactly zero.
    """
    T, H = traj.T, traj.horizon
    if H <= T:
        raise ValueError("impact metrics need horizon > T")
    peak = float(traj.price[T])
    long_term = float(traj.price[H])
    ratio = (peak - long_term) / peak if peak != 0 else None
    return ImpactMetrics(peak, long_term, ratio)


def write_trajectory_csv(traj: Trajectory, path, metadata: dict | None = None) -> None:
    meta = dict(metadata or {})
    if isinstance(traj.meta, MetaorderSpec):
        meta.setdefault("T", traj.meta.duration_T)
        meta.setdefault("delta_v", fmt(traj.meta.child_size))
        meta.setdefault("kappa", traj.meta.kappa.value)
    rows = zip(traj.times.tolist(), traj.price, traj.volume)
    write_csv(path, ("k", "price", "volume"), rows, meta)


def power_law_tim(p: int, d_sum: float = 0.97, d_exponent: float = 0.7,
                  g_exponent: float = 0.5, b0: float = 1.0) -> LinearModel:
    """TIM with calibrated-looking power-law coefficients.

    The price propagator is ``G(l) = b0 (1 + l)^{-g_exponent}``, so
    ``b_0 = b0`` and ``b_i = G(i) - G(i-1)``; the volume autoregression is
    ``d_i`` proportional to ``i^{-d_exponent}`` scaled so that ``sum(d) = d_sum``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    G = b0 * (1.0 + np.arange(p + 1)) ** -g_exponent
    b = np.concatenate([[G[0]], np.diff(G)])
    d = np.arange(1, p + 1, dtype=float) ** -d_exponent
    d *= d_sum / d.sum()
    return LinearModel.tim(b, d)
