"""Discrete-time transient impact model with a self-exciting order flow.

    v_t = alpha V 1{1 <= t <= T} + lam * sum_{i=1}^{t} d_i v_{t-i}
    p_t = sum_{i=1}^{t} g_i [v_{t-i} + (1 - alpha) V 1{1 <= t-i <= T}]

with full-history sums. Kernel coefficients are ``d_i = D(i dt) dt`` and
``g_i = G(i dt) dt``; at ``dt = 1`` these are the usual ``e^{-beta i}`` or
``i^{-eta}`` sequences.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.signal import convolve

from .continuous import ContinuousParams, price_closed, volume_closed
from .irf import Trajectory, write_trajectory_csv

CRITICALITY_TOL = 1e-9


class Family(enum.Enum):
    EXPONENTIAL = "Exponential"
    POWER_LAW = "PowerLaw"


class Role(enum.Enum):
    VOLUME_D = "VolumeD"
    PRICE_G = "PriceG"


class CriticalityError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    family: Family
    param: float
    role: Role = Role.VOLUME_D

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "role", Role(self.role))
        if not self.param > 0:
            raise ValueError("kernel parameter must be > 0")
        if self.family is Family.POWER_LAW and self.role is Role.VOLUME_D and not self.param > 1:
            raise ValueError(f"power-law volume kernel needs exponent > 1 to be summable, got {self.param}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family is Family.EXPONENTIAL:
            return np.exp(-self.param * t)
        with np.errstate(divide="ignore"):
            return t ** -self.param

    def coefficients(self, n: int, dt: float = 1.0) -> np.ndarray:
        """``k_i = K(i dt) dt`` for ``i = 1..n``."""
        return self(dt * np.arange(1, n + 1)) * dt

    def total(self, dt: float = 1.0) -> float:
        """Analytic ``sum_{i>=1} K(i dt) dt``."""
        if self.family is Family.EXPONENTIAL:
            return dt / math.expm1(self.param * dt)
        if self.param <= 1:
            return math.inf
        return dt ** (1 - self.param) * zeta(self.param)


@dataclass(frozen=True)
class DiscreteParams:
    kernel_d: KernelSpec
    kernel_g: KernelSpec
    lam: float
    alpha: float
    V: float
    T: int
    horizon: int
    dt: float = 1.0
    noise_std: tuple[float, float] = (0.0, 0.0)  # (price, volume)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 1):
            raise ValueError("T must be a positive integer")
        if self.horizon < self.T:
            raise ValueError("horizon must be >= T")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        ns = tuple(float(x) for x in self.noise_std)
        if len(ns) != 2 or min(ns) < 0:
            raise ValueError("noise_std must be two non-negative numbers")
        object.__setattr__(self, "noise_std", ns)


# zeta ---------------------------------------------------------------------------

# B_{2k} / (2k)! for k = 1..8
_EM_COEFFS = (1 / 12, -1 / 720, 1 / 30240, -1 / 1209600, 1 / 47900160,
              -691 / 1307674368000, 1 / 74724249600, -3617 / 10670622842880000)


def zeta(s: float, n_direct: int = 30) -> float:
    """Riemann zeta for real ``s > 1``.

    Direct sum of the first ``n_direct - 1`` terms plus an Euler-Maclaurin
    tail with eight Bernoulli corrections, accurate to about 1e-15 relative.
    """
    if not s > 1:
        raise ValueError(f"zeta diverges for s <= 1 (got {s})")
    N = n_direct
    head = math.fsum(n ** -s for n in range(1, N))
    tail = N ** (1 - s) / (s - 1) + 0.5 * N ** -s
    rising = s  # s (s+1) ... (s+2k-2)
    for k, c in enumerate(_EM_COEFFS, start=1):
        tail += c * rising * N ** (-s - 2 * k + 1)
        rising *= (s + 2 * k - 1) * (s + 2 * k)
    return head + tail


def critical_lambda(kernel_d: KernelSpec, dt: float = 1.0) -> float:
    """Coupling ``lam*`` with ``lam* sum_i d_i = 1``.

    For ``d_i = e^{-beta i}`` the geometric series gives ``e^beta - 1``; for
    ``d_i = i^{-eta}`` it is ``1 / zeta(eta)``.
    """
    if Role(kernel_d.role) is not Role.VOLUME_D:
        raise ValueError("critical_lambda needs a volume kernel")
    if kernel_d.family is Family.EXPONENTIAL and dt == 1.0:
        return math.expm1(kernel_d.param)
    return 1.0 / kernel_d.total(dt)


def criticality_margin(p: DiscreteParams) -> float:
    """``1 - lam sum_i d_i``; zero or negative means critical or explosive."""
    return 1.0 - p.lam * p.kernel_d.total(p.dt)


# simulation ---------------------------------------------------------------------

def _volume_paths(d: np.ndarray, lam: float, src: np.ndarray, eps: np.ndarray | None,
                  exp_rate: float | None, dt: float, d0: float = 0.0,
                  exclude_origin: bool = False) -> np.ndarray:
    """Run ``v_t = src_t + eps_t + lam (d0 v_t + sum_{i>=1} d_i v_{t-i})`` for a batch of paths.

    ``src`` has shape (n+1,), ``eps`` (paths, n+1) or None. When ``exp_rate``
    is set, ``d_i = e^{-rate i dt} dt`` and the lag sum is updated in O(1).
    ``exclude_origin`` drops ``v_0`` from every lag sum and takes ``v_0 = src_0``.
    """
    n = len(src) - 1
    paths = 1 if eps is None else eps.shape[0]
    v = np.zeros((paths, n + 1))
    drive = np.broadcast_to(src, (paths, n + 1)).copy()
    if eps is not None:
        drive += eps
    scale = 1.0 / (1.0 - lam * d0)
    v[:, 0] = drive[:, 0] if exclude_origin else drive[:, 0] * scale
    hist = v.copy()  # what the lag sums see
    if exclude_origin:
        hist[:, 0] = 0.0
    if exp_rate is not None:
        r = math.exp(-exp_rate * dt)
        acc = np.zeros(paths)
        for t in range(1, n + 1):
            acc = r * (acc + dt * hist[:, t - 1])
            v[:, t] = hist[:, t] = (drive[:, t] + lam * acc) * scale
        return v
    drev = d[::-1]  # drev[n-i] = d_i
    for t in range(1, n + 1):
        v[:, t] = hist[:, t] = (drive[:, t] + lam * (hist[:, :t] @ drev[n - t:])) * scale
    return v


def _lagged_conv(g: np.ndarray, x: np.ndarray, g0: float = 0.0) -> np.ndarray:
    """``g0 x_t + sum_{i=1}^{t} g_i x_{t-i}`` along the last axis."""
    n = x.shape[-1] - 1
    kern = np.concatenate([[g0], g[:n]])
    if x.ndim == 1:
        return convolve(x, kern)[: n + 1]
    return np.stack([convolve(row, kern)[: n + 1] for row in x])


def _source(p: DiscreteParams) -> np.ndarray:
    t = np.arange(p.horizon + 1)
    return ((t >= 1) & (t <= p.T)).astype(float)


def _check_criticality(p: DiscreteParams):
    margin = criticality_margin(p)
    if margin < -CRITICALITY_TOL:
        raise CriticalityError(
            f"lam * sum(d) = {1 - margin:.12g} exceeds 1: the order flow explodes "
            f"(critical lam = {critical_lambda(p.kernel_d, p.dt):.12g})"
        )


def _noise(p: DiscreteParams, path_ids: Sequence[int]) -> tuple[np.ndarray | None, np.ndarray | None]:
    sp, sv = p.noise_std
    if sp == 0 and sv == 0:
        return None, None
    n = p.horizon + 1
    ep = np.empty((len(path_ids), n))
    ev = np.empty((len(path_ids), n))
    for row, k in enumerate(path_ids):
        rng = path_rng(p.seed, k)
        ev[row] = rng.normal(0.0, sv, n) if sv > 0 else 0.0
        ep[row] = rng.normal(0.0, sp, n) if sp > 0 else 0.0
    ev[:, 0] = 0.0  # the system starts at rest
    ep[:, 0] = 0.0
    return ep, ev


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo path, derived by hashing (seed, path_index)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(path_index)]))


def _simulate_batch(p: DiscreteParams, path_ids: Sequence[int] | None) -> tuple[np.ndarray, np.ndarray]:
    n = p.horizon
    d = p.kernel_d.coefficients(n, p.dt)
    g = p.kernel_g.coefficients(n, p.dt)
    src = _source(p)
    ep, ev = _noise(p, path_ids) if path_ids is not None else (None, None)
    rate = p.kernel_d.param if p.kernel_d.family is Family.EXPONENTIAL else None
    v = _volume_paths(d, p.lam, p.alpha * p.V * src, ev, rate, p.dt)
    price = _lagged_conv(g, v + (1 - p.alpha) * p.V * src)
    if ep is not None:
        price = price + ep
    return price, v


def simulate(p: DiscreteParams, path_index: int = 0) -> Trajectory:
    """One path of the model (the deterministic skeleton when noise is off).

    Raises CriticalityError when ``lam sum d > 1 + 1e-9``.
    """
    _check_criticality(p)
    noisy = any(p.noise_std)
    price, v = _simulate_batch(p, [path_index] if noisy else None)
    return Trajectory(np.arange(p.horizon + 1), price[0], v[0], p)


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    mean: Trajectory
    price_se: np.ndarray
    volume_se: np.ndarray
    n_paths: int


def _mc_chunk(args):
    p, ids = args
    price, v = _simulate_batch(p, ids)
    return price.sum(0), (price**2).sum(0), v.sum(0), (v**2).sum(0)


def monte_carlo(p: DiscreteParams, n_paths: int, workers: int = 1, chunk: int = 1000) -> MonteCarloResult:
    """Average ``n_paths`` noisy paths; path ``k`` uses :func:`path_rng` (seed, k).

    The result does not depend on ``workers`` or ``chunk`` beyond float
    summation order.
    """
    _check_criticality(p)
    if n_paths < 2:
        raise ValueError("need at least two paths")
    jobs = [(p, list(range(a, min(a + chunk, n_paths)))) for a in range(0, n_paths, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_mc_chunk, jobs))
    else:
        parts = [_mc_chunk(j) for j in jobs]
    sp, sp2, sv, sv2 = (np.sum([x[i] for x in parts], axis=0) for i in range(4))
    mp, mv = sp / n_paths, sv / n_paths
    varp = np.maximum(sp2 / n_paths - mp**2, 0) * n_paths / (n_paths - 1)
    varv = np.maximum(sv2 / n_paths - mv**2, 0) * n_paths / (n_paths - 1)
    mean = Trajectory(np.arange(p.horizon + 1), mp, mv, p)
    return MonteCarloResult(mean, np.sqrt(varp / n_paths), np.sqrt(varv / n_paths), n_paths)


# continuum limit ----------------------------------------------------------------

class ConvergenceRow(NamedTuple):
    dt: float
    max_error: float
    volume_error: float
    price_error: float


def discretize(pc: ContinuousParams, dt: float, t_max: float, endpoint: str = "left") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Riemann-sum discretization of the continuous model on ``t_n = n dt``.

    ``endpoint='left'`` evaluates each subinterval at its start, which gives
    the transient-impact lag structure (sums over ``i = 1..n``).
    ``endpoint='right'`` evaluates at the end, which adds the contemporaneous
    ``i = 0`` term of the SVAR convention. The source is on for ``t_n < T``.
    Returns (t, volume, price).
    """
    n = int(round(t_max / dt))
    t = dt * np.arange(n + 1)
    src = (t < pc.T - 0.5 * dt).astype(float)
    kd = KernelSpec(Family.EXPONENTIAL, pc.beta, Role.VOLUME_D)
    kg = KernelSpec(Family.EXPONENTIAL, pc.rho, Role.PRICE_G)
    if endpoint == "left":
        v = _volume_paths(kd.coefficients(n, dt), pc.lam, pc.alpha * pc.V * src, None, pc.beta, dt)[0]
        price = _lagged_conv(kg.coefficients(n, dt), v + (1 - pc.alpha) * pc.V * src)
    elif endpoint == "right":
        # sum over k = 1..n of K(t_n - t_k) x_k dt: lags 0..n-1 with weights K(i dt) dt
        d = kd(dt * np.arange(n + 1)) * dt
        g = kg(dt * np.arange(n + 1)) * dt
        v = _volume_paths(d[1:], pc.lam, pc.alpha * pc.V * src, None, pc.beta, dt,
                          d0=d[0], exclude_origin=True)[0]
        x = v + (1 - pc.alpha) * pc.V * src
        price = _lagged_conv(g[1:], x, g0=g[0]) - g * x[0]  # drop the k = 0 term
    else:
        raise ValueError("endpoint must be 'left' or 'right'")
    return t, v, price


def continuum_convergence(p_cont: ContinuousParams, dt_list: Sequence[float],
                          endpoint: str = "left") -> list[ConvergenceRow]:
    """Max-abs error of the discretized model against the closed forms on ``[0, 2T]``."""
    rows = []
    t_max = 2 * p_cont.T
    for dt in dt_list:
        t, v, price = discretize(p_cont, dt, t_max, endpoint)
        ev = float(np.max(np.abs(v - volume_closed(p_cont, t))))
        ep = float(np.max(np.abs(price - price_closed(p_cont, t))))
        rows.append(ConvergenceRow(float(dt), max(ev, ep), ev, ep))
    return rows


def write_discrete_csv(traj: Trajectory, path, metadata: dict | None = None) -> None:
    meta = {"model": "mtim-discrete"}
    p = traj.meta
    if isinstance(p, DiscreteParams):
        meta.update(T=p.T, alpha=repr(p.alpha), V=repr(p.V), lam=repr(p.lam), dt=repr(p.dt),
                    kernel_d=f"{p.kernel_d.family.value}:{p.kernel_d.param!r}",
                    kernel_g=f"{p.kernel_g.family.value}:{p.kernel_g.param!r}", seed=p.seed)
    meta.update(metadata or {})
    write_trajectory_csv(traj, path, meta)
