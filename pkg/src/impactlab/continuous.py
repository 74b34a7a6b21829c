"""Continuous-time transient impact model with a self-exciting order flow.

The metaorder trades at rate ``V`` on ``[0, T)``. A fraction ``alpha``
enters the order-flow equation

    v(t) = alpha V 1{t < T} + lam * int_0^t D(t - s) v(s) ds,

and the remainder acts on the price directly:

    p(t) = int_0^t G(t - s) [v(s) + (1 - alpha) V 1{s < T}] ds.

With ``D(t) = exp(-beta t)`` and ``G(t) = exp(-rho t)`` both equations are
solved in closed form. :func:`volterra_solve` and :func:`price_integrate`
give an independent numerical route on a uniform grid for any kernels.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .csvio import write_csv

CRITICAL_TOL = 1e-12  # |beta - lam| at or below this uses the critical branch
SINGULAR_TOL = 1e-9  # guard band around rho == beta - lam
BLOWUP = 1e12


class NonStationaryError(ValueError):
    pass


class SingularParameterError(ValueError):
    pass


class InstabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ContinuousParams:
    alpha: float
    V: float
    lam: float
    beta: float
    rho: float
    T: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        for name in ("lam", "beta", "rho", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def critical(self) -> bool:
        return abs(self.beta - self.lam) <= CRITICAL_TOL

    @property
    def stationary(self) -> bool:
        return self.beta >= self.lam or self.critical

    @property
    def k(self) -> float:
        """Net relaxation rate ``beta - lam`` of the order flow (0 on the critical branch)."""
        return 0.0 if self.critical else self.beta - self.lam

    def replace(self, **kw) -> "ContinuousParams":
        d = {f: getattr(self, f) for f in ("alpha", "V", "lam", "beta", "rho", "T")}
        d.update(kw)
        return ContinuousParams(**d)


@dataclass(frozen=True, eq=False)
class GridFunction:
    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        vals = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    def __len__(self):
        return len(self.values)


def _expm1_ratio(k: float, s: np.ndarray) -> np.ndarray:
    """(1 - exp(-k s)) / k, equal to s at k = 0."""
    if k == 0.0:
        return s.copy()
    return -np.expm1(-k * s) / k


def _check_singular(p: ContinuousParams):
    if not p.critical and abs(p.rho - p.k) < SINGULAR_TOL:
        raise SingularParameterError(
            f"rho = beta - lam = {p.rho!r} makes the closed form singular; "
            "perturb rho or use volterra_solve/price_integrate"
        )


def _flow_step_response(p: ContinuousParams, s: np.ndarray) -> np.ndarray:
    """Order-flow response to a unit step switched on at 0: ``e^{-ks} + beta (1 - e^{-ks}) / k``."""
    return np.exp(-p.k * s) + p.beta * _expm1_ratio(p.k, s)


def _price_step_response(p: ContinuousParams, s: np.ndarray) -> np.ndarray:
    """Price response to a unit step routed through the order flow.

    Equals ``A (1 - e^{-rho s}) / rho + B (e^{-k s} - e^{-rho s}) / (rho - k)``
    with ``A = beta / k`` and ``B = 1 - A``, regrouped so that nothing blows
    up as ``k -> 0``; at ``k = 0`` it is the critical-case expression
    ``(1 - e^{-rho s}) / rho + beta (rho s + e^{-rho s} - 1) / rho^2``.
    """
    k, rho = p.k, p.rho
    lo = min(k, rho)
    q = np.exp(-lo * s) * _expm1_ratio(abs(rho - k), s)  # (e^{-ks} - e^{-rho s}) / (rho - k)
    excess = (rho * _expm1_ratio(k, s) + np.expm1(-rho * s)) / (rho * (rho - k))
    return q + p.beta * excess


def _direct_step_response(rho: float, s: np.ndarray) -> np.ndarray:
    return _expm1_ratio(rho, s)


def _split(t, T):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    after = t >= T
    return t, after, np.where(after, t - T, 0.0)


def _out(x, t):
    return float(x) if np.ndim(t) == 0 else x


def volume_closed(p: ContinuousParams, t):
    """Order-flow rate; the source is active on ``[0, T)`` so ``v`` drops by ``alpha V`` at ``T``."""
    t, after, s = _split(t, p.T)
    v = _flow_step_response(p, t) - np.where(after, _flow_step_response(p, s), 0.0)
    return _out(p.alpha * p.V * v, t)


def price_closed(p: ContinuousParams, t):
    """Expected price path of the metaorder, vectorised over ``t``."""
    _check_singular(p)
    t, after, s = _split(t, p.T)
    coupled = _price_step_response(p, t) - np.where(after, _price_step_response(p, s), 0.0)
    direct = _direct_step_response(p.rho, t) - np.where(after, _direct_step_response(p.rho, s), 0.0)
    return _out(p.V * (p.alpha * coupled + (1 - p.alpha) * direct), t)


def asymptote(p: ContinuousParams) -> float:
    """Long-run price level once the metaorder has finished."""
    if not p.stationary:
        raise NonStationaryError("beta < lam: order flow explodes, no finite limit")
    if p.critical:
        return p.alpha * p.V * p.beta * p.T / p.rho
    return 0.0


class Side(enum.Enum):
    START = "Start"
    AFTER_END = "AfterEnd"


@dataclass(frozen=True)
class TaylorCoefficients:
    """Slope and curvature ``p''`` of the price at one side of the execution window.

    ``long_T_assumed`` marks AfterEnd values, which hold only for ``T >> 1/rho``.
    """
    linear: float
    quadratic: float
    long_T_assumed: bool = False

    def __iter__(self):
        return iter((self.linear, self.quadratic))


def small_time_quadratic(p: ContinuousParams, side) -> TaylorCoefficients:
    """Leading slope and curvature of the price near ``t = 0`` or just after ``T``.

    The sign of ``quadratic`` gives convexity (positive) or concavity.
    ``quadratic`` is the second derivative, i.e. twice the coefficient of
    the ``t^2`` term.
    """
    side = Side(side)
    curv = p.V * (p.alpha * p.lam - p.rho)
    if side is Side.START:
        return TaylorCoefficients(p.V, curv)
    return TaylorCoefficients(-p.V, -curv, long_T_assumed=True)


def first_relaxation_level(p: ContinuousParams, t):
    """Price after execution once the ``rho``-exponentials have died out."""
    if not p.stationary:
        raise NonStationaryError("beta < lam")
    _check_singular(p)
    t = np.asarray(t, dtype=float)
    if p.critical:
        return _out(np.full_like(t, p.alpha * p.V * p.beta * p.T / p.rho), t)
    k = p.k
    # (1 - beta/k)(e^{-kt} - e^{-k(t-T)}) written without the 1/k cancellation
    val = (k - p.beta) * np.exp(-k * t) * (-np.expm1(k * p.T) / k) / (p.rho - k)
    return _out(p.alpha * p.V * val, t)


def peak_gap_critical(p: ContinuousParams) -> float:
    """Drop from the price at ``T`` to the asymptote on the critical branch (negative means inertia)."""
    return p.V / p.rho**2 * (p.rho - p.alpha * p.beta)


# numerical route ----------------------------------------------------------------

def _nodes(t_max: float, dt: float, breakpoints: Sequence[float]) -> tuple[int, list[int]]:
    if not dt > 0 or not t_max > 0:
        raise ValueError("dt and t_max must be > 0")
    n = int(round(t_max / dt))
    if abs(n * dt - t_max) > 1e-9 * max(1.0, t_max):
        raise ValueError("t_max must be a multiple of dt")
    idx = []
    for b in breakpoints:
        j = int(round(b / dt))
        if abs(j * dt - b) > 1e-9 * max(1.0, b):
            raise ValueError(f"breakpoint {b} does not fall on a grid node")
        if 0 < j <= n:
            idx.append(j)
    return n, idx


def volterra_solve(kernelD: Callable, lam: float, source: Callable, t_max: float, dt: float,
                   breakpoints: Sequence[float] = ()) -> GridFunction:
    """Trapezoidal solve of ``v(t) = f(t) + lam * int_0^t D(t-s) v(s) ds``.

    ``source`` may jump at the listed ``breakpoints``; each must be a grid
    node. Stored values are right limits, and each interval adjacent to a
    jump uses the appropriate one-sided value, which keeps the scheme
    second order for piecewise-smooth sources.
    """
    n, jumps = _nodes(t_max, dt, breakpoints)
    t = dt * np.arange(n + 1)
    D = np.asarray(kernelD(t), dtype=float) * np.ones(n + 1)
    f = np.asarray(source(t), dtype=float) * np.ones(n + 1)
    c = np.zeros(n + 1)  # left limit minus right limit of v at each node
    for j in jumps:
        c[j] = float(source(np.nextafter(t[j], -np.inf))) - f[j]

    h = lam * dt
    denom = 1.0 - 0.5 * h * D[0]
    if denom == 0:
        raise InstabilityError("1 - lam dt D(0) / 2 vanishes; reduce dt")
    v = np.zeros(n + 1)
    v[0] = f[0]  # empty integral
    w = v.copy()  # trapezoid interior weights v_j + c_j / 2
    w[0] = 0.0
    Drev = D[::-1]
    for i in range(1, n + 1):
        acc = 0.5 * D[i] * v[0] + 0.5 * D[0] * c[i]
        if i > 1:
            acc += np.dot(Drev[n - i + 1:n], w[1:i])
        v[i] = (f[i] + h * acc) / denom
        w[i] = v[i] + 0.5 * c[i]
        if abs(v[i]) > BLOWUP:
            raise InstabilityError(f"|v| exceeded {BLOWUP:g} at t={t[i]:g}")
    return GridFunction(0.0, dt, v)


def price_integrate(kernelG: Callable, v: GridFunction, p: ContinuousParams) -> GridFunction:
    """Trapezoidal ``int_0^t G(t-s) [v(s) + (1-alpha) V 1{s<T}] ds`` on the grid of ``v``.

    ``v`` must start at 0 and have ``T`` on a node; its jump there is taken
    to be ``alpha V``, as produced by the metaorder source.
    """
    if v.t0 != 0.0:
        raise ValueError("grid mismatch: v must start at t = 0")
    dt = v.dt
    jT = int(round(p.T / dt))
    if abs(jT * dt - p.T) > 1e-9 * max(1.0, p.T):
        raise ValueError("grid mismatch: T is not a node of v")
    n = len(v) - 1
    t = v.times
    G = np.asarray(kernelG(t), dtype=float) * np.ones(n + 1)
    g = v.values + (1 - p.alpha) * p.V * (t < p.T - 0.5 * dt)
    c = np.zeros(n + 1)
    if jT <= n:
        c[jT] = p.V  # alpha V from the flow plus (1 - alpha) V direct
    gh = g + 0.5 * c
    conv = fftconvolve(G, gh)[: n + 1]
    out = conv - 0.5 * G * gh[0] - 0.5 * G[0] * gh + 0.25 * G[0] * c
    out[0] = 0.0
    return GridFunction(0.0, dt, dt * out)


def oracle(p: ContinuousParams, dt: float, t_max: float) -> tuple[GridFunction, GridFunction]:
    """Numerical (volume, price) for the exponential kernels of :func:`price_closed`."""
    src = lambda t: p.alpha * p.V * (np.asarray(t) < p.T)
    v = volterra_solve(lambda t: np.exp(-p.beta * t), p.lam, src, t_max, dt, breakpoints=(p.T,))
    return v, price_integrate(lambda t: np.exp(-p.rho * t), v, p)


def write_grid_csv(grid: GridFunction, path, metadata: dict | None = None) -> None:
    write_csv(path, ("t", "value"), zip(grid.times, grid.values), metadata)
