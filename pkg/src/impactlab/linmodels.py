"""OLS estimation of the Hasbrouck SVAR and the transient impact model (TIM).

Both models are written with ``dp`` the price change and ``v`` the signed
volume::

    dp_t = sum_{i=1}^p a_i dp_{t-i} + sum_{i=0}^p b_i v_{t-i} + u1_t
    v_t  = sum_{i=1}^p c_i dp_{t-i} + sum_{i=1}^p d_i v_{t-i} + u2_t

The TIM is the special case ``a = c = 0``.
"""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from numpy.lib.stride_tricks import sliding_window_view
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigs

from .marketdata import InsufficientDataError, RegressionDataset

log = logging.getLogger(__name__)

STATIONARITY_EPS = 1e-10
DENSE_EIG_MAX_P = 64


class ModelKind(enum.Enum):
    HASBROUCK = "Hasbrouck"
    TIM = "TIM"


class RankDeficientError(np.linalg.LinAlgError):
    pass


def _arr(x, n):
    x = np.zeros(n) if x is None else np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"expected {n} coefficients, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class LinearModel:
    kind: ModelKind
    p: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    resid_var_dp: float = 0.0
    resid_var_v: float = 0.0
    n_obs: int = 0
    se: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.p
        if p < 1:
            raise ValueError("lag order p must be >= 1")
        object.__setattr__(self, "a", _arr(self.a, p))
        object.__setattr__(self, "b", _arr(self.b, p + 1))
        object.__setattr__(self, "c", _arr(self.c, p))
        object.__setattr__(self, "d", _arr(self.d, p))
        if self.kind is ModelKind.TIM and (self.a.any() or self.c.any()):
            raise ValueError("a TIM has a = c = 0")

    @classmethod
    def tim(cls, b, d, **kw) -> "LinearModel":
        d = np.asarray(d, dtype=float)
        return cls(ModelKind.TIM, d.size, None, b, None, d, **kw)

    @classmethod
    def hasbrouck(cls, a, b, c, d, **kw) -> "LinearModel":
        a = np.asarray(a, dtype=float)
        return cls(ModelKind.HASBROUCK, a.size, a, b, c, d, **kw)


# --------------------------------------------------------------------------
# Estimation


def _blocks(kind: ModelKind, p: int) -> list[tuple[str, int]]:
    if kind is ModelKind.HASBROUCK:
        return [("dp lags", p), ("v lags", p), ("contemporaneous v", 1)]
    return [("v lags", p), ("contemporaneous v", 1)]


def _block_name(kind, p, col):
    start = 0
    for name, width in _blocks(kind, p):
        if col < start + width:
            return f"{name} (lag {col - start + 1})" if width > 1 else name
        start += width
    return "target"


def _design_chunk(dp, v, p, kind, lo, hi):
    # rows t in [lo, hi); window row k holds series[t - p .. t]
    vw = sliding_window_view(v, p + 1)[lo - p:hi - p]
    cols = [vw[:, -2::-1], vw[:, -1:]]
    if kind is ModelKind.HASBROUCK:
        dw = sliding_window_view(dp, p + 1)[lo - p:hi - p]
        cols.insert(0, dw[:, -2::-1])
    cols.append(dp[lo:hi, None])
    return np.hstack(cols)


def _streaming_r(dp, v, p, kind, chunk):
    """Upper-triangular factor of the full design [regressors | v_t | dp_t]."""
    n = dp.size
    r = None
    for lo in range(p, n, chunk):
        block = _design_chunk(dp, v, p, kind, lo, min(lo + chunk, n))
        stacked = block if r is None else np.vstack([r, block])
        r = sla.qr(stacked, mode="r", overwrite_a=True, check_finite=False)[0]
        r = r[: r.shape[1]]
    return r


def _solve_nested(r, q, n_obs, kind, p):
    """Regress column q on columns [0, q) using the shared R factor."""
    rq = r[:q, :q]
    diag = np.abs(np.diag(rq))
    colnorm = np.linalg.norm(r[:q, :q], axis=0)
    bad = np.flatnonzero(diag <= 1e-10 * np.maximum(colnorm, np.finfo(float).tiny))
    if bad.size:
        raise RankDeficientError(f"design is rank deficient in block: {_block_name(kind, p, bad[0])}")
    coef = sla.solve_triangular(rq, r[:q, q], check_finite=False)
    ssr = float(r[q, q] ** 2)
    dof = n_obs - q
    sigma2 = ssr / dof
    rinv = sla.solve_triangular(rq, np.eye(q), check_finite=False)
    se = np.sqrt(sigma2 * np.sum(rinv**2, axis=1))
    return coef, se, sigma2


def fit(dataset: RegressionDataset, p: int, kind: ModelKind = ModelKind.TIM,
        chunk: int = 4096) -> LinearModel:
    """Per-equation OLS without intercepts.

    The design is assembled chunk by chunk and folded into a running QR
    factor, so memory stays at O(p^2 + chunk * p). Because the columns are
    ordered ``[lags, v_t, dp_t]``, the volume equation and the price equation
    are nested regressions read off the same triangular factor.
    """
    kind = ModelKind(kind)
    if p < 1:
        raise ValueError("p must be >= 1")
    n = len(dataset)
    if n <= 2 * p + 1:
        raise InsufficientDataError(f"need more than 2p+1 = {2 * p + 1} observations, got {n}")
    dp, v = dataset.dp, dataset.v
    n_obs = n - p
    k_lag = 2 * p if kind is ModelKind.HASBROUCK else p
    if n_obs <= k_lag + 1:
        raise InsufficientDataError(f"{n_obs} usable rows for {k_lag + 1} regressors")

    r = _streaming_r(dp, v, p, kind, max(chunk, k_lag + 2))
    veq, veq_se, var_v = _solve_nested(r, k_lag, n_obs, kind, p)
    peq, peq_se, var_dp = _solve_nested(r, k_lag + 1, n_obs, kind, p)

    b = np.concatenate([peq[-1:], peq[k_lag - p:k_lag]])
    se_b = np.concatenate([peq_se[-1:], peq_se[k_lag - p:k_lag]])
    if kind is ModelKind.HASBROUCK:
        a, c, d = peq[:p], veq[:p], veq[p:]
        se = {"a": peq_se[:p], "b": se_b, "c": veq_se[:p], "d": veq_se[p:]}
    else:
        a = c = None
        d = veq
        se = {"a": np.zeros(p), "b": se_b, "c": np.zeros(p), "d": veq_se}
    return LinearModel(kind, p, a, b, c, d, resid_var_dp=var_dp, resid_var_v=var_v,
                       n_obs=n_obs, se=se)


def cumulative_coefficients(model: LinearModel, which: str) -> np.ndarray:
    """Running partial sums; for ``b`` the sum starts at b_1 (b_0 excluded)."""
    if which not in ("a", "b", "c", "d"):
        raise ValueError("which must be one of a, b, c, d")
    x = getattr(model, which)
    return np.cumsum(x[1:] if which == "b" else x)


# --------------------------------------------------------------------------
# Companion form


@dataclass(frozen=True, eq=False)
class CompanionSystem:
    """State-space form z_t = Gamma z_{t-1} + e2 * shock.

    The state is ``z_t = (dp_t, v_t, dp_{t-1}, v_{t-1}, ...)``. Gamma is a
    dense first block row of 2x2 blocks followed by a shift, so it is stored
    as ``blocks`` (shape ``(p, 2, 2)``) and applied in O(p); the dense matrix
    is only built on request.
    """

    blocks: np.ndarray
    b0: float
    spectral_radius: float

    @property
    def p(self) -> int:
        return self.blocks.shape[0]

    @property
    def dim(self) -> int:
        return 2 * self.p

    @property
    def d(self) -> np.ndarray:
        return self.blocks[:, 1, 1]

    @property
    def e1(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    @property
    def e2(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[0], e[1] = self.b0, 1.0
        return e

    @cached_property
    def gamma(self) -> np.ndarray:
        g = np.zeros((self.dim, self.dim))
        g[:2, :] = self.blocks.transpose(1, 0, 2).reshape(2, self.dim)
        g[2:, :-2] = np.eye(self.dim - 2)
        return g

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.empty_like(x)
        y[:2] = np.einsum("ijk,ik->j", self.blocks, x.reshape(self.p, 2))
        y[2:] = x[:-2]
        return y

    def solve_shifted(self, rhs: np.ndarray) -> np.ndarray:
        """Solve (I - Gamma) x = rhs in O(p)."""
        r = rhs.reshape(self.p, 2)
        s = np.zeros_like(r)
        s[1:] = np.cumsum(r[1:], axis=0)
        m = np.eye(2) - self.blocks.sum(axis=0)
        x0 = np.linalg.solve(m, r[0] + np.einsum("ijk,ik->j", self.blocks, s))
        return (x0 + s).reshape(-1)


def _spectral_radius(blocks: np.ndarray) -> float:
    p = blocks.shape[0]
    if not blocks.any():
        return 0.0
    cs = CompanionSystem(blocks, 0.0, np.nan)
    if p <= DENSE_EIG_MAX_P:
        return float(np.max(np.abs(np.linalg.eigvals(cs.gamma))))
    op = LinearOperator((cs.dim, cs.dim), matvec=cs.matvec, dtype=float)
    try:
        vals = eigs(op, k=1, which="LM", tol=1e-12, maxiter=10_000, return_eigenvectors=False,
                    v0=np.ones(cs.dim))
        return float(np.abs(vals).max())
    except ArpackNoConvergence:
        log.warning("ARPACK did not converge; estimating spectral radius by norm growth")
        x = np.random.default_rng(0).standard_normal(cs.dim)
        x /= np.linalg.norm(x)
        logs = []
        for _ in range(10_000):
            x = cs.matvec(x)
            nrm = np.linalg.norm(x)
            if nrm == 0:
                return 0.0
            logs.append(np.log(nrm))
            x /= nrm
        return float(np.exp(np.mean(logs[len(logs) // 2:])))


def companion(model: LinearModel) -> CompanionSystem:
    """Reduced-form companion system with the structural v_t substituted into dp_t."""
    b0 = model.b[0]
    blocks = np.empty((model.p, 2, 2))
    blocks[:, 0, 0] = model.a + b0 * model.c
    blocks[:, 0, 1] = model.b[1:] + b0 * model.d
    blocks[:, 1, 0] = model.c
    blocks[:, 1, 1] = model.d
    return CompanionSystem(blocks, float(b0), _spectral_radius(blocks))


def stationarity_report(cs: CompanionSystem) -> tuple[float, float, bool]:
    rad = cs.spectral_radius
    return rad, float(cs.d.sum()), bool(rad < 1 - STATIONARITY_EPS)


# --------------------------------------------------------------------------
# Simulation


def simulate(model: LinearModel, n: int, *, noise_dp: float = 1.0, noise_v: float = 1.0,
             seed: int = 0, burn: int | None = None) -> RegressionDataset:
    """Draw ``n`` observations from the model with Gaussian structural noise."""
    from scipy.signal import lfilter

    p = model.p
    burn = max(1000, 10 * p) if burn is None else burn
    rng = np.random.default_rng(seed)
    m = n + burn
    u2 = noise_v * rng.standard_normal(m)
    u1 = noise_dp * rng.standard_normal(m)
    if model.kind is ModelKind.TIM:
        v = lfilter([1.0], np.concatenate([[1.0], -model.d]), u2)
        dp = lfilter(model.b, [1.0], v) + u1
    else:
        dp = np.zeros(m)
        v = np.zeros(m)
        a, b, c, d = model.a, model.b, model.c, model.d
        for t in range(m):
            k = min(t, p)
            past_dp = dp[t - k:t][::-1]
            past_v = v[t - k:t][::-1]
            v[t] = c[:k] @ past_dp + d[:k] @ past_v + u2[t]
            dp[t] = a[:k] @ past_dp + b[1:k + 1] @ past_v + b[0] * v[t] + u1[t]
    return RegressionDataset(dp[burn:], v[burn:])


# --------------------------------------------------------------------------
# Coefficient files


def write_model(model: LinearModel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# kind={model.kind.value}\n# p={model.p}\n# n_obs={model.n_obs}\n")
        fh.write(f"# resid_var_dp={model.resid_var_dp!r}\n# resid_var_v={model.resid_var_v!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        cols = ("a", "b", "c", "d")
        w.writerow(("lag",) + cols + tuple(f"se_{c}" for c in cols))
        se = {c: model.se.get(c) for c in cols}
        for lag in range(model.p + 1):
            row = [lag]
            for c in cols:
                arr = getattr(model, c)
                idx = lag if c == "b" else lag - 1
                row.append(repr(float(arr[idx])) if idx >= 0 else "")
            for c in cols:
                arr = se[c]
                idx = lag if c == "b" else lag - 1
                row.append(repr(float(arr[idx])) if arr is not None and idx >= 0 else "")
            w.writerow(row)


def read_model(path) -> LinearModel:
    meta = {}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, val = line[1:].strip().partition("=")
                meta[k.strip()] = val.strip()
            elif line.strip():
                rows.append(line.rstrip("\n"))
    reader = csv.DictReader(rows)
    records = list(reader)
    p = int(meta["p"])
    if len(records) != p + 1:
        raise ValueError(f"{path}: expected {p + 1} coefficient rows, got {len(records)}")

    def col(name, with_lag0):
        vals = [float(r[name]) if r[name] else 0.0 for r in records]
        return np.array(vals if with_lag0 else vals[1:])

    se = {}
    if all(r.get("se_b") for r in records):
        se = {c: col(f"se_{c}", c == "b") for c in "abcd"}
    return LinearModel(
        ModelKind(meta["kind"]), p, col("a", False), col("b", True), col("c", False), col("d", False),
        resid_var_dp=float(meta.get("resid_var_dp", 0.0)),
        resid_var_v=float(meta.get("resid_var_v", 0.0)),
        n_obs=int(meta.get("n_obs", 0)), se=se,
    )
