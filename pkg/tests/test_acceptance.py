"""End-to-end acceptance checks, one test per criterion with its wall-clock budget."""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from impactlab import cli, continuous as ct, diffusivity as df, discrete as ds, irf, linmodels as lm
from impactlab.continuous import ContinuousParams, Side
from impactlab.discrete import Family, KernelSpec, Role
from impactlab.irf import Kappa, MetaorderSpec
from impactlab.linmodels import LinearModel, ModelKind
from impactlab.marketdata import LmfFlowParams


def random_stable(rng, p, kind, radius=0.9):
    a = rng.normal(0, 0.3, p) if kind is ModelKind.HASBROUCK else np.zeros(p)
    c = rng.normal(0, 0.3, p) if kind is ModelKind.HASBROUCK else np.zeros(p)
    b = rng.normal(0, 0.5, p + 1)
    d = rng.normal(0, 0.3, p)
    rad = lm.companion(LinearModel(kind, p, a, b, c, d)).spectral_radius
    if rad > radius:
        w = (radius / rad) ** np.arange(1, p + 1)
        a, c, d = a * w, c * w, d * w
        b = np.concatenate([[b[0]], b[1:] * w])
    return LinearModel(kind, p, a, b, c, d)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start

    @property
    def ok(self):
        return self.elapsed < self.seconds

    def __str__(self):
        return f"{self.elapsed:.1f}s of {self.seconds}s"


# --------------------------------------------------------------------------


def test_criterion_01_closed_form_matches_iteration(verdict):
    rng = np.random.default_rng(101)
    worst = 0.0
    with Budget(10) as b:
        for i in range(50):
            kind = ModelKind.TIM if i % 2 else ModelKind.HASBROUCK
            model = random_stable(rng, int(rng.integers(1, 21)), kind)
            meta = MetaorderSpec(float(rng.uniform(0.5, 2)), int(rng.integers(1, 200)), 500)
            closed = irf.trajectory_closed(lm.companion(model), meta)
            it = irf.trajectory_iter(model, meta)
            worst = max(worst, np.max(np.abs(closed.price - it.price)),
                        np.max(np.abs(closed.volume - it.volume)))
    verdict(1, worst <= 1e-9 and b.ok, f"max |closed - iter| = {worst:.2e} over 50 systems; {b}")


def test_criterion_02_calibrated_reversion(verdict):
    with Budget(60) as b:
        truth = irf.power_law_tim(500)
        model = lm.fit(lm.simulate(truth, 200_000, seed=1, burn=20_000), 500)
        m = {k: irf.impact_metrics(irf.trajectory_iter(model, MetaorderSpec(1.0, 200, 1000, k)))
             for k in (Kappa.PRICE_ONLY, Kappa.VOLUME_COUPLED)}
    ratio = m[Kappa.VOLUME_COUPLED].peak / m[Kappa.PRICE_ONLY].peak
    r0, r1 = m[Kappa.PRICE_ONLY].reversion_ratio, m[Kappa.VOLUME_COUPLED].reversion_ratio
    ok = 1.5 <= ratio <= 3 and r0 > 0.3 and r1 < 0.1 and b.ok
    verdict(2, ok, f"peak ratio {ratio:.2f}, reversion k=0 {r0:.2f}, k=1 {r1:.2f}; {b}")


def _random_continuous(rng):
    while True:
        lam = rng.uniform(0.1, 1.0)
        beta = lam if rng.random() < 0.2 else lam + rng.uniform(0.05, 1.0)
        p = ContinuousParams(rng.uniform(0, 1), rng.uniform(0.5, 2), lam, beta,
                             rng.uniform(0.1, 1.0), round(rng.uniform(1, 10), 1))
        if abs(p.rho - p.k) > 0.01:
            return p


def _rel_err(p, dt):
    v, price = ct.oracle(p, dt, 2 * p.T)
    ev = np.max(np.abs(v.values - ct.volume_closed(p, v.times))) / np.max(np.abs(v.values))
    ep = np.max(np.abs(price.values - ct.price_closed(p, price.times))) / np.max(np.abs(price.values))
    return max(ev, ep) if p.alpha > 0 else ep


VOLUME_ONLY_SET = ContinuousParams(alpha=1.0, V=1.0, lam=0.4, beta=0.8, rho=0.3, T=10.0)
MIXED_SET = ContinuousParams(alpha=0.5, V=1.0, lam=0.3, beta=1.0, rho=0.5, T=5.0)


def test_criterion_03_closed_forms_against_numerics(verdict):
    rng = np.random.default_rng(303)
    with Budget(120) as b:
        cases = [VOLUME_ONLY_SET, MIXED_SET] + [_random_continuous(rng) for _ in range(20)]
        worst = max(_rel_err(p, 1e-3) for p in cases)
        # oracle order from errors at halving steps
        e = [np.max(np.abs(v.values - ct.volume_closed(VOLUME_ONLY_SET, v.times)))
             for v, _ in (ct.oracle(VOLUME_ONLY_SET, dt, 20.0) for dt in (0.04, 0.02, 0.01))]
        oracle_ratios = np.array(e[:-1]) / np.array(e[1:])
        rows = ds.continuum_convergence(VOLUME_ONLY_SET, [0.04, 0.02, 0.01])
        disc = np.array([r.max_error for r in rows])
        disc_ratios = disc[:-1] / disc[1:]
    ok = (worst < 1e-3 and np.all(np.abs(oracle_ratios - 4) < 0.5)
          and np.all(np.abs(disc_ratios - 2) < 0.3) and b.ok)
    verdict(3, ok, f"max rel err {worst:.1e} over {len(cases)} sets; oracle ratios "
                   f"{np.round(oracle_ratios, 2).tolist()}; discrete ratios {np.round(disc_ratios, 2).tolist()}; {b}")


def test_criterion_04_long_time_behaviour(verdict):
    critical = [ContinuousParams(a, 1.0, lb, lb, rho, T)
                for a, lb, rho, T in [(1.0, 0.5, 0.3, 20.0), (0.5, 1.0, 0.2, 10.0), (0.8, 0.3, 0.7, 5.0)]]
    decaying = [ContinuousParams(a, 1.0, lam, beta, rho, T)
                for a, lam, beta, rho, T in [(1.0, 0.4, 0.8, 0.3, 10.0), (0.5, 0.3, 1.0, 0.5, 5.0),
                                             (0.9, 0.5, 0.55, 0.2, 20.0)]]
    worst_crit = worst_decay = 0.0
    with Budget(30) as b:
        for p in critical:
            t = p.T + 50 / p.rho + np.linspace(0, 100 / p.rho, 200)
            lim = ct.asymptote(p)
            worst_crit = max(worst_crit, np.max(np.abs(ct.price_closed(p, t) - lim)) / lim)
        for p in decaying:
            horizon = p.T + 20 / min(p.rho, p.k)
            peak = np.max(np.abs(ct.price_closed(p, np.linspace(0, horizon, 20001))))
            tail = ct.price_closed(p, horizon + np.linspace(0, 2 * (horizon - p.T), 200))
            worst_decay = max(worst_decay, np.max(np.abs(tail)) / peak)
    ok = worst_crit < 0.01 and worst_decay < 1e-3 and b.ok
    verdict(4, ok, f"critical asymptote rel gap {worst_crit:.1e}; decayed |p|/peak {worst_decay:.1e}; {b}")


def _second_diff(p, t0, h=1e-3):
    x = ct.price_closed(p, t0 + h * np.arange(3))
    return (x[2] - 2 * x[1] + x[0]) / h**2


def test_criterion_05_concavity_regimes(verdict):
    bad = []
    with Budget(10) as b:
        lam, beta = 1.0, 2.0
        for rho in (0.35, 0.55, 0.75):
            for alpha in (0.2, 0.5, 0.8):
                p = ContinuousParams(alpha, 1.0, lam, beta, rho, 200.0)
                expect = np.sign(alpha * lam - rho)
                start = ct.small_time_quadratic(p, Side.START).quadratic
                after = ct.small_time_quadratic(p, Side.AFTER_END).quadratic
                if not (np.sign(start) == expect == np.sign(_second_diff(p, 0.0))):
                    bad.append(("start", alpha, rho, start))
                if not (np.sign(after) == -expect == np.sign(_second_diff(p, p.T))):
                    bad.append(("after", alpha, rho, after))
        # inertia on the critical branch: post-T rise iff alpha > rho / beta
        beta = 0.5
        for rho in (0.2, 0.3, 0.4):
            for alpha in (0.3, 0.7, 0.95):
                p = ContinuousParams(alpha, 1.0, beta, beta, rho, 50.0)
                t = p.T + np.linspace(1e-3, 50 / rho, 4000)
                rises = np.max(ct.price_closed(p, t)) > ct.price_closed(p, p.T)
                if rises != (alpha > rho / beta) or rises != (ct.peak_gap_critical(p) < 0):
                    bad.append(("inertia", alpha, rho, rises))
    verdict(5, not bad and b.ok, f"18 regime checks, mismatches {bad}; {b}")


def test_criterion_06_concavity_flags(verdict):
    rng = np.random.default_rng(606)
    mismatches = compared = 0
    with Budget(30) as b:
        for i in range(50):
            kind = ModelKind.TIM if i % 2 else ModelKind.HASBROUCK
            model = random_stable(rng, int(rng.integers(1, 11)), kind)
            T, H = int(rng.integers(3, 40)), 120
            meta = MetaorderSpec(1.0, T, H)
            cs = lm.companion(model)
            during, after = irf.concavity_flags(cs, meta)
            d2 = np.diff(irf.trajectory_closed(cs, meta).price, 2)
            # during[k] <-> d2 centred on k+1 for k <= T-2; after[k] <-> d2 centred on T+k+1
            flags = np.concatenate([during[: T - 1], after[: H - T - 1]])
            d2 = np.concatenate([d2[: T - 1], d2[T: H - 1]])
            resolved = np.abs(d2) > 1e-12  # smaller second differences are roundoff, sign undefined
            compared += resolved.sum()
            mismatches += np.sum(flags[resolved] != (d2[resolved] > 0))
    verdict(6, mismatches == 0 and b.ok,
            f"{mismatches} mismatches in {compared} resolved second differences on 50 systems; {b}")


def test_criterion_07_criticality(verdict):
    lam_exp = ds.critical_lambda(KernelSpec(Family.EXPONENTIAL, np.log(2)))
    lam_pl = ds.critical_lambda(KernelSpec(Family.POWER_LAW, 2.0))
    p = ds.DiscreteParams(KernelSpec(Family.POWER_LAW, 1.5), KernelSpec(Family.POWER_LAW, 0.25, Role.PRICE_G),
                          0.34, 1.0, 1.0, 40, 400)
    margin = ds.criticality_margin(p)
    try:
        ds.simulate(p.__class__(p.kernel_d, p.kernel_g, 0.4, 1.0, 1.0, 40, 400))
        refused = False
    except ds.CriticalityError:
        refused = True
    ok = (abs(lam_exp - 1) < 1e-9 and abs(lam_pl - 6 / np.pi**2) < 1e-9
          and abs(margin - 0.112) < 1e-3 and refused)
    verdict(7, ok, f"lam_c(exp ln2) {lam_exp:.12f}, lam_c(pl 2) {lam_pl:.12f}, margin {margin:.4f}, "
                   f"supercritical refused {refused}")


def test_criterion_08_long_memory(verdict):
    with Budget(180) as b:
        base = df.StationaryFlowParams((0.5,), 1.0, LmfFlowParams(20, 1.5, 2**18, seed=2), 0.0, 2**18, 2)
        pairs = [df.simulate_stationary_flow(df.path_params(base, k), return_innovations=True) for k in range(8)]
        v, eta = (np.array(x) for x in zip(*pairs))
        gamma, _ = df.long_memory_exponent(np.mean([df.acf(x, 1000) for x in v], axis=0))
        amp = df.empirical_amplification(v, eta)
        h25 = df.price_variance_scaling(v[0], 0.25)
        h0 = df.price_variance_scaling(v[0], 0.0)
    ok = 0.35 <= gamma <= 0.65 and abs(amp / 4 - 1) < 0.25 and abs(h25 - 1) < 0.1 and h0 > 1.2 and b.ok
    verdict(8, ok, f"gamma {gamma:.3f}, amplification {amp:.2f} (theory 4), variance exponent "
                   f"delta=0.25 {h25:.3f}, delta=0 {h0:.3f}; {b}")


CALIBRATION_TRUTHS = {
    2: LinearModel.tim([0.5, 0.2, 0.1], [0.4, 0.2]),
    10: irf.power_law_tim(10, d_sum=0.8),
    100: irf.power_law_tim(100, d_sum=0.8),
}


def test_criterion_09_calibration_recovery(verdict):
    details, ok = [], True
    with Budget(60) as b:
        for p, truth in CALIBRATION_TRUTHS.items():
            fit = lm.fit(lm.simulate(truth, 100_000, seed=p), p)
            z = np.abs(np.concatenate([(fit.b - truth.b) / fit.se["b"], (fit.d - truth.d) / fit.se["d"]]))
            ok &= bool(np.all(z < 3))
            details.append(f"p={p}: max|z| {z.max():.2f}, {np.sum(z >= 3)}/{z.size} beyond 3 SE")
    verdict(9, ok and b.ok, "; ".join(details) + f"; {b}")


CLI_CONFIGS = {
    "continuous": {"format_version": 1, "continuous": {"alpha": [0.0, 1.0], "V": 1.0, "lam": 0.5, "beta": 0.6,
                                                        "rho": 0.3, "T": 10, "t_max": 50, "dt": 0.05}},
    "discrete": {"format_version": 1, "seed": 5, "discrete": {
        "kernel_d": {"family": "Exponential", "param": 0.7}, "kernel_g": {"family": "Exponential", "param": 0.3},
        "lam": 1.0, "alpha": [0.5], "V": 1.0, "T": 20, "horizon": 80,
        "noise_std": [0.5, 0.5], "n_paths": 200}},
}


def _digest(path):
    return {f.relative_to(path).as_posix(): hashlib.sha256(f.read_bytes()).hexdigest()
            for f in sorted(path.rglob("*")) if f.is_file()}


def test_criterion_10_cli_reproducible(verdict, tmp_path):
    sweep = yaml.safe_load((Path(__file__).parents[1] / "configs" / "sweep_powerlaw.yaml").read_text())
    configs = dict(CLI_CONFIGS, sweep=sweep)
    same, codes = True, []
    for name, cfg in configs.items():
        runs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}"
            codes.append(cli.run(cfg, out=out))
            runs.append(_digest(out))
        same &= runs[0] == runs[1] and len(runs[0]) > 1
    ok = same and all(c == 0 for c in codes)
    verdict(10, ok, f"{len(configs)} configs run twice, exit codes {sorted(set(codes))}, byte-identical {same}")
