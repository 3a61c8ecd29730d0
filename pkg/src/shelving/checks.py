"""Oracle-equivalence checks behind ``shelving validate``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import analytic, engine
from .ensemble import (
    EnsembleStats,
    fit_asymptotic_rate,
    oracle_asymptotic_rate,
    run_ensemble,
)
from .errors import ShelvingError
from .model import SystemParams

PASS, FAIL, SKIP = "pass", "fail", "skip"


@dataclass(frozen=True)
class CheckResult:
    name: str
    status: str
    detail: str

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def line(self) -> str:
        return f"{self.status.upper():4s} {self.name}: {self.detail}"


def _guarded(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        ok, detail = fn()
    except ShelvingError as exc:
        return CheckResult(name, FAIL, f"{type(exc).__name__}: {exc}")
    return CheckResult(name, PASS if ok else FAIL, detail)


def check_initial_state(p: SystemParams) -> tuple[bool, str]:
    a = analytic.amplitudes(p, 0.0)
    err = max(abs(a.a0 - 1), abs(a.a1), abs(a.a2))
    return err <= 1e-12, f"max |a(0) - (1,0,0)| = {err:.3g}"


def check_split_additivity(p: SystemParams) -> tuple[bool, str]:
    t = _log_grid(p, 10_000)
    a, s = analytic.amplitudes(p, t), analytic.split(p, t)
    err = max(
        np.max(np.abs(s.rabi_a0 + s.res_a0 - a.a0)),
        np.max(np.abs(s.rabi_a1 + s.res_a1 - a.a1)),
        np.max(np.abs(s.res_a2 - a.a2)),
    )
    return err <= 1e-12, f"max split residual {err:.3g} on 10^4 points"


def check_norm_decay(p: SystemParams) -> tuple[bool, str]:
    t = _log_grid(p, 10_000)
    n = analytic.amplitudes(p, t).norm
    rise = float(np.max(np.diff(n), initial=0.0))
    ok = rise <= 1e-10 and float(n.max()) <= 1 + 1e-9
    return ok, f"max N {n.max():.12g}, largest step increase {rise:.3g}"


def check_hazard_consistency(p: SystemParams) -> tuple[bool, str]:
    delta = 1e-4 / p.strong_decay
    t = np.geomspace(2 * delta, _horizon(p), 20_000)
    n = analytic.amplitudes(p, t).norm
    up = np.log(analytic.amplitudes(p, t + delta).norm)
    down = np.log(analytic.amplitudes(p, t - delta).norm)
    fd = -(up - down) / (2 * delta)
    h = np.asarray(analytic.hazard(p, t))
    keep = n > 1e-8
    rel = np.abs(fd - h)[keep] / np.abs(h[keep])
    worst = float(rel.max())
    return worst <= 1e-6, f"max relative |(-dlnN/dt) - h| = {worst:.3g}"


def check_integrated_hazard(p: SystemParams) -> tuple[bool, str]:
    t_b = 50.0 / p.strong_decay
    quad = analytic.integrated_hazard(p, 0.0, t_b)
    exact = -math.log(float(analytic.amplitudes(p, t_b).norm))
    err = abs(quad - exact) / max(abs(exact), 1e-300)
    return err <= 1e-8, f"adaptive Simpson {quad:.12g} vs -ln N {exact:.12g}"


def check_sampler(p: SystemParams, seed: int, samples: int) -> tuple[bool, str]:
    rng = engine.trajectory_rng(seed, 10**9)
    tau, _, _, _ = engine.draw_reductions(p, rng.random((samples, 2)))
    tau = tau[np.isfinite(tau)]

    def cdf(x: np.ndarray) -> np.ndarray:
        return 1.0 - analytic.amplitudes(p, np.asarray(x)).norm

    ks = float(stats.kstest(tau, cdf).statistic)
    return ks < 0.02, f"first-hit KS vs 1 - N(t) = {ks:.4f} ({tau.size} samples)"


def check_bernoulli(p: SystemParams, seed: int, samples: int) -> tuple[bool, str]:
    rng = engine.trajectory_rng(seed, 10**9 + 1)
    tau, _, _, _ = engine.draw_reductions(p, rng.random((samples, 2)))
    steps = engine.bernoulli_first_event_times(p, engine.trajectory_rng(seed, 10**9 + 2), samples)
    ks = float(stats.ks_2samp(tau, steps).statistic)
    return ks < 0.03, f"Bernoulli-step vs inverse-transform KS = {ks:.4f}"


def check_phantom_exclusion(p: SystemParams, stats_: EnsembleStats) -> tuple[bool, str]:
    bad = stats_.fluorescent_in_dark
    resets = sum(s.n_reset for s in stats_.summaries)
    return bad == 0, f"{bad} fluorescent hits in dark phase ({resets} reset hits)"


def check_bookkeeping(p: SystemParams, stats_: EnsembleStats) -> tuple[bool, str]:
    n0, m0 = p.strong_photons, p.weak_photons
    wrong = [
        s.index
        for s in stats_.summaries
        if (n0 + m0) - sum(s.final_counts) != s.n_events
        or n0 - s.final_counts[0] != s.n_strong
        or m0 - s.final_counts[1] != s.n_weak
    ]
    return not wrong, f"{len(wrong)} trajectories with photon accounting mismatches"


def check_dark_survival(p: SystemParams, stats_: EnsembleStats) -> tuple[bool, str]:
    d = stats_.dark_durations
    if d.size < 500:
        return False, f"only {d.size} dark periods (need >= 500); raise count or t_end"
    ks = stats_.ks_vs_oracle
    oracle = oracle_asymptotic_rate(p)
    fitted = fit_asymptotic_rate(d, stats_.dark_threshold)
    lam = p.weak_decay
    ok = ks < 0.05 and abs(fitted - oracle) <= 0.1 * oracle and 0.5 * lam <= oracle <= 4 * lam
    return ok, (
        f"KS {ks:.4f} over {d.size} dark periods; rate {fitted:.6g} vs oracle {oracle:.6g}"
    )


def run_checks(
    p: SystemParams,
    master_seed: int = 0,
    count: int = 200,
    t_end: float | None = None,
    workers: int = 1,
    gap_factor: float = 20.0,
    samples: int = 10_000,
) -> list[CheckResult]:
    """Run every check; parameters are assumed already validated."""
    if t_end is None:
        t_end = 50.0 / p.weak_decay if p.weak_decay > 0 else 1000.0 / p.strong_decay
    results = [
        _guarded("initial_state", lambda: check_initial_state(p)),
        _guarded("split_additivity", lambda: check_split_additivity(p)),
        _guarded("norm_decay", lambda: check_norm_decay(p)),
        _guarded("hazard_consistency", lambda: check_hazard_consistency(p)),
        _guarded("integrated_hazard", lambda: check_integrated_hazard(p)),
        _guarded("sampler_ks", lambda: check_sampler(p, master_seed, samples)),
        _guarded("bernoulli_vs_inverse", lambda: check_bernoulli(p, master_seed, samples)),
    ]
    try:
        ens = run_ensemble(p, master_seed, count, t_end, workers=workers, gap_factor=gap_factor)
    except ShelvingError as exc:
        msg = f"ensemble aborted: {type(exc).__name__}: {exc}"
        results.append(CheckResult("phantom_exclusion", FAIL, msg))
        results.append(CheckResult("photon_bookkeeping", FAIL, msg))
        results.append(CheckResult("dark_survival", FAIL, msg))
        return results
    results.append(_guarded("phantom_exclusion", lambda: check_phantom_exclusion(p, ens)))
    results.append(_guarded("photon_bookkeeping", lambda: check_bookkeeping(p, ens)))
    if p.resonance_weight == 0:
        results.append(CheckResult("dark_survival", SKIP, "no dark channel (A = B = 0)"))
    else:
        results.append(_guarded("dark_survival", lambda: check_dark_survival(p, ens)))
    return results


def _horizon(p: SystemParams) -> float:
    """Time by which N has fallen below 1e-8 (or a generous cap)."""
    if p.resonance_weight == 0 or p.weak_decay == 0:
        return 20.0 / p.strong_decay
    return min(100.0 / p.weak_decay, (math.log(p.resonance_weight / 1e-8) + 5) / (2 * p.weak_decay))


def _log_grid(p: SystemParams, n: int) -> np.ndarray:
    top = 100.0 / p.weak_decay if p.weak_decay > 0 else 1000.0 / p.strong_decay
    return np.concatenate([[0.0], np.geomspace(1e-6 / p.strong_decay, top, n - 1)])
