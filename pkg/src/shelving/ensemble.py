"""Ensembles of independent trajectories and the dark-period survival oracle."""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import stats

from . import analytic
from .errors import QuadratureFailure, ShelvingError
from .model import ChannelKind, Phase, SystemParams, validate_params
from .trajectory import DEFAULT_MAX_EVENTS, EmissionRecord, classify_periods, run_trajectory

REPORT_SCHEMA = "shelving.ensemble-report/1"
WORKERS_ENV = "SHELVING_WORKERS"
BINS_PER_DECADE = 20


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    return max(1, int(value)) if value else 1


@dataclass(frozen=True)
class TrajectorySummary:
    index: int
    n_events: int
    n_strong: int
    n_weak: int
    n_reset: int
    first_event_time: float
    dark_durations: np.ndarray
    bright_durations: np.ndarray
    fluorescent_in_dark: int
    final_counts: tuple[int, int]


def summarize(record: EmissionRecord, gap_factor: float = 20.0) -> TrajectorySummary:
    periods = classify_periods(record, gap_factor)
    closed = [q for q in periods if not q.censored and q.duration > 0]
    dark = np.array([q.duration for q in closed if q.kind is Phase.DARK], dtype=float)
    bright = np.array([q.duration for q in closed if q.kind is Phase.FLUORESCENT], dtype=float)
    strong = int(record.strong_mask.sum())
    fluor = record.channels == ChannelKind.FLUORESCENT_GAMMA
    return TrajectorySummary(
        index=record.trajectory_index,
        n_events=len(record),
        n_strong=strong,
        n_weak=len(record) - strong,
        n_reset=int((~fluor).sum()),
        first_event_time=float(record.times[0]) if len(record) else math.nan,
        dark_durations=dark,
        bright_durations=bright,
        fluorescent_in_dark=int((fluor & record.dark).sum()),
        final_counts=record.final_counts,
    )


def _run_one(
    index: int,
    p: SystemParams,
    master_seed: int,
    t_end: float,
    gap_factor: float,
    max_events: int,
) -> TrajectorySummary:
    try:
        record = run_trajectory(p, master_seed, index, t_end, max_events=max_events)
    except ShelvingError as exc:
        raise type(exc)(f"trajectory {index}: {exc}") from exc
    return summarize(record, gap_factor)


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def log_binned(cls, values: np.ndarray, lo: float, hi: float) -> "Histogram":
        """Logarithmic bins; values outside ``[lo, hi]`` land in the end bins."""
        decades = math.log10(hi / lo)
        n_bins = max(1, math.ceil(decades * BINS_PER_DECADE - 1e-9))
        edges = lo * 10.0 ** (np.arange(n_bins + 1) / BINS_PER_DECADE)
        clipped = np.clip(values, edges[0], np.nextafter(edges[-1], 0.0))
        counts, _ = np.histogram(clipped, bins=edges)
        return cls(edges, counts)


def histogram_range(p: SystemParams) -> tuple[float, float]:
    lo = 0.01 / p.strong_decay
    hi = 100.0 / p.weak_decay if p.weak_decay > 0 else 1e4 / p.strong_decay
    return lo, hi


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    params: SystemParams
    t_end: float
    master_seed: int
    gap_factor: float
    summaries: tuple[TrajectorySummary, ...] = field(repr=False)

    @property
    def trajectory_count(self) -> int:
        return len(self.summaries)

    @functools.cached_property
    def dark_durations(self) -> np.ndarray:
        return _concat([s.dark_durations for s in self.summaries])

    @functools.cached_property
    def bright_durations(self) -> np.ndarray:
        return _concat([s.bright_durations for s in self.summaries])

    @property
    def dark_histogram(self) -> Histogram:
        return Histogram.log_binned(self.dark_durations, *histogram_range(self.params))

    @property
    def bright_histogram(self) -> Histogram:
        return Histogram.log_binned(self.bright_durations, *histogram_range(self.params))

    @property
    def first_event_cdf(self) -> np.ndarray:
        """Sorted first-hit times of the trajectories that had one."""
        t = np.array([s.first_event_time for s in self.summaries])
        return np.sort(t[np.isfinite(t)])

    @property
    def mean_dark(self) -> tuple[float, float]:
        return _mean_se(self.dark_durations)

    @property
    def mean_bright(self) -> tuple[float, float]:
        return _mean_se(self.bright_durations)

    @property
    def dark_threshold(self) -> float:
        return self.gap_factor / self.params.strong_decay

    @functools.cached_property
    def ks_vs_oracle(self) -> float:
        """KS distance between pooled dark durations and the oracle law.

        NaN when there are no closed dark periods.
        """
        d = self.dark_durations
        if d.size == 0:
            return math.nan
        return dark_duration_ks(self.params, d, self.dark_threshold)

    @property
    def fluorescent_in_dark(self) -> int:
        return sum(s.fluorescent_in_dark for s in self.summaries)

    def merge(self, other: "EnsembleStats") -> "EnsembleStats":
        """Pool two ensembles run with the same settings on disjoint indices."""
        if (self.params, self.t_end, self.master_seed, self.gap_factor) != (
            other.params,
            other.t_end,
            other.master_seed,
            other.gap_factor,
        ):
            raise ValueError("can only merge ensembles with identical settings")
        pooled = sorted(self.summaries + other.summaries, key=lambda s: s.index)
        return EnsembleStats(self.params, self.t_end, self.master_seed, self.gap_factor, tuple(pooled))

    def report(self) -> dict[str, Any]:
        """Machine-readable report; see README for the schema."""
        mean_dark, se_dark = self.mean_dark
        mean_bright, se_bright = self.mean_bright
        dark_h, bright_h = self.dark_histogram, self.bright_histogram
        first = self.first_event_cdf
        fitted = fit_asymptotic_rate(self.dark_durations, self.dark_threshold)
        return {
            "schema": REPORT_SCHEMA,
            "params": self.params.to_dict(),
            "t_end": self.t_end,
            "master_seed": self.master_seed,
            "gap_factor": self.gap_factor,
            "trajectory_count": self.trajectory_count,
            "total_events": sum(s.n_events for s in self.summaries),
            "strong_events": sum(s.n_strong for s in self.summaries),
            "weak_events": sum(s.n_weak for s in self.summaries),
            "fluorescent_in_dark": self.fluorescent_in_dark,
            "dark_periods": int(self.dark_durations.size),
            "bright_periods": int(self.bright_durations.size),
            "mean_dark": _num(mean_dark),
            "mean_dark_se": _num(se_dark),
            "mean_bright": _num(mean_bright),
            "mean_bright_se": _num(se_bright),
            "ks_vs_oracle": _num(self.ks_vs_oracle),
            "fitted_dark_rate": _num(fitted),
            "oracle_dark_rate": _num(oracle_asymptotic_rate(self.params)),
            "dark_histogram": {"edges": dark_h.edges.tolist(), "counts": dark_h.counts.tolist()},
            "bright_histogram": {"edges": bright_h.edges.tolist(), "counts": bright_h.counts.tolist()},
            "first_event_times": first.tolist(),
        }

    def summary_text(self) -> str:
        mean_dark, se_dark = self.mean_dark
        mean_bright, se_bright = self.mean_bright
        lines = [
            f"trajectories        {self.trajectory_count}",
            f"events              {sum(s.n_events for s in self.summaries)}",
            f"dark periods        {self.dark_durations.size}  mean {mean_dark:.6g} +/- {se_dark:.2g}",
            f"bright periods      {self.bright_durations.size}  mean {mean_bright:.6g} +/- {se_bright:.2g}",
            f"KS vs oracle        {self.ks_vs_oracle:.4g}",
            f"fluorescent in dark {self.fluorescent_in_dark}",
        ]
        return "\n".join(lines)


def _concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts) if parts else np.empty(0)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), math.nan
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _num(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)


def run_ensemble(
    p: SystemParams,
    master_seed: int,
    count: int,
    t_end: float,
    workers: int | None = None,
    gap_factor: float = 20.0,
    start_index: int = 0,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> EnsembleStats:
    """Run trajectories ``start_index .. start_index + count - 1``.

    Each trajectory's generator is keyed by its index, and results are
    reduced in index order, so the statistics do not depend on ``workers``.
    """
    validate_params(p)
    if count < 1:
        raise ValueError("count must be >= 1")
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")
    job = functools.partial(
        _run_one,
        p=p,
        master_seed=master_seed,
        t_end=t_end,
        gap_factor=gap_factor,
        max_events=max_events,
    )
    indices = range(start_index, start_index + count)
    if workers == 1:
        summaries = [job(i) for i in indices]
    else:
        chunk = max(1, count // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(job, indices, chunksize=chunk))
    return EnsembleStats(p, float(t_end), int(master_seed), float(gap_factor), tuple(summaries))


def oracle_survival(
    p: SystemParams,
    t_grid: Sequence[float],
    t_onset: float = 0.0,
    points_per_decade: int = 100_000,
) -> np.ndarray:
    """Survival against the reset channels alone, as ``(t, S)`` rows.

    ``S(t) = exp(-int_{t_onset}^t (j_reset_gamma + j_reset_gamma') / N)``
    with times measured from the last reset; ``t_onset`` conditions on the
    dark period having lasted that long.  The integral is a trapezoid sum
    on a log-spaced grid with ``points_per_decade`` nodes per decade that
    contains every requested time exactly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    if np.any(t_grid < t_onset) or t_onset < 0:
        raise ValueError("t_grid must not precede t_onset")
    t_max = float(t_grid[-1])
    positive = t_grid[t_grid > 0]
    first = float(positive[0]) if positive.size else 1.0
    start = t_onset if t_onset > 0 else min(first, 1e-6 / p.strong_decay)
    if t_max > start:
        n = math.ceil(math.log10(t_max / start) * points_per_decade) + 1
        dense = np.geomspace(start, t_max, n)
    else:
        dense = np.array([start])
    nodes = np.union1d(np.union1d(dense, t_grid), [t_onset])
    h = analytic.channel_hazards(p, nodes)
    reset = h[1] + h[2]
    steps = 0.5 * (reset[1:] + reset[:-1]) * np.diff(nodes)
    cumulative = np.concatenate([[0.0], np.cumsum(steps)])
    if not np.all(np.isfinite(cumulative)):
        raise QuadratureFailure("reset hazard is not finite on the grid")
    survival = np.exp(-cumulative)
    pos = np.searchsorted(nodes, t_grid)
    return np.column_stack([t_grid, survival[pos]])


def dark_duration_ks(p: SystemParams, durations: np.ndarray, threshold: float) -> float:
    durations = np.sort(np.asarray(durations, dtype=float))
    table = oracle_survival(p, np.unique(durations), t_onset=threshold)

    def cdf(x: np.ndarray) -> np.ndarray:
        # Exact at every sample: the oracle was evaluated on them.
        return 1.0 - np.interp(x, table[:, 0], table[:, 1])

    return float(stats.kstest(durations, cdf).statistic)


def oracle_asymptotic_rate(p: SystemParams) -> float:
    """Reset hazard once the Rabi envelope has died out."""
    far = 40.0 / (p.strong_decay - p.weak_decay)
    h = analytic.channel_hazards(p, far)
    return float(h[1] + h[2])


def oracle_mean_dark(p: SystemParams, threshold: float) -> float:
    """Mean oracle dark-period duration, ``threshold + int S``."""
    lam = p.weak_decay
    if lam <= 0:
        return math.inf
    t_max = threshold + 60.0 / lam
    grid = np.linspace(threshold, t_max, 200_001)[1:]
    s = oracle_survival(p, grid, t_onset=threshold, points_per_decade=20_000)[:, 1]
    s = np.concatenate([[1.0], s])
    t = np.concatenate([[threshold], grid])
    return threshold + float(np.trapezoid(s, t))


def fit_asymptotic_rate(durations: np.ndarray, t_fit: float) -> float:
    """Exponential-tail MLE: count over total excess beyond ``t_fit``."""
    tail = np.asarray(durations, dtype=float)
    tail = tail[tail > t_fit] - t_fit
    if tail.size == 0:
        return math.nan
    return float(tail.size / tail.sum())


__all__ = [
    "EnsembleStats",
    "Histogram",
    "TrajectorySummary",
    "dark_duration_ks",
    "fit_asymptotic_rate",
    "oracle_asymptotic_rate",
    "oracle_mean_dark",
    "oracle_survival",
    "run_ensemble",
    "summarize",
]
