"""Single trajectories: emission records and bright/dark period classification."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, Iterator

import numpy as np

from .engine import ReductionEvent, draw_reductions, init_graph, trajectory_rng
from .errors import BudgetExceeded, DepletedField
from .model import ChannelKind, Phase, PhotonKind, ReadyChannel, SystemParams, validate_params

CSV_HEADER = ("time", "photon_kind", "channel", "cycle_index")
DEFAULT_MAX_EVENTS = 10**7


@dataclass(frozen=True, eq=False)
class EmissionRecord:
    """Time-ordered reduction events of one trajectory, stored column-wise.

    ``channels`` holds :class:`ChannelKind` codes, ``inflow`` the normalized
    current of the chosen channel at the hit, ``dark`` the cycle phase at
    the hit.  Event ``i`` ends cycle ``i``.
    """

    times: np.ndarray
    channels: np.ndarray
    inflow: np.ndarray
    dark: np.ndarray
    t_end: float
    master_seed: int
    trajectory_index: int
    params: SystemParams
    final_counts: tuple[int, int]

    def __len__(self) -> int:
        return len(self.times)

    @property
    def initial_counts(self) -> tuple[int, int]:
        return (self.params.strong_photons, self.params.weak_photons)

    @property
    def strong_mask(self) -> np.ndarray:
        return self.channels != ChannelKind.RESET_GAMMA_PRIME

    def __iter__(self) -> Iterator[ReductionEvent]:
        for i in range(len(self)):
            kind = ChannelKind(int(self.channels[i]))
            yield ReductionEvent(
                t_sc=float(self.times[i]),
                kind=kind.photon,
                channel=ReadyChannel(kind, float(self.inflow[i]), False),
                cycle_index=i,
                phase=Phase.DARK if self.dark[i] else Phase.FLUORESCENT,
            )

    @property
    def events(self) -> list[ReductionEvent]:
        return list(self)

    def write_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        labels = [kind.label for kind in ChannelKind]
        photons = [kind.photon.value for kind in ChannelKind]
        for i, (t, code) in enumerate(zip(self.times.tolist(), self.channels.tolist())):
            writer.writerow((f"{t:.17g}", photons[code], labels[code], i))

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def run_trajectory(
    p: SystemParams,
    seed: int,
    index: int,
    t_end: float,
    max_events: int = DEFAULT_MAX_EVENTS,
) -> EmissionRecord:
    """Simulate reset cycles from t = 0 until ``t_end``.

    Every cycle starts from the ground state, so hit times are drawn in
    blocks of cycles; the draws are consumed in the same order, two per
    cycle, as repeated calls to :func:`~shelving.engine.sample_next_event`
    followed by :func:`~shelving.engine.collapse`, and give the same events.
    """
    validate_params(p)
    if not t_end > 0:
        raise ValueError("t_end must be > 0")
    rng = trajectory_rng(seed, index)
    graph = init_graph(p, 0.0)
    n, m = graph.field_counts

    mean_cycle = max(_mean_cycle_length(p), 1e-300)
    block = int(min(max(64, 1.1 * t_end / mean_cycle + 16), 1 << 16))

    times: list[np.ndarray] = []
    codes: list[np.ndarray] = []
    inflows: list[np.ndarray] = []
    darks: list[np.ndarray] = []
    clock = 0.0
    total = 0
    while True:
        tau, code, inflow, dark = draw_reductions(p, rng.random((block, 2)))
        stamps = clock + np.cumsum(tau)
        beyond = ~(stamps <= t_end)
        stop = int(np.argmax(beyond)) if beyond.any() else block
        code = code[:stop]
        strong = np.cumsum(code != ChannelKind.RESET_GAMMA_PRIME)
        weak = np.arange(1, stop + 1) - strong
        short = (strong > n) | (weak > m)
        if short.any():
            i = int(np.argmax(short))
            kind = ChannelKind(int(code[i]))
            raise DepletedField(
                f"event {total + i} ({kind.label}) at t={stamps[i]} exhausts the field"
            )
        if stop:
            n -= int(strong[-1])
            m -= int(weak[-1])
            times.append(stamps[:stop])
            codes.append(code)
            inflows.append(inflow[:stop])
            darks.append(dark[:stop])
            total += stop
            clock = float(stamps[stop - 1])
        if total > max_events:
            raise BudgetExceeded(f"more than {max_events} events before t_end={t_end}")
        if stop < block:
            break

    def _join(parts: list[np.ndarray], dtype: type) -> np.ndarray:
        return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype=dtype)

    return EmissionRecord(
        times=_join(times, np.float64),
        channels=_join(codes, np.int8),
        inflow=_join(inflows, np.float64),
        dark=_join(darks, bool),
        t_end=float(t_end),
        master_seed=int(seed),
        trajectory_index=int(index),
        params=p,
        final_counts=(n, m),
    )


def _mean_cycle_length(p: SystemParams) -> float:
    # Integral of N(t) over [0, inf).
    beta, lam = p.strong_decay, p.weak_decay
    c = p.resonance_weight
    if c == 0:
        return 1.0 / (2 * beta)
    if lam == 0:
        return math.inf
    f = 1.0 + c + 2 * p.resonance_amp_a.real
    g = 2.0 * (p.resonance_amp_a.real + c)
    return f / (2 * beta) + c / (2 * lam) - g / (beta + lam)


@dataclass(frozen=True)
class Period:
    """A bright or dark stretch of a trajectory.

    A period is ``censored`` when ``t_end`` cut it off before it could close.
    """

    kind: Phase
    t_start: float
    t_end: float
    photon_count: int
    censored: bool = False

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def classify_periods(
    r: EmissionRecord,
    gap_factor: float = 20.0,
) -> list[Period]:
    """Split a record into alternating fluorescent and dark periods.

    A silence longer than ``gap_factor / strong_decay`` since the previous
    emission (or since t = 0) is a dark period; it closes at the emission
    that ends it, which opens the next fluorescent period.  A final silence
    that long becomes a censored dark period.
    """
    if not gap_factor > 1:
        raise ValueError("gap_factor must be > 1")
    if len(r) == 0:
        return [Period(Phase.FLUORESCENT, 0.0, r.t_end, 0, censored=True)]
    threshold = gap_factor / r.params.strong_decay
    times = r.times
    starts = np.concatenate([[0.0], times[:-1]])
    dark_idx = np.flatnonzero(times - starts > threshold)

    periods: list[Period] = []
    bright_start, bright_first = 0.0, 0
    for i in dark_idx.tolist():
        if i > bright_first or bright_start < starts[i]:
            periods.append(
                Period(Phase.FLUORESCENT, bright_start, float(starts[i]), i - bright_first)
            )
        periods.append(Period(Phase.DARK, float(starts[i]), float(times[i]), 0))
        bright_start, bright_first = float(times[i]), i
    last = float(times[-1])
    if r.t_end - last > threshold:
        periods.append(Period(Phase.FLUORESCENT, bright_start, last, len(times) - bright_first))
        periods.append(Period(Phase.DARK, last, r.t_end, 0, censored=True))
    else:
        periods.append(
            Period(Phase.FLUORESCENT, bright_start, r.t_end, len(times) - bright_first, censored=True)
        )
    return periods


def photon_kinds(r: EmissionRecord) -> list[PhotonKind]:
    return [ChannelKind(int(c)).photon for c in r.channels]
