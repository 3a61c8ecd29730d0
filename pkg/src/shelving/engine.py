"""Stochastic reduction of the component graph for one emission cycle.

Within a cycle the atom starts in the ground state with field counts
``(n, m)``.  Probability current flows into three ready components; a
stochastic hit lands on one of them with probability equal to its current
times ``dt``, conditioned on no earlier hit.  The hit collapses the state
around the chosen component, one field photon is emitted, and a new cycle
starts from the ground state.

Once the fluorescent channel's normalized current has dropped to
``phantom_epsilon`` while a reset channel still carries current, the cycle
is dark: the fluorescent component is a phantom for the rest of the cycle,
whatever the amplitudes do afterwards.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, replace

import numpy as np

from . import analytic
from .errors import DepletedField, InvariantViolation, PhantomChosen, TimeBeforeCycleStart
from .model import ChannelKind, Phase, PhotonKind, ReadyChannel, SystemParams

TIME_RESOLUTION = 1e-10


@dataclass(frozen=True)
class ComponentGraph:
    cycle_start: float
    field_counts: tuple[int, int]
    channels: tuple[ReadyChannel, ReadyChannel, ReadyChannel]
    initial_component_alive: bool
    phase: Phase
    cycle_index: int = 0

    def channel(self, kind: ChannelKind) -> ReadyChannel:
        return self.channels[int(kind)]


@dataclass(frozen=True)
class ReductionEvent:
    t_sc: float
    kind: PhotonKind
    channel: ReadyChannel
    cycle_index: int
    phase: Phase = Phase.FLUORESCENT


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, index)``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(seq))


def _fresh_graph(t_abs: float, counts: tuple[int, int], cycle_index: int) -> ComponentGraph:
    channels = tuple(ReadyChannel(kind, 0.0, True) for kind in ChannelKind)
    return ComponentGraph(
        cycle_start=float(t_abs),
        field_counts=(int(counts[0]), int(counts[1])),
        channels=channels,  # type: ignore[arg-type]
        initial_component_alive=True,
        phase=Phase.FLUORESCENT,
        cycle_index=cycle_index,
    )


def init_graph(
    p: SystemParams,
    t_abs: float,
    field_counts: tuple[int, int] | None = None,
    cycle_index: int = 0,
) -> ComponentGraph:
    """Ground-state graph at ``t_abs``; currents are zero until refreshed."""
    counts = field_counts if field_counts is not None else (p.strong_photons, p.weak_photons)
    return _fresh_graph(t_abs, counts, cycle_index)


def refresh_currents(g: ComponentGraph, p: SystemParams, t_abs: float) -> ComponentGraph:
    """Recompute channel inflows at ``t_abs`` and latch the dark phase."""
    tau = t_abs - g.cycle_start
    if tau < 0:
        raise TimeBeforeCycleStart(f"t={t_abs} precedes cycle start {g.cycle_start}")
    h = analytic.channel_hazards(p, tau)
    eps = p.phantom_epsilon
    dark = (
        g.phase is Phase.DARK
        or tau >= analytic.dark_onset(p)
        or (h[0] <= eps and (h[1] > eps or h[2] > eps))
    )
    if dark:
        # The resonance cannot feed the fluorescence row: no inflow at all.
        h = h.copy()
        h[0] = 0.0
    channels = tuple(ReadyChannel.evaluate(kind, h[int(kind)], eps) for kind in ChannelKind)
    return replace(
        g,
        channels=channels,
        initial_component_alive=not dark,
        phase=Phase.DARK if dark else Phase.FLUORESCENT,
    )


class HazardClock:
    """Inverts the cumulative hazard ``H(t) = -ln N(t)`` of one cycle.

    A monotone table of ``H`` brackets each target; bisection on the closed
    form then narrows the bracket to ``TIME_RESOLUTION``.  The returned time
    is the upper end of the final bracket, so ``H(t) >= target`` always
    holds and the time is strictly after the lower bound.
    """

    def __init__(self, p: SystemParams):
        self.params = p
        beta, lam = p.strong_decay, p.weak_decay
        t_fine = 60.0 / beta
        fine = np.linspace(0.0, t_fine, 1201)
        tail = t_fine * np.geomspace(1.0, 1e9, 20000)[1:]
        grid = np.concatenate([fine, tail])
        table = np.asarray(analytic.cumulative_hazard(p, grid))
        # 45 covers every target reachable from t = 0 with doubles (-ln 2^-53 ~ 36.7).
        stop = np.searchsorted(table, 45.0, side="right") + 1
        self.grid = grid[:stop]
        self.table = np.maximum.accumulate(table[:stop])
        self.dark_onset = analytic.dark_onset(p)
        self.has_resonance = p.resonance_weight > 0
        self.saturated = lam == 0 and self.has_resonance

    def cumulative(self, tau: np.ndarray) -> np.ndarray:
        return np.asarray(analytic.cumulative_hazard(self.params, tau), dtype=float)

    def invert(self, targets: np.ndarray, tau_lo: np.ndarray) -> np.ndarray:
        """Smallest resolved ``t > tau_lo`` with ``H(t) >= target``; inf if none."""
        targets = np.asarray(targets, dtype=float)
        tau_lo = np.broadcast_to(np.asarray(tau_lo, dtype=float), targets.shape)
        out = np.full(targets.shape, math.inf)
        idx = np.searchsorted(self.table, targets, side="left")
        inside = idx < len(self.table)
        lo = np.empty_like(targets)
        hi = np.empty_like(targets)
        lo[inside] = self.grid[np.maximum(idx[inside] - 1, 0)]
        hi[inside] = self.grid[idx[inside]]
        for i in np.flatnonzero(~inside):
            bracket = self._extend(targets[i])
            if bracket is None:
                continue
            lo[i], hi[i] = bracket
            inside[i] = True
        lo = np.maximum(lo, tau_lo)
        hi = np.maximum(hi, lo)
        active = inside
        lo, hi, tgt = lo[active], hi[active], targets[active]
        while True:
            width = hi - lo
            todo = width > np.maximum(TIME_RESOLUTION, 4 * np.spacing(hi))
            if not todo.any():
                break
            mid = 0.5 * (lo + hi)
            above = self.cumulative(mid) >= tgt
            hi = np.where(todo & above, mid, hi)
            lo = np.where(todo & ~above, mid, lo)
        out[active] = hi
        return out

    def _extend(self, target: float) -> tuple[float, float] | None:
        lo = float(self.grid[-1])
        hi = 2.0 * lo
        while hi < 1e300:
            if float(self.cumulative(np.array(hi))) >= target:
                return lo, hi
            lo, hi = hi, 2.0 * hi
        return None


@functools.lru_cache(maxsize=32)
def hazard_clock(p: SystemParams) -> HazardClock:
    return HazardClock(p)


def draw_reductions(
    p: SystemParams,
    uniforms: np.ndarray,
    tau_lo: np.ndarray | float = 0.0,
    dark_latched: np.ndarray | bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Turn ``(k, 2)`` uniforms into hit times and channels.

    Column 0 sets the hit time by inverse transform on the cumulative
    hazard measured from ``tau_lo`` (time since reset); column 1 picks the
    channel from the normalized currents at the hit time, restricted to
    non-phantom channels and walked in :class:`ChannelKind` order.

    Returns ``(tau, channel_code, inflow, dark)``; ``tau`` is ``inf`` where
    no hit ever happens, and ``channel_code`` is ``-1`` there.
    """
    clock = hazard_clock(p)
    uniforms = np.atleast_2d(np.asarray(uniforms, dtype=float))
    tau_lo = np.broadcast_to(np.asarray(tau_lo, dtype=float), uniforms.shape[:1])
    u = 1.0 - uniforms[:, 0]
    exponent = -np.log(u)
    targets = clock.cumulative(tau_lo) + np.maximum(exponent, np.finfo(float).tiny)
    tau = clock.invert(targets, tau_lo)

    codes = np.full(len(tau), -1, dtype=np.int8)
    inflow = np.zeros(len(tau))
    dark = np.asarray(dark_latched, dtype=bool) | (tau >= clock.dark_onset)
    dark = np.broadcast_to(dark, tau.shape).copy()
    hit = np.isfinite(tau)
    if hit.any():
        h = analytic.channel_hazards(p, tau[hit])
        live = h > p.phantom_epsilon
        live[0] &= ~dark[hit]
        weights = np.where(live, h, 0.0)
        total = weights.sum(axis=0)
        if np.any(total <= 0):
            bad = float(tau[hit][np.argmax(total <= 0)])
            raise PhantomChosen(
                f"hit at t={bad} since reset but every ready channel is a phantom"
            )
        cum = np.cumsum(weights, axis=0)
        pick = np.argmax(uniforms[hit, 1] * total < cum, axis=0)
        codes[hit] = pick
        inflow[hit] = h[pick, np.arange(pick.size)]
    return tau, codes, inflow, dark


def sample_next_event(
    g: ComponentGraph,
    p: SystemParams,
    rng: np.random.Generator,
    t_abs: float,
    t_max: float,
) -> ReductionEvent | None:
    """Sample the next stochastic hit after ``t_abs``; ``None`` if none by ``t_max``.

    Consumes exactly two uniforms from ``rng``.
    """
    tau_a = t_abs - g.cycle_start
    if tau_a < 0:
        raise TimeBeforeCycleStart(f"t={t_abs} precedes cycle start {g.cycle_start}")
    if not t_max > t_abs:
        raise ValueError("t_max must exceed t_abs")
    draws = rng.random(2).reshape(1, 2)
    tau, codes, inflow, dark = draw_reductions(p, draws, tau_a, g.phase is Phase.DARK)
    t_sc = g.cycle_start + float(tau[0])
    if not math.isfinite(t_sc) or t_sc > t_max:
        return None
    kind = ChannelKind(int(codes[0]))
    _check_field(g.field_counts, kind)
    return ReductionEvent(
        t_sc=t_sc,
        kind=kind.photon,
        channel=ReadyChannel(kind, float(inflow[0]), False),
        cycle_index=g.cycle_index,
        phase=Phase.DARK if dark[0] else Phase.FLUORESCENT,
    )


def _check_field(counts: tuple[int, int], kind: ChannelKind) -> None:
    n, m = counts
    if kind.photon is PhotonKind.STRONG_GAMMA and n < 1:
        raise DepletedField(f"{kind.label} needs a strong photon but n = {n}")
    if kind.photon is PhotonKind.WEAK_GAMMA_PRIME and m < 1:
        raise DepletedField(f"{kind.label} needs a weak photon but m = {m}")


def collapse(g: ComponentGraph, e: ReductionEvent) -> ComponentGraph:
    """Keep only the chosen ready component and restart from the ground state."""
    if e.channel.is_phantom:
        raise PhantomChosen(f"{e.channel.kind.label} is a phantom at t={e.t_sc}")
    if e.t_sc < g.cycle_start:
        raise TimeBeforeCycleStart(f"event at {e.t_sc} precedes cycle start {g.cycle_start}")
    if e.cycle_index != g.cycle_index:
        raise InvariantViolation(
            f"event belongs to cycle {e.cycle_index}, graph is in cycle {g.cycle_index}"
        )
    _check_field(g.field_counts, e.channel.kind)
    n, m = g.field_counts
    if e.kind is PhotonKind.STRONG_GAMMA:
        n -= 1
    else:
        m -= 1
    return _fresh_graph(e.t_sc, (n, m), g.cycle_index + 1)


def bernoulli_first_event_times(
    p: SystemParams,
    rng: np.random.Generator,
    size: int,
    t_cap: float | None = None,
) -> np.ndarray:
    """First-hit times from a per-step Bernoulli hit law.

    Time advances in steps with ``h * dt <= max_hazard_step``; each surviving
    sample is hit in a step with probability ``h(t_mid) * dt``.  The step
    sequence depends only on the parameters, not on the draws.  A hit is
    reported at the step midpoint; samples never hit by ``t_cap`` get ``inf``.
    """
    if t_cap is None:
        lam = p.weak_decay
        t_cap = 40.0 / lam if lam > 0 else 400.0 / p.strong_decay
    s = p.max_hazard_step
    out = np.full(size, math.inf)
    alive = np.arange(size)
    t = 0.0
    while alive.size and t < t_cap:
        dt = s / float(analytic.hazard(p, t))
        dt = s / max(float(analytic.hazard(p, t)), float(analytic.hazard(p, t + dt)))
        mid = t + 0.5 * dt
        prob = float(analytic.hazard(p, mid)) * dt
        hits = rng.random(alive.size) < prob
        out[alive[hits]] = mid
        alive = alive[~hits]
        t += dt
    return out
