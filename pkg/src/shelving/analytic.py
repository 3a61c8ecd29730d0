"""Closed-form amplitudes of the driven three-level atom and derived currents.

The amplitudes are

    a0(t) = cos(W t) e^{-b t} + A e^{i W t} (e^{-b t} - e^{-l t})
    a1(t) = i sin(W t) e^{-b t} + A e^{i W t} (e^{-b t} - e^{-l t})
    a2(t) = -i B e^{i W t} (e^{-b t} - e^{-l t})

with W the Rabi frequency, b the strong decay, l the weak decay.  Their
norm has the oscillation-free closed form

    N(t) = f x^2 + c y^2 - g x y,   x = e^{-b t}, y = e^{-l t}
    f = 1 + c + 2 Re A,  c = 2|A|^2 + |B|^2,  g = 2 (Re A + c)

Probability current leaves the surviving norm at rate -dN/dt.  It is
shared among the three ready channels in proportion to rate-times-occupation
weights (2b for the Rabi population, 2b|res_a1|^2, 2l|res_a2|^2), so the
channel currents sum exactly to -dN/dt and the hazard integrates to
-ln N.  Hazards are evaluated in the scaled variable r = x / y so nothing
underflows at long times.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import BadInterval, NegativeTime
from .model import AmplitudeSplit, AmplitudeVector, SystemParams
from .quadrature import adaptive_simpson


@dataclass(frozen=True)
class ChannelCurrents:
    j_fluor: Any
    j_reset_gamma: Any
    j_reset_gamma_prime: Any
    norm: Any
    t: Any

    @property
    def total(self) -> Any:
        return self.j_fluor + self.j_reset_gamma + self.j_reset_gamma_prime


def _times(t: Any) -> Any:
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise NegativeTime("time must be >= 0")
    return arr if arr.ndim else float(arr)


def _unwrap(x: Any) -> Any:
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def split(p: SystemParams, t: Any) -> AmplitudeSplit:
    """Rabi and resonance parts of the amplitudes at ``t`` (scalar or array)."""
    t = _times(t)
    w, beta, lam = p.rabi_frequency, p.strong_decay, p.weak_decay
    fast = np.exp(-beta * t)
    bracket = fast - np.exp(-lam * t)
    phase = np.exp(1j * w * t)
    res = p.resonance_amp_a * phase * bracket
    return AmplitudeSplit(
        rabi_a0=_unwrap(np.cos(w * t) * fast + 0j),
        rabi_a1=_unwrap(1j * np.sin(w * t) * fast),
        res_a0=_unwrap(res),
        res_a1=_unwrap(res),
        res_a2=_unwrap(-1j * p.resonance_amp_b * phase * bracket),
    )


def amplitudes(p: SystemParams, t: Any) -> AmplitudeVector:
    """Evaluate ``(a0, a1, a2)`` at time ``t`` since the last reset."""
    s = split(p, t)
    return AmplitudeVector(a0=s.a0, a1=s.a1, a2=s.a2, t=_times(t))


def _coefficients(p: SystemParams) -> tuple[float, float, float]:
    c = p.resonance_weight
    re_a = p.resonance_amp_a.real
    return 1.0 + c + 2.0 * re_a, c, 2.0 * (re_a + c)


def _scaled(p: SystemParams, t: Any) -> tuple[Any, Any, Any, Any]:
    """Return ``(r, 1 - r, P(r), Q(r))`` with N = y^2 P and -dN/dt = y^2 Q."""
    beta, lam = p.strong_decay, p.weak_decay
    f, c, g = _coefficients(p)
    r = np.exp(-(beta - lam) * t)
    one_minus_r = -np.expm1(-(beta - lam) * t)
    big_p = f * r * r - g * r + c
    big_q = 2 * beta * f * r * r - (beta + lam) * g * r + 2 * lam * c
    return r, one_minus_r, big_p, np.maximum(big_q, 0.0)


def surviving_norm(p: SystemParams, t: Any) -> Any:
    """Closed-form ``N(t)``."""
    t = _times(t)
    _, _, big_p, _ = _scaled(p, t)
    return _unwrap(np.exp(-2 * p.weak_decay * t) * big_p)


def norm_loss_rate(p: SystemParams, t: Any) -> Any:
    """Closed-form ``-dN/dt`` (clamped at zero)."""
    t = _times(t)
    _, _, _, big_q = _scaled(p, t)
    return _unwrap(np.exp(-2 * p.weak_decay * t) * big_q)


def cumulative_hazard(p: SystemParams, t: Any) -> Any:
    """``-ln N(t)``: the hazard integrated from the last reset to ``t``."""
    t = _times(t)
    if p.resonance_weight == 0:
        return _unwrap(2 * p.strong_decay * np.asarray(t, dtype=float))
    _, _, big_p, _ = _scaled(p, t)
    return _unwrap(2 * p.weak_decay * t - np.log(big_p))


def _shares(p: SystemParams, r: Any, one_minus_r: Any) -> np.ndarray:
    beta, lam = p.strong_decay, p.weak_decay
    w_f = 2 * beta * r * r
    w_g = 2 * beta * abs(p.resonance_amp_a) ** 2 * one_minus_r**2
    w_gp = 2 * lam * abs(p.resonance_amp_b) ** 2 * one_minus_r**2
    weights = np.stack(np.broadcast_arrays(w_f, w_g, w_gp)).astype(float)
    total = weights.sum(axis=0)
    # total == 0 only once r underflows with no resonance: all weight is Rabi.
    safe = np.where(total > 0, total, 1.0)
    shares = weights / safe
    shares[0] = np.where(total > 0, shares[0], 1.0)
    return shares


def channel_hazards(p: SystemParams, t: Any) -> np.ndarray:
    """Normalized currents (current / N) per channel, shape ``(3,) + shape(t)``.

    Rows follow :class:`~shelving.model.ChannelKind` order.
    """
    t = np.asarray(_times(t), dtype=float)
    if p.resonance_weight == 0:
        out = np.zeros((3,) + t.shape)
        out[0] = 2 * p.strong_decay
        return out
    r, one_minus_r, big_p, big_q = _scaled(p, t)
    return (big_q / big_p) * _shares(p, r, one_minus_r)


def hazard(p: SystemParams, t: Any) -> Any:
    """Total hazard ``h(t) = (j_fluor + j_reset_gamma + j_reset_gamma_prime) / N``."""
    return _unwrap(channel_hazards(p, t).sum(axis=0))


def currents(p: SystemParams, t: Any) -> ChannelCurrents:
    """Probability currents into each ready channel at ``t`` since reset."""
    t = _times(t)
    norm = amplitudes(p, t).norm
    if p.resonance_weight == 0:
        loss = 2 * p.strong_decay * np.exp(-2 * p.strong_decay * np.asarray(t))
        shares = np.zeros((3,) + np.shape(t))
        shares[0] = 1.0
    else:
        r, one_minus_r, _, big_q = _scaled(p, t)
        loss = np.exp(-2 * p.weak_decay * t) * big_q
        shares = _shares(p, r, one_minus_r)
    j = loss * shares
    return ChannelCurrents(
        j_fluor=_unwrap(j[0]),
        j_reset_gamma=_unwrap(j[1]),
        j_reset_gamma_prime=_unwrap(j[2]),
        norm=_unwrap(norm),
        t=t,
    )


def integrated_hazard(p: SystemParams, t_a: float, t_b: float) -> float:
    """Integrate ``h`` over ``[t_a, t_b]`` by adaptive Simpson (rtol 1e-9)."""
    if not (0 <= t_a <= t_b) or not math.isfinite(t_b):
        raise BadInterval(f"need 0 <= t_a <= t_b < inf, got [{t_a}, {t_b}]")
    if t_a == t_b:
        return 0.0
    step = math.pi / (20 * p.rabi_frequency)
    return adaptive_simpson(
        lambda s: channel_hazards(p, s).sum(axis=0),
        t_a,
        t_b,
        rtol=1e-9,
        atol=1e-14,
        max_step=step,
    )


@functools.lru_cache(maxsize=64)
def dark_onset(p: SystemParams) -> float:
    """Time since reset after which the fluorescent channel is a phantom.

    This is the first ``t`` at which the fluorescent normalized current is
    at most ``phantom_epsilon`` while some reset channel still carries more
    than that.  ``inf`` when that never happens (no resonance).
    """
    if p.resonance_weight == 0:
        return math.inf
    eps = p.phantom_epsilon

    def is_dark(t: np.ndarray) -> np.ndarray:
        h = channel_hazards(p, t)
        return (h[0] <= eps) & ((h[1] > eps) | (h[2] > eps))

    t_end = 400.0 / (p.strong_decay - p.weak_decay)
    grid = np.linspace(0.0, t_end, 40001)
    dark = is_dark(grid)
    if not dark.any():
        return math.inf
    i = int(np.argmax(dark))
    if i == 0:
        return 0.0
    lo, hi = grid[i - 1], grid[i]
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if is_dark(np.array([mid]))[0]:
            hi = mid
        else:
            lo = mid
    return float(hi)
