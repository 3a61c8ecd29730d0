"""Vectorized adaptive Simpson quadrature."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import QuadratureFailure


def adaptive_simpson(
    func: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-9,
    atol: float = 1e-14,
    max_step: float | None = None,
    max_depth: int = 60,
) -> float:
    """Integrate ``func`` over ``[a, b]`` by interval bisection.

    ``func`` must accept and return arrays.  The interval is first cut into
    panels no wider than ``max_step``; each panel is then halved until the
    two-half Simpson estimate agrees with the whole-panel estimate to within
    its share of the tolerance.  Accepted panels get the Richardson
    correction.  All panels at one depth are evaluated in a single call.
    """
    if b == a:
        return 0.0
    width = b - a
    n0 = 1 if max_step is None else max(1, math.ceil(width / max_step))
    edges = np.linspace(a, b, n0 + 1)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = (np.asarray(func(x), dtype=float) for x in (lo, mid, hi))
    whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)
    if not np.all(np.isfinite(whole)):
        raise QuadratureFailure("integrand is not finite on the interval")
    tol_total = max(atol, rtol * abs(float(np.sum(whole))))

    accepted: list[np.ndarray] = []
    for _ in range(max_depth):
        h = hi - lo
        q_left = lo + 0.25 * h
        q_right = lo + 0.75 * h
        f_ql = np.asarray(func(q_left), dtype=float)
        f_qr = np.asarray(func(q_right), dtype=float)
        left = h / 12.0 * (f_lo + 4.0 * f_ql + f_mid)
        right = h / 12.0 * (f_mid + 4.0 * f_qr + f_hi)
        err = (left + right - whole) / 15.0
        ok = np.abs(err) <= tol_total * (h / width)
        if not np.all(np.isfinite(err)):
            raise QuadratureFailure("integrand is not finite on the interval")
        accepted.append((left + right + err)[ok])
        bad = ~ok
        if not bad.any():
            return math.fsum(np.concatenate(accepted))
        lo_b, mid_b, hi_b = lo[bad], mid[bad], hi[bad]
        lo = np.concatenate([lo_b, mid_b])
        hi = np.concatenate([mid_b, hi_b])
        mid = np.concatenate([q_left[bad], q_right[bad]])
        f_lo, f_mid, f_hi = (
            np.concatenate([f_lo[bad], f_mid[bad]]),
            np.concatenate([f_ql[bad], f_qr[bad]]),
            np.concatenate([f_mid[bad], f_hi[bad]]),
        )
        whole = np.concatenate([left[bad], right[bad]])
    raise QuadratureFailure(f"adaptive Simpson did not converge within depth {max_depth}")
