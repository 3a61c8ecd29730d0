"""Arbitrary-precision oracle for the closed-form amplitudes and currents.

Re-evaluates the amplitude formulas with mpmath at 50 digits, differentiates
the norm numerically for the total current, and shares it among channels by
the rate-times-occupation weights.  Run as a script to regenerate
``tests/golden/analytic_default.csv``; the tests import the frozen values.
"""

from __future__ import annotations

import sys
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50

DEFAULT = dict(omega=1, beta="0.1", lam="0.001", a=mp.mpc(0, "0.05"), b=mp.mpc("0.05", 0))


def amplitudes(t, omega, beta, lam, a, b):
    t = mp.mpf(t)
    omega, beta, lam = mp.mpf(omega), mp.mpf(beta), mp.mpf(lam)
    fast = mp.exp(-beta * t)
    bracket = fast - mp.exp(-lam * t)
    phase = mp.expj(omega * t)
    rabi0 = mp.cos(omega * t) * fast
    rabi1 = mp.mpc(0, 1) * mp.sin(omega * t) * fast
    res = a * phase * bracket
    res2 = -mp.mpc(0, 1) * b * phase * bracket
    return (rabi0, rabi1, res, res, res2)


def norm(t, **p):
    r0, r1, s0, s1, s2 = amplitudes(t, **p)
    return abs(r0 + s0) ** 2 + abs(r1 + s1) ** 2 + abs(s2) ** 2


def currents(t, **p):
    beta, lam = mp.mpf(p["beta"]), mp.mpf(p["lam"])
    r0, r1, _, s1, s2 = amplitudes(t, **p)
    loss = -mp.diff(lambda s: norm(s, **p), mp.mpf(t))
    w = [2 * beta * (abs(r0) ** 2 + abs(r1) ** 2), 2 * beta * abs(s1) ** 2, 2 * lam * abs(s2) ** 2]
    total = sum(w)
    return [loss * wk / total for wk in w], norm(t, **p)


def golden_rows(times, **p):
    rows = []
    for t in times:
        r0, r1, s0, s1, s2 = amplitudes(t, **p)
        a0, a1, a2 = r0 + s0, r1 + s1, s2
        j, n = currents(t, **p)
        rows.append([mp.mpf(t), a0.real, a0.imag, a1.real, a1.imag, a2.real, a2.imag, n, *j])
    return rows


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "golden" / "analytic_default.csv"
    times = [10 * k for k in range(11)]
    lines = ["t,re_a0,im_a0,re_a1,im_a1,re_a2,im_a2,norm,j_fluor,j_reset_gamma,j_reset_gamma_prime"]
    for row in golden_rows(times, **DEFAULT):
        lines.append(",".join(mp.nstr(v, 25, min_fixed=-5, max_fixed=5) for v in row))
    out.write_text("\n".join(lines) + "\n")
    sys.stdout.write(out.read_text())
