"""Domain types shared by the analytic, engine and trajectory layers."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import (
    ConfigError,
    InvalidRegime,
    NonPositive,
    PerturbationViolation,
    PhotonDepleted,
)


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the driven three-level atom plus numeric knobs.

    Times are in an arbitrary caller-chosen unit; every rate is per that
    unit.  Construction does not validate; call :func:`validate_params`
    (the simulation entry points do so themselves).
    """

    rabi_frequency: float = 1.0
    strong_decay: float = 0.1
    weak_decay: float = 0.001
    resonance_amp_a: complex = 0.05j
    resonance_amp_b: complex = 0.05 + 0j
    strong_photons: int = 1_000_000
    weak_photons: int = 1_000_000
    phantom_epsilon: float = 1e-12
    max_hazard_step: float = 0.01

    def replace(self, **changes: Any) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    @property
    def resonance_weight(self) -> float:
        """Total resonance population prefactor ``2|A|^2 + |B|^2``."""
        return 2.0 * abs(self.resonance_amp_a) ** 2 + abs(self.resonance_amp_b) ** 2

    def to_dict(self) -> dict[str, str]:
        return {f.name: format_value(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SystemParams":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ConfigError(f"unknown parameter keys: {sorted(unknown)}")
        kwargs = {name: parse_value(known[name].type, raw[name]) for name in raw}
        return cls(**kwargs)


def format_value(value: Any) -> str:
    """Decimal text that round-trips doubles exactly (17 significant digits)."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, complex):
        return f"{value.real:.17g}{value.imag:+.17g}j"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def parse_value(type_name: Any, text: Any) -> Any:
    if not isinstance(text, str):
        return text
    kind = type_name if isinstance(type_name, str) else getattr(type_name, "__name__", "")
    s = text.strip()
    try:
        if kind == "complex":
            return complex(s.replace(" ", ""))
        if kind == "int":
            return int(s)
        if kind == "float":
            return float(s)
        if kind == "bool":
            if s.lower() in ("true", "1", "yes"):
                return True
            if s.lower() in ("false", "0", "no"):
                return False
            raise ValueError(s)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {text!r} as {kind}") from exc
    return s


def validate_params(raw: SystemParams) -> SystemParams:
    """Return ``raw`` unchanged if it describes a supported regime.

    Besides the basic ordering and sign constraints, the closed-form norm
    ``N(t)`` must never increase: the interference between the Rabi and
    resonance envelopes can make it grow when ``Re(A)`` is large compared
    to ``|A|^2``, and a growing norm has no reading as a survival function.
    """
    p = raw
    for name in ("rabi_frequency", "strong_decay", "weak_decay", "phantom_epsilon", "max_hazard_step"):
        if not math.isfinite(getattr(p, name)):
            raise NonPositive(f"{name} must be finite")
    if p.rabi_frequency <= 0:
        raise NonPositive(f"rabi_frequency must be > 0, got {p.rabi_frequency}")
    if p.strong_decay <= 0:
        raise NonPositive(f"strong_decay must be > 0, got {p.strong_decay}")
    if p.weak_decay < 0:
        raise NonPositive(f"weak_decay must be >= 0, got {p.weak_decay}")
    if p.weak_decay >= p.strong_decay:
        raise InvalidRegime(
            f"weak_decay ({p.weak_decay}) must be < strong_decay ({p.strong_decay})"
        )
    if not (abs(p.resonance_amp_a) < 1 and abs(p.resonance_amp_b) < 1):
        raise PerturbationViolation("|resonance_amp_a| and |resonance_amp_b| must both be < 1")
    if p.strong_photons < 1 or p.weak_photons < 1:
        raise PhotonDepleted("strong_photons and weak_photons must both be >= 1")
    if p.phantom_epsilon < 0:
        raise NonPositive("phantom_epsilon must be >= 0")
    if not 0 < p.max_hazard_step <= 0.1:
        raise NonPositive("max_hazard_step must lie in (0, 0.1]")
    if not _norm_non_increasing(p):
        raise PerturbationViolation(
            "closed-form norm grows for these resonance amplitudes "
            "(interference term exceeds the decay terms); reduce Re(A)"
        )
    return p


def _norm_non_increasing(p: SystemParams) -> bool:
    # -dN/dt = e^{-2 lam t} q(r), r = e^{-(beta - lam) t} sweeps (0, 1].
    beta, lam = p.strong_decay, p.weak_decay
    c = p.resonance_weight
    f = 1.0 + c + 2.0 * p.resonance_amp_a.real
    g = 2.0 * (p.resonance_amp_a.real + c)

    def q(r: float) -> float:
        return 2 * beta * f * r * r - (beta + lam) * g * r + 2 * lam * c

    candidates = [1e-300, 1.0]
    r_star = (beta + lam) * g / (4 * beta * f)
    if 0 < r_star < 1:
        candidates.append(r_star)
    # Tiny negative values are rounding noise on an exactly-zero minimum.
    return min(q(r) for r in candidates) >= -1e-15


class PhotonKind(enum.Enum):
    STRONG_GAMMA = "gamma"
    WEAK_GAMMA_PRIME = "gamma_prime"


class ChannelKind(enum.IntEnum):
    """Ready components; the integer order is also the tie-break order."""

    FLUORESCENT_GAMMA = 0
    RESET_GAMMA = 1
    RESET_GAMMA_PRIME = 2

    @property
    def photon(self) -> PhotonKind:
        if self is ChannelKind.RESET_GAMMA_PRIME:
            return PhotonKind.WEAK_GAMMA_PRIME
        return PhotonKind.STRONG_GAMMA

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class AmplitudeVector:
    a0: Any
    a1: Any
    a2: Any
    t: Any

    @property
    def norm(self) -> Any:
        return abs(self.a0) ** 2 + abs(self.a1) ** 2 + abs(self.a2) ** 2


@dataclass(frozen=True)
class AmplitudeSplit:
    """Rabi (cos/sin) and three-state resonance parts of the amplitudes."""

    rabi_a0: Any
    rabi_a1: Any
    res_a0: Any
    res_a1: Any
    res_a2: Any

    @property
    def a0(self) -> Any:
        return self.rabi_a0 + self.res_a0

    @property
    def a1(self) -> Any:
        return self.rabi_a1 + self.res_a1

    @property
    def a2(self) -> Any:
        return self.res_a2


@dataclass(frozen=True)
class ReadyChannel:
    """A ready component and the normalized current flowing into it.

    ``inflow_current`` is the current divided by the surviving norm, i.e.
    this channel's share of the hazard rate.
    """

    kind: ChannelKind
    inflow_current: float
    is_phantom: bool

    @classmethod
    def evaluate(cls, kind: ChannelKind, current: float, epsilon: float) -> "ReadyChannel":
        current = max(float(current), 0.0)
        return cls(kind, current, current <= epsilon)


class Phase(enum.Enum):
    FLUORESCENT = "fluorescent"
    DARK = "dark"
