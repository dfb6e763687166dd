"""
Measured 171Yb+ parameters for electron-shelved detection, transition
frequency calculators, and stochastic decay sampling.

Frequencies are in Hz, magnetic fields in microtesla, times in seconds.
"""
from __future__ import annotations

import enum
import functools
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .rng import as_generator


class StableStateError(ValueError):
    """Raised when asking a level without a decay table to decay."""


class UnsupportedTransition(ValueError):
    pass


class Term(str, enum.Enum):
    S12 = "S12"
    P12 = "P12"
    D32 = "D32"
    D52 = "D52"
    F72 = "F72"
    B1D32 = "B1D32"  # the 1[3/2]3/2 level reached by the 760 nm repumper


# allowed hyperfine F for I = 1/2
_ALLOWED_F = {
    Term.S12: (0, 1),
    Term.P12: (0, 1),
    Term.D32: (1, 2),
    Term.D52: (2, 3),
    Term.F72: (3, 4),
    Term.B1D32: (1, 2),
}


@dataclass(frozen=True)
class Level:
    term: Term
    F: int
    mF: int = 0

    def __post_init__(self):
        object.__setattr__(self, "term", Term(self.term))
        if self.F not in _ALLOWED_F[self.term]:
            raise ValueError(f"F={self.F} not allowed for {self.term.value}")
        if abs(self.mF) > self.F:
            raise ValueError(f"mF={self.mF} outside [-{self.F}, {self.F}]")

    def __str__(self):
        return f"{self.term.value}|{self.F},{self.mF}>"


@dataclass(frozen=True)
class Measured:
    """A value with its 1-sigma uncertainty."""

    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("uncertainty must be non-negative")

    def __float__(self):
        return float(self.value)


def _m(value, sigma):
    return field(default=Measured(value, sigma))


@dataclass(frozen=True)
class AtomicConstants:
    # line centres (Hz)
    f_411_S0_D2: Measured = _m(729.487752e12, 177e6)
    f_411_S1_D3: Measured = _m(729.474917e12, 177e6)
    f_760_after_D3: Measured = _m(394.430203e12, 16e6)
    f_760_after_D2: Measured = _m(394.424943e12, 20e6)
    hyperfine_A_D52: Measured = _m(-63.368e6, 1e3)
    # linear Zeeman coefficients (Hz/uT per unit mF)
    zeeman_S12: Measured = _m(13.98e3, 0.01e3)
    zeeman_D52_F3: Measured = _m(13.96e3, 0.02e3)
    zeeman_D52_F2: Measured = _m(19.61e3, 0.03e3)
    # quadratic Zeeman coefficient of D5/2|3,0> (Hz/uT^2)
    quad_zeeman_D52_F3_m0: Measured = _m(-0.350, 0.001)
    # lifetimes (s)
    lifetime_D52_F3: Measured = _m(7.1e-3, 0.4e-3)
    lifetime_D52_F2: Measured = _m(7.4e-3, 0.4e-3)
    # branching fractions
    branch_D3_to_S1: Measured = _m(0.176, 0.004)
    branch_D3_to_F72: Measured = _m(0.824, 0.004)
    branch_D2_to_S0: Measured = _m(0.111, 0.003)
    branch_D2_to_S1: Measured = _m(0.074, 0.003)
    branch_D2_to_F72: Measured = _m(0.816, 0.004)

    def __post_init__(self):
        for name in ("lifetime_D52_F3", "lifetime_D52_F2"):
            if getattr(self, name).value <= 0:
                raise ValueError(f"{name} must be positive")
        for f in fields(self):
            if f.name.startswith("branch_") and not 0 <= getattr(self, f.name).value <= 1:
                raise ValueError(f"{f.name} outside [0, 1]")

    def lifetime(self, level: Level) -> float:
        if level.term is Term.F72:
            return math.inf
        if level.term is Term.D52:
            return (self.lifetime_D52_F3 if level.F == 3 else self.lifetime_D52_F2).value
        raise StableStateError(f"no decay table for {level}")

    @functools.lru_cache(maxsize=None)
    def branching(self, level: Level) -> list[tuple[Level, float]]:
        """Normalised decay branches of a D5/2 hyperfine level."""
        if level.term is not Term.D52:
            raise StableStateError(f"no decay table for {level}")
        if level.F == 3:
            raw = [
                (Level(Term.S12, 1, 0), self.branch_D3_to_S1.value),
                (Level(Term.F72, 3, 0), self.branch_D3_to_F72.value),
            ]
        else:
            raw = [
                (Level(Term.S12, 0, 0), self.branch_D2_to_S0.value),
                (Level(Term.S12, 1, 0), self.branch_D2_to_S1.value),
                (Level(Term.F72, 3, 0), self.branch_D2_to_F72.value),
            ]
        total = sum(p for _, p in raw)
        return [(lvl, p / total) for lvl, p in raw]

    def s_branch(self, level: Level) -> float:
        """Probability that a decay from ``level`` lands back in S1/2."""
        return sum(p for lvl, p in self.branching(level) if lvl.term is Term.S12)

    # -- config overrides ------------------------------------------------
    def with_overrides(self, overrides: dict) -> "AtomicConstants":
        """
        Return a copy with values replaced.

        Keys are the row names in :data:`TABLE_KEYS`; values are either a
        number (in the row's units, uncertainty kept) or ``[value, sigma]``.
        """
        changes = {}
        for key, raw in overrides.items():
            if key not in TABLE_KEYS:
                raise KeyError(f"unknown atomic constant {key!r}")
            attr, scale = TABLE_KEYS[key]
            old = getattr(self, attr)
            if isinstance(raw, (list, tuple)):
                changes[attr] = Measured(raw[0] * scale, raw[1] * scale)
            else:
                changes[attr] = Measured(raw * scale, old.sigma)
        return replace(self, **changes)

    @classmethod
    def from_json(cls, path) -> "AtomicConstants":
        return cls().with_overrides(json.loads(Path(path).read_text()))


# config key -> (attribute, multiplier from the table's units to SI)
TABLE_KEYS = {
    "411nm frequency S1/2|0,0> - D5/2|2,0> (THz)": ("f_411_S0_D2", 1e12),
    "411nm frequency S1/2|1,0> - D5/2|3,0> (THz)": ("f_411_S1_D3", 1e12),
    "Hyperfine constant of D5/2 (MHz)": ("hyperfine_A_D52", 1e6),
    "Linear Zeeman coefficient of D5/2|3> (kHz/uT)": ("zeeman_D52_F3", 1e3),
    "Linear Zeeman coefficient of D5/2|2> (kHz/uT)": ("zeeman_D52_F2", 1e3),
    "Linear Zeeman coefficient of S1/2 (kHz/uT)": ("zeeman_S12", 1e3),
    "Quadratic Zeeman coefficient for D5/2|3,0> (Hz/uT^2)": ("quad_zeeman_D52_F3_m0", 1.0),
    "Lifetime of D5/2|3> (ms)": ("lifetime_D52_F3", 1e-3),
    "Decay from D5/2|3> to S1/2|1>": ("branch_D3_to_S1", 1.0),
    "Decay from D5/2|3> to F7/2": ("branch_D3_to_F72", 1.0),
    "Lifetime of D5/2|2> (ms)": ("lifetime_D52_F2", 1e-3),
    "Decay from D5/2|2> to S1/2|0>": ("branch_D2_to_S0", 1.0),
    "Decay from D5/2|2> to S1/2|1>": ("branch_D2_to_S1", 1.0),
    "Decay from D5/2|2> to F7/2": ("branch_D2_to_F72", 1.0),
    "760nm repumper center frequency after preparing D5/2|3,0> (THz)": ("f_760_after_D3", 1e12),
    "760nm repumper center frequency after preparing D5/2|2,0> (THz)": ("f_760_after_D2", 1e12),
}

DEFAULT_CONSTANTS = AtomicConstants()


# ---------------------------------------------------------------------------
# frequencies

def zeeman_shift(level: Level, B: float, constants: AtomicConstants = DEFAULT_CONSTANTS) -> float:
    """Energy shift of ``level`` (in Hz) at field ``B`` (uT)."""
    c = constants
    if level.term is Term.S12:
        linear = c.zeeman_S12.value
    elif level.term is Term.D52:
        linear = (c.zeeman_D52_F3 if level.F == 3 else c.zeeman_D52_F2).value
    else:
        linear = 0.0
    shift = linear * level.mF * B
    if level.term is Term.D52 and level.F == 3 and level.mF == 0:
        shift += c.quad_zeeman_D52_F3_m0.value * B**2
    return shift


def line_center(lower: Level, upper: Level, constants: AtomicConstants = DEFAULT_CONSTANTS) -> float:
    c = constants
    key = (lower.term, lower.F, upper.term, upper.F)
    if key == (Term.S12, 0, Term.D52, 2):
        return c.f_411_S0_D2.value
    if key == (Term.S12, 1, Term.D52, 3):
        return c.f_411_S1_D3.value
    if lower.term is Term.F72 and upper.term is Term.B1D32:
        # D5/2|3> feeds F7/2 F=4 (and 3); D5/2|2> can only reach F=3
        return (c.f_760_after_D3 if lower.F == 4 else c.f_760_after_D2).value
    raise UnsupportedTransition(f"unsupported transition {lower} -> {upper}")


def transition_frequency(lower: Level, upper: Level, B: float,
                         constants: AtomicConstants = DEFAULT_CONSTANTS) -> float:
    """Line centre plus the Zeeman shift of the upper minus the lower level."""
    if B < 0:
        raise ValueError("field magnitude must be non-negative")
    center = line_center(lower, upper, constants)
    return center + zeeman_shift(upper, B, constants) - zeeman_shift(lower, B, constants)


# ---------------------------------------------------------------------------
# decays

@dataclass(frozen=True)
class DecayEvent:
    delay: float
    destination: Level | None

    @property
    def decays(self) -> bool:
        return math.isfinite(self.delay)


NO_DECAY = DecayEvent(math.inf, None)


def sample_decay(source: Level, rng_seed=None, constants: AtomicConstants = DEFAULT_CONSTANTS) -> DecayEvent:
    """
    Draw one spontaneous decay from ``source``.

    F7/2 is treated as non-decaying and returns :data:`NO_DECAY`. The delay
    is drawn before the destination so streams stay aligned between calls.
    """
    if source.term is Term.F72:
        return NO_DECAY
    tau = constants.lifetime(source)
    branches = constants.branching(source)
    rng = as_generator(rng_seed)
    delay = tau * rng.standard_exponential()
    u = rng.random()
    acc = 0.0
    for lvl, p in branches:
        acc += p
        if u < acc:
            return DecayEvent(delay, lvl)
    return DecayEvent(delay, branches[-1][0])


def sample_decays(source: Level, n: int, rng_seed=None, constants: AtomicConstants = DEFAULT_CONSTANTS):
    """Vectorised draws: returns (delays, destination index into branching(source))."""
    if source.term is Term.F72:
        return np.full(n, np.inf), np.full(n, -1)
    tau = constants.lifetime(source)
    probs = np.array([p for _, p in constants.branching(source)])
    rng = as_generator(rng_seed)
    delays = tau * rng.standard_exponential(n)
    dest = np.searchsorted(np.cumsum(probs), rng.random(n), side="right")
    return delays, np.minimum(dest, len(probs) - 1)
