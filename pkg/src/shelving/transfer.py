"""
Population transfer into the metastable manifolds.

Rabi frequencies and dephasing rates are ordinary frequencies (Hz) and the
sweep rate is in Hz/s, so the Landau-Zener exponents are the dimensionless
ratios pi^2 Omega^2 / alpha and 2 pi^2 Gamma Omega / alpha.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar


@dataclass(frozen=True)
class RapParams:
    omega: float
    gamma: float
    alpha: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("Rabi frequency must be positive")
        if not self.gamma >= 0:
            raise ValueError("dephasing rate must be non-negative")
        if not self.alpha > 0:
            raise ValueError("sweep rate must be positive (alpha -> 0 is handled by rap_max_transfer)")


def _rap(omega, gamma, alpha):
    dephase = np.exp(-2 * math.pi**2 * gamma * omega / alpha)
    p_lz = -np.expm1(-math.pi**2 * omega**2 / alpha)
    return 0.5 * (1 - dephase) + dephase * p_lz


def rap_probability(p: RapParams) -> float:
    """Landau-Zener transfer probability with Markovian dephasing."""
    return float(_rap(p.omega, p.gamma, p.alpha))


def rap_curve(omega, gamma, alphas):
    """Vectorised transfer probability over an array of sweep rates."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0):
        raise ValueError("sweep rate must be positive")
    return _rap(omega, gamma, alphas)


class RapOptimum(NamedTuple):
    alpha: float
    probability: float
    supremum: bool = False  # True when the optimum is only approached as alpha -> 0


def rap_max_transfer(omega: float, gamma: float) -> RapOptimum:
    """
    Sweep rate maximising the transfer probability, found by bounded Brent
    search over log(alpha).

    With ``gamma == 0`` the probability increases monotonically as the sweep
    slows, so the supremum 1 is reported with ``supremum=True``.
    """
    if not omega > 0:
        raise ValueError("Rabi frequency must be positive")
    if gamma < 0:
        raise ValueError("dephasing rate must be non-negative")
    if gamma == 0:
        return RapOptimum(0.0, 1.0, True)

    # a coarse log-spaced grid brackets the single interior maximum; the
    # curve is flat at 1/2 (slow sweep) and 0 (fast sweep) far from it
    centre = math.log(math.pi**2 * omega**2)
    grid = np.linspace(centre - 60.0, centre + 60.0, 2401)
    best = int(np.argmax(_rap(omega, gamma, np.exp(grid))))
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, len(grid) - 1)]
    res = minimize_scalar(
        lambda la: -_rap(omega, gamma, math.exp(la)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12, "maxiter": 500},
    )
    return RapOptimum(math.exp(res.x), float(-res.fun))


def coherence_to_gamma(t_coh: float) -> float:
    if not t_coh > 0:
        raise ValueError("coherence time must be positive")
    return 1.0 / t_coh


# ---------------------------------------------------------------------------
# multi-pulse shelving

@dataclass(frozen=True)
class PulseSequence:
    efficiencies: tuple[float, ...]

    def __post_init__(self):
        eff = tuple(float(f) for f in self.efficiencies)
        if not eff:
            raise ValueError("pulse sequence must contain at least one pulse")
        if any(not 0 <= f <= 1 for f in eff):
            raise ValueError("pulse efficiencies must lie in [0, 1]")
        object.__setattr__(self, "efficiencies", eff)

    def __len__(self):
        return len(self.efficiencies)


class ShelvingResidual(NamedTuple):
    residual: float
    trajectory: np.ndarray  # residual after each pulse


def sequence_residual(seq: PulseSequence) -> ShelvingResidual:
    traj = np.cumprod(1.0 - np.asarray(seq.efficiencies))
    return ShelvingResidual(float(traj[-1]), traj)


def calibrate_sequence(first_efficiency: float, n_pulses: int, final_residual: float) -> PulseSequence:
    """
    Pulse sequence whose first pulse has ``first_efficiency`` and whose
    remaining ``n_pulses - 1`` identical pulses bring the residual down to
    ``final_residual``.
    """
    if n_pulses < 1:
        raise ValueError("need at least one pulse")
    first_residual = 1.0 - first_efficiency
    if n_pulses == 1:
        return PulseSequence((first_efficiency,))
    if not 0 < final_residual <= first_residual:
        raise ValueError("final residual must be positive and no larger than the first-pulse residual")
    per_pulse = (final_residual / first_residual) ** (1.0 / (n_pulses - 1))
    return PulseSequence((first_efficiency,) + (1.0 - per_pulse,) * (n_pulses - 1))


# S1/2|1> -> D5/2|3>: dmF = 0, +-2 (three pulses); S1/2|0> -> D5/2|2>: five pulses
SHELVE_TO_D3 = calibrate_sequence(0.939, 3, 0.016)
SHELVE_TO_D2 = calibrate_sequence(0.979, 5, 0.007)


# ---------------------------------------------------------------------------
# incoherent pumping into F7/2

@dataclass(frozen=True)
class PumpModel:
    p_inf: float = 1.0
    tau_pump: float = 0.1 / math.log(1000.0)

    def __post_init__(self):
        if not 0 <= self.p_inf <= 1:
            raise ValueError("p_inf must lie in [0, 1]")
        if not self.tau_pump > 0:
            raise ValueError("pump time constant must be positive")

    @classmethod
    def calibrated(cls, t: float, probability: float, p_inf: float = 1.0) -> "PumpModel":
        """Single-exponential model passing through ``probability`` at time ``t``."""
        if not 0 <= probability < p_inf:
            raise ValueError("target probability must be below p_inf")
        return cls(p_inf, t / -math.log1p(-probability / p_inf))


def incoherent_pump_probability(t: float, m: PumpModel = PumpModel()) -> float:
    if t < 0:
        raise ValueError("pump time must be non-negative")
    return m.p_inf * -math.expm1(-t / m.tau_pump)
