"""Idealized fixed-point amplitude amplification with a query ledger.

Two engines live here. ``ideal_amplify`` is the contract used by the sieve
emulation: enough rounds give the good state with certainty, no good mass
gives flag 0, and every call is charged ``r * (S + C)`` steps. The numeric
simulator runs the actual fixed-point phase schedule in the 2-D plane
spanned by the good and bad components; it is used to check the round
count formula and to calibrate its constant.

The schedule is the Chebyshev-phase construction: with ``L = 2l + 1``
oracle calls and target error ``delta`` the success probability is
``1 - delta^2 * T_L(T_{1/L}(1/delta) * sqrt(1 - good_mass))^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_ETA = 2.0
DEFAULT_DELTA = 2.0**-64


class InfiniteRounds(ArithmeticError):
    """No good mass: no number of rounds reaches the good subspace."""


@dataclass(frozen=True)
class AmplifiableState:
    good_mass: float
    sampler_cost: float = 1.0
    checker_cost: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.good_mass <= 1.0:
            raise ValueError(f"good_mass must lie in [0, 1], got {self.good_mass}")
        if self.sampler_cost < 0 or self.checker_cost < 0:
            raise ValueError("costs must be nonnegative")


@dataclass
class QueryLedger:
    samp_calls: float = 0
    check_calls: float = 0
    total_steps: float = 0
    levels: list = field(default_factory=list)

    def charge(self, r, sampler_cost, checker_cost, label=""):
        self.samp_calls += r
        self.check_calls += r
        steps = r * (sampler_cost + checker_cost)
        self.total_steps += steps
        self.levels.append({"label": label, "r": r, "S": sampler_cost, "C": checker_cost, "steps": steps})

    def add_steps(self, steps, label=""):
        """Charge a one-off cost outside any amplification loop."""
        self.total_steps += steps
        self.levels.append({"label": label, "r": 1, "S": steps, "C": 0, "steps": steps})

    def merge(self, other: "QueryLedger") -> "QueryLedger":
        self.samp_calls += other.samp_calls
        self.check_calls += other.check_calls
        self.total_steps += other.total_steps
        self.levels.extend(other.levels)
        return self

    def to_dict(self) -> dict:
        return {
            "samp_calls": self.samp_calls,
            "check_calls": self.check_calls,
            "total_steps": self.total_steps,
            "levels": list(self.levels),
        }


def rounds_needed(good_mass: float, delta: float, eta: float = DEFAULT_ETA) -> int:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if eta <= 0:
        raise ValueError("eta must be positive")
    if good_mass <= 0.0:
        raise InfiniteRounds("good mass is zero")
    return max(1, math.ceil(eta * math.log2(1.0 / delta) / math.sqrt(good_mass) - 1e-12))


@dataclass(frozen=True)
class AmplifyOutcome:
    flag: int
    heuristic: bool = False


def ideal_amplify(
    state: AmplifiableState,
    r: int,
    delta: float,
    ledger: QueryLedger,
    rng=None,
    eta: float = DEFAULT_ETA,
    label: str = "",
) -> AmplifyOutcome:
    """Charge ``r`` rounds and report whether the good state was reached.

    Below the round threshold the outcome is a coarse, non-normative model:
    success with probability ``min(1, r^2 * good_mass)``.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    ledger.charge(r, state.sampler_cost, state.checker_cost, label)
    if state.good_mass <= 0.0:
        return AmplifyOutcome(0)
    if r >= rounds_needed(state.good_mass, delta, eta):
        return AmplifyOutcome(1)
    if rng is None:
        raise ValueError("an rng is required below the round threshold")
    p = min(1.0, r * r * state.good_mass)
    return AmplifyOutcome(int(rng.random() < p), heuristic=True)


def nested_total(r1, s1, c1, s2, r2, s3, c3, r3, c_outer) -> float:
    """Closed form of the three-level search cost."""
    return r3 * (r1 * (s1 + c1) + s2 + r2 * (s3 + c3) + c_outer)


# ------------------------------------------------------------ numeric engine


def _cheb(n, x):
    """Chebyshev T_n(x) for real n and real x >= -1."""
    if x >= 1.0:
        return math.cosh(n * math.acosh(x))
    return math.cos(n * math.acos(max(-1.0, x)))


def schedule_length(r: int) -> int:
    """Odd number of oracle calls used for a budget of r rounds."""
    if r < 1:
        raise ValueError("r must be at least 1")
    return r if r % 2 else r - 1


def fixed_point_phases(L: int, delta: float):
    if L % 2 != 1:
        raise ValueError("schedule length must be odd")
    l = (L - 1) // 2
    gamma = 1.0 / _cheb(1.0 / L, 1.0 / delta)
    s = math.sqrt(max(0.0, 1.0 - gamma * gamma))
    j = np.arange(1, l + 1)
    alphas = 2.0 * np.arctan2(1.0, np.tan(2.0 * np.pi * j / L) * s)
    betas = -alphas[::-1]
    return alphas, betas


def simulate_schedule(good_mass: float, L: int, delta: float) -> complex:
    """Amplitude on the good direction after the L-call schedule."""
    a = math.sqrt(1.0 - good_mass)
    b = math.sqrt(good_mass)
    s = np.array([a, b], dtype=complex)  # basis (bad, good)
    proj_s = np.outer(s, s.conj())
    eye = np.eye(2, dtype=complex)
    psi = s.copy()
    for alpha, beta in zip(*fixed_point_phases(L, delta)):
        s_s = eye - (1.0 - np.exp(-1j * alpha)) * proj_s
        s_t = np.diag([1.0, np.exp(1j * beta)])
        psi = -(s_s @ (s_t @ psi))
    return complex(psi[1])


def numeric_fixed_point_aa(good_mass: float, r: int, delta: float) -> float:
    """|<good | output>| after r rounds of the fixed-point schedule."""
    if not 0.0 < good_mass <= 1.0:
        raise ValueError("good_mass must lie in (0, 1]")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return abs(simulate_schedule(good_mass, schedule_length(r), delta))


def closed_form_success(good_mass: float, L: int, delta: float) -> float:
    """Success probability of the schedule from its Chebyshev form."""
    g_inv = _cheb(1.0 / L, 1.0 / delta)
    return 1.0 - delta * delta * _cheb(L, g_inv * math.sqrt(1.0 - good_mass)) ** 2


def calibrate_eta(deltas=(1e-1, 1e-2, 1e-3, 1e-6), masses=None, r_factor=4, tol=1e-3) -> float:
    """Smallest eta (to ``tol``) for which the round formula meets the fidelity
    target on every (delta, mass) pair and stays there up to ``r_factor``
    times the threshold."""
    if masses is None:
        masses = [1.0, 0.5, 0.25, 1 / 16, 1 / 64, 1 / 256]

    def ok(eta):
        for delta in deltas:
            for g in masses:
                r = rounds_needed(g, delta, eta)
                for rr in sorted({r, r + 1, 2 * r, r_factor * r}):
                    if numeric_fixed_point_aa(g, rr, delta) < 1.0 - delta:
                        return False
        return True

    lo, hi = 0.0, DEFAULT_ETA
    while not ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid > 0 and ok(mid):
            hi = mid
        else:
            lo = mid
    return hi
