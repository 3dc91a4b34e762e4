"""Envelope pairs for state-dependent hazards and the validator suite.

An :class:`EnvelopePair` declares state-free bounds ``phi(s) <= rate <= q(s)``
for one element/phase slot, along with a moment order ``k``, a neighbourhood
radius ``epsilon`` and a positivity threshold ``t_delay``.  The four checks
below verify, numerically:

  a. the declared bounds actually sandwich the modulated hazard on a grid;
  b. the lower envelope accumulates unbounded hazard while the induced
     lifetime keeps a finite moment of order k;
  c. the upper envelope integrates to less than 1 near zero;
  d. the lower envelope is strictly positive beyond t_delay.

All four return report objects; violations are data, not exceptions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

from .hazards import GeneralizedIntensity
from .rates import RateFunction

_DEFAULT_OWN_TIMES = tuple(np.concatenate(([0.0], np.geomspace(1e-3, 50.0, 40))))
_DEFAULT_OTHER_CLOCKS = (0.0, 0.5, 2.0, 10.0)


@dataclass(frozen=True)
class EnvelopePair:
    """State-free hazard bounds plus the scalar knobs used by the validators."""

    phi: RateFunction
    q: RateFunction
    k: int = 2
    epsilon: float = 0.1
    t_delay: float = 0.0

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("moment order k must be an integer >= 2")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.t_delay < 0:
            raise ValueError("t_delay must be >= 0")

    def lower_cdf(self, s: float) -> float:
        """D.f. induced by the lower envelope (the slowest admissible lifetime)."""
        return 1.0 - math.exp(-self.phi.cumulative(0.0, s))

    def upper_cdf(self, s: float) -> float:
        """D.f. induced by the upper envelope (the fastest admissible lifetime)."""
        return 1.0 - math.exp(-self.q.cumulative(0.0, s))


@dataclass(frozen=True)
class MomentVector:
    """Per-slot lifetime moments of the lower-envelope distributions."""

    order: float
    entries: Dict[Tuple[int, int], float]  # (element 1|2, status 0|1) -> value

    def __post_init__(self):
        for key, v in self.entries.items():
            if v < 0:
                raise ValueError(f"moment entry {key} is negative")


@dataclass(frozen=True)
class ConditionGrid:
    """Evaluation grid for the pointwise envelope check."""

    own_times: Tuple[float, ...] = _DEFAULT_OWN_TIMES
    other_clocks: Tuple[float, ...] = _DEFAULT_OTHER_CLOCKS


@dataclass
class ConditionAReport:
    passed: bool
    points_checked: int
    # (element, status, s, other-state label, rate, lo, hi)
    violations: List[Tuple[int, int, float, str, float, float, float]] = field(default_factory=list)


@dataclass
class ConditionBReport:
    passed: bool
    hazard_diverges: bool
    tail_converges: bool
    tail_value: Optional[float]
    k: int


@dataclass
class ConditionCReport:
    passed: bool
    integral: float
    epsilon: float
    largest_passing_epsilon: float


@dataclass
class ConditionDReport:
    passed: bool
    t_delay: float
    violations: List[float] = field(default_factory=list)


def check_condition_a(field_obj, env: Optional[EnvelopePair] = None,
                      grid: Optional[ConditionGrid] = None) -> ConditionAReport:
    """Verify phi(s) <= modulated rate <= q(s) on the grid, for every slot.

    ``field_obj`` must iterate ``slots()`` as (element, status, law) where the
    law carries a base intensity, a modulator and (unless ``env`` overrides)
    its own declared envelope.  The hazard is evaluated as a function of the
    element's own elapsed time, sweeping the other element's phase and clock.
    """
    grid = grid or ConditionGrid()
    report = ConditionAReport(passed=True, points_checked=0)
    for element, status, law in field_obj.slots():
        pair = env if env is not None else law.envelope
        if pair is None:
            report.passed = False
            report.violations.append((element, status, math.nan, "no envelope declared",
                                      math.nan, math.nan, math.nan))
            continue
        for s in grid.own_times:
            lo = pair.phi.rate(s)
            hi = pair.q.rate(s)
            base = law.base.continuous.rate(s)
            for other_tag, other_clock, label in law.modulator.sweep(grid.other_clocks):
                rate = base * law.modulator.factor(other_tag, other_clock)
                report.points_checked += 1
                if not (lo <= rate * (1 + 1e-12) + 1e-15 and
                        rate <= hi * (1 + 1e-12) + 1e-15):
                    report.passed = False
                    report.violations.append((element, status, s, label, rate, lo, hi))
                if lo > hi * (1 + 1e-12):
                    report.passed = False
                    report.violations.append((element, status, s, "phi > q", lo, lo, hi))
    return report


def check_condition_b(env: EnvelopePair,
                      divergence_threshold: float = 50.0,
                      max_horizon: float = 1e6,
                      min_decade_gain: float = 0.5) -> ConditionBReport:
    """Check that the lower envelope diverges and keeps the order-k tail finite.

    Divergence is a numeric heuristic: the cumulative integral must either
    exceed ``divergence_threshold`` by ``max_horizon``, or keep gaining at
    least ``min_decade_gain`` per decade over the last decades (slowly
    divergent envelopes such as c/(1+s) pass through the trend clause).
    """
    ms = np.geomspace(1.0, max_horizon, 25)
    cums = [env.phi.cumulative(0.0, float(m)) for m in ms]
    diverges = cums[-1] >= divergence_threshold
    if not diverges:
        # trend clause: sustained growth across the trailing decades
        decades = np.geomspace(max_horizon / 1e3, max_horizon, 4)
        vals = [env.phi.cumulative(0.0, float(m)) for m in decades]
        gains = [b - a for a, b in zip(vals, vals[1:])]
        diverges = all(g >= min_decade_gain for g in gains)

    tail_value, tail_converges = _tail_moment_integral(env.phi, env.k)
    passed = diverges and tail_converges
    return ConditionBReport(passed=passed, hazard_diverges=diverges,
                            tail_converges=tail_converges,
                            tail_value=tail_value, k=env.k)


def _tail_moment_integral(phi: RateFunction, k: int) -> Tuple[Optional[float], bool]:
    """integral of x^(k-1) exp(-int_0^x phi) dx over doubling windows.

    Window contributions of a convergent integral shrink geometrically, so the
    open tail is closed off by geometric extrapolation once the estimated
    remainder is negligible; sustained window ratios near or above 1 flag
    divergence instead.
    """
    def window(lo: float, hi: float) -> float:
        f = lambda x: x ** (k - 1) * math.exp(-phi.cumulative(0.0, x))
        val, _ = integrate.quad(f, lo, hi, epsrel=1e-9, epsabs=1e-14, limit=200)
        return val

    total = window(0.0, 1.0)
    lo, hi = 1.0, 2.0
    last = None
    ratios = []
    for _ in range(64):
        cur = window(lo, hi)
        total += cur
        if last is not None and last > 0:
            ratios.append(cur / last)
            if len(ratios) >= 3 and all(r >= 0.95 for r in ratios[-3:]):
                return None, False
            r = max(ratios[-2:])
            if r < 0.95:
                remainder = cur * r / (1.0 - r)
                if remainder <= 1e-7 * max(total, 1e-300):
                    return total + remainder, True
        if cur == 0.0:
            return total, True
        last = cur
        lo, hi = hi, 2.0 * hi
    return None, False


def check_condition_c(env: EnvelopePair) -> ConditionCReport:
    """Upper-envelope mass near zero: integral of q over (0, epsilon) must be < 1."""
    def mass(e: float) -> float:
        val, _ = integrate.quad(env.q.rate, 0.0, e, epsrel=1e-9, epsabs=1e-14, limit=200)
        return val

    integral = mass(env.epsilon)
    if integral < 1.0:
        return ConditionCReport(True, integral, env.epsilon, env.epsilon)
    # bisect for the largest radius that still passes strictly
    lo, hi = 0.0, env.epsilon
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if mass(mid) < 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-9:
            break
    return ConditionCReport(False, integral, env.epsilon, lo)


def check_condition_d(env: EnvelopePair,
                      grid: Optional[Tuple[float, ...]] = None) -> ConditionDReport:
    """Lower envelope strictly positive at every grid point beyond t_delay."""
    if grid is None:
        start = env.t_delay + 1e-6
        grid = tuple(np.geomspace(max(start, 1e-6), max(start * 10, 100.0), 50))
    bad = [float(s) for s in grid if s > env.t_delay and env.phi.rate(float(s)) <= 0.0]
    return ConditionDReport(passed=not bad, t_delay=env.t_delay, violations=bad)


def envelope_moment_vector(field_obj, ell: float) -> MomentVector:
    """Order-ell moments of each slot's lower-envelope lifetime distribution."""
    from .hazards import moment  # local import keeps module load light
    entries = {}
    for element, status, law in field_obj.slots():
        if law.envelope is None:
            continue
        gi = GeneralizedIntensity(continuous=law.envelope.phi)
        entries[(element, status)] = moment(gi, ell)
    return MomentVector(order=ell, entries=entries)
