"""Independent brute-force oracles and statistical checks.

The 4-state continuous-time Markov chain covers the constant-intensity,
zero-delay special case of the warm-standby system; its stationary and
transient solutions serve as ground truth for the event-driven kernel.  The
renewal overshoot check exercises the classical mean-overshoot bound
E[X^2]/E[X], and the KS statistic validates samplers against analytic CDFs,
including distributions with atoms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.stats import poisson

from .hazards import GeneralizedIntensity, InfiniteMomentError, moment, sample_batch
from .kernel import IntensityField, Phase, StatusModulator
from .rates import ConstantRate

STATUS_PAIRS = ((1, 1), (1, 0), (0, 1), (0, 0))


@dataclass(frozen=True)
class CTMCSpec:
    """Generator on the four status pairs (1,1),(1,0),(0,1),(0,0)."""

    generator: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.generator, dtype=float)
        object.__setattr__(self, "generator", q)
        if q.shape != (4, 4):
            raise ValueError("generator must be 4x4")
        off = q - np.diag(np.diag(q))
        if (off < -1e-15).any():
            raise ValueError("off-diagonal rates must be >= 0")
        if np.abs(q.sum(axis=1)).max() > 1e-10:
            raise ValueError("generator rows must sum to zero")


class ReducibleChainError(ValueError):
    """Raised when the chain has no single terminal communicating class."""


def _terminal_class(q: np.ndarray) -> np.ndarray:
    """Indices of the unique closed communicating class, or raise."""
    adj = sparse.csr_matrix((q - np.diag(np.diag(q))) > 1e-15)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.setdiff1d(np.arange(4), members)
        if len(outside) == 0 or q[np.ix_(members, outside)].max(initial=0.0) <= 1e-15:
            closed.append(members)
    if len(closed) != 1:
        raise ReducibleChainError(
            f"chain has {len(closed)} closed communicating classes; stationary "
            "distribution is not unique")
    return closed[0]


def ctmc_stationary(spec: CTMCSpec) -> np.ndarray:
    """Stationary vector from the global balance equations, residual <= 1e-12.

    Generators with transient states but a single closed class are accepted;
    the stationary mass then sits on that class.
    """
    q = spec.generator
    members = _terminal_class(q)
    sub = q[np.ix_(members, members)]
    m = len(members)
    a = np.vstack([sub.T, np.ones(m)])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    pi_sub, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.zeros(4)
    pi[members] = pi_sub
    residual = float(np.abs(pi @ q).max())
    if residual > 1e-12 or abs(pi.sum() - 1.0) > 1e-12 or (pi < -1e-12).any():
        raise RuntimeError(f"stationary solve failed (residual {residual:g})")
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


def ctmc_transient(spec: CTMCSpec, initial: Sequence[float], t: float) -> np.ndarray:
    """Distribution at time t by uniformization, truncation error <= 1e-10."""
    p0 = np.asarray(initial, dtype=float)
    if p0.shape != (4,) or abs(p0.sum() - 1.0) > 1e-9 or (p0 < 0).any():
        raise ValueError("initial must be a length-4 probability vector")
    if t < 0:
        raise ValueError("t must be >= 0")
    q = spec.generator
    lam = float(np.max(-np.diag(q)))
    if lam <= 0 or t == 0:
        return p0.copy()
    mu = lam * t
    p_mat = np.eye(4) + q / lam
    k_lo = int(poisson.ppf(1e-11, mu)) if mu > 20 else 0
    k_hi = int(poisson.ppf(1.0 - 1e-11, mu)) + 1
    # advance to the left truncation point by squaring, then accumulate terms
    vec = p0 @ np.linalg.matrix_power(p_mat, k_lo)
    weights = poisson.pmf(np.arange(k_lo, k_hi + 1), mu)
    out = np.zeros(4)
    for w in weights:
        out += w * vec
        vec = vec @ p_mat
    out /= out.sum()  # renormalise away the truncated tail (< 1e-10)
    return out


def ctmc_from_field(field: IntensityField) -> CTMCSpec:
    """Map a constant-rate, status-modulated field to its 4-state generator.

    Only fields with constant base rates, no atoms, no support bounds and
    clock-independent status modulators correspond to a CTMC (and only with
    instantaneous switching); anything else is rejected.
    """
    rates: Dict[Tuple[int, int], Tuple[float, float]] = {}
    for element, status, law in field.slots():
        if not isinstance(law.base.continuous, ConstantRate):
            raise ValueError("CTMC mapping requires constant base rates")
        if law.base.atoms or law.base.support_bound is not None:
            raise ValueError("CTMC mapping requires purely exponential lifetimes")
        if not isinstance(law.modulator, StatusModulator):
            raise ValueError("CTMC mapping requires status-only modulators")
        base = law.base.continuous.value
        rates[(element, status)] = (base * law.modulator.when_other_working,
                                    base * law.modulator.when_other_down)

    idx = {pair: i for i, pair in enumerate(STATUS_PAIRS)}
    q = np.zeros((4, 4))
    for (n1, n2) in STATUS_PAIRS:
        i = idx[(n1, n2)]
        rate_up, rate_down = rates[(1, n1)]
        q[i, idx[(1 - n1, n2)]] += rate_up if n2 == 1 else rate_down
        rate_up, rate_down = rates[(2, n2)]
        q[i, idx[(n1, 1 - n2)]] += rate_up if n1 == 1 else rate_down
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return CTMCSpec(q)


def availability_from_stationary(pi: np.ndarray) -> float:
    return float(1.0 - pi[STATUS_PAIRS.index((0, 0))])


# -- renewal overshoot -------------------------------------------------------


@dataclass
class OvershootReport:
    levels: Tuple[float, ...]
    mean_overshoot: Tuple[float, ...]
    stderr: Tuple[float, ...]
    bound: float           # E[X^2] / E[X]
    passed: Tuple[bool, ...]
    replications: int

    @property
    def all_passed(self) -> bool:
        return all(self.passed)


def lorden_overshoot_check(gi: GeneralizedIntensity, levels: Sequence[float],
                           replications: int, rng) -> OvershootReport:
    """Mean renewal overshoot versus the bound E[X^2]/E[X] at each level.

    Simulates `replications` independent renewal paths; each path yields one
    overshoot sample per level.  Passes at a level when the estimate does not
    exceed the bound by more than three standard errors.
    """
    mean1 = moment(gi, 1.0)
    try:
        mean2 = moment(gi, 2.0)
    except InfiniteMomentError:
        raise InfiniteMomentError(
            "overshoot bound needs a finite second moment") from None
    bound = mean2 / mean1
    levels = sorted(float(x) for x in levels)
    top = levels[-1]

    sums = np.zeros((replications,))
    over = np.full((len(levels), replications), np.nan)
    alive = np.arange(replications)
    # draw increments in blocks until every path has crossed the top level
    while len(alive):
        draws = sample_batch(gi, len(alive), rng)
        new_sums = sums[alive] + draws
        for li, x in enumerate(levels):
            crossed = (sums[alive] <= x) & (new_sums > x)
            rows = alive[crossed]
            over[li, rows] = new_sums[crossed] - x
        sums[alive] = new_sums
        alive = alive[new_sums <= top]

    means, ses, passed = [], [], []
    for li in range(len(levels)):
        vals = over[li]
        m = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(replications))
        means.append(m)
        ses.append(se)
        passed.append(m <= bound + 3.0 * se)
    return OvershootReport(tuple(levels), tuple(means), tuple(ses), bound,
                           tuple(passed), replications)


# -- goodness of fit ----------------------------------------------------------


def ks_statistic(samples: Sequence[float], cdf: Callable[[float], float],
                 cdf_left: Optional[Callable[[float], float]] = None) -> float:
    """sup |empirical - model| over the sample points, atom-aware.

    At each sorted sample the empirical d.f. jumps from (i-1)/n to i/n; the
    model is compared through both one-sided limits, so distributions with
    jumps are handled exactly.
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    if n == 0:
        raise ValueError("need at least one sample")
    if cdf_left is None:
        cdf_left = cdf
    d = 0.0
    for i, x in enumerate(xs):
        fr = cdf(float(x))
        fl = cdf_left(float(x))
        d = max(d, abs((i + 1) / n - fr), abs(i / n - fl))
    return d
