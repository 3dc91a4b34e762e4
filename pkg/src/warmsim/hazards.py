"""Mixed lifetime distributions defined by a hazard rate plus weighted atoms.

A distribution is specified by a continuous rate curve and a finite list of
atoms ``(a_i, w_i)``.  The cumulative hazard is the integral of the continuous
part plus the sum of atom weights at or before ``s``, and the distribution
function is ``F(s) = 1 - exp(-H(s))``.  An atom of weight ``w`` therefore
carries jump mass ``S(a-) * (1 - exp(-w))``.  An optional ``support_bound``
forces the survival to zero at a finite time, which is how bounded switching
delays and deterministic durations are expressed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .rates import MassDeficitError, RateFunction, ZERO_RATE

_MOMENT_RTOL = 1e-9
_MOMENT_MAX_WINDOWS = 80
_DIVERGENCE_RATIO = 0.95


class InfiniteMomentError(RuntimeError):
    """Raised when a requested moment integral fails to converge."""


@dataclass(frozen=True)
class Atom:
    """A hazard atom: weight w at location a contributes jump mass S(a-)(1-e^-w)."""

    location: float
    weight: float

    def __post_init__(self):
        if self.location <= 0 or not math.isfinite(self.location):
            raise ValueError(f"atom location must be finite and > 0, got {self.location}")
        if self.weight <= 0 or not math.isfinite(self.weight):
            raise ValueError(f"atom weight must be finite and > 0, got {self.weight}")


@dataclass(frozen=True)
class GeneralizedIntensity:
    """A lifetime distribution given by continuous hazard + atoms (+ optional bound).

    Immutable and safe to share across threads.  Construction rejects
    mass-deficient specifications: if the continuous part integrates to a
    finite total and there is no support bound, the atoms cannot make the
    total hazard diverge, so the distribution would put mass at +inf.
    """

    continuous: RateFunction = ZERO_RATE
    atoms: Tuple[Atom, ...] = ()
    support_bound: Optional[float] = None

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        locs = [a.location for a in atoms]
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise ValueError("atom locations must be strictly increasing")
        if self.support_bound is not None:
            if self.support_bound <= 0 or not math.isfinite(self.support_bound):
                raise ValueError("support_bound must be finite and > 0")
            if locs and locs[-1] > self.support_bound:
                raise ValueError("atoms beyond the support bound are unreachable")
        elif atoms and not math.isinf(self.continuous.total(0.0)):
            # atoms of finite weight on top of a finite continuous integral
            # leave probability mass stranded at +inf
            raise ValueError(
                "mass-deficient distribution: finite total atom weight with a "
                "non-divergent continuous hazard and no support_bound")

    # -- evaluation ------------------------------------------------------

    def cumulative_hazard(self, s: float) -> float:
        """H(s): continuous integral over [0, s] plus atom weights with a_i <= s."""
        if s < 0:
            raise ValueError("elapsed time must be >= 0")
        if self.support_bound is not None and s >= self.support_bound:
            return math.inf
        h = self.continuous.cumulative(0.0, s)
        for a in self.atoms:
            if a.location <= s:
                h += a.weight
            else:
                break
        return h

    def survival(self, s: float) -> float:
        h = self.cumulative_hazard(s)
        return 0.0 if math.isinf(h) else math.exp(-h)

    def survival_left(self, s: float) -> float:
        """Left limit S(s-): atoms strictly before s only."""
        if s < 0:
            raise ValueError("elapsed time must be >= 0")
        if self.support_bound is not None and s > self.support_bound:
            return 0.0
        h = self.continuous.cumulative(0.0, s)
        for a in self.atoms:
            if a.location < s:
                h += a.weight
            else:
                break
        return math.exp(-h)


def eval_cdf(gi: GeneralizedIntensity, s: float) -> float:
    """F(s) = 1 - exp(-H(s)); right-continuous at atom locations."""
    return 1.0 - gi.survival(s)


def eval_cdf_left(gi: GeneralizedIntensity, s: float) -> float:
    """Left limit F(s-); differs from F(s) exactly at atoms and the support bound."""
    return 1.0 - gi.survival_left(s)


def atoms_from_jumps(jumps: Sequence[Tuple[float, float]],
                     continuous: RateFunction = ZERO_RATE,
                     support_bound: Optional[float] = None) -> GeneralizedIntensity:
    """Build a GeneralizedIntensity whose CDF jumps by the given masses.

    Each ``(location, mass)`` pair asks for ``F(a) - F(a-) = mass``.  The atom
    weight that achieves this is the log survival ratio
    ``w = -ln(S(a+)/S(a-))``.  A jump that consumes the entire remaining
    survival gets infinite weight, which is represented by setting the support
    bound at that location instead.
    """
    pairs = sorted((float(a), float(p)) for a, p in jumps)
    locs = [a for a, _ in pairs]
    if any(b <= a for a, b in zip(locs, locs[1:])):
        raise ValueError("jump locations must be distinct")
    atoms = []
    log_surv_atoms = 0.0  # running sum of atom weights applied so far
    for i, (a, p) in enumerate(pairs):
        if p <= 0:
            raise ValueError(f"jump mass must be > 0, got {p} at {a}")
        s_left = math.exp(-(continuous.cumulative(0.0, a) + log_surv_atoms))
        if p > s_left * (1.0 + 1e-12):
            raise ValueError(
                f"jump mass {p} at {a} exceeds available survival {s_left}")
        if p >= s_left * (1.0 - 1e-12):
            # the atom absorbs all remaining mass: infinite weight == support bound
            if i != len(pairs) - 1:
                raise ValueError(
                    f"jump at {a} absorbs all survival, later jumps are impossible")
            if support_bound is not None and support_bound < a:
                raise ValueError("requested support bound precedes a full-mass jump")
            return GeneralizedIntensity(continuous, tuple(atoms), support_bound=a)
        w = -math.log1p(-p / s_left)
        atoms.append(Atom(a, w))
        log_surv_atoms += w
    return GeneralizedIntensity(continuous, tuple(atoms), support_bound=support_bound)


# -- sampling ------------------------------------------------------------


def _invert_total_hazard(gi: GeneralizedIntensity, target: float) -> float:
    """Smallest t with H(t) >= target; atoms produce exact location hits."""
    cont = gi.continuous
    acc = 0.0
    prev = 0.0
    bound = gi.support_bound
    for a in gi.atoms:
        seg = cont.cumulative(prev, a.location)
        if acc + seg >= target:
            return cont.invert(prev, target - acc)
        acc += seg
        if acc + a.weight >= target:
            return a.location
        acc += a.weight
        prev = a.location
    if bound is not None:
        seg = cont.cumulative(prev, bound)
        if acc + seg >= target:
            return cont.invert(prev, target - acc)
        return bound
    t = cont.invert(prev, target - acc)
    if t is None:
        raise MassDeficitError("hazard never accumulates the drawn exponential mark")
    return t


def sample(gi: GeneralizedIntensity, rng) -> float:
    """Inverse-transform draw: t* with H(t*) >= E > H(t*-), E standard exponential."""
    return _invert_total_hazard(gi, rng.standard_exponential())


def sample_batch(gi: GeneralizedIntensity, n: int, rng) -> np.ndarray:
    """Vectorised sampling; equivalent in law to n calls of :func:`sample`.

    The draws consume one block of n standard exponentials, so batch and
    scalar sampling are not stream-compatible with each other.
    """
    targets = rng.standard_exponential(n)
    cont = gi.continuous
    out = np.empty(n)
    remaining = np.ones(n, dtype=bool)
    acc = 0.0   # hazard level at the start of the current continuous segment
    prev = 0.0  # elapsed-time position at the start of the current segment
    for a in gi.atoms:
        level = acc + cont.cumulative(prev, a.location)
        in_seg = remaining & (targets <= level)
        if in_seg.any():
            out[in_seg] = cont.invert_many(prev, targets[in_seg] - acc)
            remaining &= ~in_seg
        hit = remaining & (targets <= level + a.weight)
        if hit.any():
            out[hit] = a.location
            remaining &= ~hit
        acc = level + a.weight
        prev = a.location
    if remaining.any():
        rest = targets[remaining] - acc
        if gi.support_bound is not None:
            tail = cont.invert_many(prev, rest)
            out[remaining] = np.minimum(tail, gi.support_bound)
        else:
            tail = cont.invert_many(prev, rest)
            if np.isinf(tail).any():
                raise MassDeficitError("hazard never accumulates the drawn exponential mark")
            out[remaining] = tail
    return out


# -- moments --------------------------------------------------------------


def moment(gi: GeneralizedIntensity, ell: float, rtol: float = _MOMENT_RTOL) -> float:
    """E[T^ell] via the tail formula ell * integral of s^(ell-1) S(s) ds.

    Atoms never enter a quadrature: the survival between atoms is smooth and
    each piece is integrated separately.  The infinite tail is accumulated
    over doubling windows; if window contributions stop decaying the moment
    is declared infinite.
    """
    if ell <= 0:
        raise ValueError("moment order must be > 0")

    def piece(lo: float, hi: float, log_atom_surv: float) -> float:
        if hi <= lo:
            return 0.0
        f = lambda s: ell * s ** (ell - 1.0) * math.exp(
            -(gi.continuous.cumulative(0.0, s)) + log_atom_surv)
        val, _ = integrate.quad(f, lo, hi, epsrel=rtol, epsabs=1e-14, limit=200)
        return val

    total = 0.0
    prev = 0.0
    log_atom = 0.0
    for a in gi.atoms:
        total += piece(prev, a.location, log_atom)
        log_atom -= a.weight
        prev = a.location
    if gi.support_bound is not None:
        total += piece(prev, gi.support_bound, log_atom)
        return total
    # open tail: doubling windows; converged once the geometric remainder is
    # negligible, divergent on sustained non-decaying window ratios
    lo = prev
    hi = max(2.0 * lo, 1.0) if lo > 0 else 1.0
    last = piece(lo, hi, log_atom)
    total += last
    ratios = []
    for _ in range(_MOMENT_MAX_WINDOWS):
        lo, hi = hi, 2.0 * hi
        cur = piece(lo, hi, log_atom)
        total += cur
        if cur == 0.0:
            return total
        if last > 0:
            ratios.append(cur / last)
            if len(ratios) >= 3 and all(r >= _DIVERGENCE_RATIO for r in ratios[-3:]):
                raise InfiniteMomentError(
                    f"tail of order-{ell} moment integral is not decaying "
                    f"(window ratio {ratios[-1]:.3f} on [{lo:g}, {hi:g}])")
            r = max(ratios[-2:])
            if r < _DIVERGENCE_RATIO:
                remainder = cur * r / (1.0 - r)
                if remainder <= max(rtol, 1e-8) * max(total, 1e-300):
                    return total + remainder
        last = cur
    raise InfiniteMomentError("moment integral failed to converge within the window budget")
