"""Paired trajectories under shared randomness and convergence-rate envelopes.

Two copies of the process start from different states and consume a shared
randomness budget: one dominating-rate arrival stream (exponential marks) and,
per arrival, common uniforms for acceptance, slot attribution and switching
delays.  Each copy thins the common arrivals by its own total hazard, so its
marginal law is exactly that of the ordinary simulator, while the shared draws
make the two copies hit identical full states in finite time.  The survival
function of that meeting time is a valid upper bound for the total-variation
distance between the copies' marginal laws, and is what gets fitted with
polynomial or exponential envelopes.

Attribution uses role ordering (working slots before repairing slots): the
common uniform then picks "a working element fails" in both copies at once,
which is what allows mirrored states to merge.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .hazards import _invert_total_hazard
from .kernel import (FAIL, REPAIR_BEGIN, REPAIR_DONE, WORK_BEGIN, ElementPhase,
                     Event, IntensityField, Phase, SwitchingPolicy, SystemState,
                     Trajectory, simulate, state_at)
from .streams import substream

_CLOCK_TOL = 1e-9
_Z95 = 1.959963984540054


class FitError(ValueError):
    """Fit could not be attempted (too few usable points)."""


class FitRejectedError(FitError):
    """Fit attempted but rejected (the curve does not decay)."""


@dataclass(frozen=True)
class CouplingOutcome:
    tau: Optional[float]      # None when censored at the horizon
    horizon: float
    trajectory_a: Optional[Trajectory] = None
    trajectory_b: Optional[Trajectory] = None

    @property
    def coupled(self) -> bool:
        return self.tau is not None


@dataclass(frozen=True)
class TVCurve:
    times: Tuple[float, ...]
    values: Tuple[float, ...]   # nonincreasing upper-bound estimates in [0, 1]
    radii: Tuple[float, ...]
    replications: int


@dataclass(frozen=True)
class EnvelopeFit:
    form: str                 # "polynomial" (K / t^ell) or "exponential" (K * e^{-beta t})
    amplitude: float          # K
    decay: float              # ell or beta
    rmse: float               # log-domain, before lifting
    window: Tuple[float, float]
    lift: float               # factor applied so the envelope dominates the curve
    alpha_cap: Optional[float] = None

    def value(self, t: float) -> float:
        if self.form == "polynomial":
            return self.amplitude / t ** self.decay
        return self.amplitude * math.exp(-self.decay * t)


# -- coupled pair runner -------------------------------------------------------


class _Copy:
    """Mutable cursor for one coupled copy."""

    __slots__ = ("tags", "clocks", "delays", "remaining", "atom_ptr", "events")

    def __init__(self, state: SystemState, record: bool):
        self.tags = [state.phase1.tag, state.phase2.tag]
        self.clocks = [state.clock1, state.clock2]
        self.delays = [state.phase1.remaining_delay, state.phase2.remaining_delay]
        self.remaining = [state.phase1.remaining_delay, state.phase2.remaining_delay]
        self.atom_ptr = [0, 0]
        self.events: Optional[List[Event]] = [] if record else None

    def sync_atom_ptr(self, field: IntensityField, j: int):
        tag = self.tags[j]
        if tag in (Phase.WORKING, Phase.UNDER_REPAIR):
            atoms = field.law(j + 1, tag).base.atoms
            self.atom_ptr[j] = bisect_right([a.location for a in atoms], self.clocks[j])
        else:
            self.atom_ptr[j] = 0

    def state(self, wall: float) -> SystemState:
        ph = []
        for j in (0, 1):
            if self.tags[j] in (Phase.SWITCHING_TO_WORK, Phase.SWITCHING_TO_REPAIR):
                ph.append(ElementPhase(self.tags[j], self.remaining[j]))
            else:
                ph.append(ElementPhase(self.tags[j]))
        return SystemState(ph[0], ph[1], self.clocks[0], self.clocks[1], wall)


def _states_match(a: _Copy, b: _Copy, tol: float) -> bool:
    for j in (0, 1):
        if a.tags[j] is not b.tags[j]:
            return False
        if abs(a.clocks[j] - b.clocks[j]) > tol:
            return False
        if abs(a.remaining[j] - b.remaining[j]) > tol:
            return False
    return True


def _advance_clocks(copy: _Copy, dt: float):
    for j in (0, 1):
        copy.clocks[j] += dt
        if copy.tags[j] in (Phase.SWITCHING_TO_WORK, Phase.SWITCHING_TO_REPAIR):
            copy.remaining[j] = max(copy.remaining[j] - dt, 0.0)


def _next_deterministic(copy: _Copy, field: IntensityField) -> Tuple[float, int, str]:
    """Earliest copy-private occurrence: (offset, element, kind)."""
    best = (math.inf, -1, "")
    for j in (0, 1):
        tag = copy.tags[j]
        if tag in (Phase.SWITCHING_TO_WORK, Phase.SWITCHING_TO_REPAIR):
            if copy.remaining[j] < best[0]:
                best = (copy.remaining[j], j, "expiry")
            continue
        base = field.law(j + 1, tag).base
        ptr = copy.atom_ptr[j]
        if ptr < len(base.atoms):
            off = base.atoms[ptr].location - copy.clocks[j]
            if off < best[0]:
                best = (off, j, "atom")
        if base.support_bound is not None:
            off = base.support_bound - copy.clocks[j]
            if off < best[0]:
                best = (off, j, "bound")
    return best


def _total_rate(copy: _Copy, field: IntensityField) -> float:
    total = 0.0
    for j in (0, 1):
        tag = copy.tags[j]
        if tag in (Phase.WORKING, Phase.UNDER_REPAIR):
            law = field.law(j + 1, tag)
            other = 1 - j
            total += (law.base.continuous.rate(copy.clocks[j])
                      * law.modulator.factor(copy.tags[other], copy.clocks[other]))
    return total


def _role_slots(copy: _Copy, field: IntensityField) -> List[Tuple[int, float]]:
    """(element, rate) pairs sorted working-first, then by element index."""
    slots = []
    for j in (0, 1):
        tag = copy.tags[j]
        if tag in (Phase.WORKING, Phase.UNDER_REPAIR):
            law = field.law(j + 1, tag)
            other = 1 - j
            rate = (law.base.continuous.rate(copy.clocks[j])
                    * law.modulator.factor(copy.tags[other], copy.clocks[other]))
            slots.append((0 if tag is Phase.WORKING else 1, j, rate))
    slots.sort(key=lambda s: (s[0], s[1]))
    return [(j, rate) for _, j, rate in slots]


def _fire(copy: _Copy, field: IntensityField, policy: SwitchingPolicy, j: int,
          wall: float, delay_uniform: float):
    tag = copy.tags[j]
    if tag is Phase.WORKING:
        kind, spec = FAIL, policy.work_to_repair
        new_tag = Phase.UNDER_REPAIR if spec is None else Phase.SWITCHING_TO_REPAIR
    elif tag is Phase.UNDER_REPAIR:
        kind, spec = REPAIR_DONE, policy.repair_to_work
        new_tag = Phase.WORKING if spec is None else Phase.SWITCHING_TO_WORK
    elif tag is Phase.SWITCHING_TO_REPAIR:
        kind, spec, new_tag = REPAIR_BEGIN, None, Phase.UNDER_REPAIR
    else:
        kind, spec, new_tag = WORK_BEGIN, None, Phase.WORKING
    delay = None
    if spec is not None:
        mark = -math.log1p(-delay_uniform)
        delay = min(_invert_total_hazard(spec.dist, mark), spec.bound)
        assert delay <= spec.bound + 1e-12
    if copy.events is not None:
        copy.events.append(Event(time=wall, element=j + 1, kind=kind,
                                 clock_at_event=copy.clocks[j], new_tag=new_tag,
                                 delay=delay))
    copy.tags[j] = new_tag
    copy.clocks[j] = 0.0
    copy.delays[j] = delay if delay is not None else 0.0
    copy.remaining[j] = delay if delay is not None else 0.0
    copy.sync_atom_ptr(field, j)


def run_coupled(init_a: SystemState, init_b: SystemState, field: IntensityField,
                policy: SwitchingPolicy, horizon: float, rng,
                record: bool = False, clock_tol: float = _CLOCK_TOL) -> CouplingOutcome:
    """Run both copies on shared randomness until their full states coincide.

    Requires bounded continuous hazards (the shared arrival stream runs at the
    field's dominating total rate).  Atoms, support bounds and switching-delay
    expiries occur at copy-specific instants and draw from the same stream in
    a fixed order; every copy's marginal law is unchanged.  Returns the meeting
    time, or a censored outcome if the copies never coincide before the
    horizon.  With ``record=True`` both trajectories are returned; after the
    meeting time they are continued as one merged copy, so they agree exactly.
    """
    lam = field.dominating_total_rate()
    if math.isinf(lam):
        raise ValueError(
            "coupled runs need a finite dominating rate; declare bounded "
            "continuous hazards (atoms are fine)")
    a = _Copy(init_a, record)
    b = _Copy(init_b, record)
    for copy in (a, b):
        for j in (0, 1):
            copy.sync_atom_ptr(field, j)
    wall = 0.0
    tau: Optional[float] = None

    if _states_match(a, b, clock_tol):
        tau = 0.0
    while tau is None:
        arrival_in = rng.standard_exponential() / lam if lam > 0 else math.inf
        det_a = _next_deterministic(a, field)
        det_b = _next_deterministic(b, field)
        step = min(arrival_in, det_a[0], det_b[0])
        if not math.isfinite(step) or wall + step > horizon:
            return CouplingOutcome(None, horizon, _finish(a, init_a, horizon, None),
                                   _finish(b, init_b, horizon, None))
        wall += step
        _advance_clocks(a, step)
        _advance_clocks(b, step)

        if det_a[0] == step or det_b[0] == step:
            # copy-private occurrences; both copies may act at a shared instant
            for copy, det in ((a, det_a), (b, det_b)):
                if det[0] != step:
                    continue
                off, j, kind = det
                if kind == "expiry":
                    _fire(copy, field, policy, j, wall, 0.0)
                elif kind == "bound":
                    _fire(copy, field, policy, j, wall, rng.random())
                else:
                    atoms = field.law(j + 1, copy.tags[j]).base.atoms
                    atom = atoms[copy.atom_ptr[j]]
                    other = 1 - j
                    w_eff = atom.weight * field.law(j + 1, copy.tags[j]).modulator.factor(
                        copy.tags[other], copy.clocks[other])
                    if rng.random() < -math.expm1(-w_eff):
                        _fire(copy, field, policy, j, wall, rng.random())
                    else:
                        copy.atom_ptr[j] += 1
        else:
            # shared arrival: common acceptance / attribution / delay uniforms
            u = rng.random()
            v = rng.random()
            w = rng.random()
            for copy in (a, b):
                total = _total_rate(copy, field)
                if total > lam * (1.0 + 1e-9):
                    raise RuntimeError(
                        "instantaneous hazard exceeded the dominating rate; "
                        "a declared rate bound is wrong")
                if total > 0 and u < total / lam:
                    slots = _role_slots(copy, field)
                    pick = v * total
                    cum = 0.0
                    chosen = slots[-1][0]
                    for j, rate in slots:
                        cum += rate
                        if pick < cum:
                            chosen = j
                            break
                    _fire(copy, field, policy, chosen, wall, w)
        if _states_match(a, b, clock_tol):
            tau = wall

    if not record:
        return CouplingOutcome(tau, horizon)
    # merged continuation: one marginal run, mirrored into both trajectories
    merged_state = a.state(wall)
    tail = simulate(merged_state, field, policy, horizon - wall, rng)
    shift = [Event(ev.time + wall, ev.element, ev.kind, ev.clock_at_event,
                   ev.new_tag, ev.delay) for ev in tail.events]
    a.events.extend(shift)
    b.events.extend(shift)
    return CouplingOutcome(tau, horizon,
                           Trajectory(init_a, a.events, horizon),
                           Trajectory(init_b, b.events, horizon))


def _finish(copy: _Copy, init: SystemState, horizon: float,
            _unused) -> Optional[Trajectory]:
    if copy.events is None:
        return None
    return Trajectory(init, copy.events, horizon)


# -- tail estimation -----------------------------------------------------------


def estimate_coupling_tail(init_a: SystemState, init_b: SystemState,
                           field: IntensityField, policy: SwitchingPolicy,
                           horizon: float, replications: int,
                           grid: Sequence[float], master_seed: int) -> TVCurve:
    """Empirical survival of the meeting time on a grid, with binomial radii.

    Censored pairs count as meeting after the horizon, so the curve stays a
    conservative upper-bound estimate.
    """
    if replications < 100:
        raise ValueError("need at least 100 replications for meaningful bands")
    taus = np.empty(replications)
    for i in range(replications):
        out = run_coupled(init_a, init_b, field, policy, horizon,
                          substream(master_seed, i))
        taus[i] = math.inf if out.tau is None else out.tau
    times = sorted(float(t) for t in grid)
    values, radii = [], []
    for t in times:
        bt = float(np.mean(taus > t))
        values.append(bt)
        radii.append(_Z95 * math.sqrt(bt * (1.0 - bt) / replications))
    return TVCurve(tuple(times), tuple(values), tuple(radii), replications)


# -- binned total variation ------------------------------------------------------


@dataclass(frozen=True)
class BinningSpec:
    """Partition used for the discretised total-variation estimate.

    Elements are keyed by working-or-not status and a quantile bin of their
    clock (edges computed from the pooled ensembles).  The estimate is the
    half-L1 distance on this partition: a consistent lower bound of the true
    total variation that sharpens as the partition refines.
    """

    clock_bins: int = 4
    full_tags: bool = False

    def __post_init__(self):
        if self.clock_bins < 1:
            raise ValueError("clock_bins must be >= 1")


def marginal_tv(states_a: Sequence[SystemState], states_b: Sequence[SystemState],
                binning: BinningSpec = BinningSpec()) -> float:
    """Half-L1 distance between the binned empirical state distributions."""
    if len(states_a) != len(states_b):
        raise ValueError("ensembles must have equal sizes")
    if len(states_a) < 1000:
        raise ValueError("ensembles must contain at least 1000 states")

    def tag_key(tag: Phase) -> int:
        if binning.full_tags:
            return int(tag)
        return 1 if tag is Phase.WORKING else 0

    pooled1 = np.array([s.clock1 for s in states_a] + [s.clock1 for s in states_b])
    pooled2 = np.array([s.clock2 for s in states_a] + [s.clock2 for s in states_b])
    qs = np.linspace(0, 1, binning.clock_bins + 1)[1:-1]
    edges1 = np.quantile(pooled1, qs) if len(qs) else np.array([])
    edges2 = np.quantile(pooled2, qs) if len(qs) else np.array([])

    def histogram(states) -> Dict[tuple, int]:
        counts: Dict[tuple, int] = {}
        for s in states:
            key = (tag_key(s.phase1.tag), int(np.searchsorted(edges1, s.clock1)),
                   tag_key(s.phase2.tag), int(np.searchsorted(edges2, s.clock2)))
            counts[key] = counts.get(key, 0) + 1
        return counts

    ha = histogram(states_a)
    hb = histogram(states_b)
    n = len(states_a)
    keys = set(ha) | set(hb)
    return 0.5 * sum(abs(ha.get(k, 0) - hb.get(k, 0)) for k in keys) / n


def sample_states_at(initial: SystemState, field: IntensityField,
                     policy: SwitchingPolicy, times: Sequence[float], n: int,
                     master_seed: int, stream_offset: int = 0) -> Dict[float, List[SystemState]]:
    """n independent marginal states at each query time (one sim per replication)."""
    times = sorted(float(t) for t in times)
    horizon = times[-1]
    out: Dict[float, List[SystemState]] = {t: [] for t in times}
    for i in range(n):
        rng = substream(master_seed, stream_offset + i)
        traj = simulate(initial, field, policy, horizon, rng)
        for t in times:
            out[t].append(state_at(traj, t))
    return out


# -- envelope fitting -----------------------------------------------------------


def fit_envelope(curve: TVCurve, form: str,
                 window: Optional[Tuple[float, float]] = None,
                 alpha: Optional[float] = None) -> EnvelopeFit:
    """Least squares in the log domain, then a minimal lift to dominance.

    polynomial:  log b = log K - ell * log t   (needs t > 0)
    exponential: log b = log K - beta * t

    Points below the tail noise floor 5/replications are excluded.  A fitted
    slope >= 0 rejects the fit.  When ``alpha`` is declared for the exponential
    form, the fitted decay is capped strictly below it.
    """
    if form not in ("polynomial", "exponential"):
        raise ValueError(f"unknown envelope form {form!r}")
    floor = 5.0 / curve.replications if curve.replications else 0.0
    pts = [(t, b) for t, b in zip(curve.times, curve.values)
           if t > 0 and b > max(floor, 0.0)
           and (window is None or window[0] <= t <= window[1])]
    if len(pts) < 5:
        raise FitError(
            f"only {len(pts)} usable points above the noise floor; need >= 5")
    ts = np.array([p[0] for p in pts])
    bs = np.array([p[1] for p in pts])
    xs = np.log(ts) if form == "polynomial" else ts
    ys = np.log(bs)
    slope, intercept = np.polyfit(xs, ys, 1)
    if slope >= 0:
        raise FitRejectedError(
            f"{form} fit rejected: curve does not decay (slope {slope:.4g})")
    decay = -float(slope)
    if form == "exponential" and alpha is not None and decay >= alpha:
        decay = alpha * (1.0 - 1e-9)
        intercept = float(np.mean(ys + decay * xs))
    fitted = intercept + (-decay) * xs
    rmse = float(np.sqrt(np.mean((ys - fitted) ** 2)))
    lift = max(1.0, float(np.max(np.exp(ys - fitted))))
    amplitude = math.exp(intercept) * lift
    fit = EnvelopeFit(form=form, amplitude=amplitude, decay=decay, rmse=rmse,
                      window=(float(ts.min()), float(ts.max())), lift=lift,
                      alpha_cap=alpha)
    for t, b in pts:
        assert fit.value(t) >= b * (1.0 - 1e-9), "lifted envelope must dominate"
    return fit
