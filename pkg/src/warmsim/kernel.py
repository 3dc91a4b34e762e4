"""Event-driven simulation of the two-element warm-standby process.

The full state is (phase, elapsed clock) per element plus wall time.  Working
and repairing elements carry state-dependent hazards; a status change enters a
switching phase whose random duration is bounded by a constant, after which
the new mode becomes effective.  Event times come from inverting the combined
cumulative hazard of both elements against a single exponential mark, with
atom weights inserted as jumps at their own-clock locations.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field as dc_field
from enum import IntEnum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .conditions import EnvelopePair
from .hazards import GeneralizedIntensity, sample as sample_duration
from .rates import ConstantRate, HyperbolicRate, MassDeficitError

_NUMERIC_HORIZON = 1e12
_TIME_TOL = 1e-10
_SOLVE_BUDGET = 200
_MOD_STEP = 0.01  # integration step bound for clock-dependent modulators


class Phase(IntEnum):
    UNDER_REPAIR = 0
    WORKING = 1
    SWITCHING_TO_WORK = 2
    SWITCHING_TO_REPAIR = 3


_SWITCHING = (Phase.SWITCHING_TO_WORK, Phase.SWITCHING_TO_REPAIR)
_HAZARDOUS = (Phase.UNDER_REPAIR, Phase.WORKING)


@dataclass(frozen=True, slots=True)
class ElementPhase:
    tag: Phase
    remaining_delay: float = 0.0

    def __post_init__(self):
        if self.tag in _SWITCHING:
            if self.remaining_delay < 0:
                raise ValueError("switching phase needs remaining_delay >= 0")
        elif self.remaining_delay != 0.0:
            raise ValueError("only switching phases carry a delay")


@dataclass(frozen=True, slots=True)
class SystemState:
    """Snapshot of the full process state.

    ``pending_atoms`` is bookkeeping for the corner where an element's clock
    sits exactly on one of its own hazard atoms whose mass has not been
    resolved yet (this can only arise when two elements carry atoms at the
    same instant).  States constructed by hand leave it at the default.
    """

    phase1: ElementPhase
    phase2: ElementPhase
    clock1: float = 0.0
    clock2: float = 0.0
    wall_time: float = 0.0
    pending_atoms: Tuple[bool, bool] = (False, False)

    def __post_init__(self):
        if self.clock1 < 0 or self.clock2 < 0 or self.wall_time < 0:
            raise ValueError("clocks and wall time must be >= 0")

    def phase(self, j: int) -> ElementPhase:
        return self.phase1 if j == 0 else self.phase2

    def clock(self, j: int) -> float:
        return self.clock1 if j == 0 else self.clock2


def both_working_state() -> SystemState:
    return SystemState(ElementPhase(Phase.WORKING), ElementPhase(Phase.WORKING))


# -- cross-element modulation ---------------------------------------------


@dataclass(frozen=True)
class StatusModulator:
    """Multiplies the hazard by a factor chosen by the other element's tag.

    Switching elements count as down.  Clock-independent, which keeps the
    event-time inversion closed-form.
    """

    when_other_working: float = 1.0
    when_other_down: float = 1.0
    clock_dependent = False

    def __post_init__(self):
        if self.when_other_working <= 0 or self.when_other_down <= 0:
            raise ValueError("modulation factors must be > 0")

    def factor(self, other_tag: Phase, other_clock: float) -> float:
        return self.when_other_working if other_tag is Phase.WORKING else self.when_other_down

    def max_factor(self) -> float:
        return max(self.when_other_working, self.when_other_down)

    def sweep(self, clocks):
        yield Phase.WORKING, 0.0, "other working"
        yield Phase.UNDER_REPAIR, 0.0, "other down"


@dataclass(frozen=True)
class CallableModulator:
    """Arbitrary (other tag, other clock) -> factor map; integrated numerically."""

    fn: Callable[[Phase, float], float]
    bound: float
    clock_dependent = True

    def factor(self, other_tag: Phase, other_clock: float) -> float:
        v = self.fn(other_tag, other_clock)
        if v <= 0:
            raise ValueError("modulation factor must stay > 0")
        return v

    def max_factor(self) -> float:
        return self.bound

    def sweep(self, clocks):
        for tag in (Phase.WORKING, Phase.UNDER_REPAIR):
            for c in clocks:
                yield tag, c, f"other {tag.name.lower()} clock {c:g}"


NO_MODULATION = StatusModulator()


@dataclass(frozen=True)
class PhaseLaw:
    """Hazard law for one (element, status) slot: base intensity x modulator."""

    base: GeneralizedIntensity
    modulator: StatusModulator | CallableModulator = NO_MODULATION
    envelope: Optional[EnvelopePair] = None


class IntensityField:
    """Per (element, base status) hazard laws for the two-element system."""

    def __init__(self, laws: Dict[Tuple[int, int], PhaseLaw]):
        expected = {(1, 0), (1, 1), (2, 0), (2, 1)}
        if set(laws) != expected:
            raise ValueError(f"field needs laws for exactly {sorted(expected)}")
        self._laws = laws

    @classmethod
    def symmetric(cls, work: PhaseLaw, repair: PhaseLaw) -> "IntensityField":
        return cls({(1, 1): work, (2, 1): work, (1, 0): repair, (2, 0): repair})

    def law(self, element: int, tag: Phase) -> PhaseLaw:
        status = 1 if tag is Phase.WORKING else 0
        return self._laws[(element, status)]

    def slots(self):
        for (element, status) in sorted(self._laws):
            yield element, status, self._laws[(element, status)]

    def dominating_total_rate(self) -> float:
        """Upper bound on the summed continuous hazard over all states."""
        total = 0.0
        for element in (1, 2):
            best = 0.0
            for status in (0, 1):
                law = self._laws[(element, status)]
                best = max(best, law.base.continuous.sup_rate() * law.modulator.max_factor())
            total += best
        return total


# -- switching delays ------------------------------------------------------


@dataclass(frozen=True)
class SwitchingDelay:
    """Bounded random delay: distribution must die at or before `bound`."""

    dist: GeneralizedIntensity
    bound: float

    def __post_init__(self):
        if self.bound <= 0:
            raise ValueError("use policy direction None for instantaneous switching")
        if self.dist.support_bound is None or self.dist.support_bound > self.bound:
            raise ValueError("delay distribution must have support_bound <= bound")


@dataclass(frozen=True)
class SwitchingPolicy:
    """Delay laws per direction; None means the switch completes instantly."""

    work_to_repair: Optional[SwitchingDelay] = None
    repair_to_work: Optional[SwitchingDelay] = None

    @classmethod
    def instant(cls) -> "SwitchingPolicy":
        return cls(None, None)

    def sample_delay(self, spec: SwitchingDelay, rng) -> float:
        d = sample_duration(spec.dist, rng)
        assert d <= spec.bound + 1e-12, "sampled delay exceeded its declared bound"
        return min(d, spec.bound)


# -- events and trajectories ------------------------------------------------

FAIL = "fail"                    # end of a working period
REPAIR_DONE = "repair_done"      # end of a repair period
REPAIR_BEGIN = "repair_begin"    # switch into repair completed
WORK_BEGIN = "work_begin"        # switch into work completed


@dataclass(frozen=True, slots=True)
class Event:
    time: float
    element: int            # 1 or 2
    kind: str
    clock_at_event: float   # elapsed time spent in the phase that just ended
    new_tag: Phase
    delay: Optional[float]  # sampled switching delay, when one was started


@dataclass
class Trajectory:
    initial: SystemState
    events: List[Event]
    horizon: float


def availability_indicator(state: SystemState) -> bool:
    """True iff at least one element is in the Working phase (switching counts as down)."""
    return state.phase1.tag is Phase.WORKING or state.phase2.tag is Phase.WORKING


# -- the advance step --------------------------------------------------------


class _Active:
    """Hazard bookkeeping for one non-switching element during one advance."""

    __slots__ = ("j", "cont", "s", "mf", "mod", "other_tag", "other_clock",
                 "atoms", "bound", "is_const", "is_hyper")

    def __init__(self, j, law: PhaseLaw, s, other_tag, other_clock):
        self.j = j
        self.cont = law.base.continuous
        self.s = s
        self.atoms = law.base.atoms
        self.bound = law.base.support_bound
        self.other_tag = other_tag
        self.other_clock = other_clock
        if law.modulator.clock_dependent:
            self.mf = None
            self.mod = law.modulator
        else:
            self.mf = law.modulator.factor(other_tag, other_clock)
            self.mod = None
        self.is_const = self.mf is not None and type(self.cont) is ConstantRate
        self.is_hyper = self.mf is not None and type(self.cont) is HyperbolicRate

    def mod_at(self, u: float) -> float:
        if self.mf is not None:
            return self.mf
        return self.mod.factor(self.other_tag, self.other_clock + u)

    def rate_at(self, u: float) -> float:
        return self.cont.rate(self.s + u) * self.mod_at(u)

    def cum(self, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        if self.mf is not None:
            return self.mf * self.cont.cumulative(self.s + lo, self.s + hi)
        # clock-dependent modulation: midpoint rule with a bounded step
        n = max(1, int(math.ceil((hi - lo) / _MOD_STEP)))
        h = (hi - lo) / n
        acc = 0.0
        for i in range(n):
            u = lo + (i + 0.5) * h
            acc += self.rate_at(u)
        return acc * h


def _cum_all(actives: List[_Active], lo: float, hi: float) -> float:
    return sum(a.cum(lo, hi) for a in actives)


def _rate_all(actives: List[_Active], u: float) -> float:
    return sum(a.rate_at(u) for a in actives)


def _solve_crossing(actives: List[_Active], lo: float, hi: float, target: float) -> float:
    """u in (lo, hi] with summed cumulative hazard over (lo, u] == target.

    The caller guarantees the cumulative over (lo, hi] reaches the target.
    """
    if len(actives) == 1:
        a = actives[0]
        if a.mf is not None:
            u = a.cont.invert(a.s + lo, target / a.mf)
            return u - a.s
    if all(a.is_const for a in actives):
        rate = sum(a.mf * a.cont.value for a in actives)
        return lo + target / rate
    if len(actives) == 2 and actives[0].is_hyper and actives[1].is_hyper:
        a, b = actives
        ca = a.mf * a.cont.gamma
        cb = b.mf * b.cont.gamma
        if abs(ca - cb) <= 1e-12 * max(ca, cb):
            # c * ln[(1+sa+u)(1+sb+u) / ((1+sa)(1+sb))] = target -> quadratic in u
            pa = 1.0 + a.s + lo
            pb = 1.0 + b.s + lo
            d = pa * pb * math.exp(target / ca)
            bq = pa + pb
            disc = bq * bq - 4.0 * (pa * pb - d)
            return lo + 0.5 * (-bq + math.sqrt(disc))
    # Newton with a bisection safeguard
    ulo, uhi = lo, hi
    r0 = _rate_all(actives, lo)
    u = lo + target / r0 if r0 > 0 else 0.5 * (lo + hi)
    if not (ulo < u < uhi):
        u = 0.5 * (ulo + uhi)
    for _ in range(_SOLVE_BUDGET):
        g = _cum_all(actives, lo, u)
        if g >= target:
            uhi = u
        else:
            ulo = u
        if uhi - ulo <= _TIME_TOL:
            return uhi
        r = _rate_all(actives, u)
        if r > 0:
            u = u - (g - target) / r
            if not (ulo < u < uhi):
                u = 0.5 * (ulo + uhi)
        else:
            u = 0.5 * (ulo + uhi)
    return uhi


def advance(state: SystemState, field: IntensityField, policy: SwitchingPolicy,
            rng, horizon: Optional[float] = None):
    """One step of the process: returns (event, new_state), or None when no
    event occurs at or before the horizon.

    Raises MassDeficitError when no horizon is given and no event can occur
    within the numeric horizon (1e12 time units).
    """
    wall = state.wall_time
    phases = (state.phase1, state.phase2)
    clocks = (state.clock1, state.clock2)

    horizon_off = math.inf if horizon is None else horizon - wall
    if horizon_off < 0:
        raise ValueError("state lies beyond the requested horizon")

    exp_off = math.inf
    exp_j = -1
    for j in (0, 1):
        if phases[j].tag in _SWITCHING:
            r = phases[j].remaining_delay
            if r < exp_off:
                exp_off, exp_j = r, j

    u_cap = min(exp_off, horizon_off, _NUMERIC_HORIZON)

    actives: List[_Active] = []
    for j in (0, 1):
        tag = phases[j].tag
        if tag in _HAZARDOUS:
            other = 1 - j
            actives.append(_Active(j, field.law(j + 1, tag), clocks[j],
                                   phases[other].tag, clocks[other]))

    fired = None  # (u, j, cause) cause in {"cont", "atom", "bound"}
    pending_other = False

    if actives:
        checkpoints = []  # (offset, j, weight-or-inf, active)
        for a in actives:
            for atom in a.atoms:
                off = atom.location - a.s
                if 0.0 < off <= u_cap:
                    checkpoints.append((off, a.j, atom.weight, a))
            if a.bound is not None:
                boff = a.bound - a.s
                if boff < 0:
                    raise ValueError("element clock sits beyond its support bound")
                if boff <= u_cap:
                    checkpoints.append((boff, a.j, math.inf, a))
        checkpoints.sort(key=lambda c: (c[0], c[1]))

        target = rng.standard_exponential()
        acc = 0.0

        # atoms sitting exactly at the current clocks, left undecided by a
        # previous simultaneous-atom event
        for a in actives:
            if state.pending_atoms[a.j]:
                idx = bisect.bisect_left([at.location for at in a.atoms], a.s)
                if idx < len(a.atoms) and a.atoms[idx].location == a.s:
                    w_eff = a.atoms[idx].weight * a.mod_at(0.0)
                    if acc + w_eff >= target and fired is None:
                        fired = (0.0, a.j, "atom")
                        break
                    acc += w_eff

        if fired is None:
            prev = 0.0
            for ci, (off, j, w, a) in enumerate(checkpoints):
                seg = _cum_all(actives, prev, off)
                if acc + seg >= target:
                    u = _solve_crossing(actives, prev, off, target - acc)
                    fired = (u, _attribute(actives, u, rng), "cont")
                    break
                acc += seg
                if math.isinf(w):
                    fired = (off, j, "bound")
                    break
                w_eff = w * a.mod_at(off)
                if acc + w_eff >= target:
                    fired = (off, j, "atom")
                    # a later checkpoint at the same offset belongs to the other
                    # element: its atom mass is still undecided
                    for off2, j2, w2, _a2 in checkpoints[ci + 1:]:
                        if off2 != off:
                            break
                        if j2 != j and math.isfinite(w2):
                            pending_other = True
                    break
                acc += w_eff
                prev = off
            else:
                seg = _cum_all(actives, prev, u_cap)
                if acc + seg >= target:
                    u = _solve_crossing(actives, prev, u_cap, target - acc)
                    fired = (u, _attribute(actives, u, rng), "cont")

    if fired is None:
        if exp_off <= min(horizon_off, _NUMERIC_HORIZON):
            return _complete_switch(state, phases, clocks, exp_off, exp_j, wall)
        if horizon is not None and horizon_off <= _NUMERIC_HORIZON:
            return None
        raise MassDeficitError(
            "no finite event within the numeric horizon; the intensity field "
            "appears to carry insufficient hazard mass")

    u, j, _cause = fired
    return _apply_transition(state, field, policy, rng, phases, clocks,
                             wall, u, j, pending_other)


def _attribute(actives: List[_Active], u: float, rng) -> int:
    if len(actives) == 1:
        return actives[0].j
    r0 = actives[0].rate_at(u)
    r1 = actives[1].rate_at(u)
    total = r0 + r1
    if total <= 0.0:
        return actives[0].j
    return actives[0].j if rng.random() * total < r0 else actives[1].j


def _complete_switch(state, phases, clocks, u, j, wall):
    tag = phases[j].tag
    new_tag = Phase.WORKING if tag is Phase.SWITCHING_TO_WORK else Phase.UNDER_REPAIR
    kind = WORK_BEGIN if tag is Phase.SWITCHING_TO_WORK else REPAIR_BEGIN
    ev = Event(time=wall + u, element=j + 1, kind=kind,
               clock_at_event=clocks[j] + u, new_tag=new_tag, delay=None)
    new_phases = list(phases)
    new_clocks = list(clocks)
    new_phases[j] = ElementPhase(new_tag)
    new_clocks[j] = 0.0
    other = 1 - j
    new_phases[other] = _aged_phase(phases[other], u)
    new_clocks[other] = clocks[other] + u
    new_state = SystemState(new_phases[0], new_phases[1], new_clocks[0],
                            new_clocks[1], wall + u, (False, False))
    return ev, new_state


def _aged_phase(ph: ElementPhase, u: float) -> ElementPhase:
    if ph.tag in _SWITCHING:
        return ElementPhase(ph.tag, max(ph.remaining_delay - u, 0.0))
    return ph


def _apply_transition(state, field, policy, rng, phases, clocks, wall, u, j,
                      pending_other):
    tag = phases[j].tag
    if tag is Phase.WORKING:
        kind = FAIL
        spec = policy.work_to_repair
        new_tag = Phase.UNDER_REPAIR if spec is None else Phase.SWITCHING_TO_REPAIR
    else:
        kind = REPAIR_DONE
        spec = policy.repair_to_work
        new_tag = Phase.WORKING if spec is None else Phase.SWITCHING_TO_WORK
    delay = None
    if spec is not None:
        delay = policy.sample_delay(spec, rng)
    ev = Event(time=wall + u, element=j + 1, kind=kind,
               clock_at_event=clocks[j] + u, new_tag=new_tag, delay=delay)
    new_phases = list(phases)
    new_clocks = list(clocks)
    new_phases[j] = ElementPhase(new_tag, delay if delay is not None else 0.0)
    new_clocks[j] = 0.0
    other = 1 - j
    new_phases[other] = _aged_phase(phases[other], u)
    new_clocks[other] = clocks[other] + u
    pend = (False, False) if not pending_other else tuple(i == other for i in (0, 1))
    new_state = SystemState(new_phases[0], new_phases[1], new_clocks[0],
                            new_clocks[1], wall + u, pend)
    return ev, new_state


# -- whole trajectories ------------------------------------------------------


def simulate(initial: SystemState, field: IntensityField, policy: SwitchingPolicy,
             horizon: float, rng) -> Trajectory:
    """All transitions in [0, horizon]; deterministic given the rng stream."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    events: List[Event] = []
    state = initial
    while True:
        step = advance(state, field, policy, rng, horizon=horizon)
        if step is None:
            break
        ev, state = step
        events.append(ev)
    return Trajectory(initial=initial, events=events, horizon=horizon)


def state_at(traj: Trajectory, t: float) -> SystemState:
    """State reconstruction by replay; right-continuous at event instants."""
    if t < 0 or t > traj.horizon:
        raise ValueError(f"time {t} outside [0, {traj.horizon}]")
    tags = [traj.initial.phase1.tag, traj.initial.phase2.tag]
    delays = [traj.initial.phase1.remaining_delay + traj.initial.clock1,
              traj.initial.phase2.remaining_delay + traj.initial.clock2]
    entry = [-traj.initial.clock1, -traj.initial.clock2]
    for ev in traj.events:
        if ev.time > t:
            break
        j = ev.element - 1
        tags[j] = ev.new_tag
        entry[j] = ev.time
        delays[j] = ev.delay if ev.delay is not None else 0.0
    out = []
    for j in (0, 1):
        clock = t - entry[j]
        if tags[j] in _SWITCHING:
            out.append(ElementPhase(tags[j], max(delays[j] - clock, 0.0)))
        else:
            out.append(ElementPhase(tags[j]))
    return SystemState(out[0], out[1], t - entry[0], t - entry[1], t)


def longrun_availability(traj: Trajectory, burn_in: float = 0.0) -> float:
    """Fraction of [burn_in, horizon] with at least one element working."""
    if burn_in >= traj.horizon:
        raise ValueError("burn_in must be smaller than the horizon")
    tags = [traj.initial.phase1.tag, traj.initial.phase2.tag]
    up = 0.0
    t_prev = 0.0
    for ev in traj.events:
        if Phase.WORKING in tags:
            up += max(0.0, min(ev.time, traj.horizon) - max(t_prev, burn_in))
        tags[ev.element - 1] = ev.new_tag
        t_prev = ev.time
    if Phase.WORKING in tags:
        up += max(0.0, traj.horizon - max(t_prev, burn_in))
    return up / (traj.horizon - burn_in)


def availability_at_times(traj: Trajectory, times: Sequence[float]) -> List[bool]:
    """Availability indicator at each (sorted ascending) query time, one sweep."""
    tags = [traj.initial.phase1.tag, traj.initial.phase2.tag]
    out: List[bool] = []
    it = iter(traj.events)
    ev = next(it, None)
    for t in times:
        while ev is not None and ev.time <= t:
            tags[ev.element - 1] = ev.new_tag
            ev = next(it, None)
        out.append(Phase.WORKING in tags)
    return out


def status_occupancy(traj: Trajectory, burn_in: float = 0.0) -> Dict[Tuple[int, int], float]:
    """Time fraction spent in each (working?, working?) status pair."""
    if burn_in >= traj.horizon:
        raise ValueError("burn_in must be smaller than the horizon")
    tags = [traj.initial.phase1.tag, traj.initial.phase2.tag]
    occ = {(1, 1): 0.0, (1, 0): 0.0, (0, 1): 0.0, (0, 0): 0.0}
    t_prev = 0.0

    def key():
        return (1 if tags[0] is Phase.WORKING else 0,
                1 if tags[1] is Phase.WORKING else 0)

    for ev in traj.events:
        occ[key()] += max(0.0, min(ev.time, traj.horizon) - max(t_prev, burn_in))
        tags[ev.element - 1] = ev.new_tag
        t_prev = ev.time
    occ[key()] += max(0.0, traj.horizon - max(t_prev, burn_in))
    span = traj.horizon - burn_in
    return {k: v / span for k, v in occ.items()}


@dataclass(frozen=True)
class AvailabilityCurve:
    times: Tuple[float, ...]
    estimates: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    replications: int


def transient_availability(initial: SystemState, field: IntensityField,
                           policy: SwitchingPolicy, times: Sequence[float],
                           replications: int, master_seed: int) -> AvailabilityCurve:
    """Monte Carlo estimate of P(system available at t) on a time grid."""
    from .streams import substream
    if replications < 1:
        raise ValueError("need at least one replication")
    times = sorted(float(t) for t in times)
    horizon = times[-1] if times else 0.0
    hits = np.zeros(len(times))
    for i in range(replications):
        rng = substream(master_seed, i)
        traj = simulate(initial, field, policy, horizon, rng)
        for k, ok in enumerate(availability_at_times(traj, times)):
            if ok:
                hits[k] += 1
    p = hits / replications
    se = np.sqrt(p * (1.0 - p) / replications)
    return AvailabilityCurve(tuple(times), tuple(p), tuple(se), replications)
