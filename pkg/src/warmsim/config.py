"""Experiment configuration: strict JSON schema and model builders.

A configuration is a single JSON document with blocks ``model``, ``switching``,
``run`` and optionally ``coupling`` and ``output``.  Unknown fields anywhere
are hard errors; every error carries the dotted path of the offending field.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Any, Dict, List, Optional, Tuple

from .conditions import EnvelopePair
from .hazards import GeneralizedIntensity, atoms_from_jumps
from .kernel import (ElementPhase, IntensityField, NO_MODULATION, Phase,
                     PhaseLaw, StatusModulator, SwitchingDelay, SwitchingPolicy,
                     SystemState)
from .rates import (ConstantRate, HyperbolicRate, PiecewiseRate, RateFunction,
                    WeibullRate, ZERO_RATE)


class ConfigError(ValueError):
    """Schema violation; message carries the dotted field path."""


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _require_keys(obj: dict, path: str, required: set, optional: set = frozenset()):
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - required - optional
    if unknown:
        _fail(path, f"unknown field(s) {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        _fail(path, f"missing required field(s) {sorted(missing)}")


def _number(obj, path, minimum=None, strict_min=False):
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        _fail(path, f"expected a number, got {obj!r}")
    v = float(obj)
    if not math.isfinite(v):
        _fail(path, "must be finite")
    if minimum is not None:
        if strict_min and v <= minimum:
            _fail(path, f"must be > {minimum}")
        if not strict_min and v < minimum:
            _fail(path, f"must be >= {minimum}")
    return v


def _integer(obj, path, minimum=None):
    if isinstance(obj, bool) or not isinstance(obj, int):
        _fail(path, f"expected an integer, got {obj!r}")
    if minimum is not None and obj < minimum:
        _fail(path, f"must be >= {minimum}")
    return obj


_RATE_FAMILY_PARAMS = {
    "constant": {"rate"},
    "hyperbolic": {"gamma"},
    "weibull": {"shape", "scale"},
    "piecewise": {"breakpoints", "rates"},
}


def build_rate(obj: dict, path: str) -> RateFunction:
    if not isinstance(obj, dict) or "family" not in obj:
        _fail(path, "expected an object with a 'family' field")
    family = obj["family"]
    if family not in _RATE_FAMILY_PARAMS:
        _fail(f"{path}.family", f"unknown family {family!r}; "
              f"known: {sorted(_RATE_FAMILY_PARAMS)}")
    _require_keys(obj, path, {"family"} | _RATE_FAMILY_PARAMS[family])
    if family == "constant":
        return ConstantRate(_number(obj["rate"], f"{path}.rate", minimum=0.0))
    if family == "hyperbolic":
        return HyperbolicRate(_number(obj["gamma"], f"{path}.gamma", 0.0, strict_min=True))
    if family == "weibull":
        return WeibullRate(_number(obj["shape"], f"{path}.shape", 0.0, strict_min=True),
                           _number(obj["scale"], f"{path}.scale", 0.0, strict_min=True))
    bps = obj["breakpoints"]
    rts = obj["rates"]
    if not isinstance(bps, list) or not isinstance(rts, list):
        _fail(path, "piecewise needs list-valued 'breakpoints' and 'rates'")
    try:
        return PiecewiseRate(tuple(bps), tuple(rts))
    except ValueError as exc:
        _fail(path, str(exc))


def build_intensity(obj: dict, path: str,
                    extra_optional: set = frozenset()) -> GeneralizedIntensity:
    family = obj.get("family")
    fam_params = _RATE_FAMILY_PARAMS.get(family, set())
    _require_keys(obj, path, {"family"},
                  fam_params | {"atoms", "support_bound"} | extra_optional)
    cont = build_rate({k: v for k, v in obj.items()
                       if k in fam_params | {"family"}}, path)
    bound = None
    if "support_bound" in obj:
        bound = _number(obj["support_bound"], f"{path}.support_bound", 0.0, strict_min=True)
    jumps: List[Tuple[float, float]] = []
    for i, atom in enumerate(obj.get("atoms", [])):
        apath = f"{path}.atoms[{i}]"
        _require_keys(atom, apath, {"location", "mass"})
        jumps.append((_number(atom["location"], f"{apath}.location", 0.0, strict_min=True),
                      _number(atom["mass"], f"{apath}.mass", 0.0, strict_min=True)))
    try:
        if jumps:
            return atoms_from_jumps(jumps, cont, support_bound=bound)
        return GeneralizedIntensity(cont, support_bound=bound)
    except ValueError as exc:
        _fail(path, str(exc))


def build_modulator(obj: Optional[dict], path: str):
    if obj is None:
        return NO_MODULATION
    if not isinstance(obj, dict) or "family" not in obj:
        _fail(path, "expected an object with a 'family' field")
    if obj["family"] == "none":
        _require_keys(obj, path, {"family"})
        return NO_MODULATION
    if obj["family"] == "status":
        _require_keys(obj, path, {"family"}, {"other_working", "other_down"})
        return StatusModulator(
            when_other_working=_number(obj.get("other_working", 1.0),
                                       f"{path}.other_working", 0.0, strict_min=True),
            when_other_down=_number(obj.get("other_down", 1.0),
                                    f"{path}.other_down", 0.0, strict_min=True))
    _fail(f"{path}.family", f"unknown modulator family {obj['family']!r}")


def build_envelope(obj: Optional[dict], path: str) -> Optional[EnvelopePair]:
    if obj is None:
        return None
    _require_keys(obj, path, {"phi", "q", "k", "epsilon"}, {"t_delay"})
    try:
        return EnvelopePair(
            phi=build_rate(obj["phi"], f"{path}.phi"),
            q=build_rate(obj["q"], f"{path}.q"),
            k=_integer(obj["k"], f"{path}.k", minimum=2),
            epsilon=_number(obj["epsilon"], f"{path}.epsilon", 0.0, strict_min=True),
            t_delay=_number(obj.get("t_delay", 0.0), f"{path}.t_delay", 0.0))
    except ValueError as exc:
        _fail(path, str(exc))


_PHASE_NAMES = {"working": Phase.WORKING, "under_repair": Phase.UNDER_REPAIR}


def build_initial_state(obj: dict, path: str) -> SystemState:
    _require_keys(obj, path, {"element1", "element2"})
    phases, clocks = [], []
    for name in ("element1", "element2"):
        epath = f"{path}.{name}"
        _require_keys(obj[name], epath, {"phase"}, {"clock"})
        tag = obj[name]["phase"]
        if tag not in _PHASE_NAMES:
            _fail(f"{epath}.phase", f"must be one of {sorted(_PHASE_NAMES)}")
        phases.append(ElementPhase(_PHASE_NAMES[tag]))
        clocks.append(_number(obj[name].get("clock", 0.0), f"{epath}.clock", 0.0))
    return SystemState(phases[0], phases[1], clocks[0], clocks[1])


@dataclass(frozen=True)
class RunBlock:
    horizon: float
    replications: int
    burn_in: float
    time_grid: Tuple[float, ...]
    master_seed: int
    initial: SystemState


@dataclass(frozen=True)
class CouplingBlock:
    initial_a: SystemState
    initial_b: SystemState
    fit_form: str
    fit_window: Optional[Tuple[float, float]]
    alpha: Optional[float]


@dataclass(frozen=True)
class ExperimentConfig:
    field: IntensityField
    policy: SwitchingPolicy
    run: RunBlock
    coupling: Optional[CouplingBlock]
    output_dir: Optional[str]
    raw: dict


def _build_phase_law(obj: dict, path: str) -> PhaseLaw:
    extra = {"modulator", "envelope"}
    base = build_intensity(obj, path, extra_optional=extra)
    return PhaseLaw(base=base,
                    modulator=build_modulator(obj.get("modulator"), f"{path}.modulator"),
                    envelope=build_envelope(obj.get("envelope"), f"{path}.envelope"))


def _build_switching_direction(obj: dict, path: str) -> Optional[SwitchingDelay]:
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    if "bound" not in obj:
        _fail(f"{path}.bound", "missing; a delay bound is mandatory "
              "(use 0 for instantaneous switching)")
    bound = _number(obj["bound"], f"{path}.bound", 0.0)
    rest = {k: v for k, v in obj.items() if k != "bound"}
    if bound == 0.0:
        if rest:
            _fail(path, "bound 0 means instantaneous switching; no delay "
                  "distribution fields are allowed")
        return None
    if not rest:
        # deterministic delay: zero continuous hazard, all mass at the bound
        dist = GeneralizedIntensity(ZERO_RATE, support_bound=bound)
        return SwitchingDelay(dist, bound)
    if "support_bound" not in rest:
        rest = {**rest, "support_bound": bound}
    dist = build_intensity(rest, path)
    try:
        return SwitchingDelay(dist, bound)
    except ValueError as exc:
        _fail(path, str(exc))


def parse_config(doc: dict) -> ExperimentConfig:
    _require_keys(doc, "config", {"model", "switching", "run"},
                  {"coupling", "output"})

    model = doc["model"]
    _require_keys(model, "model", {"element1", "element2"})
    laws: Dict[Tuple[int, int], PhaseLaw] = {}
    for ei, ename in ((1, "element1"), (2, "element2")):
        block = model[ename]
        _require_keys(block, f"model.{ename}", {"work", "repair"})
        laws[(ei, 1)] = _build_phase_law(block["work"], f"model.{ename}.work")
        laws[(ei, 0)] = _build_phase_law(block["repair"], f"model.{ename}.repair")
    field = IntensityField(laws)

    sw = doc["switching"]
    _require_keys(sw, "switching", {"work_to_repair", "repair_to_work"})
    policy = SwitchingPolicy(
        work_to_repair=_build_switching_direction(sw["work_to_repair"],
                                                  "switching.work_to_repair"),
        repair_to_work=_build_switching_direction(sw["repair_to_work"],
                                                  "switching.repair_to_work"))

    run = doc["run"]
    _require_keys(run, "run", {"horizon", "replications", "master_seed"},
                  {"burn_in", "time_grid", "initial"})
    horizon = _number(run["horizon"], "run.horizon", 0.0)
    burn_in = _number(run.get("burn_in", 0.0), "run.burn_in", 0.0)
    if horizon > 0 and burn_in >= horizon:
        _fail("run.burn_in", "must be smaller than the horizon")
    grid_raw = run.get("time_grid", [])
    if not isinstance(grid_raw, list):
        _fail("run.time_grid", "expected a list of times")
    grid = tuple(_number(t, f"run.time_grid[{i}]", 0.0) for i, t in enumerate(grid_raw))
    initial = (build_initial_state(run["initial"], "run.initial")
               if "initial" in run else
               SystemState(ElementPhase(Phase.WORKING), ElementPhase(Phase.WORKING)))
    run_block = RunBlock(horizon=horizon,
                         replications=_integer(run["replications"], "run.replications", 1),
                         burn_in=burn_in, time_grid=grid,
                         master_seed=_integer(run["master_seed"], "run.master_seed", 0),
                         initial=initial)

    coupling = None
    if "coupling" in doc:
        cb = doc["coupling"]
        _require_keys(cb, "coupling", {"initial_a", "initial_b", "fit_form"},
                      {"fit_window", "alpha"})
        if cb["fit_form"] not in ("polynomial", "exponential"):
            _fail("coupling.fit_form", "must be 'polynomial' or 'exponential'")
        window = None
        if "fit_window" in cb:
            w = cb["fit_window"]
            if not isinstance(w, list) or len(w) != 2:
                _fail("coupling.fit_window", "expected [low, high]")
            window = (_number(w[0], "coupling.fit_window[0]", 0.0),
                      _number(w[1], "coupling.fit_window[1]", 0.0))
            if window[1] <= window[0]:
                _fail("coupling.fit_window", "needs low < high")
        alpha = (_number(cb["alpha"], "coupling.alpha", 0.0, strict_min=True)
                 if "alpha" in cb else None)
        coupling = CouplingBlock(
            initial_a=build_initial_state(cb["initial_a"], "coupling.initial_a"),
            initial_b=build_initial_state(cb["initial_b"], "coupling.initial_b"),
            fit_form=cb["fit_form"], fit_window=window, alpha=alpha)

    output_dir = None
    if "output" in doc:
        _require_keys(doc["output"], "output", {"dir"})
        if not isinstance(doc["output"]["dir"], str):
            _fail("output.dir", "expected a string path")
        output_dir = doc["output"]["dir"]

    return ExperimentConfig(field=field, policy=policy, run=run_block,
                            coupling=coupling, output_dir=output_dir, raw=doc)


def load_config(path: str) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
    return parse_config(doc)
