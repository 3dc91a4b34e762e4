"""Batch front door: validate / simulate / couple / availability.

Exit codes: 0 ok, 2 config error, 3 condition failure, 4 I/O failure,
5 fit rejected.  Replication i always draws from the substream derived from
(master seed, i) and results merge in replication order, so output bytes do
not depend on the worker count.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .conditions import (check_condition_a, check_condition_b,
                         check_condition_c, check_condition_d)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .coupling import FitError, FitRejectedError, TVCurve, fit_envelope, run_coupled
from .kernel import (availability_at_times, availability_indicator,
                     longrun_availability, simulate)
from .streams import stream_fingerprint, substream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONDITION = 3
EXIT_IO = 4
EXIT_FIT = 5


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _chunks(n: int, parts: int) -> List[range]:
    parts = max(1, min(parts, n)) if n else 1
    size, extra = divmod(n, parts)
    out, start = [], 0
    for p in range(parts):
        width = size + (1 if p < extra else 0)
        out.append(range(start, start + width))
        start += width
    return [r for r in out if len(r)]


# worker entry points are module level so process pools can import them

def _sim_chunk(payload) -> List[Tuple[int, float, int, int]]:
    raw, seed, indices = payload
    cfg = parse_config(json.loads(raw))
    rows = []
    for i in indices:
        traj = simulate(cfg.run.initial, cfg.field, cfg.policy, cfg.run.horizon,
                        substream(seed, i))
        if cfg.run.horizon > 0:
            avail = longrun_availability(traj, cfg.run.burn_in)
        else:
            avail = 1.0 if availability_indicator(cfg.run.initial) else 0.0
        rows.append((i, avail, len(traj.events), stream_fingerprint(seed, i)))
    return rows


def _avail_chunk(payload) -> np.ndarray:
    raw, seed, indices = payload
    cfg = parse_config(json.loads(raw))
    times = sorted(cfg.run.time_grid)
    hits = np.zeros(len(times))
    for i in indices:
        traj = simulate(cfg.run.initial, cfg.field, cfg.policy,
                        times[-1] if times else 0.0, substream(seed, i))
        for k, ok in enumerate(availability_at_times(traj, times)):
            if ok:
                hits[k] += 1
    return hits


def _couple_chunk(payload) -> List[Tuple[int, float]]:
    raw, seed, indices = payload
    cfg = parse_config(json.loads(raw))
    cb = cfg.coupling
    out = []
    for i in indices:
        res = run_coupled(cb.initial_a, cb.initial_b, cfg.field, cfg.policy,
                          cfg.run.horizon, substream(seed, i))
        out.append((i, math.inf if res.tau is None else res.tau))
    return out


def _run_parallel(worker, raw: str, seed: int, n: int, threads: int):
    payloads = [(raw, seed, list(r)) for r in _chunks(n, threads)]
    if threads <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, payloads))


def cmd_validate(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int,
                 stdout) -> int:
    slot_name = {1: "work", 0: "repair"}
    all_passed = True
    rep_a = check_condition_a(cfg.field)
    for element, status, law in cfg.field.slots():
        label = f"[element {element}/{slot_name[status]}]"
        viols = [v for v in rep_a.violations if v[0] == element and v[1] == status]
        ok_a = not viols
        all_passed &= ok_a
        detail = (f"violations={len(viols)}, first at s={viols[0][2]:g}" if viols
                  else "no violations")
        print(f"{label} condition a: {'PASS' if ok_a else 'FAIL'} ({detail})", file=stdout)
        if law.envelope is None:
            print(f"{label} conditions b-d: FAIL (no envelope declared)", file=stdout)
            all_passed = False
            continue
        rb = check_condition_b(law.envelope)
        tail = "inf" if rb.tail_value is None else f"{rb.tail_value:.6g}"
        print(f"{label} condition b: {'PASS' if rb.passed else 'FAIL'} "
              f"(hazard diverges={rb.hazard_diverges}, order-{rb.k} tail integral={tail})",
              file=stdout)
        rc = check_condition_c(law.envelope)
        print(f"{label} condition c: {'PASS' if rc.passed else 'FAIL'} "
              f"(integral over (0,{rc.epsilon:g}) = {rc.integral:.6g}, "
              f"largest passing radius = {rc.largest_passing_epsilon:.6g})", file=stdout)
        rd = check_condition_d(law.envelope)
        print(f"{label} condition d: {'PASS' if rd.passed else 'FAIL'} "
              f"(positivity beyond T={rd.t_delay:g}"
              + (f", violations at {rd.violations[:3]}" if rd.violations else "")
              + ")", file=stdout)
        all_passed &= rb.passed and rc.passed and rd.passed
    print(f"overall: {'PASS' if all_passed else 'FAIL'}", file=stdout)
    return EXIT_OK if all_passed else EXIT_CONDITION


def cmd_simulate(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int,
                 stdout) -> int:
    raw = json.dumps(cfg.raw)
    results = _run_parallel(_sim_chunk, raw, seed, cfg.run.replications, threads)
    rows = sorted(r for chunk in results for r in chunk)
    # the event log records replication 0 (the summary covers all of them)
    traj = simulate(cfg.run.initial, cfg.field, cfg.policy, cfg.run.horizon,
                    substream(seed, 0))
    _write_csv(os.path.join(out_dir, "events.csv"),
               ["wall_time", "element", "transition", "clock_at_event"],
               [(ev.time, ev.element, ev.kind, ev.clock_at_event)
                for ev in traj.events])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["replication", "longrun_availability", "events", "seed"], rows)
    print(f"wrote events.csv ({len(traj.events)} events) and summary.csv "
          f"({len(rows)} replications) to {out_dir}", file=stdout)
    return EXIT_OK


def cmd_availability(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int,
                     stdout) -> int:
    if not cfg.run.time_grid:
        raise ConfigError("run.time_grid: required for the availability command")
    raw = json.dumps(cfg.raw)
    n = cfg.run.replications
    hits = sum(_run_parallel(_avail_chunk, raw, seed, n, threads))
    times = sorted(cfg.run.time_grid)
    rows = []
    for t, h in zip(times, hits):
        p = h / n
        rows.append((t, p, math.sqrt(p * (1.0 - p) / n), n))
    _write_csv(os.path.join(out_dir, "availability.csv"),
               ["t", "estimate", "stderr", "n"], rows)
    print(f"wrote availability.csv ({len(rows)} grid times) to {out_dir}", file=stdout)
    return EXIT_OK


def cmd_couple(cfg: ExperimentConfig, out_dir: str, seed: int, threads: int,
               stdout) -> int:
    if cfg.coupling is None:
        raise ConfigError("coupling: block required for the couple command")
    raw = json.dumps(cfg.raw)
    n = cfg.run.replications
    pairs = sorted(p for chunk in _run_parallel(_couple_chunk, raw, seed, n, threads)
                   for p in chunk)
    taus = np.array([t for _, t in pairs])
    times = sorted(cfg.run.time_grid)
    values = [float(np.mean(taus > t)) for t in times]
    radii = [1.959963984540054 * math.sqrt(b * (1.0 - b) / n) for b in values]
    curve = TVCurve(tuple(times), tuple(values), tuple(radii), n)
    _write_csv(os.path.join(out_dir, "tv_curve.csv"), ["t", "bound", "ci_radius", "n"],
               list(zip(curve.times, curve.values, curve.radii, [n] * len(times))))
    censored = int(np.isinf(taus).sum())
    print(f"wrote tv_curve.csv ({len(times)} grid times, {censored} censored pairs) "
          f"to {out_dir}", file=stdout)

    fit_path = os.path.join(out_dir, "fit.txt")
    cb = cfg.coupling
    try:
        fit = fit_envelope(curve, cb.fit_form, window=cb.fit_window, alpha=cb.alpha)
    except FitError as exc:
        with open(fit_path, "w", encoding="utf-8") as fh:
            fh.write(f"form: {cb.fit_form}\nfit rejected: {exc}\n")
        print(f"fit rejected: {exc}", file=stdout)
        return EXIT_FIT
    with open(fit_path, "w", encoding="utf-8") as fh:
        fh.write(f"form: {fit.form}\n")
        if fit.form == "polynomial":
            fh.write(f"K: {fit.amplitude!r}\nell: {fit.decay!r}\n")
        else:
            fh.write(f"K_tilde: {fit.amplitude!r}\nbeta: {fit.decay!r}\n")
        fh.write(f"rmse_log: {fit.rmse!r}\n")
        fh.write(f"window: [{fit.window[0]!r}, {fit.window[1]!r}]\n")
        fh.write(f"lift: {fit.lift!r}\n")
        if fit.alpha_cap is not None:
            fh.write(f"alpha_cap: {fit.alpha_cap!r}\n")
        fh.write(f"replications: {n}\n")
    print(f"wrote fit.txt ({fit.form}: amplitude={fit.amplitude:.4g}, "
          f"decay={fit.decay:.4g}, rmse={fit.rmse:.4g})", file=stdout)
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "couple": cmd_couple,
    "availability": cmd_availability,
}


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = argparse.ArgumentParser(
        prog="warmsim",
        description="Warm-standby reliability simulation and convergence checks")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--seed", type=int, default=None,
                        help="64-bit master seed (overrides run.master_seed)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes (default: WARMSIM_THREADS or 1)")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("WARMSIM_THREADS", "1"))

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    seed = args.seed if args.seed is not None else cfg.run.master_seed
    out_dir = args.out or cfg.output_dir or "."
    try:
        os.makedirs(out_dir, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, seed, threads, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def entrypoint():  # console script
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
