"""Command-line driver: ``pulse-hunter --task NAME [options]``.

Every task writes ``summary.json`` (inputs, outputs, version, tolerances)
plus CSV and SVG data files into the output directory. Errors are written
as JSON to stdout and ``error.json`` with a nonzero exit code:
1 configuration, 2 condition violation, 3 bracket failure, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import TASKS, ConfigError, RunConfig, load_config
from .field_sim import FieldBlowup, NoPulse, initial_state, measure_pulse_speed, q_bounds_check, \
    simulate, write_snapshots_csv
from .figures import emit_figures
from .integrate import StepUnderflow
from .model import ConditionViolation, check_invariant_regions, compute_landscape, firing_rate_sigmoid
from .shoot import (BracketFailure, ShotConfig, check_hypothesis_y1, check_theorem1_conditions,
                    find_c0_star, find_speeds, shoot_fast, shoot_full)
from .singular import (back_speed, build_singular_solution, check_faye_hypothesis_iv,
                       maxwell_point, speed_curve)
from .spectral import SpectralError, stable_root_count

EXIT_CONFIG, EXIT_CONDITION, EXIT_BRACKET, EXIT_NUMERICAL = 1, 2, 3, 4


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if hasattr(x, "to_dict"):
        return jsonable(x.to_dict())
    if dataclasses.is_dataclass(x):
        return jsonable(dataclasses.asdict(x))
    return x


def dump_json(obj, path=None) -> str:
    s = json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(s)
    return s


def _shot_cfg(cfg: RunConfig) -> ShotConfig:
    return ShotConfig(rtol=cfg.rtol, atol=cfg.atol, offset=cfg.seed_offset, horizon=cfg.horizon)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# tasks; each returns (summary dict, figure artifacts, lines for stdout)

def task_landscape(cfg, out):
    P = cfg.model
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    inv = check_invariant_regions(P, S)
    summ = {"landscape": L, "invariant_regions": inv}
    lines = [f"u0={L.u0:.12g} q0={L.q0:.12g} um={L.um:.12g} u_knee={L.u_knee:.12g} "
             f"u+={L.uplus:.12g} q_min={L.q_min:.12g}",
             "conditions 1-5: " + ("pass" if all(L.flags.values()) else "FAIL")]
    return summ, {"landscape": {"landscape": L, "S": S, "beta": P.beta}}, lines


def task_front(cfg, out):
    P = cfg.model
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    sc = _shot_cfg(cfg)
    c0 = find_c0_star(P, L, S, sc)
    shot = shoot_fast(c0["bracket"].lo, P, L, S, sc)
    Path(out, "front_shot.csv").write_text(shot.trajectory.to_csv(names=("u", "v", "w")))
    y1 = check_hypothesis_y1(cfg.c1, P, L, S, sc)
    summ = {"c0_star": c0["c0_star"], "bracket": c0["bracket"], "approach": c0["approach"],
            "approach_lo": c0["approach_lo"], "approach_hi": c0["approach_hi"],
            "shot_lo": shot, "hypothesis_y1": y1}
    tt, yy = shot.trajectory.dense_grid(4)
    art = {"shot": {"u": yy[:, 0], "q": np.full(len(tt), L.q0), "title": "front of the fast system",
                    "markers": {"u+": (L.uplus, L.q0)}}}
    b = c0["bracket"]
    return summ, art, [f"c0* = {c0['c0_star']:.15g}  bracket [{b.lo:.17g}, {b.hi:.17g}]",
                       f"closest approach to (u+,u+,0): {c0['approach']:.3e}"]


def task_pulse(cfg, out):
    P = cfg.model
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    sc = _shot_cfg(cfg)
    res = find_speeds(cfg.epsilon, cfg.c1, P, L, S, sc)
    shot = shoot_full(cfg.c1, cfg.epsilon, P, L, S, sc)
    Path(out, "shot_c1.csv").write_text(shot.trajectory.to_csv())
    tr = shot.trajectory
    markers = {}
    for k in ("t1", "t2", "t3"):
        if k in shot.times:
            y = tr(shot.times[k])
            markers[k] = (float(y[0]), float(y[3]))
    tt, yy = tr.dense_grid(4)
    art = {"shot": {"u": yy[:, 0], "q": yy[:, 3], "markers": markers,
                    "title": f"shot at c1 = {cfg.c1:g} ({shot.tag})"}}
    summ = {"speeds": res, "ordered": res.ordered, "shot_c1": shot,
            "stable_roots_c_star": stable_root_count(P, L, S, res.c_star, cfg.epsilon)}
    bs, bl = res.brackets["c_sub_star"], res.brackets["c_star"]
    lines = [f"c_* = {res.c_sub_star:.12g} [{bs.lo:.15g}, {bs.hi:.15g}]",
             f"c*  = {res.c_star:.12g} [{bl.lo:.15g}, {bl.hi:.15g}]",
             f"{'0 < c_* < c1 < c* < c0*' if res.ordered else 'ordering FAILS'}: "
             f"{res.c_sub_star:.6g} < {cfg.c1:g} < {res.c_star:.6g} < {res.c0_star:.6g}",
             f"homoclinic residuals: c* {res.residuals['c_star']:.3e}, "
             f"c_* {res.residuals['c_sub_star']:.3e}"]
    return summ, art, lines


def _sweep_point(args):
    eps, c1, params, sc = args
    L = compute_landscape(params)
    try:
        return {"epsilon": eps, "ok": True, "result": jsonable(find_speeds(eps, c1, params, L, None, sc))}
    except (BracketFailure, ArithmeticError, StepUnderflow) as e:
        return {"epsilon": eps, "ok": False, "error": type(e).__name__, "message": str(e)}


def _threads() -> int:
    raw = os.environ.get("PULSE_HUNTER_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"PULSE_HUNTER_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def task_sweep(cfg, out):
    sc = _shot_cfg(cfg)
    eps = sorted(cfg.epsilons, reverse=True)
    jobs = [(e, cfg.c1, cfg.model, sc) for e in eps]
    n = min(_threads(), len(jobs))
    if n == 1:
        pts = [_sweep_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            pts = list(ex.map(_sweep_point, jobs))
    rows = [(p["epsilon"], p["result"]["c_star"], p["result"]["c_sub_star"],
             p["result"]["epsilon_over_c"]) for p in pts if p["ok"]]
    _write_csv(Path(out, "sweep.csv"), ["epsilon", "c_star", "c_sub_star", "epsilon_over_c_sub"], rows)
    cs = [r[1] for r in rows]
    csub = [r[2] for r in rows]
    # eps decreasing along the rows
    trend = {"c_star_increasing": bool(len(cs) == len(pts) and all(b > a for a, b in zip(cs, cs[1:]))),
             "c_sub_star_decreasing": bool(len(csub) == len(pts) and
                                           all(b < a for a, b in zip(csub, csub[1:])))}
    lines = [f"eps={r[0]:g}: c*={r[1]:.10g} c_*={r[2]:.10g} eps/c_*={r[3]:.4g}" for r in rows]
    lines += [f"{p['epsilon']:g}: {p['error']}: {p['message']}" for p in pts if not p["ok"]]
    lines.append(f"c* increasing as eps decreases: {trend['c_star_increasing']}; "
                 f"c_* decreasing: {trend['c_sub_star_decreasing']}")
    return {"points": pts, "trend": trend, "workers": n}, {}, lines


def task_singular(cfg, out):
    P = cfg.model
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    sc = _shot_cfg(cfg)
    c0 = find_c0_star(P, L, S, sc)
    curve = speed_curve(P, L, S, sc, cfg.n_grid)
    hyp = check_faye_hypothesis_iv(P, L, S, sc, curve=curve, c0=c0)
    sol = build_singular_solution(P, L, S, sc, curve=curve, c0=c0)
    mp = maxwell_point(P, L, S)
    at_q0 = back_speed(L.q0, P, L, S, sc)
    at_qs = back_speed(mp["q_star"], P, L, S, sc)
    _write_csv(Path(out, "speed_curve.csv"), ["q", "c", "direction", "maxwell", "u_minus", "u_plus"],
               [(r.q, r.c_of_q, r.direction, r.maxwell, r.u_minus, r.u_plus) for r in curve])
    _write_csv(Path(out, "singular_polyline.csv"), ["piece", "u", "q"],
               [(i, u, q) for i, pc in enumerate(sol.pieces) for u, q in pc])
    hyp_out = {k: v for k, v in hyp.items() if k != "curve"}
    summ = {"c0_star": c0["c0_star"], "back_speed_q0": at_q0, "maxwell_point": mp,
            "back_speed_q_star": at_qs, "hypothesis_iv": hyp_out,
            "singular": {k: v for k, v in sol.to_dict().items() if k != "pieces"},
            "n_grid": cfg.n_grid}
    art = {"singular": {"pieces": sol.pieces, "S": S},
           "curve": {"q": [r.q for r in curve], "c": [r.c_of_q for r in curve],
                     "directions": [r.direction for r in curve], "c0_star": c0["c0_star"]}}
    lines = [f"c(q0) = {at_q0.c_of_q:.15g}, c0* = {c0['c0_star']:.15g}",
             f"Maxwell point q* = {mp['q_star']:.15g} (integral {mp['maxwell']:.2e})",
             f"max back speed {hyp['max_back_speed']:.10g} < c0* - 1e-8: {hyp['ok']}",
             f"jump down at q1 = {sol.jump_down_q:.12g} ({'knee' if sol.at_knee else 'above the knee'})"]
    return summ, art, lines


def task_field(cfg, out):
    P = cfg.model.with_(epsilon=cfg.epsilon)
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    st = initial_state(L, cfg.field_length, cfg.field_n, boundary=cfg.field_boundary, kappa=P.kappa)
    snaps = simulate(st, P, S, dt=cfg.field_dt, t_end=cfg.field_t_end, every=cfg.field_every)
    m = measure_pulse_speed(snaps, P.kappa, t_min=cfg.field_t_min, edge_margin=2.0)
    write_snapshots_csv(Path(out, "field_snapshots.csv"), snaps[::5], stride=max(1, cfg.field_n // 512))
    _write_csv(Path(out, "front_positions.csv"), ["t", "x"], zip(m.times, m.positions))
    qb = q_bounds_check(snaps[-1], P)
    summ = {"measurement": m, "q_bounds": qb, "dx": st.dx, "n_snapshots": len(snaps)}
    return summ, {}, [f"field pulse speed {m.speed:.8g} (rms {m.residual:.2e}, {m.n} snapshots)"]


def task_verify(cfg, out):
    P = cfg.model
    S = firing_rate_sigmoid(P)
    L = compute_landscape(P, S)
    sc = _shot_cfg(cfg)
    y1 = check_hypothesis_y1(cfg.c1, P, L, S, sc)
    th = check_theorem1_conditions(cfg.epsilon, cfg.c1, P, L, S, sc)
    ok = bool(all(L.flags.values()) and y1["ok"] and th["ok"])
    summ = {"conditions": L.flags, "hypothesis_y1": y1, "theorem1_conditions": th, "ok": ok}
    lines = [f"conditions 1-5: {'pass' if all(L.flags.values()) else 'FAIL'}",
             f"(y1) at c1={cfg.c1:g}: {y1['ok']} (margin {y1['margin']})",
             f"(i)-(ii) at eps={cfg.epsilon:g}, c1={cfg.c1:g}: {th['ok']}",
             "Theorem 1 hypotheses satisfied" if ok else "Theorem 1 hypotheses NOT satisfied"]
    return summ, {}, lines


TASK_FUNCS = {"landscape": task_landscape, "front": task_front, "pulse": task_pulse,
              "sweep": task_sweep, "singular": task_singular, "field": task_field,
              "verify": task_verify}


def run(cfg: RunConfig, stream=None) -> int:
    """Execute ``cfg.task``; returns the process exit status."""
    stream = sys.stdout if stream is None else stream
    out = Path(cfg.out)
    try:
        cfg.validate()
        out.mkdir(parents=True, exist_ok=True)
        summ, art, lines = TASK_FUNCS[cfg.task](cfg, out)
    except ConfigError as e:
        return _fail(out, EXIT_CONFIG, e, stream)
    except ConditionViolation as e:
        return _fail(out, EXIT_CONDITION, e, stream, condition=e.condition)
    except BracketFailure as e:
        return _fail(out, EXIT_BRACKET, e, stream)
    except (StepUnderflow, SpectralError, FieldBlowup, NoPulse, ArithmeticError) as e:
        return _fail(out, EXIT_NUMERICAL, e, stream)
    doc = {"tool": "pulse-hunter", "version": __version__, "task": cfg.task, "config": cfg.to_dict(),
           "tolerances": {"rtol": cfg.rtol, "atol": cfg.atol, "seed_offset": cfg.seed_offset,
                          "horizon": cfg.horizon},
           "result": summ}
    dump_json(doc, out / "summary.json")
    if cfg.figures and art:
        emit_figures(art, out, wanted=tuple(art))
    for ln in lines:
        print(ln, file=stream)
    return 0


def _fail(out: Path, code: int, exc: Exception, stream, **extra) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    s = dump_json(doc)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(s)
    except OSError:
        pass
    stream.write(s)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulse-hunter",
                                 description="Travelling-pulse speeds of a neural field with synaptic depression.")
    ap.add_argument("task_pos", nargs="?", choices=TASKS, metavar="TASK",
                    help=f"one of {', '.join(TASKS)} (same as --task)")
    ap.add_argument("--config", type=Path)
    ap.add_argument("--task", choices=TASKS)
    ap.add_argument("--out")
    ap.add_argument("--epsilon", type=float)
    ap.add_argument("--c1", type=float)
    ap.add_argument("--tol", type=float, help="relative tolerance; atol is set to tol/100")
    ap.add_argument("--seed-offset", type=float)
    ap.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as e:
        return _fail(Path(args.out or "out"), EXIT_CONFIG, e, sys.stdout)
    task = args.task or args.task_pos
    if task:
        cfg.task = task
    if args.out:
        cfg.out = args.out
    if args.epsilon is not None:
        cfg.epsilon = args.epsilon
    if args.c1 is not None:
        cfg.c1 = args.c1
    if args.tol is not None:
        cfg.rtol, cfg.atol = args.tol, args.tol / 100
    if args.seed_offset is not None:
        cfg.seed_offset = args.seed_offset
    if args.no_figures:
        cfg.figures = False
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
