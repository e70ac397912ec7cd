"""Acceptance checks at the Faye parameter point (lambda=20, kappa=0.22,
beta=5, b=4.5; eps=0.005, c1=0.34).

Each criterion prints one PASS/FAIL line; the lines are repeated in the
pytest terminal summary. Run directly with ``python3 tests/test_acceptance.py``
for the lines alone.
"""
import math
import time

import numpy as np
import pytest

from pulse_hunter.field_sim import initial_state, measure_pulse_speed, simulate
from pulse_hunter.model import (FAYE, check_invariant_regions, compute_landscape,
                                firing_rate_sigmoid, prop2_identities)
from pulse_hunter.shoot import (FAST_ESCAPE_UP, FAST_TURN, ShotConfig, check_hypothesis_y1,
                                check_q_decreasing, check_theorem1_conditions, find_c0_star,
                                find_c_star, find_c_sub_star, shoot_fast, shoot_full)
from pulse_hunter.singular import (back_speed, check_faye_hypothesis_iv, maxwell_point,
                                   speed_curve)
from pulse_hunter.spectral import (fast_char_poly, fast_positive_eigenvalue, full_char_poly,
                                   full_positive_eigenvalue)

EPS, C1 = 0.005, 0.34
REPORT: list[str] = []

P = FAYE
S = firing_rate_sigmoid(P)
CFG = ShotConfig()
_cache: dict = {}


def report(n: int, title: str, ok: bool, detail: str, elapsed: float, budget: float) -> bool:
    ok_all = bool(ok) and elapsed < budget
    line = (f"criterion {n:2d} {'PASS' if ok_all else 'FAIL'}: {title} | {detail} | "
            f"{elapsed:.2f}s (budget {budget:g}s)")
    REPORT.append(line)
    print(line)
    return ok_all


def landscape():
    if "L" not in _cache:
        _cache["L"] = compute_landscape(P, S)
    return _cache["L"]


def c0():
    if "c0" not in _cache:
        _cache["c0"] = find_c0_star(P, landscape(), S, CFG)
    return _cache["c0"]


def pulse_speeds():
    if "c_star" not in _cache:
        L = landscape()
        _cache["c_star"] = find_c_star(EPS, C1, P, L, S, CFG, c0_star=c0()["c0_star"])
        _cache["c_sub"] = find_c_sub_star(EPS, C1, P, L, S, CFG)
    return _cache["c_star"], _cache["c_sub"]


@pytest.fixture(scope="module", autouse=True)
def _warm_jit():
    # load the compiled integrator once so that budgets measure the numerics
    shoot_fast(1.0, P, compute_landscape(P, S), S, CFG)
    shoot_full(1.0, EPS, P, compute_landscape(P, S), S, CFG)


def test_criterion_01_landscape():
    t = time.perf_counter()
    L = compute_landscape(P, S)
    el = time.perf_counter() - t
    s0 = S.value(L.u0)
    res = max(abs(L.u0 - L.q0 * s0), abs(L.q0 - 1 / (1 + P.beta * s0)),
              abs(L.um - L.q0 * S.value(L.um)), abs(L.uplus - L.q0 * S.value(L.uplus)))
    ok = all(L.flags.values()) and res < 1e-12 and L.u0 < L.um < L.u_knee < L.uplus
    assert report(1, "landscape", ok, f"conditions {sorted(k for k, v in L.flags.items() if v)}, "
                  f"max residual {res:.2e}, order {L.u0:.4g}<{L.um:.4g}<{L.u_knee:.4g}<{L.uplus:.4g}",
                  el, 1.0)


def test_criterion_02_spectral():
    L = landscape()
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    f = fast_char_poly(P, L, c=C1)
    g = full_char_poly(P, L, c=C1, epsilon=0.0)
    X = rng.uniform(-2 * P.b, 2 * P.b, 50)
    worst = max(abs(g(x) - x * f(x)) for x in X)
    lam0 = [fast_positive_eigenvalue(P, L, c=c) for c in np.linspace(0.05, 5, 20)]
    grid_ok = True
    for c in np.linspace(0.05, 5, 10):
        l0 = full_positive_eigenvalue(P, L, c=c, epsilon=0.0)
        for e in np.linspace(0.001, 0.1, 10):
            grid_ok &= full_positive_eigenvalue(P, L, c=c, epsilon=e) > l0
    el = time.perf_counter() - t
    ok = worst < 1e-10 and max(lam0) < P.b and grid_ok
    assert report(2, "spectral identities", ok,
                  f"max |g-Xf| {worst:.2e}, max lambda1(c,0) {max(lam0):.4f} < b, "
                  f"eps monotone on 10x10 grid: {grid_ok}", el, 1.0)


def test_criterion_03_front_speed():
    L = landscape()
    t = time.perf_counter()
    r = c0()
    a = find_c0_star(P, L, S, CFG.with_(rtol=CFG.rtol / 2, atol=CFG.atol / 2))
    b = find_c0_star(P, L, S, CFG.with_(offset=CFG.offset / 2))
    el = time.perf_counter() - t
    d = max(abs(a["c0_star"] - r["c0_star"]), abs(b["c0_star"] - r["c0_star"]))
    ok = r["bracket"].width <= 1e-10 and d < 1e-8 and r["approach"] < 1e-5
    assert report(3, "front speed c0*", ok,
                  f"c0*={r['c0_star']:.12g}, width {r['bracket'].width:.1e}, "
                  f"halving drift {d:.1e}, approach {r['approach']:.2e}", el, 10.0)


def test_criterion_04_hypotheses():
    L = landscape()
    t = time.perf_counter()
    y1 = check_hypothesis_y1(C1, P, L, S, CFG)
    th = check_theorem1_conditions(EPS, C1, P, L, S, CFG)
    el = time.perf_counter() - t
    ok = y1["ok"] is True and th["ok"] is True
    assert report(4, "hypothesis (y1) and conditions (i)-(ii)", ok,
                  f"y1 margin {y1['margin']:.4g}, u''(t1)={th.get('u2_t1', math.nan):.4g}, "
                  f"theorem1 {th['ok']}", el, 10.0)


def test_criterion_05_two_pulses():
    t = time.perf_counter()
    fs, ss = pulse_speeds()
    el = time.perf_counter() - t
    cst, csub, c0s = fs["c_star"], ss["c_sub_star"], c0()["c0_star"]
    b1, b2 = fs["bracket"], ss["bracket"]
    cert = (b1.label_lo is True and b1.label_hi is False and b2.label_lo is False
            and b2.label_hi is True and b1.lo < b1.hi and b2.lo < b2.hi)
    order = 0 < csub < C1 < cst < c0s
    resid = fs["residual"] < 1e-3 and ss["residual"] < 1e-3
    ok = order and cert and resid
    assert report(5, "two pulses", ok,
                  f"c_*={csub:.10g} < {C1} < c*={cst:.10g} < c0*={c0s:.10g}: {order}; "
                  f"certificates {cert}; residuals c* {fs['residual']:.3e}, "
                  f"c_* {ss['residual']:.3e} (need < 1e-3)", el, 120.0)


def test_criterion_06_asymptotic_trend():
    L = landscape()
    t = time.perf_counter()
    rows = []
    for e in (0.005, 0.002, 0.001):
        fs = find_c_star(e, C1, P, L, S, CFG, c0_star=c0()["c0_star"])
        ss = find_c_sub_star(e, C1, P, L, S, CFG)
        rows.append((e, fs["c_star"], ss["c_sub_star"], ss["epsilon_over_c"]))
    el = time.perf_counter() - t
    cs = [r[1] for r in rows]
    cl = [r[2] for r in rows]
    ratio = [r[3] for r in rows]
    ok = (cs[0] < cs[1] < cs[2] < c0()["c0_star"] and cl[0] > cl[1] > cl[2]
          and all(math.isfinite(x) for x in ratio))
    assert report(6, "asymptotic trend", ok,
                  "c* " + ", ".join(f"{x:.8g}" for x in cs) + "; c_* "
                  + ", ".join(f"{x:.6g}" for x in cl) + "; eps/c_* "
                  + ", ".join(f"{x:.4g}" for x in ratio), el, 600.0)


def test_criterion_07_proposition_suites():
    L = landscape()
    t = time.perf_counter()
    worst, checked = 0.0, 0
    crit = {"UPRIME_ZERO", "QPRIME_ZERO", "W_ZERO", "V_ZERO"}
    speeds = np.linspace(0.05, 0.5, 10)
    q_ok = True
    for c in speeds:
        p = P.with_(epsilon=EPS, c=float(c))
        o = shoot_full(float(c), EPS, P, L, S, CFG)
        for ev in o.trajectory.events:
            if ev.name not in crit:
                continue
            for r in prop2_identities(ev.y, p, S):
                if r.applicable:
                    worst = max(worst, abs(r.residual))
                    checked += 1
        q_ok &= check_q_decreasing(o.trajectory, p, L, S)["ok"]
    inv = check_invariant_regions(P.with_(epsilon=EPS, c=C1), S, n=200, seed=7)
    n_inv = inv["lower"]["samples"] + inv["upper"]["samples"]
    inv_ok = inv["lower"]["passed"] + inv["upper"]["passed"] == n_inv == 400
    el = time.perf_counter() - t
    ok = checked > 0 and worst < 1e-8 and inv_ok and q_ok
    assert report(7, "proposition suites", ok,
                  f"{checked} identity checks, worst {worst:.2e}; inward field "
                  f"{inv['lower']['passed'] + inv['upper']['passed']}/{n_inv}; "
                  f"q'<0 while w>0 on 10 shots: {q_ok}", el, 30.0)


def test_criterion_08_comparison_properties():
    L = landscape()
    t = time.perf_counter()
    cs = np.linspace(0.02, c0()["c0_star"] - 1e-3, 10)
    outs = [shoot_fast(float(c), P, L, S, CFG) for c in cs]
    tags = all(o.tag == FAST_TURN for o in outs)
    v = np.array([o.states.get("v_T", math.nan) for o in outs])
    mono = tags and bool(np.all(np.diff(v) > 0))
    pairs = [(0.005, 0.1), (0.005, 0.34), (0.01, 0.25), (0.002, 0.3), (0.02, 0.2)]
    eps_ok = all(shoot_full(c, e, P, L, S, CFG).states["v_T"]
                 > shoot_fast(c, P, L, S, CFG).states["v_T"] for e, c in pairs)
    el = time.perf_counter() - t
    assert report(8, "comparison properties", mono and eps_ok,
                  f"v(T(c)) increasing over 10 turns: {mono}; v(T(eps,c)) > v(T(0,c)) at 5 pairs: "
                  f"{eps_ok}", el, 30.0)


def test_criterion_09_singular():
    L = landscape()
    t = time.perf_counter()
    r0 = back_speed(L.q0, P, L, S, CFG)
    mp = maxwell_point(P, L, S)
    rs = back_speed(mp["q_star"], P, L, S, CFG)
    curve = speed_curve(P, L, S, CFG, 512)
    hyp = check_faye_hypothesis_iv(P, L, S, CFG, curve=curve, c0=c0())
    el = time.perf_counter() - t
    d = abs(r0.c_of_q - c0()["c0_star"])
    ok = (d < 1e-8 and abs(mp["maxwell"]) < 1e-8 and mp["M_lo"] < 0 < mp["M_hi"]
          and rs.c_of_q == 0.0 and hyp["ok"] in (True, False) and len(hyp["curve"]) == 512)
    assert report(9, "singular solution", ok,
                  f"|c(q0)-c0*| {d:.1e}; q*={mp['q_star']:.12g}, M(q*)={mp['maxwell']:.1e}; "
                  f"hypothesis (iv) {hyp['ok']} (max back {hyp['max_back_speed']:.6g})", el, 120.0)


def test_criterion_10_field():
    L = landscape()
    fs, _ = pulse_speeds()
    p = P.with_(epsilon=EPS)
    t = time.perf_counter()
    speeds = []
    for n in (4096, 8192):
        st = initial_state(L, 40.0, n, kappa=P.kappa)
        snaps = simulate(st, p, S, dt=0.01, t_end=60.0, every=1.0)
        speeds.append(measure_pulse_speed(snaps, P.kappa, t_min=15.0, edge_margin=2.0).speed)
    el = time.perf_counter() - t
    rel = abs(speeds[0] - fs["c_star"]) / fs["c_star"]
    ref = abs(speeds[1] - speeds[0]) / speeds[0]
    ok = rel < 0.05 and ref < 0.01
    assert report(10, "field cross-validation", ok,
                  f"field {speeds[0]:.6g} vs c* {fs['c_star']:.6g} ({100 * rel:.2f}%), "
                  f"dx halving {100 * ref:.3f}%", el, 300.0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
