"""The epsilon = 0 skeleton: fronts and backs of the fast system at frozen
depression q, the speed curve c(q), the Maxwell point and the jump-down
location of the singular pulse."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

from .integrate import FALLING, RISING, integrate, linear_event
from .model import (FiringRate, Landscape, ModelParams, firing_rate_sigmoid, h_func,
                    maxwell_integral, nullcline_roots)
from .shoot import BracketFailure, ShotConfig, _fast, bisect_boundary, find_c0_star
from .spectral import fast_unstable_direction

__all__ = [
    "BackResult",
    "SingularSolution",
    "back_speed",
    "maxwell_point",
    "speed_curve",
    "build_singular_solution",
    "check_faye_hypothesis_iv",
    "planar_loop_radii",
    "planar_comparison",
    "speed_identity",
]

MAXWELL_TOL = 1e-10
C_FLOOR = 1e-6
C_CEIL = 50.0
TURN, ESCAPE = "TURN", "ESCAPE"
TOUCH_TOL = 1e-10


@dataclass
class BackResult:
    q: float
    c_of_q: float
    u_minus: float
    u_mid: float
    u_plus: float
    direction: str  # "front", "back" or "standing"
    maxwell: float
    bracket: tuple | None = None
    below_floor: bool = False
    shots: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _three_roots(q: float, S: FiringRate, L: Landscape):
    """Roots of h(u) = q bracketed by the critical points of h, so the pair
    merging at the knee stays resolved as q approaches q_min."""
    h = lambda u: h_func(u, S) - q  # noqa: E731
    hi = 1.5
    while h(hi) <= 0:
        hi *= 2
    brk = [(0.0, L.u_hmax), (L.u_hmax, L.u_knee), (L.u_knee, hi)]
    out = []
    for a, b in brk:
        if not (h(a) < 0 < h(b) or h(a) > 0 > h(b)):
            raise ValueError(f"h(u) = {q} has no root in ({a}, {b}); q is outside the bistable window")
        out.append(brentq(h, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))
    return tuple(out)


def connection_shot(c: float, q: float, direction: str, roots, params: ModelParams,
                    S: FiringRate | None, cfg: ShotConfig, *, terminal: bool = True):
    """One shot of the fast system at depression q.

    ``direction="front"`` leaves (u-, u-, 0) with w > 0 and is labelled TURN
    when w falls to 0, ESCAPE when v rises through 1. ``"back"`` leaves
    (u+, u+, 0) with w < 0; TURN when w rises to 0, ESCAPE when v falls
    through 0.
    """
    um_, _, up_ = roots
    p = params.with_(c=c, epsilon=0.0)
    if direction == "front":
        ue, sgn = um_, 1.0
    else:
        ue, sgn = up_, -1.0
    _, mu = fast_unstable_direction(p, ue, q, c, S)
    y0 = np.array([ue, ue, 0.0]) + sgn * cfg.offset * mu
    if direction == "front":
        ev = [linear_event("W_ZERO", [0, 0, 1], 0.0, FALLING, terminal),
              linear_event("V_ONE", [0, 1, 0], -1.0, RISING, True)]
    else:
        ev = [linear_event("W_ZERO", [0, 0, 1], 0.0, RISING, terminal),
              linear_event("V_ZERO", [0, 1, 0], 0.0, FALLING, True)]
    tr = integrate(y0, _fast(p, q, c, S), ev, cfg.horizon, cfg.rtol, cfg.atol,
                   graze_tol=cfg.graze_tol, raise_underflow=False)
    first = tr.events[0] if tr.events else None
    if first is None:
        return None, tr
    label = TURN if first.name == "W_ZERO" else ESCAPE
    if any(g.name == "W_ZERO" and g.t <= first.t for g in tr.grazes):
        return None, tr
    return label, tr


def back_speed(q: float, params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
               cfg: ShotConfig = ShotConfig(), *, guess: float | None = None,
               rel_xtol: float = 0.0) -> BackResult:
    """Speed c(q) >= 0 of the fast heteroclinic between the outer roots of
    h(u) = q: a front when the Maxwell integral is positive, a back when it
    is negative, standing (c = 0) when it vanishes to 1e-10."""
    S_ = firing_rate_sigmoid(params) if S is None else S
    if not (landscape.q_min < q <= landscape.q0 + 1e-15):
        raise ValueError(f"q={q} outside (q_min, q0]")
    roots = _three_roots(q, S_, landscape)
    M = maxwell_integral(q, roots[0], roots[2], S_)
    if abs(M) < MAXWELL_TOL:
        return BackResult(q, 0.0, roots[0], roots[1], roots[2], "standing", M)
    direction = "front" if M > 0 else "back"
    count = [0]

    def cls(c):
        count[0] += 1
        return connection_shot(c, q, direction, roots, params, S, cfg)[0]

    pair = None
    if guess is not None and guess > 0:
        lo, hi = guess / 1.02, guess * 1.02
        llo, lhi = cls(lo), cls(hi)
        for _ in range(60):
            if llo == TURN and lhi == ESCAPE:
                pair = (lo, hi)
                break
            if llo != TURN:
                hi, lhi = lo, llo
                lo = lo / 2
                if lo < C_FLOOR:
                    break
                llo = cls(lo)
            elif lhi != ESCAPE:
                lo, llo = hi, lhi
                hi = hi * 2
                if hi > C_CEIL:
                    break
                lhi = cls(hi)
    if pair is None:
        grid = np.geomspace(C_FLOOR, C_CEIL, 29)
        labs = [cls(float(c)) for c in grid]
        for (c0, l0), (c1, l1) in zip(zip(grid, labs), zip(grid[1:], labs[1:])):
            if l0 == TURN and l1 == ESCAPE:
                pair = (float(c0), float(c1))
        if pair is None:
            if labs[0] == ESCAPE:
                return BackResult(q, C_FLOOR, roots[0], roots[1], roots[2], direction, M,
                                  (0.0, C_FLOOR), below_floor=True, shots=count[0])
            raise BracketFailure(f"no TURN/ESCAPE pair for the {direction} at q={q}")
    xtol = rel_xtol * pair[1]
    br = bisect_boundary(cls, *pair, want="sup", xtol=xtol, scan=0, labels=(TURN, ESCAPE))
    return BackResult(q, br.mid, roots[0], roots[1], roots[2], direction, M, (br.lo, br.hi),
                      shots=count[0])


def speed_identity(res: BackResult, params: ModelParams, S: FiringRate | None = None,
                   cfg: ShotConfig = ShotConfig()) -> dict:
    """Independent check of c(q): along a connection u(t),

        c (int u''^2 dt + b^2 int u'^2 dt) = b^2 |M|.

    The integrals are evaluated on the shot at the lower bracket end, which
    tracks the connection until it peels away near the far equilibrium.
    """
    if res.direction == "standing" or res.bracket is None:
        return {"c_identity": 0.0, "c": res.c_of_q}
    S_ = firing_rate_sigmoid(params) if S is None else S
    c = res.bracket[0]
    roots = (res.u_minus, res.u_mid, res.u_plus)
    _, tr = connection_shot(c, res.q, res.direction, roots, params, S, cfg, terminal=True)
    tt, yy = tr.dense_grid(16)
    u, v, w = yy[:, 0], yy[:, 1], yy[:, 2]
    up = (v - u) / c
    upp = (w - up) / c
    i1 = np.trapezoid(upp ** 2, tt)
    i2 = np.trapezoid(up ** 2, tt)
    b2 = params.b ** 2
    # Maxwell integral over the part of the u-range actually traversed
    u_start, u_end = u[0], u[-1]
    Mt = quad(lambda s: res.q * S_.value(s) - s, u_start, u_end, limit=200)[0]
    c_id = b2 * abs(Mt) / (i1 + b2 * i2)
    return {"c_identity": float(c_id), "c": res.c_of_q, "rel_diff": abs(c_id - res.c_of_q) / res.c_of_q}


def maxwell_point(params: ModelParams, landscape: Landscape, S: FiringRate | None = None) -> dict:
    """q* in (q_min, q0) where the Maxwell integral vanishes."""
    S_ = firing_rate_sigmoid(params) if S is None else S

    def M(q):
        r = _three_roots(q, S_, landscape)
        return maxwell_integral(q, r[0], r[2], S_)

    lo = landscape.q_min + 1e-9 * (landscape.q0 - landscape.q_min)
    hi = landscape.q0
    Mlo, Mhi = M(lo), M(hi)
    if not (Mlo < 0 < Mhi):
        raise BracketFailure(f"Maxwell integral has no sign change: M(q_min+)={Mlo:.3e}, M(q0)={Mhi:.3e}")
    qs = brentq(M, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return {"q_star": float(qs), "maxwell": float(M(qs)), "M_lo": Mlo, "M_hi": Mhi,
            "bracket": (lo, hi)}


def speed_curve(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                cfg: ShotConfig = ShotConfig(), n: int = 512, rel_xtol: float = 1e-10) -> list[BackResult]:
    """c(q) on ``n`` interior points of (q_min, q0), warm-started along the grid."""
    qs = np.linspace(landscape.q_min, landscape.q0, n + 2)[1:-1]
    out, guess = [], None
    for q in qs:
        r = back_speed(float(q), params, landscape, S, cfg, guess=guess, rel_xtol=rel_xtol)
        out.append(r)
        guess = r.c_of_q if r.c_of_q > 0 else None
    return out


@dataclass
class SingularSolution:
    front: dict
    jump_down_q: float
    at_knee: bool
    pieces: list  # four (u, q) polylines
    c0_star: float
    q_star: float
    curve: list = field(default_factory=list, repr=False)
    notes: list = field(default_factory=list)

    def polyline(self) -> np.ndarray:
        return np.vstack(self.pieces)

    def to_dict(self) -> dict:
        front = {k: v for k, v in self.front.items() if k != "trajectory"}
        return {"front": front, "jump_down_q": self.jump_down_q, "at_knee": self.at_knee,
                "c0_star": self.c0_star, "q_star": self.q_star,
                "pieces": [p.tolist() for p in self.pieces], "notes": self.notes}


def _right_branch(q_hi, q_lo, S, L: Landscape, at_knee: bool, n=200):
    """(u, q) along q = h(u) on the right branch, from q_hi down to q_lo."""
    u_hi = _three_roots(q_hi, S, L)[2] if q_hi < L.q0 else L.uplus
    u_lo = L.u_knee if at_knee else _three_roots(q_lo, S, L)[2]
    u = np.linspace(u_hi, u_lo, n)
    return np.column_stack([u, [h_func(float(x), S) for x in u]])


def build_singular_solution(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                            cfg: ShotConfig = ShotConfig(), *, n: int = 512,
                            curve: list | None = None, c0: dict | None = None,
                            jump_tol: float = 1e-6) -> SingularSolution:
    """Four-piece skeleton: front at q0, right slow branch down to the jump,
    back at the jump level, left slow branch back up to p0."""
    S_ = firing_rate_sigmoid(params) if S is None else S
    L = landscape
    c0 = find_c0_star(params, L, S, cfg) if c0 is None else c0
    c0s = c0["c0_star"]
    curve = speed_curve(params, L, S, cfg, n) if curve is None else curve
    backs = [r for r in curve if r.direction == "back"]
    # an extra sample just above q_min so the edge cell is refined as well
    q_edge = L.q_min + 1e-6 * (L.q0 - L.q_min)
    if backs and q_edge < backs[0].q:
        edge = back_speed(q_edge, params, L, S, cfg, guess=backs[0].c_of_q, rel_xtol=1e-12)
        if edge.direction == "back":
            backs.insert(0, edge)
    hits = [r.q for r in backs if abs(r.c_of_q - c0s) < jump_tol]
    # grid cells where c(q) - c0* changes sign are refined to a root
    for a, b in zip(backs, backs[1:]):
        da, db = a.c_of_q - c0s, b.c_of_q - c0s
        if da * db < 0:
            g = lambda q: back_speed(q, params, L, S, cfg, guess=c0s, rel_xtol=1e-12).c_of_q - c0s  # noqa: E731
            qr = brentq(g, a.q, b.q, xtol=1e-14, rtol=1e-13)
            if abs(g(qr)) < jump_tol:
                hits.append(qr)
    notes = []
    if hits:
        q1, at_knee = max(hits), False
    else:
        q1, at_knee = L.q_min, True
    cq = np.array([r.c_of_q if r.direction != "back" else -r.c_of_q for r in curve])
    if np.any(np.diff(np.sign(np.diff(cq))) != 0):
        notes.append("signed c(q) is not monotone on the grid; flips between grid points cannot be excluded")
    ms = maxwell_point(params, L, S)
    # pieces
    # front piece from the shot just below c0*, which shadows the connection
    roots0 = (L.u0, L.um, L.uplus)
    _, ftr = connection_shot(c0["bracket"].lo, L.q0, "front", roots0, params, S, cfg)
    fu = np.concatenate([[L.u0], ftr.dense_grid(4)[1][:, 0], [L.uplus]])
    p1 = np.column_stack([fu, np.full_like(fu, L.q0)])
    p2 = _right_branch(L.q0, q1, S_, L, at_knee)
    p2[0] = p1[-1]
    u_right_end = p2[-1, 0]
    u_left = nullcline_roots(q1, S_)[0]
    ub = np.linspace(u_right_end, u_left, 100)
    p3 = np.column_stack([ub, np.full_like(ub, p2[-1, 1])])
    ul = np.linspace(u_left, L.u0, 200)
    p4 = np.column_stack([ul, [h_func(float(x), S_) for x in ul]])
    p4[-1] = p1[0]
    front = {"q": L.q0, "c": c0s, "u_from": L.u0, "u_to": L.uplus, "trajectory": ftr}
    return SingularSolution(front, float(q1), at_knee, [p1, p2, p3, p4], c0s, ms["q_star"],
                            curve, notes)


def check_faye_hypothesis_iv(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                             cfg: ShotConfig = ShotConfig(), *, n: int = 512,
                             curve: list | None = None, c0: dict | None = None,
                             margin: float = 1e-8) -> dict:
    """Every back speed on (q_min, q0) stays below c(q0) by ``margin``.

    The grid maximum is refined by a bounded scalar search in the
    neighbouring cells (or toward q_min when the maximum sits at the edge).
    """
    L = landscape
    c0 = find_c0_star(params, L, S, cfg) if c0 is None else c0
    c0s = c0["c0_star"]
    curve = speed_curve(params, L, S, cfg, n) if curve is None else curve
    backs = [r for r in curve if r.direction == "back"]
    if not backs:
        return {"ok": True, "max_back_speed": None, "c0_star": c0s, "curve": curve,
                "note": "no backs on the grid"}
    cb = np.array([r.c_of_q for r in backs])
    i = int(np.argmax(cb))
    qs = np.array([r.q for r in backs])
    lo = qs[i - 1] if i > 0 else L.q_min + 1e-9 * (L.q0 - L.q_min)
    hi = qs[i + 1] if i + 1 < len(qs) else qs[i]
    best_q, best_c = qs[i], cb[i]
    if hi > lo:
        f = lambda q: -back_speed(q, params, L, S, cfg, guess=best_c, rel_xtol=1e-12).c_of_q  # noqa: E731
        r = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * (hi - lo) + 1e-12,
                                                                                "maxiter": 40})
        if -r.fun > best_c:
            best_q, best_c = float(r.x), float(-r.fun)
    monotone = bool(np.all(np.diff(cb) <= 0) or np.all(np.diff(cb) >= 0))
    q_first = backs[0].q
    return {"ok": bool(best_c < c0s - margin), "max_back_speed": float(best_c),
            "q_at_max": float(best_q), "c0_star": c0s, "gap": float(c0s - best_c),
            "monotone_backs": monotone, "c_near_qmin": float(backs[0].c_of_q), "q_near_qmin": q_first,
            "curve": curve}


# ---------------------------------------------------------------------------
# planar comparison systems  v' = w,  w' = b^2 (v - q0 S(v + shift))

def _planar_energy(v, w, v_e, q0, shift, b, S):
    I = quad(lambda s: s - q0 * S.value(s + shift), v_e, v, limit=200, epsabs=1e-13)[0]
    return 0.5 * w * w - b * b * I


def _planar_left_eq(q0, shift, S):
    r = scalar_roots_shift(q0, shift, S)
    if len(r) != 3:
        raise ValueError(f"shifted planar system (shift={shift}) has {len(r)} equilibria")
    return r


def scalar_roots_shift(q0, shift, S):
    from .model import scalar_roots
    return scalar_roots(lambda v: v - q0 * S.value(v + shift))


def planar_loop_radii(shift: float, params: ModelParams, landscape: Landscape,
                      S: FiringRate | None = None, n_angles: int = 16,
                      center: tuple | None = None) -> np.ndarray:
    """Radii of the homoclinic loop of the shifted planar system along rays
    from ``center`` (default (u_m, 0)) at ``n_angles`` equally spaced angles.

    The loop is the zero level set of w^2/2 - b^2 int_{v_e}^{v} (s - q0 S(s + shift)) ds
    through the left equilibrium v_e; the first crossing along each ray is taken.
    """
    S_ = firing_rate_sigmoid(params) if S is None else S
    q0, b = landscape.q0, params.b
    v_e, _, _ = _planar_left_eq(q0, shift, S_)
    cu, cw = (landscape.um, 0.0) if center is None else center
    radii = np.empty(n_angles)
    for k in range(n_angles):
        th = 2 * math.pi * k / n_angles
        F = lambda r: _planar_energy(cu + r * math.cos(th), cw + r * math.sin(th), v_e, q0,  # noqa: E731
                                     shift, b, S_)
        if F(0.0) >= 0:
            raise ValueError("center is not inside the loop")
        r_hi = 0.01
        while F(r_hi) < 0 and r_hi < 4.0:
            r_hi *= 1.5
        # first crossing; a ray through the saddle only touches F = 0, so
        # local maxima of F within a hair of zero count as well
        grid = np.linspace(0.0, r_hi, 400)
        vals = np.array([F(float(x)) for x in grid])
        hit = None
        for j in range(1, len(grid)):
            if vals[j] >= 0:
                hit = brentq(F, grid[j - 1], grid[j], xtol=1e-13)
                break
            if j + 1 < len(grid) and vals[j] >= vals[j - 1] and vals[j] >= vals[j + 1]:
                r = minimize_scalar(lambda x: -F(x), bounds=(grid[j - 1], grid[j + 1]),
                                    method="bounded", options={"xatol": 1e-12})
                if -r.fun > -TOUCH_TOL:
                    hit = float(r.x)
                    break
        if hit is None:
            raise ValueError(f"loop not closed along ray at angle {th:.4f}")
        radii[k] = hit
    return radii


def planar_comparison(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                      c_hat: float = 0.005, n_angles: int = 16) -> dict:
    """Nesting of the homoclinic loops: shift +c_hat inside shift 0 inside shift -c_hat."""
    r0 = planar_loop_radii(0.0, params, landscape, S, n_angles)
    r_out = planar_loop_radii(-c_hat, params, landscape, S, n_angles)
    r_in = planar_loop_radii(+c_hat, params, landscape, S, n_angles)
    ok = bool(np.all(r_in < r0) and np.all(r0 < r_out))
    return {"ok": ok, "c_hat": c_hat, "r_inner": r_in.tolist(), "r_mid": r0.tolist(),
            "r_outer": r_out.tolist()}
