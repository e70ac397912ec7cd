"""Shooting along the unstable manifold of the rest state.

A shot seeds the one-dimensional unstable manifold at distance ``offset``
from p0, integrates with event location and reads its classification off
the event log.  Speeds are boundary points of the resulting membership sets,
found by bisection with opposite-label bracket certificates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .integrate import (ANY, FALLING, RISING, DEFAULT_ATOL, DEFAULT_HORIZON, DEFAULT_RTOL,
                        DEFAULT_SEED_OFFSET, GRAZE_TOL, Trajectory, compiled_fast_field,
                        compiled_full_field, integrate, model_event, seed_unstable)
from .model import (FiringRate, Landscape, ModelParams, fast_field, firing_rate_sigmoid,
                    full_field)
from .spectral import unstable_eigenvector

__all__ = [
    "ShotConfig",
    "ShotOutcome",
    "Bracket",
    "SpeedResult",
    "BracketFailure",
    "shoot_fast",
    "shoot_full",
    "bisect_boundary",
    "find_c0_star",
    "check_hypothesis_y1",
    "check_hypothesis_y1_conjecture",
    "check_theorem1_conditions",
    "find_c_star",
    "find_c_sub_star",
    "find_speeds",
    "homoclinic_residual",
    "check_q_decreasing",
    "check_vu_band",
    "check_escape_bound",
]

FAST_ESCAPE_UP = "FAST_ESCAPE_UP"
FAST_TURN = "FAST_TURN"
LAMBDA_MEMBER = "LAMBDA_MEMBER"
SIGMA_MEMBER = "SIGMA_MEMBER"
SIGMA1_MEMBER = "SIGMA1_MEMBER"
HOMOCLINIC_CANDIDATE = "HOMOCLINIC_CANDIDATE"
NONMEMBER = "NONMEMBER"
UNRESOLVED = "UNRESOLVED"

C_SEARCH = (1e-3, 50.0)


class BracketFailure(RuntimeError):
    """No pair of opposite classifications could be found or kept."""


@dataclass(frozen=True)
class ShotConfig:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    offset: float = DEFAULT_SEED_OFFSET
    horizon: float = DEFAULT_HORIZON
    r_home: float = 1e-3
    confirm_time: float = 1.0
    graze_tol: float = GRAZE_TOL
    margin: float = 1e-8  # sign margin for u'' = w/c and u' at tau1

    def with_(self, **kw) -> "ShotConfig":
        d = asdict(self)
        d.update(kw)
        return ShotConfig(**d)


@dataclass
class ShotOutcome:
    """Classification of one unstable-manifold trajectory.

    ``tag`` is the primary label. Full-system shots also carry the three
    membership answers (None when unresolved), since a speed can lie in
    several sets at once (c1 is in both Lambda and Sigma1).
    """

    tag: str
    c: float
    epsilon: float
    times: dict = field(default_factory=dict)
    states: dict = field(default_factory=dict)
    in_lambda: bool | None = None
    in_sigma: bool | None = None
    in_sigma1: bool | None = None
    unresolved: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    approach: float | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "trajectory"}
        d["states"] = {k: (list(map(float, v)) if isinstance(v, (list, tuple, np.ndarray)) else v)
                       for k, v in self.states.items()}
        if self.trajectory is not None:
            d["reason"] = self.trajectory.reason
            d["events"] = self.trajectory.events_json()
        return d


@dataclass
class Bracket:
    lo: float
    hi: float
    label_lo: object
    label_hi: object
    iterations: int
    flips: int = 1
    unresolved_hits: int = 0
    converged: bool = True
    audit: list = field(default_factory=list, repr=False)

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def to_dict(self, audit: bool = False) -> dict:
        d = {"lo": self.lo, "hi": self.hi, "width": self.width, "mid": self.mid,
             "label_lo": self.label_lo, "label_hi": self.label_hi, "iterations": self.iterations,
             "flips": self.flips, "unresolved_hits": self.unresolved_hits,
             "converged": self.converged}
        if audit:
            d["audit"] = [list(a) for a in self.audit]
        return d


# ---------------------------------------------------------------------------
# fields and seeds

def _is_sigmoid(S: FiringRate | None) -> bool:
    return S is None or S.family == "sigmoid"


def _full(params: ModelParams, c: float, S: FiringRate | None):
    if _is_sigmoid(S):
        return compiled_full_field(params, c)
    return full_field(params, S, c)


def _fast(params: ModelParams, q: float, c: float, S: FiringRate | None, sign: float = 1.0):
    if _is_sigmoid(S):
        return compiled_fast_field(params, q, c, sign)
    return fast_field(params, S, q, c, sign)


def _seed(params, landscape, S, c, eps, offset, dim):
    d = unstable_eigenvector(params, landscape, S, c=c, epsilon=eps)
    return seed_unstable(landscape.p0[:dim], d.mu[:dim], offset), d


def _ev(kind, params, landscape, S, dim, direction=ANY, terminal=False, **kw):
    return model_event(kind, params, landscape, dim=dim, direction=direction, terminal=terminal,
                       S=S, **kw)


def _normalize(tr: Trajectory) -> Trajectory:
    """Shift time so that u first rises through u_m at t = 0."""
    e = next((e for e in tr.events if e.name == "U_MID" and e.direction == RISING), None)
    if e is None:
        tr.meta["normalized"] = False
        return tr
    out = tr.with_shift(e.t)
    out.meta["normalized"] = True
    return out


def _grazes(tr: Trajectory, names, t_from=-math.inf, t_to=math.inf) -> list:
    return [g for g in tr.grazes if g.name in names and t_from <= g.t - tr.shift <= t_to]


# ---------------------------------------------------------------------------
# fast system

def shoot_fast(c: float, params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
               cfg: ShotConfig = ShotConfig(), *, follow: bool = False) -> ShotOutcome:
    """Shot of the fast system (q frozen at q0) from the unstable direction.

    Terminates at the first fall of w through zero (FAST_TURN) or when v
    rises through 1 (FAST_ESCAPE_UP). With ``follow`` the turn is not
    terminal and the shot continues until v leaves (0, 1).
    """
    if not c > 0:
        raise ValueError("c must be positive")
    L = landscape
    p = params.with_(c=c, epsilon=0.0)
    y0, _ = _seed(p, L, S, c, 0.0, cfg.offset, 3)
    ev = [
        _ev("W_ZERO", p, L, S, 3, FALLING if not follow else ANY, terminal=not follow),
        _ev("V_ONE", p, L, S, 3, RISING, terminal=True),
        _ev("V_ZERO", p, L, S, 3, FALLING, terminal=follow),
        _ev("U_MID", p, L, S, 3),
        _ev("UPRIME_ZERO", p, L, S, 3),
        _ev("W_BOUND", p, L, S, 3),
    ]
    tr = integrate(y0, _fast(p, L.q0, c, S), ev, cfg.horizon, cfg.rtol, cfg.atol,
                   graze_tol=cfg.graze_tol, raise_underflow=False)
    tr = _normalize(tr)
    out = ShotOutcome(UNRESOLVED, c, 0.0, trajectory=tr)
    wz = tr.first("W_ZERO", direction=FALLING)
    vone = tr.first("V_ONE", direction=RISING)
    if wz is not None and (vone is None or wz.t < vone.t):
        T = tr.event_time(wz)
        out.tag = FAST_TURN
        out.times["T"] = T
        out.states["v_T"] = float(wz.y[1])
        out.states["u_T"] = float(wz.y[0])
        out.states["r_T"] = wz.y.tolist()
        t_stop = T
        if _grazes(tr, ("W_ZERO",), t_to=T):
            out.unresolved.append("graze of w before its first zero")
    elif vone is not None:
        out.tag = FAST_ESCAPE_UP
        out.times["t_escape"] = tr.event_time(vone)
        t_stop = tr.event_time(vone)
        if _grazes(tr, ("W_ZERO",), t_to=t_stop):
            out.unresolved.append("graze of w before escape")
    else:
        out.unresolved.append(f"no turn or escape (integration ended: {tr.reason})")
        t_stop = tr.t_end
    if follow and out.tag == FAST_TURN:
        vz = tr.first("V_ZERO", direction=FALLING)
        if vz is not None:
            out.times["t_v_zero"] = tr.event_time(vz)
    if out.unresolved:
        out.notes.append(f"classified {out.tag} but flagged")
        out.tag = UNRESOLVED
    r_plus = np.array([L.uplus, L.uplus, 0.0])
    out.approach, t_app = tr.min_distance(r_plus, t_to=t_stop)
    out.times["t_approach"] = t_app
    return out


def _fast_label(o: ShotOutcome):
    return {FAST_TURN: FAST_TURN, FAST_ESCAPE_UP: FAST_ESCAPE_UP}.get(o.tag)


# ---------------------------------------------------------------------------
# bisection

def bisect_boundary(classify: Callable[[float], object], lo: float, hi: float, *,
                    want: str = "sup", xtol: float = 0.0, scan: int = 8, sub: int = 64,
                    max_iter: int = 200, labels: tuple | None = None) -> Bracket:
    """Locate a classification flip between ``lo`` and ``hi``.

    ``classify`` returns a hashable label or None (unresolved). The end
    labels must differ. A coarse scan of ``scan`` interior points checks
    for interleaving; if more than one flip is seen the bracket is cut into
    ``sub`` cells and the outermost flip kept (rightmost for ``want="sup"``,
    leftmost for ``"inf"``). Bisection then runs until the midpoint is no
    longer representable or the width is below ``xtol``. An unresolved
    midpoint is retried at the quarter points.
    """
    audit = []

    def cls(x):
        r = classify(x)
        audit.append((float(x), r))
        return r

    la, lb = labels if labels is not None else (cls(lo), cls(hi))
    if la is None or lb is None or la == lb:
        raise BracketFailure(f"bracket [{lo}, {hi}] has labels {la!r}, {lb!r}")

    def narrow(n_pts):
        xs = np.linspace(lo, hi, n_pts + 2)
        labs = [la] + [cls(float(x)) for x in xs[1:-1]] + [lb]
        pts = [(float(x), l) for x, l in zip(xs, labs) if l is not None]
        flips = [(pts[i], pts[i + 1]) for i in range(len(pts) - 1) if pts[i][1] != pts[i + 1][1]]
        return flips

    flips = narrow(scan)
    nflip = len(flips)
    if nflip > 1:
        flips = narrow(sub)
        nflip = len(flips)
    (a, la2), (b, lb2) = flips[-1] if want == "sup" else flips[0]
    unresolved_hits = 0
    converged = True
    it = 0
    while it < max_iter:
        m = 0.5 * (a + b)
        if not (a < m < b) or b - a <= xtol:
            break
        r = cls(m)
        if r is None:
            unresolved_hits += 1
            done = False
            for frac in (0.25, 0.75, 0.125, 0.875):
                mm = a + frac * (b - a)
                if not (a < mm < b):
                    continue
                rr = cls(mm)
                if rr is not None:
                    if rr == la2:
                        a = mm
                    else:
                        b = mm
                    done = True
                    break
            if not done:
                converged = False
                break
        elif r == la2:
            a = m
        else:
            b = m
        it += 1
    return Bracket(a, b, la2, lb2, it, nflip, unresolved_hits, converged, audit)


def _witness_bracket(classify, lo_label, hi_label, grid):
    """Adjacent grid points labelled lo_label then hi_label (last such pair)."""
    labs = [(float(c), classify(float(c))) for c in grid]
    pair = None
    for (c0, l0), (c1, l1) in zip(labs, labs[1:]):
        if l0 == lo_label and l1 == hi_label:
            pair = (c0, c1)
    return pair, labs


def find_c0_star(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                 cfg: ShotConfig = ShotConfig(), *, xtol: float = 0.0) -> dict:
    """Speed of the front of the fast system: the flip between FAST_TURN and
    FAST_ESCAPE_UP. Bisects to machine resolution by default."""
    cls = lambda c: _fast_label(shoot_fast(c, params, landscape, S, cfg))  # noqa: E731
    grid = np.geomspace(C_SEARCH[0], C_SEARCH[1], 25)
    pair, labs = _witness_bracket(cls, FAST_TURN, FAST_ESCAPE_UP, grid)
    if pair is None:
        raise BracketFailure(f"no FAST_TURN / FAST_ESCAPE_UP witnesses in c in {C_SEARCH}")
    br = bisect_boundary(cls, *pair, want="sup", xtol=xtol, labels=(FAST_TURN, FAST_ESCAPE_UP))
    shots = [shoot_fast(x, params, landscape, S, cfg) for x in (br.lo, br.hi)]
    approach = min(s.approach for s in shots)
    return {"c0_star": br.mid, "bracket": br, "approach": approach,
            "approach_lo": shots[0].approach, "approach_hi": shots[1].approach,
            "u_T_lo": shots[0].states.get("u_T"), "witness_scan": labs}


def check_hypothesis_y1(c1: float, params: ModelParams, landscape: Landscape,
                        S: FiringRate | None = None, cfg: ShotConfig = ShotConfig()) -> dict:
    """v(T(c1)) > q0 S(u_knee) for the fast shot at c1; returns the margin."""
    S_ = firing_rate_sigmoid(params) if S is None else S
    o = shoot_fast(c1, params, landscape, S, cfg)
    if o.tag != FAST_TURN:
        return {"ok": False, "margin": None, "tag": o.tag, "unresolved": o.unresolved,
                "note": "fast shot does not turn"}
    thresh = landscape.q0 * S_.value(landscape.u_knee)
    margin = o.states["v_T"] - thresh
    return {"ok": bool(margin > 0), "margin": float(margin), "v_T": o.states["v_T"],
            "u_T": o.states["u_T"], "threshold": float(thresh), "T": o.times["T"], "tag": o.tag}


def check_hypothesis_y1_conjecture(c1: float, params: ModelParams, landscape: Landscape,
                                   S: FiringRate | None = None,
                                   cfg: ShotConfig = ShotConfig()) -> dict:
    """Weaker alternative: u(T(c1)) > u_knee. Conjectural, reported only."""
    o = shoot_fast(c1, params, landscape, S, cfg)
    if o.tag != FAST_TURN:
        return {"ok": False, "margin": None, "tag": o.tag, "conjecture": True}
    m = o.states["u_T"] - landscape.u_knee
    return {"ok": bool(m > 0), "margin": float(m), "u_T": o.states["u_T"], "conjecture": True}


# ---------------------------------------------------------------------------
# full system

def _full_events(p, L, S, eps, *, terminal_u_zero=True):
    ev = [
        _ev("W_ZERO", p, L, S, 4),
        _ev("UPRIME_ZERO", p, L, S, 4),
        _ev("U_EQ", p, L, S, 4),
        _ev("U_MID", p, L, S, 4),
        _ev("U_KNEE", p, L, S, 4),
        _ev("V_ZERO", p, L, S, 4),
        _ev("W_BOUND", p, L, S, 4),
        _ev("U_ZERO", p, L, S, 4, FALLING, terminal=terminal_u_zero),
        _ev("V_ONE", p, L, S, 4, RISING, terminal=True),
    ]
    if eps > 0:
        ev += [_ev("QPRIME_ZERO", p, L, S, 4), _ev("Q_EQ", p, L, S, 4)]
    return ev


def _classify_lambda(tr: Trajectory, c: float, cfg: ShotConfig, out: ShotOutcome):
    rel = ("UPRIME_ZERO", "U_EQ", "U_ZERO", "Q_EQ")
    e1 = tr.first("UPRIME_ZERO")
    if e1 is None:
        if tr.reason in ("terminal", "blowup") or _escaped(tr):
            return False, None
        return None, "no u' zero before the integration ended"
    t1 = tr.event_time(e1)
    out.times["t1"] = t1
    out.states["p_t1"] = e1.y.tolist()
    out.states["u_t1"] = float(e1.y[0])
    upp = float(e1.y[2]) / c
    out.states["u2_t1"] = upp
    if tr.meta.get("normalized") and not t1 > 0:
        return False, None
    if abs(upp) <= cfg.margin:
        return None, "u''(t1) within the sign margin"
    if _grazes(tr, rel, t_to=t1):
        return None, "graze before t1"
    if not upp < 0:
        return False, None
    e2 = tr.first("U_EQ", after=t1, direction=FALLING)
    nxt_up = tr.first("UPRIME_ZERO", after=t1)
    if e2 is None:
        if nxt_up is not None or tr.reason == "terminal" or _escaped(tr):
            return False, None
        return None, "no return to u0 before the integration ended"
    t2 = tr.event_time(e2)
    if nxt_up is not None and tr.event_time(nxt_up) <= t2:
        return False, None
    out.times["t2"] = t2
    cand = [e for e in tr.events if e.t - tr.shift > t2 and
            ((e.name == "U_ZERO" and e.direction == FALLING) or e.name == "Q_EQ")]
    e3 = cand[0] if cand else None
    back_up = tr.first("U_EQ", after=t2)
    if e3 is None:
        if back_up is not None:
            return False, None
        return None, f"no u=0 or q=q0 after t2 (integration ended: {tr.reason})"
    t3 = tr.event_time(e3)
    if back_up is not None and tr.event_time(back_up) <= t3:
        return False, None
    if _grazes(tr, rel, t_to=t3):
        return None, "graze before t3"
    out.times["t3"] = t3
    out.states["t3_kind"] = "u=0" if e3.name == "U_ZERO" else "q=q0"
    return True, None


def _escaped(tr: Trajectory) -> bool:
    return tr.terminal_event is not None and tr.terminal_event.name == "V_ONE" or tr.reason == "blowup"


def _classify_sigma(tr: Trajectory, c: float, cfg: ShotConfig, out: ShotOutcome):
    """Returns (in_sigma, in_sigma1, reason_if_unresolved)."""
    eq = tr.first("QPRIME_ZERO")
    if eq is None:
        if _grazes(tr, ("QPRIME_ZERO",)):
            return None, None, "graze of q' without a zero"
        if tr.reason in ("terminal", "blowup"):
            return False, False, None
        return None, None, f"no q' zero before the integration ended ({tr.reason})"
    tau1 = tr.event_time(eq)
    if _grazes(tr, ("QPRIME_ZERO",), t_to=tau1):
        return None, None, "graze of q' before tau1"
    out.times["tau1"] = tau1
    out.states["p_tau1"] = eq.y.tolist()
    up = (float(eq.y[1]) - float(eq.y[0])) / c
    out.states["uprime_tau1"] = up
    if abs(up) <= cfg.margin:
        return None, None, "u'(tau1) within the sign margin"
    if not up < 0:
        return False, False, None
    # window after tau1 while u > 0 and q < q0
    ends = [e for e in tr.events if e.t - tr.shift > tau1 and
            ((e.name == "U_ZERO" and e.direction == FALLING) or e.name == "Q_EQ")]
    t_end = tr.event_time(ends[0]) if ends else tr.t_end
    out.times["sigma1_window_end"] = t_end
    flip = [e for e in tr.find("QPRIME_ZERO", after=tau1) if tr.event_time(e) < t_end]
    if flip:
        out.times["q_flip"] = tr.event_time(flip[0])
        return True, False, None
    if _grazes(tr, ("QPRIME_ZERO",), t_from=tau1, t_to=t_end):
        return True, None, "graze of q' after tau1"
    if not ends:
        if _escaped(tr):
            # u -> infinity forces q' < 0 eventually, so q' changes sign
            out.notes.append("Sigma1 failure inferred from escape")
            return True, False, None
        if tr.reason != "terminal":
            return True, None, "Sigma1 window still open when the integration ended"
    return True, True, None


def shoot_full(c: float, epsilon: float, params: ModelParams, landscape: Landscape,
               S: FiringRate | None = None, cfg: ShotConfig = ShotConfig(), *,
               terminal_u_zero: bool = True) -> ShotOutcome:
    """Shot of the four-dimensional system, classified against Lambda,
    Sigma and Sigma1, with a homoclinic check on re-entry into the ball of
    radius ``cfg.r_home`` around p0."""
    if not c > 0:
        raise ValueError("c must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    L = landscape
    p = params.with_(c=c, epsilon=epsilon)
    y0, _ = _seed(p, L, S, c, epsilon, cfg.offset, 4)
    ev = _full_events(p, L, S, epsilon, terminal_u_zero=terminal_u_zero)
    ev.append(_ev("BALL", p, L, S, 4, FALLING, terminal=True, radius=cfg.r_home))
    fld = _full(p, c, S)
    tr = integrate(y0, fld, ev, cfg.horizon, cfg.rtol, cfg.atol, graze_tol=cfg.graze_tol,
                   raise_underflow=False)
    tr = _normalize(tr)
    out = ShotOutcome(UNRESOLVED, c, epsilon, trajectory=tr)
    # homoclinic re-entry
    te = tr.terminal_event
    if te is not None and te.name == "BALL":
        y = te.y
        if y[3] < L.q0 and y[1] > y[0]:
            conf = integrate(y, fld, [], cfg.confirm_time, cfg.rtol, cfg.atol, raise_underflow=False)
            d = np.linalg.norm(conf.y_nodes - L.p0, axis=1)
            if np.all(np.diff(d) <= 0):
                out.tag = HOMOCLINIC_CANDIDATE
                out.times["t_home"] = tr.event_time(te)
                out.states["distance_after_confirm"] = float(d[-1])
    lam, r1 = _classify_lambda(tr, c, cfg, out)
    if epsilon > 0:
        sig, sig1, r2 = _classify_sigma(tr, c, cfg, out)
    else:
        sig, sig1, r2 = False, False, None
    out.in_lambda, out.in_sigma, out.in_sigma1 = lam, sig, sig1
    out.unresolved = [r for r in (r1, r2) if r]
    wz = tr.first("W_ZERO")
    if wz is not None:
        out.times["T"] = tr.event_time(wz)
        out.states["v_T"] = float(wz.y[1])
        out.states["u_T"] = float(wz.y[0])
    if out.tag != HOMOCLINIC_CANDIDATE:
        if lam:
            out.tag = LAMBDA_MEMBER
        elif sig1:
            out.tag = SIGMA1_MEMBER
        elif sig:
            out.tag = SIGMA_MEMBER
        elif lam is None and sig is None:
            out.tag = UNRESOLVED
        else:
            out.tag = NONMEMBER
    return out


def check_theorem1_conditions(epsilon: float, c1: float, params: ModelParams,
                              landscape: Landscape, S: FiringRate | None = None,
                              cfg: ShotConfig = ShotConfig()) -> dict:
    """Condition (ii) at (epsilon, c1): the first zero t1 of u' has
    u''(t1) = w(t1)/c1 < 0, and u' < 0 afterwards until u reaches 0.
    Condition (i) holds by construction of the seed."""
    o = shoot_full(c1, epsilon, params, landscape, S, cfg)
    tr = o.trajectory
    rep = {"epsilon": epsilon, "c1": c1, "condition_i": True, "tag": o.tag,
           "events": tr.events_json(), "reason": tr.reason}
    e1 = tr.first("UPRIME_ZERO")
    if e1 is None:
        rep.update(ok=False, condition_ii=False, why="u' has no zero")
        return rep
    t1 = tr.event_time(e1)
    upp = float(e1.y[2]) / c1
    rep.update(t1=t1, u_t1=float(e1.y[0]), u2_t1=upp)
    if _grazes(tr, ("UPRIME_ZERO", "U_ZERO")):
        rep.update(ok=None, condition_ii=None, why="graze", unresolved=True)
        return rep
    if not upp < -cfg.margin:
        rep.update(ok=False, condition_ii=False, why="u''(t1) not negative")
        return rep
    e3 = tr.first("U_ZERO", after=t1, direction=FALLING)
    if e3 is None:
        rep.update(ok=False, condition_ii=False, why="u does not reach 0")
        return rep
    t3 = tr.event_time(e3)
    again = [e for e in tr.find("UPRIME_ZERO", after=t1) if tr.event_time(e) <= t3]
    ok = not again
    rep.update(t3=t3, ok=ok, condition_ii=ok,
               why=None if ok else "u' changes sign again before u reaches 0")
    return rep


def _membership(attr, epsilon, params, landscape, S, cfg):
    def f(c):
        return getattr(shoot_full(c, epsilon, params, landscape, S, cfg), attr)
    return f


def homoclinic_residual(c: float, epsilon: float, params: ModelParams, landscape: Landscape,
                        S: FiringRate | None = None, cfg: ShotConfig = ShotConfig(), *,
                        tail_from: str = "t1") -> dict:
    """min |p(t) - p0| over the tail of the shot at speed c.

    The tail starts at the first zero of u' (``tail_from="t1"``) or of q'
    (``"tau1"``); u = 0 is not terminal here, so a returning orbit is seen.
    """
    o = shoot_full(c, epsilon, params, landscape, S, cfg, terminal_u_zero=False)
    tr = o.trajectory
    name = "UPRIME_ZERO" if tail_from == "t1" else "QPRIME_ZERO"
    e = tr.first(name)
    if e is None:
        return {"residual": math.inf, "t_min": math.nan, "tail_from": tail_from,
                "reason": tr.reason, "tag": o.tag}
    t0 = tr.event_time(e)
    d, tm = tr.min_distance(landscape.p0, t_from=t0)
    # time spent within 0.05 of the right slow branch, useful when the
    # residual is large because the shot peeled off the slow manifold
    return {"residual": d, "t_min": tm, "tail_from": tail_from, "t_tail_start": t0,
            "reason": tr.reason, "t_end": tr.t_end, "tag": o.tag,
            "end_state": tr.y_end.tolist()}


def find_c_star(epsilon: float, c1: float, params: ModelParams, landscape: Landscape,
                S: FiringRate | None = None, cfg: ShotConfig = ShotConfig(), *,
                c0_star: float | None = None, xtol: float = 0.0) -> dict:
    """c* = sup Lambda, bisected on [c1, c0* + 1]."""
    if c0_star is None:
        c0_star = find_c0_star(params, landscape, S, cfg)["c0_star"]
    cls = _membership("in_lambda", epsilon, params, landscape, S, cfg)
    l1 = cls(c1)
    if l1 is not True:
        raise BracketFailure(f"c1={c1} is not in Lambda (label {l1!r}); hypotheses violated")
    hi = c0_star + 1.0
    lh = cls(hi)
    if lh is not False:
        raise BracketFailure(f"upper end c={hi} is not outside Lambda (label {lh!r})")
    br = bisect_boundary(cls, c1, hi, want="sup", xtol=xtol, labels=(True, False))
    res = homoclinic_residual(br.mid, epsilon, params, landscape, S, cfg, tail_from="t1")
    return {"c_star": br.mid, "bracket": br, "residual": res["residual"], "residual_report": res}


def find_c_sub_star(epsilon: float, c1: float, params: ModelParams, landscape: Landscape,
                    S: FiringRate | None = None, cfg: ShotConfig = ShotConfig(), *,
                    xtol: float = 0.0, c_floor: float = 1e-6) -> dict:
    """c3 = sup of non-members of Sigma below c1, then c_* = inf of Sigma1 above c3."""
    sig = _membership("in_sigma", epsilon, params, landscape, S, cfg)
    if sig(c1) is not True:
        raise BracketFailure(f"c1={c1} is not in Sigma")
    # witness hunt for a non-member, starting at 10 epsilon and halving
    c = min(10 * epsilon, 0.5 * c1)
    hunt = []
    while c > c_floor:
        lab = sig(c)
        hunt.append((c, lab))
        if lab is False:
            break
        c *= 0.5
    else:
        raise BracketFailure(f"no Sigma non-member found above c={c_floor}")
    br3 = bisect_boundary(sig, c, c1, want="sup", xtol=xtol, labels=(False, True))
    c3 = br3.mid
    sig1 = _membership("in_sigma1", epsilon, params, landscape, S, cfg)
    lo = br3.hi
    l_lo = sig1(lo)
    notes = []
    if l_lo is True:
        notes.append("upper end of the c3 bracket already lies in Sigma1")
        br = Bracket(br3.lo, br3.hi, False, True, 0, converged=br3.converged)
    else:
        if l_lo is None:
            # nudge up until the label resolves
            for k in range(1, 40):
                lo2 = lo + k * 1e-9 * max(1.0, lo)
                l_lo = sig1(lo2)
                if l_lo is not None:
                    lo = lo2
                    break
        if sig1(c1) is not True:
            raise BracketFailure(f"c1={c1} is not in Sigma1")
        if l_lo is True:
            notes.append("Sigma1 already holds just above c3")
            br = Bracket(br3.lo, lo, False, True, 0)
        else:
            br = bisect_boundary(sig1, lo, c1, want="inf", xtol=xtol, labels=(False, True))
    c_sub = br.mid
    res = homoclinic_residual(c_sub, epsilon, params, landscape, S, cfg, tail_from="tau1")
    return {"c_sub_star": c_sub, "bracket": br, "c3": c3, "bracket_c3": br3, "hunt": hunt,
            "residual": res["residual"], "residual_report": res,
            "epsilon_over_c": epsilon / c_sub, "notes": notes}


@dataclass
class SpeedResult:
    epsilon: float
    c1: float
    c0_star: float
    c_star: float
    c_sub_star: float
    c3: float
    brackets: dict
    residuals: dict
    epsilon_over_c: float
    approach_c0: float
    notes: list = field(default_factory=list)

    @property
    def ordered(self) -> bool:
        return 0 < self.c_sub_star < self.c1 < self.c_star < self.c0_star

    def to_dict(self) -> dict:
        d = asdict(self)
        d["brackets"] = {k: v.to_dict() for k, v in self.brackets.items()}
        d["ordered"] = self.ordered
        return d


def find_speeds(epsilon: float, c1: float, params: ModelParams, landscape: Landscape,
                S: FiringRate | None = None, cfg: ShotConfig = ShotConfig(),
                c0: dict | None = None) -> SpeedResult:
    c0 = find_c0_star(params, landscape, S, cfg) if c0 is None else c0
    fs = find_c_star(epsilon, c1, params, landscape, S, cfg, c0_star=c0["c0_star"])
    ss = find_c_sub_star(epsilon, c1, params, landscape, S, cfg)
    return SpeedResult(
        epsilon=epsilon, c1=c1, c0_star=c0["c0_star"], c_star=fs["c_star"],
        c_sub_star=ss["c_sub_star"], c3=ss["c3"],
        brackets={"c0_star": c0["bracket"], "c_star": fs["bracket"],
                  "c_sub_star": ss["bracket"], "c3": ss["bracket_c3"]},
        residuals={"c_star": fs["residual"], "c_sub_star": ss["residual"]},
        epsilon_over_c=ss["epsilon_over_c"], approach_c0=c0["approach"], notes=ss["notes"])


# ---------------------------------------------------------------------------
# trajectory monitors

def check_q_decreasing(tr: Trajectory, params: ModelParams, landscape: Landscape,
                 S: FiringRate | None = None) -> dict:
    """q < q0 and q' < 0 at every accepted step while w > 0 from the seed."""
    S = firing_rate_sigmoid(params) if S is None else S
    wz = next((e for e in tr.events if e.name == "W_ZERO"), None)
    t_stop = wz.t if wz is not None else tr.t_nodes[-1]
    sel = tr.t_nodes <= t_stop
    Y = tr.y_nodes[sel]
    # the last node may sit exactly on w = 0
    Y = Y[Y[:, 2] > 0] if len(Y) > 1 else Y
    qp = 1.0 - Y[:, 3] - params.beta * Y[:, 3] * S.value(Y[:, 0])
    ok_q = bool(np.all(Y[:, 3] < landscape.q0))
    ok_qp = bool(np.all(qp < 0))
    return {"ok": ok_q and ok_qp, "steps": int(len(Y)), "max_q_minus_q0": float(np.max(Y[:, 3] - landscape.q0)),
            "max_qprime_sign_functional": float(np.max(qp))}


def check_vu_band(tr: Trajectory, c: float, params: ModelParams) -> dict:
    """0 < v - u < c sqrt(2) b at every accepted step while 0 < w <= sqrt(2) b."""
    wbar = math.sqrt(2.0) * params.b
    Y = tr.y_nodes
    w = Y[:, 2]
    bad = np.nonzero(~((w > 0) & (w <= wbar)))[0]
    n = bad[0] if len(bad) else len(Y)
    # skip the seed, where v - u is of the order of the offset
    Z = Y[1:n]
    d = Z[:, 1] - Z[:, 0]
    ok = bool(np.all(d > 0) and np.all(d < c * wbar))
    return {"ok": ok, "steps": int(len(Z)), "min": float(d.min()) if len(d) else None,
            "max": float(d.max()) if len(d) else None, "bound": c * wbar}


def check_escape_bound(tr: Trajectory, params: ModelParams) -> dict:
    """Once |w| > sqrt(2) b with 0 < v < 1, v must leave (0, 1) within sqrt(2)/b."""
    window = math.sqrt(2.0) / params.b
    checked, violations = 0, []
    for e in tr.events:
        if e.name != "W_BOUND" or e.direction != RISING:
            continue
        if not 0 < e.y[1] < 1:
            continue
        nxt = [x for x in tr.events if x.t > e.t and x.name in ("V_ONE", "V_ZERO")]
        if nxt:
            checked += 1
            if nxt[0].t - e.t > window:
                violations.append((e.t - tr.shift, nxt[0].t - e.t))
        elif tr.t_nodes[-1] - e.t > window:
            checked += 1
            violations.append((e.t - tr.shift, math.inf))
    return {"ok": not violations, "checked": checked, "violations": violations, "window": window}
