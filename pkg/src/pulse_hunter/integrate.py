"""Adaptive Dormand-Prince 5(4) integration with dense output and events.

One core routine is written in a numba-compatible subset of Python.  It is
compiled for the built-in model fields (sigmoid firing rate) and run as
plain Python for arbitrary callables, so both paths share one algorithm.

Events are sign changes of scalar functionals of the state.  They are
searched on the dense interpolant at ``nsub`` interior points per step and
located by bisection to an absolute time error below ``event_dt``.
Tangential contacts (local minima of |g| below ``graze_tol`` without a sign
change) are logged separately as grazes.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import types
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import numba as nb

__all__ = [
    "EventKind",
    "EventSpec",
    "Event",
    "Graze",
    "Trajectory",
    "CompiledField",
    "StepUnderflow",
    "integrate",
    "seed_unstable",
    "model_event",
    "linear_event",
    "RISING",
    "FALLING",
    "ANY",
    "compiled_full_field",
    "compiled_fast_field",
    "DEFAULT_RTOL",
    "DEFAULT_ATOL",
    "DEFAULT_HORIZON",
    "DEFAULT_SEED_OFFSET",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_HORIZON = 500.0
DEFAULT_SEED_OFFSET = 1e-7
EVENT_DT = 1e-12
GRAZE_TOL = 1e-9
BLOWUP_NORM = 1e6
HMIN = 1e-14

# status codes returned by the core
_HORIZON, _TERMINAL, _BLOWUP, _UNDERFLOW, _MAXSTEPS, _NONFINITE = range(6)
_REASONS = {_HORIZON: "horizon", _TERMINAL: "terminal", _BLOWUP: "blowup",
            _UNDERFLOW: "underflow", _MAXSTEPS: "max_steps", _NONFINITE: "nonfinite"}

# Dormand-Prince 5(4) coefficients
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
# Hairer's dense output weights for the fourth-order continuous extension
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423


class StepUnderflow(RuntimeError):
    """Step size fell below the floor without an accepted step."""


class EventKind(enum.Enum):
    W_ZERO = "W_ZERO"
    UPRIME_ZERO = "UPRIME_ZERO"
    QPRIME_ZERO = "QPRIME_ZERO"
    U_EQ = "U_EQ"
    Q_EQ = "Q_EQ"
    U_ZERO = "U_ZERO"
    U_KNEE = "U_KNEE"
    U_MID = "U_MID"
    V_ONE = "V_ONE"
    V_ZERO = "V_ZERO"
    W_BOUND = "W_BOUND"
    BALL = "BALL"
    CUSTOM = "CUSTOM"


RISING, FALLING, ANY = 1, -1, 0

# declarative functional kinds for the compiled path
K_LINEAR, K_QPRIME, K_ABSLIN, K_DIST = 0, 1, 2, 3
_ROW = 13  # kind, a0..a3, const, x0..x3, beta, lambda, kappa


@dataclass(frozen=True)
class EventSpec:
    """A scalar functional g(y) whose sign changes are events.

    ``func`` is always usable; ``row`` is the declarative encoding used by the
    compiled core (None for arbitrary callables).
    """

    name: str
    func: Callable[[np.ndarray], float]
    direction: int = ANY
    terminal: bool = False
    row: tuple | None = None

    def __call__(self, y) -> float:
        return float(self.func(np.asarray(y, dtype=float)))

    def with_(self, *, direction: int | None = None, terminal: bool | None = None) -> "EventSpec":
        return EventSpec(self.name, self.func, self.direction if direction is None else direction,
                         self.terminal if terminal is None else terminal, self.row)


def linear_event(name: str, coef: Sequence[float], const: float = 0.0, direction: int = ANY,
                 terminal: bool = False) -> EventSpec:
    a = np.zeros(4)
    a[:len(coef)] = coef
    d = len(coef)
    func = lambda y: float(np.dot(a[:d], y[:d]) + const)  # noqa: E731
    row = (K_LINEAR, *a.tolist(), const, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return EventSpec(name, func, direction, terminal, row)


def model_event(kind: EventKind | str, params, landscape, *, dim: int = 4, direction: int = ANY,
                terminal: bool = False, S=None, radius: float = 1e-3) -> EventSpec:
    """Event functional of the travelling-wave system, by tag.

    ``dim`` is 4 for the full system and 3 for the fast system. The
    depression-dependent tags (Q_EQ, QPRIME_ZERO) need ``dim == 4``.
    """
    kind = EventKind(kind)
    name = kind.value
    L = landscape
    if kind is EventKind.W_ZERO:
        return linear_event(name, [0, 0, 1, 0][:dim], 0.0, direction, terminal)
    if kind is EventKind.UPRIME_ZERO:
        return linear_event(name, [-1, 1, 0, 0][:dim], 0.0, direction, terminal)
    if kind is EventKind.U_EQ:
        return linear_event(name, [1, 0, 0, 0][:dim], -L.u0, direction, terminal)
    if kind is EventKind.U_ZERO:
        return linear_event(name, [1, 0, 0, 0][:dim], 0.0, direction, terminal)
    if kind is EventKind.U_KNEE:
        return linear_event(name, [1, 0, 0, 0][:dim], -L.u_knee, direction, terminal)
    if kind is EventKind.U_MID:
        return linear_event(name, [1, 0, 0, 0][:dim], -L.um, direction, terminal)
    if kind is EventKind.V_ONE:
        return linear_event(name, [0, 1, 0, 0][:dim], -1.0, direction, terminal)
    if kind is EventKind.V_ZERO:
        return linear_event(name, [0, 1, 0, 0][:dim], 0.0, direction, terminal)
    if kind is EventKind.W_BOUND:
        wbar = math.sqrt(2.0) * params.b
        a = np.array([0.0, 0.0, 1.0, 0.0])
        return EventSpec(name, lambda y: abs(float(y[2])) - wbar, direction, terminal,
                         (K_ABSLIN, *a.tolist(), -wbar, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    if kind is EventKind.BALL:
        x = np.zeros(4)
        x[:dim] = L.p0[:dim]
        ctr = x[:dim].copy()
        return EventSpec(name, lambda y: float(np.linalg.norm(y[:dim] - ctr)) - radius, direction,
                         terminal, (K_DIST, 0.0, 0.0, 0.0, 0.0, -radius, *x.tolist(), 0.0, 0.0, 0.0))
    if dim != 4:
        raise ValueError(f"{name} needs the full four-dimensional system")
    if kind is EventKind.Q_EQ:
        return linear_event(name, [0, 0, 0, 1], -L.q0, direction, terminal)
    if kind is EventKind.QPRIME_ZERO:
        beta = params.beta
        if S is None:
            from .model import firing_rate_sigmoid
            S = firing_rate_sigmoid(params)
        Sv = S.value
        row = None
        if S.family == "sigmoid":
            row = (K_QPRIME, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, beta,
                   params.lambda_, params.kappa)
        return EventSpec(name, lambda y: 1.0 - y[3] - beta * y[3] * Sv(float(y[0])), direction,
                         terminal, row)
    raise ValueError(f"no functional for tag {name}")


@dataclass(frozen=True)
class Event:
    name: str
    t: float
    y: np.ndarray
    direction: int

    def to_dict(self, shift: float = 0.0) -> dict:
        return {"name": self.name, "t": self.t - shift, "state": [float(x) for x in self.y],
                "direction": {1: "rising", -1: "falling"}.get(self.direction, "any")}


@dataclass(frozen=True)
class Graze:
    name: str
    t: float
    value: float


# ---------------------------------------------------------------------------
# compiled model fields

@nb.njit(cache=True)
def _logistic(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@nb.njit(cache=True)
def _full_rhs(y, p, out):
    # p: c, b, eps, beta, lambda, kappa, sign
    c, b, eps, beta, lam, kap, sg = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    s = _logistic(lam * (y[0] - kap))
    out[0] = sg * (y[1] - y[0]) / c
    out[1] = sg * y[2]
    out[2] = sg * b * b * (y[1] - y[3] * s)
    out[3] = sg * eps / c * (1.0 - y[3] - beta * y[3] * s)


@nb.njit(cache=True)
def _fast_rhs(y, p, out):
    # p: c, b, q, lambda, kappa, sign
    c, b, q, lam, kap, sg = p[0], p[1], p[2], p[3], p[4], p[5]
    s = _logistic(lam * (y[0] - kap))
    out[0] = sg * (y[1] - y[0]) / c
    out[1] = sg * y[2]
    out[2] = sg * b * b * (y[1] - q * s)


@nb.njit(cache=True)
def _model_events(y, ep, out):
    d = y.shape[0]
    for i in range(ep.shape[0]):
        kind = int(ep[i, 0])
        if kind == 0 or kind == 2:
            g = ep[i, 5]
            for j in range(d):
                g += ep[i, 1 + j] * y[j]
            if kind == 2:
                g = abs(g - ep[i, 5]) + ep[i, 5]
            out[i] = g
        elif kind == 1:
            s = _logistic(ep[i, 11] * (y[0] - ep[i, 12]))
            out[i] = 1.0 - y[3] - ep[i, 10] * y[3] * s
        else:
            r = 0.0
            for j in range(d):
                r += (y[j] - ep[i, 6 + j]) ** 2
            out[i] = math.sqrt(r) + ep[i, 5]


@dataclass(frozen=True)
class CompiledField:
    """Model vector field usable by the compiled core."""

    system: str  # "full" or "fast"
    params: np.ndarray
    dim: int

    def __call__(self, y):
        out = np.empty(self.dim)
        (_full_rhs if self.system == "full" else _fast_rhs)(np.asarray(y, dtype=float), self.params, out)
        return out


def compiled_full_field(params, c: float | None = None, sign: float = 1.0) -> CompiledField:
    c = params.c if c is None else c
    if not c > 0:
        raise ValueError(f"wave speed must be positive, got c={c}")
    p = np.array([c, params.b, params.epsilon, params.beta, params.lambda_, params.kappa, sign])
    return CompiledField("full", p, 4)


def compiled_fast_field(params, q: float, c: float | None = None, sign: float = 1.0) -> CompiledField:
    c = params.c if c is None else c
    if not c > 0:
        raise ValueError(f"wave speed must be positive, got c={c}")
    p = np.array([c, params.b, q, params.lambda_, params.kappa, sign])
    return CompiledField("fast", p, 3)


# ---------------------------------------------------------------------------
# shared core

def _dense_impl(rc, i, th, out):
    d = out.shape[0]
    t1 = 1.0 - th
    for j in range(d):
        out[j] = rc[i, 0, j] + th * (rc[i, 1, j] + t1 * (rc[i, 2, j] + th * (rc[i, 3, j] + t1 * rc[i, 4, j])))


_dense_jit = nb.njit(cache=True)(_dense_impl)


# The core reads the field, the event functionals and the interpolant from
# module globals _RHS, _EVF and _DENSE; _bind makes copies with those names
# rebound. Closures would defeat numba's on-disk cache.
def _core_impl(y0, t0, tend, fp, ep, edir, eterm, rtol, atol, h0, hmax, nsub, graze_tol,
         event_dt, max_steps, blowup, hmin):
    d = y0.shape[0]
    ne = ep.shape[0]
    cap = 1024
    ts = np.empty(cap + 1)
    ys = np.empty((cap + 1, d))
    rc = np.empty((cap, 5, d))
    ev_i = np.empty(64, np.int64)
    ev_t = np.empty(64)
    ev_d = np.empty(64, np.int64)
    ev_y = np.empty((64, d))
    nev = 0
    gr_i = np.empty(16, np.int64)
    gr_t = np.empty(16)
    gr_v = np.empty(16)
    ngr = 0

    y = y0.copy()
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    k5 = np.empty(d)
    k6 = np.empty(d)
    k7 = np.empty(d)
    yt = np.empty(d)
    y1 = np.empty(d)
    tmp = np.empty(d)
    G = np.empty((nsub + 1, ne))
    gcur = np.empty(ne)
    gprev = np.empty(ne)
    has_prev = False
    ts[0] = t0
    ys[0, :] = y
    _RHS(y, fp, k1)
    _EVF(y, ep, gcur)
    G[0, :] = gcur

    for j in range(d):
        if not math.isfinite(k1[j]):
            return (ts[:1], ys[:1], rc[:0], ev_i[:0], ev_t[:0], ev_d[:0], ev_y[:0],
                    gr_i[:0], gr_t[:0], gr_v[:0], _NONFINITE, 0.0)

    h = h0
    if h <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for j in range(d):
            sc = atol + rtol * abs(y[j])
            d0 = max(d0, abs(y[j]) / sc)
            d1 = max(d1, abs(k1[j]) / sc)
        if d0 < 1e-5 or d1 < 1e-5:
            h = 1e-6
        else:
            h = 0.01 * d0 / d1
        h = min(h, hmax)
    t = t0
    n = 0
    status = _HORIZON
    reject = False
    while t < tend:
        if n >= max_steps:
            status = _MAXSTEPS
            break
        if t + h > tend:
            h = tend - t
        # stages
        for j in range(d):
            yt[j] = y[j] + h * A21 * k1[j]
        _RHS(yt, fp, k2)
        for j in range(d):
            yt[j] = y[j] + h * (A31 * k1[j] + A32 * k2[j])
        _RHS(yt, fp, k3)
        for j in range(d):
            yt[j] = y[j] + h * (A41 * k1[j] + A42 * k2[j] + A43 * k3[j])
        _RHS(yt, fp, k4)
        for j in range(d):
            yt[j] = y[j] + h * (A51 * k1[j] + A52 * k2[j] + A53 * k3[j] + A54 * k4[j])
        _RHS(yt, fp, k5)
        for j in range(d):
            yt[j] = y[j] + h * (A61 * k1[j] + A62 * k2[j] + A63 * k3[j] + A64 * k4[j] + A65 * k5[j])
        _RHS(yt, fp, k6)
        for j in range(d):
            y1[j] = y[j] + h * (A71 * k1[j] + A73 * k3[j] + A74 * k4[j] + A75 * k5[j] + A76 * k6[j])
        _RHS(y1, fp, k7)
        err = 0.0
        finite = True
        for j in range(d):
            e = h * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
            sc = atol + rtol * max(abs(y[j]), abs(y1[j]))
            r = abs(e) / sc
            if not math.isfinite(r) or not math.isfinite(k7[j]):
                finite = False
            if r > err:
                err = r
        if not finite:
            err = 1e300
        if err > 1.0:
            fac = 0.9 * err ** -0.2
            if fac < 0.2:
                fac = 0.2
            h = h * fac
            reject = True
            if abs(h) < hmin:
                status = _UNDERFLOW if finite else _NONFINITE
                break
            continue
        # accepted: grow storage
        if n >= cap:
            ncap = 2 * cap
            ts2 = np.empty(ncap + 1)
            ys2 = np.empty((ncap + 1, d))
            rc2 = np.empty((ncap, 5, d))
            ts2[:n + 1] = ts[:n + 1]
            ys2[:n + 1] = ys[:n + 1]
            rc2[:n] = rc[:n]
            ts, ys, rc, cap = ts2, ys2, rc2, ncap
        for j in range(d):
            ydiff = y1[j] - y[j]
            bspl = h * k1[j] - ydiff
            rc[n, 0, j] = y[j]
            rc[n, 1, j] = ydiff
            rc[n, 2, j] = bspl
            rc[n, 3, j] = ydiff - h * k7[j] - bspl
            rc[n, 4, j] = h * (D1 * k1[j] + D3 * k3[j] + D4 * k4[j] + D5 * k5[j] + D6 * k6[j] + D7 * k7[j])
        tnew = t + h
        # events on the dense interpolant
        hit_term = False
        t_term = tnew
        if ne > 0:
            for k in range(1, nsub):
                _DENSE(rc, n, k / nsub, tmp)
                _EVF(tmp, ep, gcur)
                G[k, :] = gcur
            _EVF(y1, ep, gcur)
            G[nsub, :] = gcur
            # collect crossings of this step, in time order
            found_t = np.empty(ne * nsub)
            found_i = np.empty(ne * nsub, np.int64)
            found_d = np.empty(ne * nsub, np.int64)
            nf = 0
            for i in range(ne):
                for k in range(nsub):
                    ga = G[k, i]
                    gb = G[k + 1, i]
                    if ga == 0.0 or not (ga * gb < 0.0 or gb == 0.0):
                        continue
                    dirn = 1 if ga < 0.0 else -1
                    if edir[i] != 0 and edir[i] != dirn:
                        continue
                    a = k / nsub
                    b_ = (k + 1) / nsub
                    sa = ga
                    it = 0
                    while (b_ - a) * h > event_dt and it < 80:
                        m = 0.5 * (a + b_)
                        _DENSE(rc, n, m, tmp)
                        _EVF(tmp, ep, gcur)
                        gm = gcur[i]
                        if gm == 0.0:
                            a = m
                            b_ = m
                            break
                        if (gm < 0.0) == (sa < 0.0):
                            a = m
                            sa = gm
                        else:
                            b_ = m
                        it += 1
                    found_t[nf] = t + 0.5 * (a + b_) * h
                    found_i[nf] = i
                    found_d[nf] = dirn
                    nf += 1
            # grazes: interior local minima of |g| without a sign change
            for i in range(ne):
                for k in range(1, nsub):
                    ga = G[k - 1, i]
                    gm = G[k, i]
                    gb = G[k + 1, i]
                    if ga * gm <= 0.0 or gm * gb <= 0.0:
                        continue
                    if abs(gm) > abs(ga) or abs(gm) > abs(gb):
                        continue
                    # golden section on |g|
                    lo = (k - 1) / nsub
                    hi = (k + 1) / nsub
                    gr = 0.6180339887498949
                    x1 = hi - gr * (hi - lo)
                    x2 = lo + gr * (hi - lo)
                    _DENSE(rc, n, x1, tmp)
                    _EVF(tmp, ep, gcur)
                    f1 = gcur[i]
                    _DENSE(rc, n, x2, tmp)
                    _EVF(tmp, ep, gcur)
                    f2 = gcur[i]
                    crossed = f1 * gm <= 0.0 or f2 * gm <= 0.0
                    for _ in range(60):
                        if crossed or (hi - lo) * abs(h) < event_dt:
                            break
                        if abs(f1) < abs(f2):
                            hi = x2
                            x2 = x1
                            f2 = f1
                            x1 = hi - gr * (hi - lo)
                            _DENSE(rc, n, x1, tmp)
                            _EVF(tmp, ep, gcur)
                            f1 = gcur[i]
                            crossed = f1 * gm <= 0.0
                        else:
                            lo = x1
                            x1 = x2
                            f1 = f2
                            x2 = lo + gr * (hi - lo)
                            _DENSE(rc, n, x2, tmp)
                            _EVF(tmp, ep, gcur)
                            f2 = gcur[i]
                            crossed = f2 * gm <= 0.0
                    if crossed:
                        # a hidden pair of crossings: locate both as events
                        xs = x1 if f1 * gm <= 0.0 else x2
                        for side in range(2):
                            a = (k - 1) / nsub if side == 0 else xs
                            b_ = xs if side == 0 else (k + 1) / nsub
                            _DENSE(rc, n, a, tmp)
                            _EVF(tmp, ep, gcur)
                            sa = gcur[i]
                            dirn = 1 if sa < 0.0 else -1
                            it = 0
                            while (b_ - a) * h > event_dt and it < 80:
                                m = 0.5 * (a + b_)
                                _DENSE(rc, n, m, tmp)
                                _EVF(tmp, ep, gcur)
                                gmm = gcur[i]
                                if (gmm < 0.0) == (sa < 0.0) and gmm != 0.0:
                                    a = m
                                    sa = gmm
                                else:
                                    b_ = m
                                it += 1
                            if edir[i] == 0 or edir[i] == dirn:
                                if nf >= found_t.shape[0]:
                                    ft2 = np.empty(2 * nf + 2)
                                    fi2 = np.empty(2 * nf + 2, np.int64)
                                    fd2 = np.empty(2 * nf + 2, np.int64)
                                    ft2[:nf] = found_t[:nf]
                                    fi2[:nf] = found_i[:nf]
                                    fd2[:nf] = found_d[:nf]
                                    found_t, found_i, found_d = ft2, fi2, fd2
                                found_t[nf] = t + 0.5 * (a + b_) * h
                                found_i[nf] = i
                                found_d[nf] = dirn
                                nf += 1
                        continue
                    fmin = f1 if abs(f1) < abs(f2) else f2
                    if abs(fmin) < graze_tol:
                        if ngr >= gr_t.shape[0]:
                            gi2 = np.empty(2 * ngr, np.int64)
                            gt2 = np.empty(2 * ngr)
                            gv2 = np.empty(2 * ngr)
                            gi2[:ngr] = gr_i[:ngr]
                            gt2[:ngr] = gr_t[:ngr]
                            gv2[:ngr] = gr_v[:ngr]
                            gr_i, gr_t, gr_v = gi2, gt2, gv2
                        gr_i[ngr] = i
                        gr_t[ngr] = t + 0.5 * (x1 + x2) * h
                        gr_v[ngr] = fmin
                        ngr += 1
            # grazes straddling the step start: |g| minimal at the node itself.
            # The search runs over the last subinterval of the previous
            # segment and the first one of this segment (s in [-1, 1]).
            # A hidden crossing pair found here is logged as a graze too,
            # since the previous step has already been committed.
            if has_prev:
                hp = t - ts[n - 1]
                for i in range(ne):
                    ga = gprev[i]
                    gm = G[0, i]
                    gb = G[1, i]
                    if ga * gm <= 0.0 or gm * gb <= 0.0:
                        continue
                    if abs(gm) > abs(ga) or abs(gm) > abs(gb):
                        continue
                    gr = 0.6180339887498949
                    lo = -1.0
                    hi = 1.0
                    x1 = hi - gr * (hi - lo)
                    x2 = lo + gr * (hi - lo)
                    f1 = gm
                    f2 = gm
                    todo = 3
                    crossed = False
                    for _ in range(80):
                        for which in range(2):
                            if (todo >> which) & 1 == 0:
                                continue
                            s = x1 if which == 0 else x2
                            if s < 0.0:
                                _DENSE(rc, n - 1, 1.0 + s / nsub, tmp)
                            else:
                                _DENSE(rc, n, s / nsub, tmp)
                            _EVF(tmp, ep, gcur)
                            if which == 0:
                                f1 = gcur[i]
                            else:
                                f2 = gcur[i]
                        if f1 * gm <= 0.0 or f2 * gm <= 0.0:
                            crossed = True
                            break
                        if (hi - lo) * max(abs(h), abs(hp)) / nsub < event_dt:
                            break
                        if abs(f1) < abs(f2):
                            hi = x2
                            x2 = x1
                            f2 = f1
                            x1 = hi - gr * (hi - lo)
                            todo = 1
                        else:
                            lo = x1
                            x1 = x2
                            f1 = f2
                            x2 = lo + gr * (hi - lo)
                            todo = 2
                    if crossed:
                        smin = x1 if f1 * gm <= 0.0 else x2
                        fmin = 0.0
                    elif abs(f1) < abs(f2):
                        smin = x1
                        fmin = f1
                    else:
                        smin = x2
                        fmin = f2
                    if crossed or abs(fmin) < graze_tol:
                        if ngr >= gr_t.shape[0]:
                            gi2 = np.empty(2 * ngr, np.int64)
                            gt2 = np.empty(2 * ngr)
                            gv2 = np.empty(2 * ngr)
                            gi2[:ngr] = gr_i[:ngr]
                            gt2[:ngr] = gr_t[:ngr]
                            gv2[:ngr] = gr_v[:ngr]
                            gr_i, gr_t, gr_v = gi2, gt2, gv2
                        gr_i[ngr] = i
                        gr_t[ngr] = t + smin * (hp if smin < 0.0 else h) / nsub
                        gr_v[ngr] = fmin
                        ngr += 1
            if nf > 0:
                order = np.argsort(found_t[:nf], kind="mergesort")
                for oi in range(nf):
                    o = order[oi]
                    i = found_i[o]
                    if hit_term:
                        break
                    if nev >= ev_t.shape[0]:
                        m2 = 2 * nev
                        ei2 = np.empty(m2, np.int64)
                        et2 = np.empty(m2)
                        ed2 = np.empty(m2, np.int64)
                        ey2 = np.empty((m2, d))
                        ei2[:nev] = ev_i[:nev]
                        et2[:nev] = ev_t[:nev]
                        ed2[:nev] = ev_d[:nev]
                        ey2[:nev] = ev_y[:nev]
                        ev_i, ev_t, ev_d, ev_y = ei2, et2, ed2, ey2
                    te = found_t[o]
                    _DENSE(rc, n, (te - t) / h, tmp)
                    ev_i[nev] = i
                    ev_t[nev] = te
                    ev_d[nev] = found_d[o]
                    ev_y[nev, :] = tmp
                    nev += 1
                    if eterm[i]:
                        hit_term = True
                        t_term = te
            gprev[:] = G[nsub - 1, :]
            has_prev = True
            G[0, :] = G[nsub, :]
        n += 1
        if hit_term:
            th = (t_term - t) / h
            _DENSE(rc, n - 1, th, tmp)
            ts[n] = t_term
            ys[n, :] = tmp
            status = _TERMINAL
            # the truncated last segment becomes a cubic Hermite piece
            # (values and end slopes); r5 = 0 selects that form
            hs = t_term - t
            _RHS(tmp, fp, k7)
            for j in range(d):
                ydiff = tmp[j] - y[j]
                bspl = hs * k1[j] - ydiff
                rc[n - 1, 1, j] = ydiff
                rc[n - 1, 2, j] = bspl
                rc[n - 1, 3, j] = ydiff - hs * k7[j] - bspl
                rc[n - 1, 4, j] = 0.0
            break
        t = tnew
        for j in range(d):
            y[j] = y1[j]
            k1[j] = k7[j]
        ts[n] = t
        ys[n, :] = y
        big = 0.0
        for j in range(d):
            big = max(big, abs(y[j]))
        if big > blowup:
            status = _BLOWUP
            break
        fac = 0.9 * err ** -0.2 if err > 0.0 else 10.0
        if fac > 10.0:
            fac = 10.0
        if reject and fac > 1.0:
            fac = 1.0
        reject = False
        h = min(h * fac, hmax)
    return (ts[:n + 1], ys[:n + 1], rc[:n], ev_i[:nev], ev_t[:nev], ev_d[:nev], ev_y[:nev],
            gr_i[:ngr], gr_t[:ngr], gr_v[:ngr], status, h)


def _bind(rhs, evf, dense, name: str, jit: bool):
    g = dict(globals())
    g.update(_RHS=rhs, _EVF=evf, _DENSE=dense)
    f = types.FunctionType(_core_impl.__code__, g, name, _core_impl.__defaults__)
    f.__qualname__ = name
    return nb.njit(cache=True)(f) if jit else f


_core_full = _bind(_full_rhs, _model_events, _dense_jit, "_core_full", True)
_core_fast = _bind(_fast_rhs, _model_events, _dense_jit, "_core_fast", True)


# ---------------------------------------------------------------------------
# trajectory

@dataclass
class Trajectory:
    """Dense solution with ordered event log.

    ``t`` and ``y`` are the accepted step nodes. Times reported by accessors
    are in the shifted frame ``t - shift``.
    """

    t_nodes: np.ndarray
    y_nodes: np.ndarray
    segments: np.ndarray
    events: list[Event]
    grazes: list[Graze]
    reason: str
    shift: float = 0.0
    terminal_event: Event | None = None
    meta: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.t_nodes - self.shift

    @property
    def y(self) -> np.ndarray:
        return self.y_nodes

    @property
    def t_end(self) -> float:
        return float(self.t_nodes[-1] - self.shift)

    @property
    def y_end(self) -> np.ndarray:
        return self.y_nodes[-1]

    @property
    def n_steps(self) -> int:
        return len(self.segments)

    def __call__(self, t):
        """Dense evaluation at shifted time(s) t."""
        ta = np.atleast_1d(np.asarray(t, dtype=float)) + self.shift
        tn = self.t_nodes
        if len(self.segments) == 0:
            return np.repeat(self.y_nodes[:1], len(ta), axis=0) if np.ndim(t) else self.y_nodes[0].copy()
        idx = np.clip(np.searchsorted(tn, ta, side="right") - 1, 0, len(self.segments) - 1)
        hs = tn[idx + 1] - tn[idx]
        th = np.where(hs > 0, (ta - tn[idx]) / np.where(hs > 0, hs, 1.0), 0.0)[:, None]
        r = self.segments[idx]
        out = r[:, 0] + th * (r[:, 1] + (1 - th) * (r[:, 2] + th * (r[:, 3] + (1 - th) * r[:, 4])))
        return out if np.ndim(t) else out[0]

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        tt = np.linspace(self.t[0], self.t_end, n)
        return tt, self(tt)

    def dense_grid(self, per_step: int = 8, t_from: float | None = None,
                   t_to: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Times (shifted) and states at ``per_step`` points inside every step."""
        tn = self.t_nodes
        if len(self.segments) == 0:
            return self.t.copy(), self.y_nodes.copy()
        th = np.arange(per_step) / per_step
        h = np.diff(tn)
        tt = (tn[:-1, None] + h[:, None] * th[None, :]).ravel()
        r = self.segments
        T = th[None, :, None]
        yy = (r[:, None, 0] + T * (r[:, None, 1] + (1 - T) * (r[:, None, 2] + T * (r[:, None, 3]
              + (1 - T) * r[:, None, 4])))).reshape(-1, r.shape[2])
        tt = np.append(tt, tn[-1]) - self.shift
        yy = np.vstack([yy, self.y_nodes[-1:]])
        keep = np.ones(len(tt), dtype=bool)
        if t_from is not None:
            keep &= tt >= t_from
        if t_to is not None:
            keep &= tt <= t_to
        return tt[keep], yy[keep]

    def min_distance(self, point, t_from: float | None = None, t_to: float | None = None,
                     per_step: int = 8) -> tuple[float, float]:
        """Smallest Euclidean distance to ``point`` over a time window, with its time."""
        tt, yy = self.dense_grid(per_step, t_from, t_to)
        if len(tt) == 0:
            return math.inf, math.nan
        p = np.asarray(point, dtype=float)
        d = np.linalg.norm(yy[:, :len(p)] - p, axis=1)
        i = int(np.argmin(d))
        return float(d[i]), float(tt[i])

    def with_shift(self, shift: float) -> "Trajectory":
        return Trajectory(self.t_nodes, self.y_nodes, self.segments, self.events, self.grazes,
                          self.reason, shift, self.terminal_event, dict(self.meta))

    def find(self, name: str, after: float | None = None, direction: int | None = None) -> list[Event]:
        out = []
        for e in self.events:
            if e.name != name:
                continue
            if after is not None and e.t - self.shift <= after:
                continue
            if direction is not None and e.direction != direction:
                continue
            out.append(e)
        return out

    def first(self, name: str, after: float | None = None, direction: int | None = None) -> Event | None:
        hits = self.find(name, after, direction)
        return hits[0] if hits else None

    def event_time(self, e: Event) -> float:
        return e.t - self.shift

    def to_csv(self, path=None, names=("u", "v", "w", "q")) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        d = self.y_nodes.shape[1]
        wr.writerow(["t", *names[:d]])
        for ti, yi in zip(self.t, self.y_nodes):
            wr.writerow([repr(float(ti)), *(repr(float(x)) for x in yi)])
        s = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s)
        return s

    def events_json(self) -> list[dict]:
        return [e.to_dict(self.shift) for e in self.events]

    def to_json(self, path=None) -> str:
        doc = {"reason": self.reason, "n_steps": self.n_steps, "t_end": self.t_end,
               "events": self.events_json(),
               "grazes": [{"name": g.name, "t": g.t - self.shift, "value": g.value} for g in self.grazes]}
        s = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(s)
        return s


# ---------------------------------------------------------------------------
# public driver

def _encode_events(events: Sequence[EventSpec]):
    ep = np.zeros((len(events), _ROW))
    for i, e in enumerate(events):
        ep[i] = e.row
    edir = np.array([e.direction for e in events], dtype=np.int64)
    eterm = np.array([e.terminal for e in events], dtype=np.bool_)
    return ep, edir, eterm


def integrate(start, field: Callable | CompiledField, events: Sequence[EventSpec] = (),
              horizon: float = DEFAULT_HORIZON, rtol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL, *, t0: float = 0.0, h0: float = 0.0,
              hmax: float = 0.25, nsub: int = 4, graze_tol: float = GRAZE_TOL,
              event_dt: float = EVENT_DT, max_steps: int = 2_000_000,
              blowup: float = BLOWUP_NORM, raise_underflow: bool = True) -> Trajectory:
    """Integrate ``y' = field(y)`` from ``start`` over ``[t0, t0 + horizon]``.

    ``field`` is a :class:`CompiledField` (fast path, all events must be
    declarative) or any callable returning the derivative.
    """
    y0 = np.array(start, dtype=float)
    if y0.ndim != 1:
        raise ValueError("start must be a 1-D state")
    if not np.all(np.isfinite(y0)):
        raise ValueError("start state is not finite")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    events = list(events)
    compiled = isinstance(field, CompiledField) and all(e.row is not None for e in events)
    if compiled:
        ep, edir, eterm = _encode_events(events)
        core = _core_full if field.system == "full" else _core_fast
        fp = field.params
    else:
        ufield = field
        funcs = [e.func for e in events]

        def rhs(y, p, out):
            out[:] = ufield(y)

        def evf(y, p, out):
            for i, g in enumerate(funcs):
                out[i] = g(y)

        core = _bind(rhs, evf, _dense_impl, "_core_py", False)
        fp = np.zeros(1)
        ep = np.zeros((len(events), _ROW))
        edir = np.array([e.direction for e in events], dtype=np.int64)
        eterm = np.array([e.terminal for e in events], dtype=np.bool_)
    res = core(y0, float(t0), float(t0 + horizon), fp, ep, edir, eterm, float(rtol), float(atol),
               float(h0), float(hmax), int(nsub), float(graze_tol), float(event_dt),
               int(max_steps), float(blowup), HMIN)
    ts, ys, rc, ev_i, ev_t, ev_d, ev_y, gr_i, gr_t, gr_v, status, h_last = res
    reason = _REASONS[int(status)]
    if reason == "underflow" and raise_underflow:
        raise StepUnderflow(f"step size below {HMIN} at t={ts[-1]:.6g}")
    evs = [Event(events[int(i)].name, float(t), np.array(yy), int(dd))
           for i, t, dd, yy in zip(ev_i, ev_t, ev_d, ev_y)]
    grs = [Graze(events[int(i)].name, float(t), float(v)) for i, t, v in zip(gr_i, gr_t, gr_v)]
    term = evs[-1] if reason == "terminal" else None
    return Trajectory(np.array(ts), np.array(ys), np.array(rc), evs, grs, reason,
                      terminal_event=term, meta={"rtol": rtol, "atol": atol, "horizon": horizon})


def seed_unstable(p0, mu, offset: float = DEFAULT_SEED_OFFSET) -> np.ndarray:
    """Point ``p0 + offset * mu`` on the linearized unstable manifold."""
    if not (offset == 0 or 1e-9 <= offset <= 1e-5):
        raise ValueError(f"seed offset {offset} outside [1e-9, 1e-5]")
    return np.asarray(p0, dtype=float) + offset * np.asarray(mu, dtype=float)
