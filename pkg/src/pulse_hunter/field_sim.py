"""Method-of-lines simulation of the neural field with synaptic depression,

    u_t = -u + J * (q S(u)),   q_t = eps (1 - q - beta q S(u)),

with J(x) = (b/2) exp(-b|x|), used to cross-check the shooting speeds."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .model import FiringRate, Landscape, ModelParams, firing_rate_sigmoid

__all__ = [
    "FieldState",
    "PulseMeasurement",
    "NoPulse",
    "FieldBlowup",
    "convolve_exponential",
    "field_rhs",
    "step_field",
    "initial_state",
    "simulate",
    "front_position",
    "measure_pulse_speed",
    "q_bounds_check",
    "write_snapshots_csv",
]

DT_MAX = 0.1


class NoPulse(RuntimeError):
    pass


class FieldBlowup(FloatingPointError):
    pass


@dataclass
class FieldState:
    x: np.ndarray
    u: np.ndarray
    q: np.ndarray
    t: float = 0.0
    boundary: str = "free"

    def __post_init__(self):
        if self.x.size < 2:
            raise ValueError("need at least two grid points")
        if not (self.x.shape == self.u.shape == self.q.shape):
            raise ValueError("x, u, q must have the same shape")
        if self.boundary not in ("free", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def length(self) -> float:
        return self.dx * (self.n if self.boundary == "periodic" else self.n - 1)

    def copy(self) -> "FieldState":
        return replace(self, u=self.u.copy(), q=self.q.copy())


@dataclass
class PulseMeasurement:
    speed: float
    intercept: float
    residual: float  # rms of the fit, in x units
    r2: float
    times: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.times.size)

    def to_dict(self) -> dict:
        return {"speed": self.speed, "intercept": self.intercept, "residual": self.residual,
                "r2": self.r2, "n": self.n}


def _weights(b: float, dx: float):
    # exact integral of the half kernel against the linear interpolant on one cell
    bh = b * dx
    E = math.exp(-bh)
    a1 = (-math.expm1(-bh) - bh * E) / bh
    return E, 0.5 * (-math.expm1(-bh) - a1), 0.5 * a1


def _sweep(f, E, wi, wm, a0):
    out = np.empty_like(f)
    out[0] = a0
    if f.size > 1:
        out[1:], _ = lfilter([wi, wm], [1.0, -E], f[1:], zi=[E * a0 + wm * f[0]])
    return out


def convolve_exponential(f, b: float, dx: float, boundary: str = "free") -> np.ndarray:
    """(J * f) on a uniform grid by two first-order recursions, O(N).

    ``free``: f is continued by its end values beyond the grid, so the tails
    of the kernel are accounted for and constants are reproduced.
    ``periodic``: the grid is one period (x_N = x_0)."""
    f = np.asarray(f, dtype=float)
    E, wi, wm = _weights(b, dx)
    if boundary == "free":
        A = _sweep(f, E, wi, wm, 0.5 * f[0])
        g = f[::-1]
        B = _sweep(g, E, wi, wm, 0.5 * g[0])
        return A + B[::-1]
    if boundary != "periodic":
        raise ValueError(f"unknown boundary {boundary!r}")
    n = f.size
    EN = math.exp(-b * dx * n)
    fw = np.concatenate([f, f[:1]])
    A = _sweep(fw, E, wi, wm, 0.0)
    A = _sweep(fw, E, wi, wm, A[-1] / (1.0 - EN))[:-1]
    gw = np.concatenate([f[::-1], f[-1:]])
    B = _sweep(gw, E, wi, wm, 0.0)
    B = _sweep(gw, E, wi, wm, B[-1] / (1.0 - EN))[:-1]
    # B was swept on the reversed grid starting at x_{N-1}
    return A + B[::-1]


def field_rhs(u, q, params: ModelParams, S: FiringRate, dx: float, boundary: str):
    s = S.value(u)
    du = -u + convolve_exponential(q * s, params.b, dx, boundary)
    dq = params.epsilon * (1.0 - q - params.beta * q * s)
    return du, dq


def step_field(state: FieldState, params: ModelParams, S: FiringRate | None, dt: float) -> FieldState:
    """One classical RK4 step."""
    if not 0 < dt <= DT_MAX:
        raise ValueError(f"dt must lie in (0, {DT_MAX}], got {dt}")
    S = firing_rate_sigmoid(params) if S is None else S
    dx, bc = state.dx, state.boundary
    u, q = state.u, state.q
    k1u, k1q = field_rhs(u, q, params, S, dx, bc)
    k2u, k2q = field_rhs(u + 0.5 * dt * k1u, q + 0.5 * dt * k1q, params, S, dx, bc)
    k3u, k3q = field_rhs(u + 0.5 * dt * k2u, q + 0.5 * dt * k2q, params, S, dx, bc)
    k4u, k4q = field_rhs(u + dt * k3u, q + dt * k3q, params, S, dx, bc)
    un = u + (dt / 6.0) * (k1u + 2 * k2u + 2 * k3u + k4u)
    qn = q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(qn))):
        raise FieldBlowup(f"non-finite field at t={state.t + dt:.6g}")
    if np.max(np.abs(un)) > 1e6:
        raise FieldBlowup(f"field overflow at t={state.t + dt:.6g}")
    return FieldState(state.x, un, qn, state.t + dt, bc)


def initial_state(landscape: Landscape, length: float = 40.0, n: int = 4096, *,
                  boundary: str = "free", stim_center: float | None = None,
                  stim_height: float | None = None, stim_width: float = 1.0,
                  kappa: float | None = None, q_value: float | None = None) -> FieldState:
    """Rest state (u0, q0) plus a rectangular bump in u; by default the bump
    has height 2 kappa and sits a quarter length into the domain."""
    if boundary == "periodic":
        x = -0.5 * length + length * np.arange(n) / n
    else:
        x = np.linspace(-0.5 * length, 0.5 * length, n)
    u = np.full(n, landscape.u0)
    q = np.full(n, landscape.q0 if q_value is None else q_value)
    if stim_height is None:
        if kappa is None:
            raise ValueError("give stim_height or kappa")
        stim_height = 2.0 * kappa
    xc = -0.25 * length if stim_center is None else stim_center
    u[np.abs(x - xc) <= 0.5 * stim_width] += stim_height
    return FieldState(x, u, q, 0.0, boundary)


def simulate(state: FieldState, params: ModelParams, S: FiringRate | None = None, *,
             dt: float = 0.01, t_end: float = 60.0, every: float = 1.0,
             burn_in: float = 0.0) -> list[FieldState]:
    """Integrate to ``t_end`` and return snapshots every ``every`` time units
    (the initial state included) after ``burn_in``."""
    S = firing_rate_sigmoid(params) if S is None else S
    n_steps = int(round((t_end - state.t) / dt))
    k_every = max(1, int(round(every / dt)))
    snaps = [state.copy()] if state.t >= burn_in else []
    s = state
    for k in range(1, n_steps + 1):
        s = step_field(s, params, S, dt)
        if k % k_every == 0 and s.t >= burn_in - 1e-12:
            snaps.append(s)
    return snaps


def front_position(x, u, level: float) -> float | None:
    """Rightmost upward crossing of ``level`` seen from the right: the
    leading edge of a rightward pulse. Linear interpolation between nodes."""
    above = u > level
    if not above.any():
        return None
    j = int(np.flatnonzero(above)[-1])
    if j == u.size - 1:
        return float(x[-1])
    u0, u1 = u[j], u[j + 1]
    return float(x[j] + (level - u0) / (u1 - u0) * (x[j + 1] - x[j]))


def measure_pulse_speed(snapshots, level: float, *, t_min: float = -math.inf,
                        t_max: float = math.inf, edge_margin: float = 0.0) -> PulseMeasurement:
    """Least-squares slope of the leading threshold crossing against time.

    ``snapshots`` are FieldStates or (t, x, u) triples. Crossings within
    ``edge_margin`` of the right boundary are dropped."""
    ts, xs = [], []
    for s in snapshots:
        t, x, u = (s.t, s.x, s.u) if isinstance(s, FieldState) else s
        if not (t_min <= t <= t_max):
            continue
        p = front_position(np.asarray(x), np.asarray(u), level)
        if p is None or p > x[-1] - edge_margin:
            continue
        ts.append(t)
        xs.append(p)
    ts, xs = np.array(ts), np.array(xs)
    if ts.size < 10:
        raise NoPulse(f"threshold {level} crossed in only {ts.size} snapshots (need 10)")
    A = np.column_stack([ts, np.ones_like(ts)])
    (c, x0), *_ = np.linalg.lstsq(A, xs, rcond=None)
    res = xs - (c * ts + x0)
    ss = float(np.sum((xs - xs.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res ** 2)) / ss if ss > 0 else 0.0
    return PulseMeasurement(float(c), float(x0), float(np.sqrt(np.mean(res ** 2))), r2, ts, xs)


def q_bounds_check(state: FieldState, params: ModelParams) -> dict:
    lo = 1.0 / (1.0 + params.beta)
    return {"ok": bool(np.all(state.q > lo) and np.all(state.q < 1.0)),
            "q_min": float(state.q.min()), "q_max": float(state.q.max()), "lower": lo}


def write_snapshots_csv(path, snapshots, stride: int = 8) -> None:
    """Rows (t, x, u, q), every ``stride``-th grid point."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u", "q"])
        for s in snapshots:
            for i in range(0, s.n, stride):
                w.writerow([f"{s.t:.6g}", f"{s.x[i]:.9g}", f"{s.u[i]:.12g}", f"{s.q[i]:.12g}"])
