"""Neural-field model with synaptic depression: parameters, firing rate,
travelling-wave vector fields and the equilibrium landscape.

The travelling-wave reduction of

    u_t = -u + J * (q S(u)),    q_t / eps = 1 - q - beta q S(u),

with the exponential kernel ``J(x) = (b/2) exp(-b|x|)`` gives the four
dimensional system (u, v, w, q) integrated throughout this package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import expit

__all__ = [
    "ModelParams",
    "FiringRate",
    "Landscape",
    "ConditionViolation",
    "firing_rate_sigmoid",
    "firing_rate_custom",
    "vector_field_full",
    "vector_field_fast",
    "full_field",
    "fast_field",
    "compute_landscape",
    "nullcline_roots",
    "maxwell_integral",
    "derivative_tower",
    "prop2_identities",
    "check_invariant_regions",
    "FAYE",
]

SCAN_LO, SCAN_HI, SCAN_CELLS = -0.5, 1.5, 4096
ROOT_XTOL = 1e-14
TANGENCY_DU = 1e-9


class ConditionViolation(ValueError):
    """One of the five standing conditions on S fails."""

    def __init__(self, condition: int, message: str):
        super().__init__(f"Condition {condition} violated: {message}")
        self.condition = condition


@dataclass(frozen=True)
class ModelParams:
    b: float = 4.5
    beta: float = 5.0
    lambda_: float = 20.0
    kappa: float = 0.22
    epsilon: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")

    def with_(self, **changes) -> "ModelParams":
        d = asdict(self)
        d.update(changes)
        return ModelParams(**d)

    def to_dict(self) -> dict:
        return asdict(self)


FAYE = ModelParams(b=4.5, beta=5.0, lambda_=20.0, kappa=0.22)


def _logistic_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class FiringRate:
    """Firing rate S with its analytic derivative.

    ``value`` and ``deriv`` accept floats or numpy arrays. ``deriv2`` and
    ``deriv3`` are optional; when missing they are taken by central
    differences of ``deriv`` (only used for the higher Taylor terms in
    :func:`derivative_tower`).
    """

    value: Callable
    deriv: Callable
    family: str = "custom"
    deriv2: Callable | None = None
    deriv3: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, u):
        return self.value(u)

    def d(self, u):
        return self.deriv(u)

    def d2(self, u):
        if self.deriv2 is not None:
            return self.deriv2(u)
        h = 1e-5
        return (self.deriv(u + h) - self.deriv(u - h)) / (2 * h)

    def d3(self, u):
        if self.deriv3 is not None:
            return self.deriv3(u)
        h = 1e-4
        return (self.deriv(u + h) - 2 * self.deriv(u) + self.deriv(u - h)) / (h * h)


def firing_rate_sigmoid(params: ModelParams) -> FiringRate:
    """S(u) = 1 / (1 + exp(lambda (kappa - u))), overflow-free."""
    lam, kap = float(params.lambda_), float(params.kappa)
    if not lam > 0:
        raise ValueError("lambda_ must be positive")

    def value(u):
        if isinstance(u, float):
            return _logistic_scalar(lam * (u - kap))
        return expit(lam * (np.asarray(u, dtype=float) - kap))

    def deriv(u):
        s = value(u)
        return lam * s * (1.0 - s)

    def deriv2(u):
        s = value(u)
        return lam * lam * s * (1.0 - s) * (1.0 - 2.0 * s)

    def deriv3(u):
        s = value(u)
        return lam**3 * s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)

    return FiringRate(value, deriv, "sigmoid", deriv2, deriv3,
                      meta={"lambda": lam, "kappa": kap})


def firing_rate_custom(value: Callable, deriv: Callable, *, deriv2=None,
                       deriv3=None, name: str = "custom") -> FiringRate:
    """Wrap a user-supplied S; S' must be analytic."""
    if deriv is None:
        raise ValueError("a custom firing rate must supply its derivative")
    return FiringRate(value, deriv, name, deriv2, deriv3)


# ---------------------------------------------------------------------------
# vector fields

def _require_speed(c: float) -> None:
    if not c > 0:
        raise ValueError(f"wave speed must be positive, got c={c}")


def vector_field_full(p, params: ModelParams, S: FiringRate) -> np.ndarray:
    """(u', v', w', q') of the travelling-wave system at speed ``params.c``."""
    c = params.c
    _require_speed(c)
    u, v, w, q = (float(x) for x in p)
    s = S.value(u)
    b2 = params.b * params.b
    return np.array([
        (v - u) / c,
        w,
        b2 * (v - q * s),
        params.epsilon / c * (1.0 - q - params.beta * q * s),
    ])


def vector_field_fast(r, q: float, params: ModelParams, S: FiringRate) -> np.ndarray:
    """(u', v', w') of the fast system with depression frozen at ``q``."""
    c = params.c
    _require_speed(c)
    u, v, w = (float(x) for x in r)
    return np.array([(v - u) / c, w, params.b * params.b * (v - q * S.value(u))])


def full_field(params: ModelParams, S: FiringRate, c: float | None = None,
               sign: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Closure form of :func:`vector_field_full` for the integrator.

    ``sign=-1`` gives the time-reversed field.
    """
    c = params.c if c is None else c
    _require_speed(c)
    inv_c = sign / c
    b2 = sign * params.b * params.b
    ec = sign * params.epsilon / c
    beta = params.beta
    Sv = S.value
    arr = np.array

    def f(y):
        u, v, w, q = y.tolist()
        s = Sv(u)
        return arr(((v - u) * inv_c, sign * w, b2 * (v - q * s),
                    ec * (1.0 - q - beta * q * s)))

    return f


def fast_field(params: ModelParams, S: FiringRate, q: float, c: float | None = None,
               sign: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    c = params.c if c is None else c
    _require_speed(c)
    inv_c = sign / c
    b2 = sign * params.b * params.b
    Sv = S.value
    arr = np.array

    def f(y):
        u, v, w = y.tolist()
        return arr(((v - u) * inv_c, sign * w, b2 * (v - q * Sv(u))))

    return f


# ---------------------------------------------------------------------------
# scalar root machinery

def _bisect(F: Callable[[float], float], a: float, b: float, xtol: float = ROOT_XTOL,
            maxiter: int = 200) -> float:
    fa = F(a)
    if fa == 0:
        return a
    fb = F(b)
    if fb == 0:
        return b
    if fa * fb > 0:
        raise ValueError("root not bracketed")
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        if m in (a, b) or b - a <= xtol:
            break
        fm = F(m)
        if fm == 0:
            return m
        if fa * fm < 0:
            b, fb = m, fm
        else:
            a, fa = m, fm
    return 0.5 * (a + b)


def _golden_min(F, a, b, tol=1e-13, maxiter=200):
    g = (math.sqrt(5) - 1) / 2
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = F(x1), F(x2)
    for _ in range(maxiter):
        if b - a < tol:
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = F(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = F(x2)
    return 0.5 * (a + b)


def scalar_roots(F: Callable[[float], float], lo: float = SCAN_LO, hi: float = SCAN_HI,
                 cells: int = SCAN_CELLS, tangency_tol: float = 1e-12) -> list[float]:
    """All roots of F on [lo, hi]: sign changes on a uniform grid refined by
    bisection, plus tangential (double) roots found at grid minima of |F|.
    Roots closer than ``TANGENCY_DU`` are merged."""
    grid = np.linspace(lo, hi, cells + 1)
    vals = np.array([F(float(x)) for x in grid])
    roots: list[float] = []
    for i in range(cells):
        a, b = vals[i], vals[i + 1]
        if a == 0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(_bisect(F, float(grid[i]), float(grid[i + 1])))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    absv = np.abs(vals)
    for i in range(1, cells):
        if absv[i] <= absv[i - 1] and absv[i] <= absv[i + 1] and vals[i - 1] * vals[i + 1] > 0 \
                and vals[i - 1] * vals[i] > 0:
            x = _golden_min(lambda t: abs(F(t)), float(grid[i - 1]), float(grid[i + 1]))
            if abs(F(x)) < tangency_tol:
                roots.append(x)
    roots.sort()
    merged: list[float] = []
    for r in roots:
        if merged and r - merged[-1] < TANGENCY_DU:
            merged[-1] = 0.5 * (merged[-1] + r)
        else:
            merged.append(r)
    return merged


def nullcline_roots(q: float, S: FiringRate, lo: float = SCAN_LO, hi: float = SCAN_HI,
                    cells: int = SCAN_CELLS) -> list[float]:
    """Roots of u = q S(u), i.e. h(u) = q."""
    return scalar_roots(lambda u: u - q * S.value(u), lo, hi, cells)


def maxwell_integral(q: float, a: float, b: float, S: FiringRate) -> float:
    """Integral of q S(u) - u over [a, b]."""
    val, _ = quad(lambda u: q * S.value(u) - u, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
    return float(val)


def h_func(u, S: FiringRate):
    return u / S.value(u)


def h_prime(u, S: FiringRate):
    s = S.value(u)
    return (s - u * S.deriv(u)) / (s * s)


# ---------------------------------------------------------------------------
# landscape

@dataclass(frozen=True)
class Landscape:
    u0: float
    q0: float
    um: float
    uplus: float
    u_knee: float
    q_min: float
    u_hmax: float
    maxwell_integral: float
    flags: dict
    notes: tuple = ()

    @property
    def p0(self) -> np.ndarray:
        return np.array([self.u0, self.u0, 0.0, self.q0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


def _check_condition_1(S: FiringRate, grid: np.ndarray) -> None:
    s = np.array([S.value(float(x)) for x in grid])
    ds = np.array([S.deriv(float(x)) for x in grid])
    if not np.all(np.isfinite(s)) or not np.all(np.isfinite(ds)):
        raise ConditionViolation(1, "S or S' not finite on the scan grid")
    if np.any(s <= 0) or np.any(s >= 1):
        raise ConditionViolation(1, "S must satisfy 0 < S < 1")
    if np.any(ds <= 0):
        raise ConditionViolation(1, "S must be strictly increasing")


def _h_critical_points(S: FiringRate, hi: float = SCAN_HI, cells: int = SCAN_CELLS):
    # h' > 0 for u <= 0 because S - u S' > 0 there.
    grid = np.linspace(0.0, hi, cells + 1)[1:]
    num = lambda u: S.value(u) - u * S.deriv(u)  # noqa: E731  sign of h'
    vals = np.array([num(float(x)) for x in grid])
    crit = []
    for i in range(len(grid) - 1):
        if vals[i] * vals[i + 1] < 0:
            r = _bisect(num, float(grid[i]), float(grid[i + 1]))
            kind = "max" if vals[i] > 0 else "min"
            crit.append((r, kind))
    return crit, vals[-1]


def compute_landscape(params: ModelParams, S: FiringRate | None = None) -> Landscape:
    """Equilibrium structure; raises :class:`ConditionViolation` naming the
    first failing condition."""
    S = firing_rate_sigmoid(params) if S is None else S
    beta = params.beta
    grid = np.linspace(SCAN_LO, SCAN_HI, SCAN_CELLS + 1)
    notes: list[str] = []
    flags = {f"condition_{i}": False for i in range(1, 6)}

    _check_condition_1(S, grid)
    flags["condition_1"] = True

    crit, tail = _h_critical_points(S)
    kinds = [k for _, k in crit]
    if kinds != ["max", "min"]:
        raise ConditionViolation(2, f"h = u/S(u) critical points {kinds}, expected one max then one min")
    if tail < 0:
        notes.append("h is decreasing at the end of the scan domain; critical points may lie beyond it")
    (u_hmax, _), (u_knee, _) = crit
    flags["condition_2"] = True

    eq = scalar_roots(lambda u: u * (1.0 + beta * S.value(u)) - S.value(u))
    if len(eq) != 1:
        raise ConditionViolation(3, f"found {len(eq)} equilibria of the travelling-wave system")
    u0 = eq[0]
    q0 = 1.0 / (1.0 + beta * S.value(u0))
    flags["condition_3"] = True

    roots = nullcline_roots(q0, S)
    if len(roots) != 3:
        raise ConditionViolation(4, f"h(u) = q0 has {len(roots)} roots, expected three")
    if abs(roots[0] - u0) > 1e-9:
        raise ConditionViolation(4, "left root of h(u) = q0 differs from the equilibrium")
    _, um, uplus = roots
    if not (u_hmax < um < u_knee < uplus):
        raise ConditionViolation(4, "root ordering u0 < um < u_knee < u+ fails")
    flags["condition_4"] = True

    M = maxwell_integral(q0, u0, uplus, S)
    if not M > 0:
        raise ConditionViolation(5, f"Maxwell integral {M:.3e} is not positive")
    flags["condition_5"] = True

    q_min = float(h_func(u_knee, S))
    return Landscape(u0=u0, q0=q0, um=um, uplus=uplus, u_knee=u_knee, q_min=q_min,
                     u_hmax=u_hmax, maxwell_integral=M, flags=flags, notes=tuple(notes))


# ---------------------------------------------------------------------------
# derivative identities

def derivative_tower(p, params: ModelParams, S: FiringRate) -> dict[str, list[float]]:
    """Time derivatives of order 1..4 of each component along the flow,
    by chained differentiation of the vector field."""
    c, b2, eps, beta = params.c, params.b ** 2, params.epsilon, params.beta
    _require_speed(c)
    u, v, w, q = (float(x) for x in p)
    s, s1, s2, s3 = S.value(u), S.deriv(u), S.d2(u), S.d3(u)
    k = eps / c

    u1 = (v - u) / c
    v1 = w
    w1 = b2 * (v - q * s)
    q1 = k * (1 - q - beta * q * s)
    # derivatives of S(u(t))
    S1 = s1 * u1

    u2 = (v1 - u1) / c
    v2 = w1
    qs1 = q1 * s + q * S1
    w2 = b2 * (v1 - qs1)
    q2 = -k * (q1 + beta * qs1)
    S2 = s2 * u1 ** 2 + s1 * u2

    u3 = (v2 - u2) / c
    v3 = w2
    qs2 = q2 * s + 2 * q1 * S1 + q * S2
    w3 = b2 * (v2 - qs2)
    q3 = -k * (q2 + beta * qs2)
    S3 = s3 * u1 ** 3 + 3 * s2 * u1 * u2 + s1 * u3

    u4 = (v3 - u3) / c
    v4 = w3
    qs3 = q3 * s + 3 * q2 * S1 + 3 * q1 * S2 + q * S3
    w4 = b2 * (v3 - qs3)
    q4 = -k * (q3 + beta * qs3)

    return {"u": [u1, u2, u3, u4], "v": [v1, v2, v3, v4],
            "w": [w1, w2, w3, w4], "q": [q1, q2, q3, q4]}


@dataclass(frozen=True)
class IdentityResidual:
    identity: str
    applicable: bool
    residual: float


def prop2_identities(p, params: ModelParams, S: FiringRate,
                     tol: float = 1e-8) -> list[IdentityResidual]:
    """The seven conditional derivative identities of the wave system.

    Each identity's precondition (a set of vanishing derivatives) is tested
    against ``tol``; the residual is the true derivative minus the reduced
    formula. Residuals are reported for every identity, flagged by
    applicability.
    """
    D = derivative_tower(p, params, S)
    c, b2, eps, beta = params.c, params.b ** 2, params.epsilon, params.beta
    u, v, w, q = (float(x) for x in p)
    s, s1 = S.value(u), S.deriv(u)
    U, V, W, Q = D["u"], D["v"], D["w"], D["q"]
    small = lambda *xs: all(abs(x) <= tol for x in xs)  # noqa: E731
    k = eps / c
    out = [
        ("u'=0 => u''=v'/c", small(U[0]), U[1] - V[0] / c),
        ("u'=u''=0 => u'''=v''/c", small(U[0], U[1]), U[2] - V[1] / c),
        ("u'=u''=u'''=0 => u''''=-(b^2/c) q' S(u)", small(U[0], U[1], U[2]),
         U[3] + b2 / c * Q[0] * s),
        ("q'=0 => q''=-(eps/c) beta q S'(u) u'", small(Q[0]),
         Q[1] + k * beta * q * s1 * U[0]),
        ("w'=0 => v'''=w''=b^2(v'-q'S-qS'u')", small(W[0]),
         V[2] - b2 * (V[0] - Q[0] * s - q * s1 * U[0])),
        ("q'=u'=0 => q''=0, q'''=-(eps/c^2) beta q S'(u) v'", small(Q[0], U[0]),
         max(abs(Q[1]), abs(Q[2] + k / c * beta * q * s1 * V[0]))),
        ("q'=u'=v'=0 => q''''=-(eps/c^2) beta q S'(u) w'", small(Q[0], U[0], V[0]),
         Q[3] + k / c * beta * q * s1 * W[0]),
    ]
    return [IdentityResidual(name, ok, float(r)) for name, ok, r in out]


# ---------------------------------------------------------------------------
# positively invariant regions

def check_invariant_regions(params: ModelParams, S: FiringRate, n: int = 200,
                            seed: int = 0, u_range=(-1.0, 2.0)) -> dict:
    """Sample the faces of {v<0, w<0, 1/(1+beta)<q<1} and {v>1, w>0, same q}
    and check that the field points inward or along each face.

    Returns per-region counts and the worst (most outward) normal component.
    """
    rng = np.random.default_rng(seed)
    beta = params.beta
    qlo, qhi = 1.0 / (1.0 + beta), 1.0
    f = lambda p: vector_field_full(p, params, S)  # noqa: E731
    report = {}
    for region, vsign in (("lower", -1), ("upper", 1)):
        worst, passed = -np.inf, 0
        faces = rng.integers(0, 4, size=n)
        for face in faces:
            u = rng.uniform(*u_range)
            q = rng.uniform(qlo, qhi)
            v = (0.0 if vsign < 0 else 1.0) + vsign * rng.uniform(0.0, 2.0)
            w = vsign * rng.uniform(0.0, 5.0)
            if face == 0:
                v = 0.0 if vsign < 0 else 1.0
                normal, comp = 1, vsign * -1
            elif face == 1:
                w = 0.0
                normal, comp = 2, vsign * -1
            elif face == 2:
                q = qlo
                normal, comp = 3, -1  # outward normal points to smaller q
            else:
                q = qhi
                normal, comp = 3, 1
            d = f(np.array([u, v, w, q]))
            outward = comp * d[normal]
            worst = max(worst, outward)
            passed += outward <= 0
        report[region] = {"samples": int(n), "passed": int(passed), "worst_outward": float(worst)}
    return report
