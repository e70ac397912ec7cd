"""Linearization at the rest state: characteristic polynomials, the positive
eigenvalue and the unstable eigenvector used to seed shooting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FiringRate, Landscape, ModelParams, firing_rate_sigmoid

__all__ = [
    "FastCharPoly",
    "FullCharPoly",
    "UnstableDirection",
    "SpectralError",
    "fast_char_poly",
    "full_char_poly",
    "jacobian_full",
    "fast_positive_eigenvalue",
    "full_positive_eigenvalue",
    "unstable_eigenvector",
    "stable_root_count",
    "fast_unstable_direction",
]

ROOT_TOL = 1e-13


class SpectralError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FastCharPoly:
    """f(X) = X^3 + X^2/c - b^2 X - (b^2/c)(1 - S'(u0) q0)."""

    coeffs: tuple  # highest degree first

    def __call__(self, x):
        return np.polyval(self.coeffs, x)

    def deriv(self, x):
        return np.polyval(np.polyder(self.coeffs), x)


@dataclass(frozen=True)
class FullCharPoly:
    """det(X I - B) for the 4x4 Jacobian B at p0."""

    coeffs: tuple

    def __call__(self, x):
        return np.polyval(self.coeffs, x)

    def deriv(self, x, m: int = 1):
        return np.polyval(np.polyder(self.coeffs, m), x)


@dataclass(frozen=True)
class UnstableDirection:
    lambda1: float
    mu: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {"lambda1": self.lambda1, "mu": [float(x) for x in self.mu], "residual": self.residual}


def _rest_values(params: ModelParams, landscape: Landscape, S: FiringRate | None):
    S = firing_rate_sigmoid(params) if S is None else S
    u0, q0 = landscape.u0, landscape.q0
    return S.value(u0), S.deriv(u0), q0


def _speed(params, c):
    c = params.c if c is None else c
    if not c > 0:
        raise ValueError(f"wave speed must be positive, got c={c}")
    return float(c)


def fast_char_poly(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                   c: float | None = None) -> FastCharPoly:
    c = _speed(params, c)
    _, s1, q0 = _rest_values(params, landscape, S)
    b2 = params.b ** 2
    return FastCharPoly((1.0, 1.0 / c, -b2, -(b2 / c) * (1.0 - s1 * q0)))


def full_char_poly(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                   c: float | None = None, epsilon: float | None = None) -> FullCharPoly:
    c = _speed(params, c)
    eps = params.epsilon if epsilon is None else float(epsilon)
    s, s1, q0 = _rest_values(params, landscape, S)
    b2 = params.b ** 2
    r = eps * (params.beta * s + 1.0)
    return FullCharPoly((
        1.0,
        (1.0 + r) / c,
        -b2 + r / c ** 2,
        (b2 / c) * (q0 * s1 - 1.0 - r),
        (b2 * eps / c ** 2) * (q0 * s1 - 1.0 - params.beta * s),
    ))


def jacobian_full(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                  c: float | None = None, epsilon: float | None = None) -> np.ndarray:
    c = _speed(params, c)
    eps = params.epsilon if epsilon is None else float(epsilon)
    s, s1, q0 = _rest_values(params, landscape, S)
    b2, beta = params.b ** 2, params.beta
    return np.array([
        [-1 / c, 1 / c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-b2 * q0 * s1, b2, 0.0, -b2 * s],
        [-(eps / c) * beta * q0 * s1, 0.0, 0.0, -(eps / c) * (1 + beta * s)],
    ])


def _bracketed_root(P, dP, lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    """Bisection on a sign bracket (P(lo) < 0 < P(hi)), polished by safeguarded Newton."""
    flo, fhi = P(lo), P(hi)
    if not (flo < 0 < fhi):
        raise SpectralError(f"no sign bracket on [{lo}, {hi}]: P={flo:.3e}, {fhi:.3e}")
    for _ in range(200):
        if hi - lo <= 1e-6 * max(1.0, abs(hi)):
            break
        m = 0.5 * (lo + hi)
        fm = P(m)
        if fm < 0:
            lo = m
        elif fm > 0:
            hi = m
        else:
            return m
    x = 0.5 * (lo + hi)
    for _ in range(50):
        d = dP(x)
        xn = x - P(x) / d if d != 0 else 0.5 * (lo + hi)
        if not lo <= xn <= hi:
            xn = 0.5 * (lo + hi)
        fx = P(xn)
        if fx < 0:
            lo = xn
        elif fx > 0:
            hi = xn
        if abs(xn - x) <= tol * max(1.0, abs(x)) or fx == 0:
            return float(xn)
        x = xn
    return float(x)


def fast_positive_eigenvalue(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                             c: float | None = None) -> float:
    """Unique positive root of f, bracketed on (0, b)."""
    f = fast_char_poly(params, landscape, S, c)
    if not f(0.0) < 0:
        raise SpectralError("f(0) >= 0: q0 S'(u0) >= 1, landscape inconsistent")
    return _bracketed_root(f, f.deriv, 0.0, params.b)


def full_positive_eigenvalue(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                             c: float | None = None, epsilon: float | None = None) -> float:
    """Unique positive root of g, bracketed from above the fast eigenvalue."""
    eps = params.epsilon if epsilon is None else float(epsilon)
    lam0 = fast_positive_eigenvalue(params, landscape, S, c)
    if eps == 0:
        return lam0
    g = full_char_poly(params, landscape, S, c, eps)
    if not g(0.0) < 0:
        raise SpectralError("g(0) >= 0 with epsilon > 0")
    lo, hi = lam0, max(2 * lam0, params.b)
    if not g(lo) < 0:
        raise SpectralError("g(lambda1(c,0)) is not negative")
    while not g(hi) > 0:
        hi *= 2
        if hi > 1e12:
            raise SpectralError("no positive root of g found")
    return _bracketed_root(g, g.deriv, lo, hi)


def unstable_eigenvector(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                         c: float | None = None, epsilon: float | None = None) -> UnstableDirection:
    """Closed-form eigenvector of B for the positive eigenvalue, unit norm, mu1 > 0."""
    c = _speed(params, c)
    eps = params.epsilon if epsilon is None else float(epsilon)
    lam = full_positive_eigenvalue(params, landscape, S, c, eps)
    s, s1, q0 = _rest_values(params, landscape, S)
    beta = params.beta
    piv1 = 1.0 + c * lam
    piv4 = lam + (eps / c) * (1.0 + beta * s)
    if abs(piv1) < 1e-12 or abs(piv4) < 1e-12:
        raise SpectralError("degenerate pivot in eigenvector construction")
    m2 = 1.0
    m1 = m2 / piv1
    m3 = lam * m2
    m4 = -(eps / c) * beta * q0 * s1 * m1 / piv4
    mu = np.array([m1, m2, m3, m4])
    mu /= np.linalg.norm(mu)
    B = jacobian_full(params, landscape, S, c, eps)
    res = float(np.linalg.norm(B @ mu - lam * mu))
    return UnstableDirection(float(lam), mu, res)


def _routh_rhp_count(coeffs) -> int:
    """Number of roots with positive real part (generic case, no zero pivots)."""
    a = [float(x) for x in coeffs]
    n = len(a) - 1
    rows = [a[0::2], a[1::2]]
    width = len(rows[0])
    rows = [r + [0.0] * (width - len(r)) for r in rows]
    for _ in range(n - 1):
        r0, r1 = rows[-2], rows[-1]
        if r1[0] == 0:
            r1 = [1e-300] + r1[1:]
        nxt = [(r1[0] * r0[j + 1] - r0[0] * r1[j + 1]) / r1[0] for j in range(width - 1)] + [0.0]
        rows.append(nxt)
    col = [r[0] for r in rows[: n + 1]]
    return sum(1 for x, y in zip(col, col[1:]) if (x > 0) != (y > 0))


def stable_root_count(params: ModelParams, landscape: Landscape, S: FiringRate | None = None,
                      c: float | None = None, epsilon: float | None = None) -> dict:
    """Deflate g by its positive root and count the remaining left-half-plane roots."""
    eps = params.epsilon if epsilon is None else float(epsilon)
    g = full_char_poly(params, landscape, S, c, eps)
    lam = full_positive_eigenvalue(params, landscape, S, c, eps)
    quot, _ = np.polydiv(np.array(g.coeffs), np.array([1.0, -lam]))
    if eps == 0:
        # one root sits at zero; deflate it as well
        quot = quot[:-1]
    rhp = _routh_rhp_count(quot)
    deg = len(quot) - 1
    return {"lambda1": lam, "stable": deg - rhp, "unstable_other": rhp,
            "zero_root": eps == 0}


def fast_unstable_direction(params: ModelParams, u_e: float, q: float, c: float,
                            S: FiringRate | None = None) -> tuple[float, np.ndarray]:
    """Positive eigenvalue and unit eigenvector (mu1 > 0) of the fast system
    linearized at the equilibrium (u_e, u_e, 0) for depression level q."""
    if not c > 0:
        raise ValueError(f"wave speed must be positive, got c={c}")
    S = firing_rate_sigmoid(params) if S is None else S
    b2 = params.b ** 2
    k = q * S.deriv(u_e)
    f = FastCharPoly((1.0, 1.0 / c, -b2, -(b2 / c) * (1.0 - k)))
    if not f(0.0) < 0:
        raise SpectralError(f"equilibrium u={u_e} is not a saddle of the fast system (q S' >= 1)")
    lam = _bracketed_root(f, f.deriv, 0.0, params.b)
    mu = np.array([1.0 / (1.0 + c * lam), 1.0, lam])
    return lam, mu / np.linalg.norm(mu)
