import math

import mpmath as mp
import numpy as np
import pytest
from scipy.optimize import brentq

from pulse_hunter.model import (FAYE, ConditionViolation, ModelParams, check_invariant_regions,
                                compute_landscape, derivative_tower, firing_rate_custom,
                                firing_rate_sigmoid, h_prime, maxwell_integral, nullcline_roots,
                                prop2_identities, vector_field_fast, vector_field_full)

mp.mp.dps = 40


def _S_mp(u, lam=20, kap=0.22):
    return 1 / (1 + mp.exp(lam * (kap - mp.mpf(u))))


def test_sigmoid_midpoint_and_saturation(S):
    assert S.value(0.22) == 0.5
    assert S.value(1e6) == 1.0
    assert S.value(-1e6) == 0.0
    assert np.all(np.isfinite(S.value(np.array([-1e300, 1e300]))))


@pytest.mark.parametrize("u", [0.0, -0.3, 0.1, 0.22, 0.5, 1.4])
def test_sigmoid_against_high_precision(S, u):
    ref = _S_mp(u)
    assert S.value(u) == pytest.approx(float(ref), rel=4e-15)
    for k, f in ((1, S.deriv), (2, S.d2), (3, S.d3)):
        dref = float(mp.diff(lambda x: _S_mp(x), mp.mpf(u), k))
        assert f(u) == pytest.approx(dref, rel=1e-12, abs=1e-12)


def test_sigmoid_value_at_zero(S):
    assert S.value(0.0) == pytest.approx(1 / (1 + math.exp(4.4)), rel=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(b=0)
    with pytest.raises(ValueError):
        ModelParams(beta=-1)
    with pytest.raises(ValueError):
        ModelParams(epsilon=-0.1)
    with pytest.raises(ValueError):
        vector_field_full(np.zeros(4), FAYE.with_(c=0.0), firing_rate_sigmoid(FAYE))


def test_landscape_against_bisection_oracle(params, S, landscape):
    L = landscape
    beta = params.beta
    Sv = lambda u: 1 / (1 + math.exp(20 * (0.22 - u)))  # noqa: E731
    u0 = brentq(lambda u: u * (1 + beta * Sv(u)) - Sv(u), 0.0, 0.1, xtol=1e-15)
    q0 = 1 / (1 + beta * Sv(u0))
    g = lambda u: u - q0 * Sv(u)  # noqa: E731
    um = brentq(g, 0.05, 0.2, xtol=1e-15)
    up = brentq(g, 0.5, 1.2, xtol=1e-15)
    hp = lambda u: Sv(u) - u * 20 * Sv(u) * (1 - Sv(u))  # noqa: E731
    uk = brentq(hp, um, up, xtol=1e-15)
    for a, b in ((L.u0, u0), (L.q0, q0), (L.um, um), (L.uplus, up), (L.u_knee, uk)):
        assert abs(a - b) < 1e-12


def test_landscape_invariants(params, S, landscape):
    L = landscape
    assert all(L.flags.values())
    assert abs(L.u0 - L.q0 * S.value(L.u0)) < 1e-12
    assert abs(L.q0 * (1 + params.beta * S.value(L.u0)) - 1) < 1e-12
    assert L.u0 < L.um < L.u_knee < L.uplus
    assert 0 < L.q0 < 1 and L.u0 > 0 and L.uplus < 1
    assert L.q_min < L.q0
    assert h_prime(L.u0, S) > 0 and h_prime(L.um, S) < 0 and h_prime(L.uplus, S) > 0


def test_maxwell_against_mpmath(landscape):
    L = landscape
    ref = mp.quad(lambda u: L.q0 * _S_mp(u) - u, [L.u0, 0.22, L.uplus])
    assert L.maxwell_integral == pytest.approx(float(ref), abs=1e-12)
    S = firing_rate_sigmoid(FAYE)
    half = maxwell_integral(L.q0, L.u0, 0.5 * (L.u0 + L.uplus), S) + \
        maxwell_integral(L.q0, 0.5 * (L.u0 + L.uplus), L.uplus, S)
    assert abs(half - L.maxwell_integral) < 1e-10


def test_small_beta_fails_condition_3():
    P = FAYE.with_(beta=1e-3)
    with pytest.raises(ConditionViolation) as ei:
        compute_landscape(P)
    assert ei.value.condition == 3


def test_small_beta_degenerates_to_u_equals_S():
    # with beta -> 0 the equilibrium equation becomes u = S(u): three roots
    S = firing_rate_sigmoid(FAYE)
    r = nullcline_roots(1.0, S)
    assert len(r) == 3
    for u in r:
        assert abs(u - S.value(u)) < 1e-12


def test_condition_1_violation_custom():
    S = firing_rate_custom(lambda u: 0.5 + 0.0 * np.asarray(u), lambda u: 0.0 * np.asarray(u))
    with pytest.raises(ConditionViolation) as ei:
        compute_landscape(FAYE, S)
    assert ei.value.condition == 1


def test_condition_2_violation_custom():
    # almost linear S: h = u/S(u) is monotone
    S = firing_rate_custom(lambda u: 1 / (1 + np.exp(-0.5 * np.asarray(u))),
                           lambda u: 0.5 * np.exp(-0.5 * np.asarray(u)) / (1 + np.exp(-0.5 * np.asarray(u))) ** 2)
    with pytest.raises(ConditionViolation) as ei:
        compute_landscape(FAYE, S)
    assert ei.value.condition == 2


def test_vector_fields_at_equilibria(params, S, landscape):
    L = landscape
    for eps in (0.0, 0.005):
        p = params.with_(epsilon=eps, c=0.3)
        assert np.max(np.abs(vector_field_full(L.p0, p, S))) < 1e-12
    p = params.with_(c=0.3)
    assert np.max(np.abs(vector_field_fast([L.u0, L.u0, 0], L.q0, p, S))) < 1e-12
    assert np.max(np.abs(vector_field_fast([L.um, L.um, 0], L.q0, p, S))) < 1e-12
    assert np.max(np.abs(vector_field_fast([L.u_knee, L.u_knee, 0], L.q_min, p, S))) < 1e-12


def test_vector_field_hand_value(params, S):
    p = params.with_(epsilon=0.005, c=0.3)
    y = np.array([0.3, 0.35, 0.1, 0.8])
    s = 1 / (1 + math.exp(20 * (0.22 - 0.3)))
    want = [(0.35 - 0.3) / 0.3, 0.1, 4.5 ** 2 * (0.35 - 0.8 * s), (0.005 / 0.3) * (1 - 0.8 - 5 * 0.8 * s)]
    assert np.allclose(vector_field_full(y, p, S), want, rtol=1e-14, atol=0)
    assert vector_field_full(y, p.with_(epsilon=0.0), S)[3] == 0.0


def _num_second_derivative(p, params, S, h):
    # independent oracle: central differences along an accurately integrated orbit
    from scipy.integrate import solve_ivp
    f = lambda t, y: vector_field_full(y, params, S)  # noqa: E731
    fw = solve_ivp(f, (0, h), p, rtol=1e-13, atol=1e-15, method="DOP853").y[:, -1]
    bw = solve_ivp(f, (0, -h), p, rtol=1e-13, atol=1e-15, method="DOP853").y[:, -1]
    return (fw - 2 * np.asarray(p) + bw) / h ** 2


def _num_tower(p, params, S, h=2e-3):
    # Richardson step removes the O(h^2) term
    a = _num_second_derivative(p, params, S, h)
    b = _num_second_derivative(p, params, S, h / 2)
    return (4 * b - a) / 3


def test_derivative_tower_second_order_against_integration(params, S):
    P = params.with_(epsilon=0.05, c=0.3)
    p = np.array([0.3, 0.35, 0.1, 0.8])
    D = derivative_tower(p, P, S)
    num = _num_tower(p, P, S)
    for i, k in enumerate("uvwq"):
        assert D[k][1] == pytest.approx(num[i], rel=1e-6, abs=1e-9)


def test_prop2_identities_on_constructed_points(params, S):
    P = params.with_(epsilon=0.005, c=0.3)
    # u' = 0: v = u
    r = prop2_identities([0.4, 0.4, 0.7, 0.8], P, S)
    assert r[0].applicable and abs(r[0].residual) < 1e-10
    # q' = 0: q = 1/(1 + beta S(u))
    u = 0.3
    q = 1 / (1 + P.beta * S.value(u))
    r = prop2_identities([u, 0.5, 0.2, q], P, S)
    assert r[3].applicable and abs(r[3].residual) < 1e-10
    # q' = u' = v' = 0
    r = prop2_identities([u, u, 0.0, q], P, S)
    assert r[6].applicable and abs(r[6].residual) < 1e-10
    assert all(abs(x.residual) < 1e-10 for x in r if x.applicable)


def test_invariant_regions(params, S):
    rep = check_invariant_regions(params.with_(epsilon=0.005, c=0.3), S, n=200, seed=1)
    for region in ("lower", "upper"):
        assert rep[region]["samples"] == 200
        assert rep[region]["passed"] == 200
