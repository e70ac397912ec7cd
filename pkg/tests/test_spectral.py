import numpy as np
import pytest

from pulse_hunter.spectral import (SpectralError, fast_char_poly, fast_positive_eigenvalue,
                                   fast_unstable_direction, full_char_poly, full_positive_eigenvalue,
                                   jacobian_full, stable_root_count, unstable_eigenvector)


def test_g_reduces_to_x_times_f(params, landscape, rng):
    b = params.b
    for c in (0.05, 0.34, 2.0):
        f = fast_char_poly(params, landscape, c=c)
        g = full_char_poly(params, landscape, c=c, epsilon=0.0)
        for X in rng.uniform(-2 * b, 2 * b, 50):
            assert abs(g(X) - X * f(X)) < 1e-10 * max(1.0, abs(X) ** 4)


@pytest.mark.parametrize("c,eps", [(0.34, 0.005), (0.05, 0.1), (1.3, 0.02)])
def test_quartic_matches_determinant(params, landscape, c, eps):
    # independent oracle: numpy characteristic polynomial of the Jacobian
    B = jacobian_full(params, landscape, c=c, epsilon=eps)
    ref = np.poly(B)
    g = full_char_poly(params, landscape, c=c, epsilon=eps)
    assert np.allclose(g.coeffs, ref, rtol=1e-10, atol=1e-10)
    # and against the Jacobian by finite differences of the vector field
    from pulse_hunter.model import firing_rate_sigmoid, vector_field_full
    S = firing_rate_sigmoid(params)
    P = params.with_(c=c, epsilon=eps)
    J = np.empty((4, 4))
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        J[:, j] = (vector_field_full(landscape.p0 + e, P, S) - vector_field_full(landscape.p0 - e, P, S)) / (2 * h)
    assert np.allclose(J, B, rtol=1e-6, atol=1e-8)


def test_fast_sign_pattern_and_bound(params, landscape):
    for c in np.linspace(0.05, 5, 20):
        f = fast_char_poly(params, landscape, c=c)
        assert f(0.0) < 0 and f(-1 / c) > 0 and f(params.b) > 0
        lam = fast_positive_eigenvalue(params, landscape, c=c)
        assert 0 < lam < params.b
        assert abs(f(lam)) < 1e-10
        assert fast_positive_eigenvalue(params, landscape, c=1.01 * c) > lam


def test_f_at_minus_inverse_c(params, landscape, S):
    c = 0.34
    f = fast_char_poly(params, landscape, c=c)
    want = params.b ** 2 / c * S.deriv(landscape.u0) * landscape.q0
    assert f(-1 / c) == pytest.approx(want, rel=1e-12)


def test_full_eigenvalue_against_numpy(params, landscape):
    lam = full_positive_eigenvalue(params, landscape, c=0.34, epsilon=0.005)
    ev = np.linalg.eigvals(jacobian_full(params, landscape, c=0.34, epsilon=0.005))
    ref = max(ev.real)
    assert abs(lam - ref) < 1e-12
    # bisection oracle on g directly
    g = full_char_poly(params, landscape, c=0.34, epsilon=0.005)
    lo, hi = 0.0, params.b
    for _ in range(200):
        m = 0.5 * (lo + hi)
        lo, hi = (m, hi) if g(m) < 0 else (lo, m)
    assert abs(lam - 0.5 * (lo + hi)) < 1e-13


def test_full_eigenvalue_grows_with_eps(params, landscape):
    for c in np.linspace(0.05, 2.0, 10):
        l0 = full_positive_eigenvalue(params, landscape, c=c, epsilon=0.0)
        assert l0 == fast_positive_eigenvalue(params, landscape, c=c)
        prev = l0
        for eps in np.linspace(0.001, 0.1, 10):
            lam = full_positive_eigenvalue(params, landscape, c=c, epsilon=eps)
            assert lam > prev
            prev = lam


def test_g_sign_structure(params, landscape):
    g = full_char_poly(params, landscape, c=0.34, epsilon=0.005)
    assert g(0.0) < 0
    assert g.deriv(0.0) < 0
    xs = np.linspace(0, 3 * params.b, 2001)
    assert np.all(g.deriv(xs, 3) > 0)
    assert np.count_nonzero(np.diff(np.sign(g(xs)))) == 1


def test_unstable_eigenvector(params, landscape):
    d0 = unstable_eigenvector(params, landscape, c=0.34, epsilon=0.0)
    assert d0.mu[3] == 0.0
    d = unstable_eigenvector(params, landscape, c=0.34, epsilon=0.005)
    assert d.mu[0] > 0 and d.mu[1] > 0 and d.mu[2] > 0 and d.mu[3] < 0
    assert abs(np.linalg.norm(d.mu) - 1) < 1e-15
    B = jacobian_full(params, landscape, c=0.34, epsilon=0.005)
    assert np.linalg.norm(B @ d.mu - d.lambda1 * d.mu) < 1e-10
    assert d.residual < 1e-10


def test_stable_root_count_matches_numpy(params, landscape):
    for c, eps in ((0.34, 0.005), (0.1, 0.05), (0.34, 0.0)):
        rep = stable_root_count(params, landscape, c=c, epsilon=eps)
        ev = np.linalg.eigvals(jacobian_full(params, landscape, c=c, epsilon=eps))
        assert rep["stable"] == int(np.sum(ev.real < -1e-12))
    assert stable_root_count(params, landscape, c=0.34, epsilon=0.005)["stable"] == 3


def test_rejects_nonpositive_speed(params, landscape):
    with pytest.raises(ValueError):
        fast_char_poly(params, landscape, c=0.0)


def test_fast_direction_at_non_saddle_errors(params, landscape, S):
    # the middle root is not a saddle of the fast system
    with pytest.raises(SpectralError):
        fast_unstable_direction(params, landscape.um, landscape.q0, 0.3, S)
    lam, mu = fast_unstable_direction(params, landscape.u0, landscape.q0, 0.3, S)
    assert lam == pytest.approx(fast_positive_eigenvalue(params, landscape, c=0.3), rel=1e-13)
    assert mu[0] > 0
