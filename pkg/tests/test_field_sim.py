import math

import numpy as np
import pytest

from pulse_hunter.field_sim import (
    FieldState, NoPulse, convolve_exponential, initial_state, measure_pulse_speed,
    q_bounds_check, simulate, step_field, write_snapshots_csv,
)

B = 4.5


def _direct_conv(f, x, b):
    # dense quadrature of the kernel against the piecewise-linear interpolant,
    # with f continued by its end values
    xf = np.linspace(x[0] - 12 / b, x[-1] + 12 / b, 40001)
    ff = np.interp(xf, x, f)
    out = np.empty_like(f)
    for i, xi in enumerate(x):
        out[i] = np.trapezoid(0.5 * b * np.exp(-b * np.abs(xi - xf)) * ff, xf)
    return out


@pytest.mark.parametrize("boundary", ["free", "periodic"])
def test_constant_reproduced(boundary):
    n, L = 1000, 20.0
    dx = L / n
    out = convolve_exponential(np.ones(n), B, dx, boundary)
    assert np.max(np.abs(out - 1.0)) < 1e-10


def test_delta_reproduces_kernel():
    n, L = 4001, 20.0
    x = np.linspace(-L / 2, L / 2, n)
    dx = x[1] - x[0]
    f = np.zeros(n)
    f[n // 2] = 1.0 / dx
    out = convolve_exponential(f, B, dx)
    ker = 0.5 * B * np.exp(-B * np.abs(x))
    far = np.abs(x) > 5 * dx
    assert np.max(np.abs(out[far] - ker[far]) / ker[far]) < 1e-3


def test_matches_direct_quadrature():
    x = np.linspace(-3, 3, 301)
    f = np.exp(-x ** 2) + 0.3 * np.tanh(2 * x)
    out = convolve_exponential(f, B, x[1] - x[0])
    assert np.max(np.abs(out - _direct_conv(f, x, B))) < 1e-5


@pytest.mark.parametrize("m", [1, 4, 16])
def test_fourier_multiplier(m):
    n, L = 4096, 40.0
    x = -L / 2 + L * np.arange(n) / n
    k = 2 * math.pi * m / L
    out = convolve_exponential(np.cos(k * x), B, L / n, "periodic")
    assert np.max(np.abs(out - np.cos(k * x) * B ** 2 / (B ** 2 + k ** 2))) < 1e-4


def test_uniform_rest_state_fixed(params, landscape, S):
    p = params.with_(epsilon=0.005)
    x = np.linspace(-10, 10, 512)
    st = FieldState(x, np.full(512, landscape.u0), np.full(512, landscape.q0))
    for _ in range(50):
        st = step_field(st, p, S, 0.05)
    assert np.max(np.abs(st.u - landscape.u0)) < 1e-12
    assert np.max(np.abs(st.q - landscape.q0)) < 1e-12


def test_dt_limit(params, landscape, S):
    st = initial_state(landscape, 10.0, 64, kappa=params.kappa)
    with pytest.raises(ValueError):
        step_field(st, params, S, 0.11)


def test_state_validation():
    with pytest.raises(ValueError):
        FieldState(np.zeros(1), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        FieldState(np.arange(3.0), np.zeros(3), np.zeros(3), boundary="wrap")


def test_synthetic_translating_profile():
    x = np.linspace(-20, 20, 2001)
    snaps = [(t, x, 1.0 / (1.0 + np.exp(4 * (x - 0.5 * t - 1.0)))) for t in np.arange(0, 20, 0.5)]
    m = measure_pulse_speed(snaps, 0.22)
    assert abs(m.speed - 0.5) < 1e-3
    assert m.n == 40
    assert m.r2 > 0.9999


def test_too_few_crossings():
    x = np.linspace(0, 1, 11)
    with pytest.raises(NoPulse):
        measure_pulse_speed([(float(t), x, x) for t in range(5)], 0.5)


def test_subthreshold_stimulus_decays(params, landscape, S):
    p = params.with_(epsilon=0.005)
    st = initial_state(landscape, 20.0, 1024, stim_height=0.05)
    snaps = simulate(st, p, S, dt=0.05, t_end=30.0, every=1.0)
    with pytest.raises(NoPulse):
        measure_pulse_speed(snaps, params.kappa, t_min=5.0)


@pytest.fixture(scope="module")
def pulse_run(params, landscape, S):
    p = params.with_(epsilon=0.005)
    st = initial_state(landscape, 40.0, 4096, kappa=params.kappa)
    return simulate(st, p, S, dt=0.01, t_end=60.0, every=1.0)


def test_pulses_emerge_both_ways(pulse_run, params):
    last = pulse_run[-1]
    above = np.flatnonzero(last.u > params.kappa)
    xc = -10.0
    assert above.size
    assert last.x[above].min() < xc - 5 and last.x[above].max() > xc + 5


def test_pulse_speed_near_shooting(pulse_run, params, speeds):
    m = measure_pulse_speed(pulse_run, params.kappa, t_min=15.0, edge_margin=2.0)
    assert m.n >= 10
    assert abs(m.speed - speeds.c_star) / speeds.c_star < 0.05


def test_q_bounds_after_burn_in(pulse_run, params):
    p = params.with_(epsilon=0.005)
    for s in pulse_run[10:]:
        assert q_bounds_check(s, p)["ok"]


def test_fast_front_at_zero_epsilon(params, landscape, S, c0):
    # q frozen at q0; a monotone step from u+ down to u0 propagates at about c0*
    p = params.with_(epsilon=0.0)
    n, L = 4096, 40.0
    x = np.linspace(-L / 2, L / 2, n)
    u = np.where(x < -10, landscape.uplus, landscape.u0)
    st = FieldState(x, u, np.full(n, landscape.q0))
    snaps = simulate(st, p, S, dt=0.02, t_end=40.0, every=1.0)
    m = measure_pulse_speed(snaps, params.kappa, t_min=10.0, edge_margin=2.0)
    assert abs(m.speed - c0["c0_star"]) / c0["c0_star"] < 0.01


def test_domain_doubling(params, landscape, S, pulse_run):
    p = params.with_(epsilon=0.005)
    m1 = measure_pulse_speed(pulse_run, params.kappa, t_min=15.0, edge_margin=2.0)
    st = initial_state(landscape, 80.0, 8192, kappa=params.kappa, stim_center=-10.0)
    snaps = simulate(st, p, S, dt=0.01, t_end=60.0, every=1.0)
    m2 = measure_pulse_speed(snaps, params.kappa, t_min=15.0, edge_margin=2.0)
    assert abs(m2.speed - m1.speed) / m1.speed < 0.005


def test_snapshot_csv(tmp_path, pulse_run):
    path = tmp_path / "snaps.csv"
    write_snapshots_csv(path, pulse_run[:2], stride=512)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,u,q"
    assert len(lines) == 1 + 2 * 8
