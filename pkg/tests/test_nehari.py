import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracnehari import nehari as nh
from fracnehari.energy import ProblemConfig, energy, g_value, norm_power
from fracnehari.errors import GroundStateError, ProjectionError, StagnationError
from fracnehari.nonlinearity import preset_power

from oracles import balanced_profile, random_config, second_difference
import plugin_nl

S_SCAN = np.geomspace(1e-6, 1e6, 10_000)


@pytest.fixture(scope="module")
def default_cfg():
    return ProblemConfig()


def test_fiber_value_limits(default_cfg):
    u = np.sin(np.pi * default_cfg.t)
    assert nh.fiber_value(default_cfg, u, 1e-9) == pytest.approx(0.0, abs=1e-12)
    assert nh.fiber_value(default_cfg, u, 1e3) < 0
    assert nh.fiber_value(default_cfg, u, 1.0) == energy(default_cfg, u).total
    assert nh.Fiber(default_cfg, u).value(1.0) == pytest.approx(energy(default_cfg, u).total, rel=1e-13)


def test_fiber_derivative_identity(rng):
    cfg = random_config(rng)
    fib = nh.Fiber(cfg, rng.standard_normal(cfg.n - 1))
    for s in np.geomspace(1e-3, 1e3, 25):
        d = float(fib.derivative(s))
        via_g = g_value(cfg, s * fib.u) / s
        scale = fib.N * (cfg.a + cfg.b * s**cfg.p * fib.N) ** (cfg.p - 1) * s ** (cfg.p - 1)
        assert abs(d - via_g) <= 1e-10 * max(abs(d), scale)


def test_fiber_derivative_positive_near_zero(rng):
    cfg = random_config(rng)
    assert nh.fiber_derivative(cfg, rng.standard_normal(cfg.n - 1), 1e-4) > 0


def test_fiber_derivatives_match_finite_differences(rng):
    cfg = random_config(rng)
    fib = nh.Fiber(cfg, rng.standard_normal(cfg.n - 1))
    for s in (0.05, 0.3, 1.7):
        e = 1e-6 * s
        fd1 = (nh.fiber_value(cfg, fib.u, s + e) - nh.fiber_value(cfg, fib.u, s - e)) / (2 * e)
        assert float(fib.derivative(s)) == pytest.approx(fd1, rel=1e-5, abs=1e-7 * abs(fib.value(s)))
        fd2 = (fib.derivative(s + e) - fib.derivative(s - e)) / (2 * e)
        assert float(fib.second(s)) == pytest.approx(fd2, rel=1e-5)


def test_projection_of_manifold_point_is_one(rng):
    cfg = random_config(rng)
    u = rng.standard_normal(cfg.n - 1)
    root = nh.project(cfg, u)
    lo, hi = root.bracket
    assert lo <= root.s <= hi
    assert nh.project(cfg, root.s * u).s == pytest.approx(1.0, abs=10 * cfg.root_tol)


def test_bracket_signs():
    rng = np.random.default_rng(11)
    cfg = random_config(rng)
    u = rng.standard_normal(cfg.n - 1)
    root = nh.project(cfg, u, polish=False)
    lo, hi = root.bracket
    assert nh.fiber_derivative(cfg, u, lo) > 0 > nh.fiber_derivative(cfg, u, hi)
    assert hi / lo - 1 <= 1e-12
    assert root.residual <= cfg.root_tol * (1 + abs(root.value))


def test_projection_against_dense_scan():
    cfg = ProblemConfig(a=1.0, b=0.5, n=48, nl=preset_power(1.4, 7.0, 2.0))
    u = np.random.default_rng(1).standard_normal(cfg.n - 1)
    root = nh.project(cfg, u)
    # scalar equation N (a + b s^p N)^(p-1) s^(p-1) = kappa s^(mu-1) h sum |u|^mu
    N = norm_power(cfg, u)
    A = 1.4 * cfg.h * np.sum(np.abs(u) ** 7.0)
    lhs = N * (cfg.a + cfg.b * S_SCAN**2 * N) * S_SCAN
    rhs = A * S_SCAN**6
    sign = np.sign(lhs - rhs)
    k = np.flatnonzero(np.diff(sign))
    assert k.size == 1
    assert S_SCAN[k[0]] <= root.s <= S_SCAN[k[0] + 1]


def test_projection_is_fiber_maximum(rng):
    cfg = random_config(rng)
    u = rng.standard_normal(cfg.n - 1)
    root = nh.project(cfg, u)
    fib = nh.Fiber(cfg, u)
    vals = fib.value(np.geomspace(1e-3, 1e3, 4000))
    assert root.value >= vals.max() - 1e-12 * abs(root.value)


def test_projection_failure_for_linear_nonlinearity():
    # f = kappa x with p = 2: g_u'(s) = s (M N - kappa ||u||^2) never changes sign when kappa is small
    cfg = ProblemConfig(n=16, nl=plugin_nl.plap(2.0, kappa=0.01), check_hypotheses=False)
    with pytest.raises(ProjectionError):
        nh.project(cfg, np.ones(15))
    with pytest.raises(ProjectionError):
        nh.project(cfg, np.zeros(15))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fiber_root_unique(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng)
    d = nh.fiber_derivative(cfg, balanced_profile(cfg, rng, spread=4.0), np.geomspace(nh.S_MIN, nh.S_MAX, 10_000))
    sign = np.sign(d)
    assert sign[0] > 0 and sign[-1] < 0
    assert np.count_nonzero(np.diff(sign)) == 1


def test_compute_sigma_closed_form(default_cfg):
    sb = nh.compute_sigma(default_cfg)
    assert sb.epsilon == 0.5
    assert sb.delta == pytest.approx(1.5**0.25, rel=1e-9)
    assert sb.rho == pytest.approx(1.5**0.25, rel=1e-9)
    assert sb.sigma == pytest.approx(0.5 * math.sqrt(1.5) / 2, rel=1e-9)


def test_sigma_delta_shrinks_with_kappa():
    deltas = [nh.compute_sigma(ProblemConfig(n=16, nl=preset_power(k, 6.0, 2.0))).delta for k in (0.5, 1.0, 2.0)]
    assert deltas[0] > deltas[1] > deltas[2] > 0


def test_norm_bound_positive(default_cfg):
    B = nh.norm_bound(default_cfg, 10.0)
    assert B > 0
    # the defining equation holds at B
    a, b, p, mu = 1.0, 1.0, 2.0, 6.0
    rhs = (a + b * B**p) ** (p - 1) * ((1 / p**2 - 1 / mu) * B**p + a / (b * p * p)) - a**p / (b * p * p)
    assert rhs == pytest.approx(11.0, rel=1e-10)


@pytest.fixture(scope="module")
def classical_solution():
    cfg = ProblemConfig(n=512)
    return cfg, nh.minimize(cfg, nh.bump_profile(cfg))


def test_minimize_converges(classical_solution):
    cfg, rep = classical_solution
    assert rep.converged
    assert rep.nehari_residual <= cfg.manifold_tol
    assert rep.grad_residual <= cfg.grad_tol
    assert rep.energy_m >= rep.sigma_bound > 0


def test_minimize_trace_monotone(classical_solution):
    cfg, rep = classical_solution
    e = np.array([t.energy for t in rep.trace])
    assert np.all(np.diff(e) <= 1e-13 * np.abs(e[1:]))
    assert max(t.norm_E for t in rep.trace) <= 2 * rep.norm_bound


def test_classical_kirchhoff_ode_residual(classical_solution):
    cfg, rep = classical_solution
    full = rep.solution.full()
    du = np.diff(full) / cfg.h
    M = cfg.a + cfg.b * cfg.h * np.sum(du**2)
    u = full[1:-1]
    res = M * (-second_difference(full, cfg.h)) - u**5
    assert np.abs(res).max() <= 1e-2 * np.abs(u**5).max()


def test_minimize_fractional_and_general_p():
    for cfg in (ProblemConfig(alpha=0.7, n=64), ProblemConfig(alpha=0.8, p=3.0, n=64),
                ProblemConfig(alpha=0.9, p=1.5, n=64), ProblemConfig(n=64, nl=plugin_nl.modulated(2.0))):
        rep = nh.minimize(cfg, nh.bump_profile(cfg))
        assert rep.converged, cfg
        assert rep.energy_m > rep.sigma_bound


def test_minimize_max_iters_reports_unconverged(default_cfg):
    rep = nh.minimize(default_cfg, nh.bump_profile(default_cfg), max_iters=1)
    assert not rep.converged and rep.iterations == 1


def test_minimize_stagnation(monkeypatch):
    cfg = ProblemConfig(n=32)
    monkeypatch.setattr(nh, "ARMIJO", 1e12)
    with pytest.raises(StagnationError):
        nh.minimize(cfg, nh.bump_profile(cfg))


def test_ground_state_reproducible_and_parallel_safe():
    cfg = ProblemConfig(n=64, restarts=3, seed=5)
    a = nh.ground_state(cfg)
    b = nh.ground_state(cfg, workers=3)
    assert a.converged and a.restarts_used == 4 and a.seed == 5
    np.testing.assert_array_equal(a.solution.values, b.solution.values)
    assert a.energy_m == b.energy_m


def test_ground_state_all_fail(monkeypatch):
    cfg = ProblemConfig(n=32, restarts=2)
    monkeypatch.setattr(nh, "ARMIJO", 1e12)
    with pytest.raises(GroundStateError) as info:
        nh.ground_state(cfg)
    assert len(info.value.failures) == 3


def test_tie_break_prefers_smaller_residual():
    base = dict(solution=None, sigma_bound=0.1, rho=1, delta=1, epsilon=0.5, m_u=1, norm_E=1, norm_sup=1,
                nehari_residual=0, iterations=1, converged=True)
    r1 = nh.SolveReport(energy_m=1.0, grad_residual=1e-7, **base)
    r2 = nh.SolveReport(energy_m=1.0 + 1e-9, grad_residual=1e-8, **base)
    r3 = nh.SolveReport(energy_m=0.5, grad_residual=1e-6, converged=False,
                        **{k: v for k, v in base.items() if k != "converged"})
    assert nh._better(r2, r1) and not nh._better(r1, r2)
    assert not nh._better(r3, r1)
