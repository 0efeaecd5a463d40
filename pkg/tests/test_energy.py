import math

import numpy as np
import pytest

from fracnehari import nehari as nh
from fracnehari.energy import (
    ProblemConfig,
    dual_norm,
    energy,
    g_curvature,
    g_value,
    gradient,
    norm_power,
    phi_p,
)
from fracnehari.errors import ConfigError, DomainError
from fracnehari.fractional_ops import GridFunction
from fracnehari.nonlinearity import preset_power

from oracles import fd_gradient, random_config
import plugin_nl


def test_config_validation():
    ProblemConfig()
    with pytest.raises(ConfigError, match="1/p"):
        ProblemConfig(alpha=0.4, p=2)
    with pytest.raises(ConfigError):
        ProblemConfig(a=0.0)
    with pytest.raises(ConfigError):
        ProblemConfig(b=-1.0)
    with pytest.raises(ConfigError, match="1e-12"):
        ProblemConfig(a=1.0, b=1e-13)
    with pytest.raises(ConfigError):
        ProblemConfig(n=3)
    with pytest.raises(ConfigError, match="H1"):
        ProblemConfig(nl=plugin_nl.plap(2.0))
    ProblemConfig(nl=plugin_nl.plap(2.0), check_hypotheses=False)


def test_default_nonlinearity():
    cfg = ProblemConfig(p=3.0, alpha=0.9)
    assert cfg.nl.mu == 11.0 and cfg.nl.name == "power"


def test_energy_of_zero():
    cfg = ProblemConfig(n=32)
    e = energy(cfg, np.zeros(31))
    assert e.total == 0.0 and e.m_u == cfg.a
    np.testing.assert_array_equal(gradient(cfg, np.zeros(31)), 0.0)
    assert g_value(cfg, np.zeros(31)) == 0.0
    assert g_curvature(cfg, np.zeros(31)) == 0.0


def test_energy_of_sine_matches_analytic():
    cfg = ProblemConfig(n=512)
    u = GridFunction.from_callable(cfg.grid, lambda t: np.sin(np.pi * t))
    # ∫u'^2 = pi^2/2, ∫u^6 = 5/16
    expect = 0.25 * (1 + math.pi**2 / 2) ** 2 - (5 / 16) / 6 - 0.25
    assert energy(cfg, u).total == pytest.approx(expect, rel=1e-2)


def test_breakdown_identity():
    rng = np.random.default_rng(2)
    cfg = random_config(rng)
    e = energy(cfg, rng.standard_normal(cfg.n - 1))
    assert e.total == pytest.approx(e.kirchhoff_term - e.potential_term, rel=1e-12)
    assert e.m_u >= cfg.a


def test_small_norm_energy_has_no_cancellation():
    cfg = ProblemConfig(n=32)
    u = 1e-9 * np.sin(np.pi * cfg.t)
    e = energy(cfg, u)
    # leading term a^(p-1) N / p
    assert e.kirchhoff_term == pytest.approx(norm_power(cfg, u) / 2, rel=1e-8)


def test_energy_along_ray_goes_negative():
    cfg = ProblemConfig(n=64)
    u = np.sin(np.pi * cfg.t)
    assert energy(cfg, 1e3 * u).total < 0


def test_overflow_is_flagged():
    cfg = ProblemConfig(p=3.0, alpha=0.9, n=16)
    e = energy(cfg, 1e40 * np.ones(15))
    assert e.overflow and math.isfinite(e.total)


def test_phi_p():
    np.testing.assert_array_equal(phi_p([0.0, 2.0, -2.0], 3.0), [0.0, 4.0, -4.0])
    assert phi_p(0.0, 1.5) == 0.0


def test_wrong_grid_rejected():
    cfg = ProblemConfig(n=16)
    with pytest.raises(DomainError):
        energy(cfg, np.zeros(16))


def test_gradient_matches_finite_differences(rng):
    cfg = random_config(rng)
    u = rng.uniform(0.2, 1.5) * rng.standard_normal(cfg.n - 1)
    g = gradient(cfg, u)
    fd = fd_gradient(cfg, u, 1e-6 * (1 + np.abs(u).max()))
    assert np.abs(fd - g).max() <= 1e-5 * np.abs(g).max()


def test_euler_identity(rng):
    cfg = random_config(rng)
    u = rng.standard_normal(cfg.n - 1)
    assert gradient(cfg, u) @ u == pytest.approx(g_value(cfg, u), rel=1e-12)


def test_small_functions_lie_outside_nehari():
    cfg = ProblemConfig(n=64)
    u = 1e-3 * np.sin(np.pi * cfg.t)
    assert g_value(cfg, u) > 0


def test_g_value_sign_change_along_ray():
    cfg = ProblemConfig(n=64)
    u = np.sin(2 * np.pi * cfg.t)
    xi = 1e3
    assert energy(cfg, xi * u).total < 0 and g_value(cfg, xi * u) < 0


def test_curvature_matches_directional_derivative(rng):
    cfg = random_config(rng)
    u = rng.standard_normal(cfg.n - 1)
    eps = 1e-6
    fd = (g_value(cfg, (1 + eps) * u) - g_value(cfg, (1 - eps) * u)) / (2 * eps)
    assert g_curvature(cfg, u) == pytest.approx(fd, rel=1e-5)


def test_curvature_negative_on_manifold(rng):
    cfg = random_config(rng)
    u = nh.project_values(cfg, rng.standard_normal(cfg.n - 1))
    assert abs(g_value(cfg, u)) <= 1e-8 * (1 + abs(energy(cfg, u).total))
    assert g_curvature(cfg, u) < 0


def test_mountain_pass_smallness():
    cfg = ProblemConfig(n=64)
    sb = nh.compute_sigma(cfg)
    rng = np.random.default_rng(7)
    for _ in range(200):
        u = rng.standard_normal(cfg.n - 1)
        u *= rng.uniform(1e-4, 1.0) * sb.delta / np.abs(u).max()
        assert energy(cfg, u).total > 0


def test_dual_norm_is_grid_independent():
    vals = []
    for n in (64, 256):
        cfg = ProblemConfig(n=n)
        # gradient of the linear functional v -> ∫ v, i.e. h * ones
        vals.append(dual_norm(cfg, cfg.h * np.ones(n - 1)))
    assert vals[0] == pytest.approx(vals[1], rel=2e-2)
    assert vals[1] == pytest.approx(1 / math.sqrt(12), rel=1e-2)
