"""Quick numerical checks behind ``--mode selftest``."""

from __future__ import annotations

import numpy as np

from . import energy as en
from . import nehari as nh
from .energy import ProblemConfig
from .fractional_ops import Grid, Side, build_operator


def _duality(rng):
    grid = Grid(1.0, 64)
    W = build_operator(grid, 0.8, Side.LEFT).matrix
    Wr = build_operator(grid, 0.8, Side.RIGHT).matrix
    u, v = rng.standard_normal(63), rng.standard_normal(64)
    lhs, rhs = grid.h * (W @ u) @ v, grid.h * u @ (Wr @ v)
    err = abs(lhs - rhs) / (1 + abs(lhs))
    return err <= 1e-12, f"relative mismatch {err:.2e}"


def _classical_limit(rng):
    grid = Grid(1.0, 8)
    W = build_operator(grid, 1.0).matrix
    expect = (np.eye(8, 7) - np.eye(8, 7, -1)) / grid.h
    return bool(np.array_equal(W, expect)), "alpha = 1 gives the backward difference"


def _gradient(rng):
    cfg = ProblemConfig(alpha=0.8, p=2.5, n=24)
    u = 0.5 * rng.standard_normal(cfg.n - 1)
    g = en.gradient(cfg, u)
    step = 1e-6 * (1 + np.abs(u).max())
    fd = np.array([(en.energy(cfg, u + step * e).total - en.energy(cfg, u - step * e).total) / (2 * step)
                   for e in np.eye(cfg.n - 1)])
    err = np.abs(fd - g).max() / np.abs(g).max()
    return err <= 1e-5, f"finite-difference mismatch {err:.2e}"


def _fiber(rng):
    cfg = ProblemConfig(alpha=0.9, p=2.0, n=32)
    u = rng.standard_normal(cfg.n - 1)
    s = np.geomspace(1e-6, 1e6, 10_000)
    changes = int(np.count_nonzero(np.diff(np.sign(nh.fiber_derivative(cfg, u, s)))))
    root = nh.project(cfg, u)
    again = nh.project(cfg, root.s * u).s
    ok = changes == 1 and abs(again - 1) <= 1e-9 and en.g_curvature(cfg, root.s * u) < 0
    return ok, f"{changes} sign change(s), re-projection s = {again:.12f}"


def _sigma(rng):
    sb = nh.compute_sigma(ProblemConfig())
    expect = 0.5 * 1.5**0.5 / 2
    return abs(sb.sigma - expect) <= 1e-2 * expect, f"sigma = {sb.sigma:.6f} (closed form {expect:.6f})"


def _solve(rng):
    cfg = ProblemConfig(n=64)
    rep = nh.minimize(cfg, nh.bump_profile(cfg))
    ok = rep.converged and rep.energy_m > rep.sigma_bound > 0
    return ok, f"energy {rep.energy_m:.6g} after {rep.iterations} iterations"


CHECKS = {
    "operator duality": _duality,
    "classical limit": _classical_limit,
    "gradient exactness": _gradient,
    "fiber uniqueness": _fiber,
    "mountain-pass floor": _sigma,
    "small solve": _solve,
}


def run_all(seed: int = 0):
    rng = np.random.default_rng(seed)
    return [(name, *fn(rng)) for name, fn in CHECKS.items()]
