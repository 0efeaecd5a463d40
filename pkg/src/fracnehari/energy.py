"""Discrete Kirchhoff energy, its exact gradient and the Nehari quantities.

With ``W`` the left operator and ``N(u) = h sum |W u|^p``::

    I(u) = ((a + b N)^p - a^p) / (b p^2) - h sum F(t_i, u_i)

Every formula here is the exact derivative of this discrete expression, so
gradients, ``G(u) = <I'(u), u>`` and the fiber map agree to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import ConfigError, DomainError
from .fractional_ops import FracOperator, Grid, GridFunction, Side, build_operator
from .function_space import SpaceParams, embedding_constant_cinf, embedding_constant_cp
from .nonlinearity import HypothesisReport, Nonlinearity, check_hypotheses, preset_power

OVERFLOW = 1e300
MIN_B_RATIO = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Parameters of the discrete problem and the solver tolerances.

    ``nl`` defaults to the power preset with ``mu = p^2 + 2``.  Construction
    validates the standing assumptions and, unless ``check_hypotheses`` is
    false, scans H1-H3.
    """

    alpha: float = 1.0
    p: float = 2.0
    a: float = 1.0
    b: float = 1.0
    T: float = 1.0
    n: int = 256
    nl: Nonlinearity | None = None
    restarts: int = 8
    seed: int = 0
    root_tol: float = 1e-10
    manifold_tol: float = 1e-8
    grad_tol: float = 1e-6
    max_iters: int = 10_000
    check_hypotheses: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError(f"p must exceed 1, got {self.p}", key="p")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must lie in (1/p, 1], got {self.alpha}", key="alpha")
        if not self.alpha * self.p > 1:
            raise ConfigError(
                f"alpha ≤ 1/p: alpha={self.alpha} must exceed 1/p={1 / self.p}", key="alpha"
            )
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}", key="a")
        if not self.b > 0:
            raise ConfigError(f"b must be positive, got {self.b}", key="b")
        if self.b < MIN_B_RATIO * self.a:
            raise ConfigError(f"b={self.b} is below 1e-12 * a; the energy would cancel catastrophically", key="b")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}", key="T")
        if int(self.n) != self.n or self.n < 4:
            raise ConfigError(f"n must be an integer >= 4, got {self.n}", key="n")
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise ConfigError(f"restarts must be a positive integer, got {self.restarts}", key="restarts")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}", key="max_iters")
        for key in ("root_tol", "manifold_tol", "grad_tol"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive", key=key)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "restarts", int(self.restarts))
        object.__setattr__(self, "max_iters", int(self.max_iters))
        if self.nl is None:
            object.__setattr__(self, "nl", preset_power(1.0, self.p**2 + 2.0, self.p))
        if self.check_hypotheses and not self.hypothesis_report.ok:
            failed = [h for h, ok in (("H1", self.hypothesis_report.h1_ok),
                                      ("H2", self.hypothesis_report.h2_ok),
                                      ("H3", self.hypothesis_report.h3_ok)) if not ok]
            raise ConfigError(
                f"nonlinearity {self.nl.spec} fails hypothesis scan {failed}; "
                f"witnesses {self.hypothesis_report.witnesses[:3]}",
                key="nonlinearity",
            )

    @cached_property
    def hypothesis_report(self) -> HypothesisReport:
        return check_hypotheses(self.nl, self.p, self.T)

    @cached_property
    def grid(self) -> Grid:
        return Grid(self.T, self.n)

    @property
    def h(self) -> float:
        return self.grid.h

    @cached_property
    def op(self) -> FracOperator:
        return build_operator(self.grid, self.alpha, Side.LEFT, p=self.p)

    @property
    def t(self) -> np.ndarray:
        return self.grid.interior

    @cached_property
    def space(self) -> SpaceParams:
        return SpaceParams(self.alpha, self.p, self.T)

    @cached_property
    def c_p(self) -> float:
        return embedding_constant_cp(self.space)

    @cached_property
    def c_inf(self) -> float:
        return embedding_constant_cinf(self.space)

    @cached_property
    def gram_factor(self):
        """Cholesky factor of ``h W^T W``, the metric used for dual norms."""
        W = self.op.matrix
        return linalg.cho_factor(self.h * (W.T @ W), lower=True)

    def echo(self) -> dict:
        return {
            "alpha": self.alpha, "p": self.p, "a": self.a, "b": self.b, "T": self.T,
            "n": self.n, "nonlinearity": self.nl.spec, "restarts": self.restarts,
            "seed": self.seed, "root_tol": self.root_tol, "manifold_tol": self.manifold_tol,
            "grad_tol": self.grad_tol, "max_iters": self.max_iters,
        }


@dataclass(frozen=True)
class EnergyBreakdown:
    kirchhoff_term: float
    potential_term: float
    total: float
    m_u: float
    norm_p: float
    overflow: bool = False


def values_of(cfg: ProblemConfig, u) -> np.ndarray:
    if isinstance(u, GridFunction):
        if u.grid != cfg.grid:
            raise DomainError(f"function lives on {u.grid}, problem on {cfg.grid}")
        return u.values
    v = np.asarray(u, dtype=float)
    if v.shape != (cfg.n - 1,):
        raise DomainError(f"expected {cfg.n - 1} interior values, got shape {v.shape}")
    return v


def phi_p(s, p: float) -> np.ndarray:
    """``|s|^(p-2) s`` with ``phi_p(0) = 0``."""
    s = np.asarray(s, dtype=float)
    return np.sign(s) * np.abs(s) ** (p - 1.0)


def norm_power(cfg: ProblemConfig, u) -> float:
    """``||u||_E^p = h sum |W u|^p``."""
    return float(cfg.h * np.sum(np.abs(cfg.op.matrix @ values_of(cfg, u)) ** cfg.p))


def kirchhoff_term(cfg: ProblemConfig, norm_p: float) -> float:
    """``((a + b N)^p - a^p) / (b p^2)`` without cancellation for small ``N``."""
    a, b, p = cfg.a, cfg.b, cfg.p
    with np.errstate(over="ignore"):
        return a**p * math.expm1(min(p * math.log1p(b * norm_p / a), 700.0)) / (b * p * p)


def energy(cfg: ProblemConfig, u) -> EnergyBreakdown:
    v = values_of(cfg, u)
    N = norm_power(cfg, v)
    kt = kirchhoff_term(cfg, N)
    with np.errstate(over="ignore", invalid="ignore"):
        pt = float(cfg.h * np.sum(cfg.nl.eval_F(cfg.t, v)))
    overflow = False
    if not math.isfinite(kt) or kt > OVERFLOW:
        kt, overflow = OVERFLOW, True
    if not math.isfinite(pt) or abs(pt) > OVERFLOW:
        pt, overflow = math.copysign(OVERFLOW, pt if not math.isnan(pt) else 1.0), True
    return EnergyBreakdown(kt, pt, kt - pt, cfg.a + cfg.b * N, N, overflow)


def operator_term(cfg: ProblemConfig, u) -> np.ndarray:
    """``M_u^(p-1) h W^T phi_p(W u)``, the gradient of the Kirchhoff term."""
    v = values_of(cfg, u)
    W, h, p = cfg.op.matrix, cfg.h, cfg.p
    Du = W @ v
    M = cfg.a + cfg.b * h * np.sum(np.abs(Du) ** p)
    return M ** (p - 1.0) * h * (W.T @ phi_p(Du, p))


def gradient(cfg: ProblemConfig, u) -> np.ndarray:
    """``M_u^(p-1) h W^T phi_p(W u) - h f(t, u)``, the exact gradient of :func:`energy`."""
    v = values_of(cfg, u)
    return operator_term(cfg, v) - cfg.h * cfg.nl.eval_f(cfg.t, v)


def g_value(cfg: ProblemConfig, u) -> float:
    """Nehari functional ``G(u) = M_u^(p-1) N(u) - h sum f(t_i, u_i) u_i``."""
    v = values_of(cfg, u)
    N = norm_power(cfg, v)
    M = cfg.a + cfg.b * N
    return float(M ** (cfg.p - 1.0) * N - cfg.h * np.dot(cfg.nl.eval_f(cfg.t, v), v))


def g_curvature(cfg: ProblemConfig, u) -> float:
    """``<G'(u), u>``; negative on the Nehari set under H1."""
    v = values_of(cfg, u)
    a, b, p, h = cfg.a, cfg.b, cfg.p, cfg.h
    N = norm_power(cfg, v)
    M = a + b * N
    fu = cfg.nl.eval_f(cfg.t, v)
    fxu = cfg.nl.eval_fx(cfg.t, v)
    return float(
        b * p * (p - 1.0) * M ** (p - 2.0) * N * N
        + p * M ** (p - 1.0) * N
        - h * np.dot(fxu, v * v)
        - h * np.dot(fu, v)
    )


def dual_norm(cfg: ProblemConfig, g) -> float:
    """``sqrt(g^T (h W^T W)^-1 g)``: size of a gradient measured against the
    ``L^2``-type energy metric, which is independent of the grid size."""
    g = np.asarray(g, dtype=float)
    return float(math.sqrt(max(0.0, float(g @ linalg.cho_solve(cfg.gram_factor, g)))))
