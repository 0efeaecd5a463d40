"""Discrete norms and embedding constants for the fractional space.

All integrals use the rectangle rule with weight ``h``.  Interior samples of
``u`` and the cell samples of its left derivative both cover ``[0, T]``
because the omitted boundary values are zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fractional_ops import FracOperator, GridFunction, Side, apply


@dataclass(frozen=True)
class SpaceParams:
    alpha: float
    p: float
    T: float = 1.0

    def __post_init__(self):
        if not self.p > 1:
            raise DomainError(f"exponent p must exceed 1, got {self.p}")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"order alpha must lie in (0, 1], got {self.alpha}")
        if not self.T > 0:
            raise DomainError(f"horizon T must be positive, got {self.T}")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def embeds_in_sup(self) -> bool:
        return self.alpha * self.p > 1.0


def lp_norm(values, p: float, h: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    return float((h * np.sum(v**p)) ** (1.0 / p))


def sup_norm(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(v))) if v.size else 0.0


def space_norm(u: GridFunction, op: FracOperator, p: float) -> float:
    """``|| D^alpha u ||_{L^p}`` with the left operator ``op``."""
    if op.side is not Side.LEFT:
        raise DomainError("the space norm uses the left derivative")
    return lp_norm(apply(op, u), p, op.h)


def embedding_constant_cp(params: SpaceParams) -> float:
    """``T^alpha / Gamma(alpha + 1)``."""
    return params.T**params.alpha / math.gamma(params.alpha + 1.0)


def embedding_constant_cinf(params: SpaceParams) -> float:
    """``T^(alpha - 1/p) / (Gamma(alpha) (alpha q - q + 1)^(1/q))``; needs ``alpha > 1/p``."""
    a, p, q = params.alpha, params.p, params.q
    if not params.embeds_in_sup:
        raise DomainError(f"alpha ≤ 1/p: sup-norm embedding needs alpha > 1/p (alpha={a}, p={p})")
    return params.T ** (a - 1.0 / p) / (math.gamma(a) * (a * q - q + 1.0) ** (1.0 / q))


def default_slack(n: int) -> float:
    """Multiplicative slack for discretisation error: 5% at n = 256, shrinking like h."""
    return 1.0 + 0.05 * 256.0 / n


@dataclass(frozen=True)
class EmbeddingReport:
    lp_lhs: float
    lp_rhs: float
    sup_lhs: float
    sup_rhs: float
    slack: float

    @property
    def lp_ok(self) -> bool:
        return self.lp_lhs <= self.slack * self.lp_rhs

    @property
    def sup_ok(self) -> bool:
        return self.sup_lhs <= self.slack * self.sup_rhs

    @property
    def ok(self) -> bool:
        return self.lp_ok and self.sup_ok


def verify_embeddings(u: GridFunction, params: SpaceParams, op: FracOperator, slack: float | None = None) -> EmbeddingReport:
    """Evaluate both sides of the ``L^p`` and sup-norm embedding inequalities.

    The right-hand sides are reported without slack; the ``*_ok`` flags
    compare against ``slack * rhs``.
    """
    if slack is None:
        slack = default_slack(op.grid.n)
    norm_e = space_norm(u, op, params.p)
    return EmbeddingReport(
        lp_lhs=lp_norm(u.values, params.p, op.h),
        lp_rhs=embedding_constant_cp(params) * norm_e,
        sup_lhs=sup_norm(u.values),
        sup_rhs=embedding_constant_cinf(params) * norm_e,
        slack=slack,
    )
