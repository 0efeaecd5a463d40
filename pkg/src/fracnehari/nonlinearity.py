"""Nonlinearities ``f(t, x)`` and sampling checks of the hypotheses H1-H3.

Evaluators take broadcastable numpy arrays ``t`` and ``x``.  The checks are
certificates over the scanned sample boxes only; every report records what
was scanned.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, HypothesisScanError

ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

# default scan box
N_T = 64
N_X = 512
X_MIN = 1e-6
X_MAX = 1e3
H3_RTOL = 1e-12
MAX_WITNESSES = 10


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """``f``, its x-derivative ``fx`` and primitive ``F`` plus H3 metadata.

    When ``F`` is omitted the primitive is computed pointwise by adaptive
    quadrature of ``f`` over ``[0, x]``.
    """

    f: ArrayFn
    fx: ArrayFn
    mu: float
    R: float = 1.0
    F: ArrayFn | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def eval_f(self, t, x):
        return self.f(np.asarray(t, dtype=float), np.asarray(x, dtype=float))

    def eval_fx(self, t, x):
        return self.fx(np.asarray(t, dtype=float), np.asarray(x, dtype=float))

    def eval_F(self, t, x):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        if self.F is not None:
            return self.F(t, x)
        return quad_primitive(self.f, t, x)

    @property
    def spec(self) -> str:
        if not self.params:
            return self.name
        body = ",".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.name}:{body}"


def quad_primitive(f: ArrayFn, t, x) -> np.ndarray:
    tb, xb = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    out = np.empty(tb.shape)
    for idx in np.ndindex(tb.shape):
        ti, xi = tb[idx], xb[idx]
        val, _ = integrate.quad(lambda s: float(f(np.float64(ti), np.float64(s))), 0.0, xi,
                                epsabs=1e-14, epsrel=1e-12, limit=200)
        out[idx] = val
    return out


def preset_power(kappa: float = 1.0, mu: float = 6.0, p: float = 2.0) -> Nonlinearity:
    """``f = kappa |x|^(mu-2) x``; requires ``mu > p^2``."""
    if not kappa > 0:
        raise ConfigError(f"power nonlinearity needs kappa > 0, got {kappa}", key="nonlinearity")
    if not mu > p * p:
        raise ConfigError(
            f"power nonlinearity violates (H3) μ > p²: mu={mu} must exceed p^2={p * p}",
            key="nonlinearity",
        )
    return Nonlinearity(
        f=lambda t, x: kappa * np.abs(x) ** (mu - 2.0) * x,
        fx=lambda t, x: kappa * (mu - 1.0) * np.abs(x) ** (mu - 2.0),
        F=lambda t, x: (kappa / mu) * np.abs(x) ** mu,
        mu=float(mu),
        R=1.0,
        name="power",
        params={"kappa": float(kappa), "mu": float(mu)},
    )


def preset_plap(kappa: float = 1.0, p: float = 2.0) -> Nonlinearity:
    """``f = kappa |x|^(p-2) x``; homogeneous of the operator's degree, fails H1 and H2."""
    r = p
    kp = float(kappa)
    return Nonlinearity(
        f=lambda t, x: kp * np.abs(x) ** (r - 2.0) * x,
        fx=lambda t, x: kp * (r - 1.0) * np.abs(x) ** (r - 2.0),
        F=lambda t, x: (kp / r) * np.abs(x) ** r,
        mu=float(p),
        R=1.0,
        name="plap",
        params={"kappa": kp},
    )


def _power_factory(p, kappa=1.0, mu=None):
    return preset_power(kappa, p * p + 2.0 if mu is None else mu, p)


def _plap_factory(p, kappa=1.0):
    return preset_plap(kappa, p)


_REGISTRY: dict[str, Callable[..., Nonlinearity]] = {
    "power": _power_factory,
    "plap": _plap_factory,
}


def register_nonlinearity(name: str, factory: Callable[..., Nonlinearity]) -> None:
    """Make ``name:key=value,...`` parseable; ``factory(p, **params)``."""
    _REGISTRY[name] = factory


def _parse_params(body: str, key: str) -> dict:
    params = {}
    for item in filter(None, (s.strip() for s in body.split(","))):
        if "=" not in item:
            raise ConfigError(f"nonlinearity parameter {item!r} is not key=value", key=key)
        k, v = (s.strip() for s in item.split("=", 1))
        try:
            params[k] = float(v)
        except ValueError:
            raise ConfigError(f"nonlinearity parameter {k}={v!r} is not a number", key=key) from None
    return params


def parse_nonlinearity(text: str, p: float) -> Nonlinearity:
    """Parse ``power:kappa=1,mu=6`` style strings.

    ``plugin:package.module:factory,k=v`` imports ``factory`` and calls it as
    ``factory(p, **params)``.
    """
    key = "nonlinearity"
    text = text.strip()
    name, _, body = text.partition(":")
    name = name.strip()
    if name == "plugin":
        target, _, body = body.partition(",")
        modname, _, attr = target.partition(":")
        try:
            factory = getattr(importlib.import_module(modname.strip()), attr.strip())
        except (ImportError, AttributeError, ValueError) as exc:
            raise ConfigError(f"cannot load nonlinearity plugin {target!r}: {exc}", key=key) from None
    elif name in _REGISTRY:
        factory = _REGISTRY[name]
    else:
        raise ConfigError(f"unknown nonlinearity {name!r}; known: {sorted(_REGISTRY)} or plugin:", key=key)
    params = _parse_params(body, key)
    try:
        return factory(p, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for nonlinearity {name!r}: {exc}", key=key) from None


@dataclass
class HypothesisCheck:
    hypothesis: str
    ok: bool
    witnesses: list = field(default_factory=list)
    sampled_range: dict = field(default_factory=dict)


@dataclass
class HypothesisReport:
    h1_ok: bool
    h2_ok: bool
    h3_ok: bool
    witnesses: list
    sampled_ranges: dict
    smallest_R: float | None = None

    @property
    def ok(self) -> bool:
        return self.h1_ok and self.h2_ok and self.h3_ok

    def to_dict(self) -> dict:
        return {
            "h1_ok": self.h1_ok,
            "h2_ok": self.h2_ok,
            "h3_ok": self.h3_ok,
            "witnesses": [{"hypothesis": h, "t": float(t), "x": float(x)} for h, t, x in self.witnesses],
            "sampled_ranges": self.sampled_ranges,
            "smallest_R": self.smallest_R,
        }


def _witnesses(label, tt, xx, bad):
    idx = np.argwhere(bad)[:MAX_WITNESSES]
    return [(label, float(tt[tuple(i)]), float(xx[tuple(i)])) for i in idx]


def default_t_samples(T: float, n_t: int = N_T) -> np.ndarray:
    return np.linspace(0.0, T, n_t)


def default_x_samples(x_min: float = X_MIN, x_max: float = X_MAX, n_x: int = N_X) -> np.ndarray:
    mag = np.geomspace(x_min, x_max, n_x)
    return np.concatenate((-mag[::-1], mag))


def check_h1(nl: Nonlinearity, p: float, t_samples, x_samples) -> HypothesisCheck:
    """Strict monotonicity of ``f / |x|^(p^2 - 1)`` on each sign region, plus
    the pointwise consequence ``fx x^2 > (p^2 - 1) f x``."""
    t = np.asarray(t_samples, float)
    x = np.asarray(x_samples, float)
    x = np.sort(x[x != 0])
    tt, xx = np.meshgrid(t, x, indexing="ij")
    fv = nl.eval_f(tt, xx)
    e = p * p - 1.0
    ratio = fv / np.abs(xx) ** e
    witnesses = []
    for mask in (x < 0, x > 0):
        if mask.sum() < 2:
            continue
        r = ratio[:, mask]
        bad = np.zeros(r.shape, bool)
        bad[:, 1:] = ~(np.diff(r, axis=1) > 0)
        witnesses += _witnesses("H1", tt[:, mask], xx[:, mask], bad)
    lhs = nl.eval_fx(tt, xx) * xx**2
    rhs = e * fv * xx
    witnesses += _witnesses("H1", tt, xx, ~(lhs > rhs))
    return HypothesisCheck(
        "H1", not witnesses, witnesses[:MAX_WITNESSES],
        {"t": [float(t.min()), float(t.max()), int(t.size)],
         "x": [float(x.min()), float(x.max()), int(x.size)],
         "spacing": "log-magnitude, both signs, 0 excluded"},
    )


def check_h2(nl: Nonlinearity, p: float, t_samples, k_max: int = 40, tail: int = 10) -> HypothesisCheck:
    """``|f| / |x|^(p-1)`` along ``x = ±2^-k``: the tail must be non-increasing
    and the last value below ``1e-3`` times the largest."""
    t = np.asarray(t_samples, float)
    mags = 2.0 ** -np.arange(1, k_max + 1)
    witnesses = []
    for sign in (1.0, -1.0):
        tt, xx = np.meshgrid(t, sign * mags, indexing="ij")
        ratio = np.abs(nl.eval_f(tt, xx)) / np.abs(xx) ** (p - 1.0)
        decreasing = np.all(np.diff(ratio[:, -tail:], axis=1) <= 0, axis=1)
        small = ratio[:, -1] < 1e-3 * np.max(ratio, axis=1)
        bad = ~(decreasing & small)
        witnesses += [("H2", float(t[i]), float(xx[i, -1])) for i in np.flatnonzero(bad)]
    return HypothesisCheck(
        "H2", not witnesses, witnesses[:MAX_WITNESSES],
        {"t": [float(t.min()), float(t.max()), int(t.size)],
         "x": [2.0**-k_max, 0.5, k_max], "spacing": "x = ±2^-k"},
    )


def check_h3(nl: Nonlinearity, t_samples, x_max: float = X_MAX, n_x: int = N_X) -> HypothesisCheck:
    """``0 < mu F <= x f`` for ``R <= |x| <= x_max`` (relative slack 1e-12 on
    the upper inequality, which power laws attain with equality)."""
    t = np.asarray(t_samples, float)
    if not x_max > nl.R:
        raise HypothesisScanError(f"H3 scan needs x_max > R={nl.R}, got {x_max}")
    mag = np.geomspace(nl.R, x_max, n_x)
    x = np.concatenate((-mag[::-1], mag))
    tt, xx = np.meshgrid(t, x, indexing="ij")
    bad = _h3_violations(nl, tt, xx)
    witnesses = _witnesses("H3", tt, xx, bad)
    return HypothesisCheck(
        "H3", not witnesses, witnesses,
        {"t": [float(t.min()), float(t.max()), int(t.size)],
         "x": [float(nl.R), float(x_max), int(n_x)], "mu": nl.mu,
         "spacing": "log-magnitude, both signs"},
    )


def _h3_violations(nl, tt, xx):
    muF = nl.mu * nl.eval_F(tt, xx)
    xf = xx * nl.eval_f(tt, xx)
    return ~((muF > 0) & (muF <= xf + H3_RTOL * np.abs(xf)))


def smallest_h3_radius(nl: Nonlinearity, t_samples, x_min=X_MIN, x_max=X_MAX, n_x=N_X) -> float | None:
    """Smallest scanned ``r`` such that H3 holds for every scanned ``|x| >= r``."""
    mag = np.geomspace(x_min, x_max, n_x)
    tt, mm = np.meshgrid(np.asarray(t_samples, float), mag, indexing="ij")
    bad = (_h3_violations(nl, tt, mm) | _h3_violations(nl, tt, -mm)).any(axis=0)
    if bad[-1]:
        return None
    last_bad = np.flatnonzero(bad)
    return float(mag[last_bad[-1] + 1]) if last_bad.size else float(mag[0])


def check_hypotheses(nl: Nonlinearity, p: float, T: float, n_t: int = N_T, n_x: int = N_X,
                     x_min: float = X_MIN, x_max: float = X_MAX) -> HypothesisReport:
    t = default_t_samples(T, n_t)
    c1 = check_h1(nl, p, t, default_x_samples(x_min, x_max, n_x))
    c2 = check_h2(nl, p, t)
    c3 = check_h3(nl, t, x_max, n_x)
    return HypothesisReport(
        h1_ok=c1.ok, h2_ok=c2.ok, h3_ok=c3.ok,
        witnesses=c1.witnesses + c2.witnesses + c3.witnesses,
        sampled_ranges={"H1": c1.sampled_range, "H2": c2.sampled_range, "H3": c3.sampled_range},
        smallest_R=smallest_h3_radius(nl, t, x_min, x_max, n_x),
    )


def growth_constants(nl: Nonlinearity, T: float, x_max: float = X_MAX, n_t: int = N_T, n_x: int = N_X):
    """Fit ``c1, c2 >= 0`` with ``F(t, x) >= c1 |x|^mu - c2`` on the scan box.

    ``c1`` is the smallest ``F / |x|^mu`` over ``R <= |x| <= x_max``; ``c2``
    covers the remaining ``|x| <= R``.
    """
    t = default_t_samples(T, n_t)
    outer = np.geomspace(nl.R, x_max, n_x)
    outer = np.concatenate((-outer, outer))
    tt, xx = np.meshgrid(t, outer, indexing="ij")
    c1 = float(np.min(nl.eval_F(tt, xx) / np.abs(xx) ** nl.mu))
    inner = np.linspace(-nl.R, nl.R, 2 * n_x + 1)
    tt, xx = np.meshgrid(t, inner, indexing="ij")
    c2 = float(max(0.0, np.max(c1 * np.abs(xx) ** nl.mu - nl.eval_F(tt, xx))))
    return c1, c2


def ar_constant(nl: Nonlinearity, T: float, n_t: int = N_T, n_x: int = N_X) -> float:
    """Fit ``c >= 0`` with ``F <= x f / mu + c``; only ``|x| < R`` contributes under H3."""
    t = default_t_samples(T, n_t)
    inner = np.linspace(-nl.R, nl.R, 2 * n_x + 1)
    tt, xx = np.meshgrid(t, inner, indexing="ij")
    gap = nl.eval_F(tt, xx) - xx * nl.eval_f(tt, xx) / nl.mu
    return float(max(0.0, np.max(gap)))
