"""Ramp functions and hybrid regulation functions.

A hybrid regulation blends a small-frequency law ``h1`` and a large-frequency
law ``h2`` through a smooth ramp of the quasi-norm. It sets the radius of the
covering ball centred at each frequency.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Callable, Optional, Union

import numpy as np

from .anorm import QuasiNormContext, aniso_norm, points_at_norm, sample_log_uniform, sample_sphere
from .errors import DomainError


def smoothstep(x, order: int):
    """Polynomial smoothstep of degree ``2*order + 1``.

    Equals 0 for ``x <= 0`` and 1 for ``x >= 1``, with ``order`` vanishing
    derivatives at both ends.
    """
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    # evaluate near 0 only and use s(x) = 1 - s(1 - x) above the midpoint
    y = np.minimum(x, 1.0 - x)
    s = y ** (order + 1) * np.polyval(_smoothstep_coeffs(int(order)), y)
    return np.where(x <= 0.5, s, 1.0 - s)


@lru_cache(maxsize=None)
def _smoothstep_coeffs(n):
    # highest power first, as np.polyval expects
    return np.array([comb(n + k, k) * comb(2 * n + 1, n - k) * (-1) ** k for k in range(n, -1, -1)], dtype=float)


@dataclass(frozen=True)
class RampFunction:
    t_lo: float = 2.0 / 3.0
    t_hi: float = 4.0 / 3.0
    order: int = 3

    def __post_init__(self):
        if not (0 < self.t_lo < self.t_hi):
            raise DomainError("ramp needs 0 < t_lo < t_hi")
        if int(self.order) != self.order or self.order < 1:
            raise DomainError("ramp order must be an integer >= 1")

    def to_dict(self):
        return {"t_lo": self.t_lo, "t_hi": self.t_hi, "order": int(self.order)}


def ramp_eval(ramp: RampFunction, r):
    """Ramp value at quasi-norm ``r``: 1 below ``t_lo``, 0 above ``t_hi``."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or not np.all(np.isfinite(r_arr)):
        raise DomainError("ramp argument must be a finite non-negative quasi-norm")
    out = 1.0 - smoothstep((r_arr - ramp.t_lo) / (ramp.t_hi - ramp.t_lo), ramp.order)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PowerLaw:
    """``c * |xi|_a ** exponent``."""

    exponent: float
    c: float = 1.0

    def __call__(self, r):
        return self.c * np.asarray(r, dtype=float) ** self.exponent


Law = Union[PowerLaw, Callable]


@dataclass(frozen=True)
class HybridRegulation:
    """``h(xi) = rho(|xi|_a) h1(xi) + (1 - rho(|xi|_a)) h2(xi)``.

    ``h1`` and ``h2`` are :class:`PowerLaw` descriptors or callables taking the
    quasi-norm. Callables must come with a working ``annulus`` on which the
    growth envelopes are checked at construction.
    """

    ctx: QuasiNormContext
    h1: Law
    h2: Law
    ramp: RampFunction = RampFunction()
    alpha: Optional[float] = None
    annulus: Optional[tuple] = None

    def __post_init__(self):
        if isinstance(self.h1, PowerLaw) and self.h1.exponent < 1:
            raise DomainError("h1 exponent must be >= 1")
        if isinstance(self.h2, PowerLaw) and not (0 <= self.h2.exponent <= 1):
            raise DomainError("h2 exponent must lie in [0, 1]")
        opaque = not (isinstance(self.h1, PowerLaw) and isinstance(self.h2, PowerLaw))
        if opaque:
            if self.annulus is None:
                raise DomainError("custom h1/h2 need a working annulus for the envelope check")
            rep = check_envelopes(self, self.annulus)
            if not rep["ok"]:
                raise DomainError(f"regulation violates its growth envelopes: {rep}")

    def from_norm(self, r):
        """Evaluate ``h`` from quasi-norm values ``r > 0``."""
        r = np.asarray(r, dtype=float)
        rho = ramp_eval(self.ramp, r)
        # skip the law that carries zero weight so the blend is exact at the ends
        h1 = np.where(rho > 0, self.h1(np.where(rho > 0, r, 1.0)), 0.0)
        h2 = np.where(rho < 1, self.h2(np.where(rho < 1, r, 1.0)), 0.0)
        return rho * h1 + (1.0 - rho) * h2

    def __call__(self, xi):
        return hybrid_eval(self, xi)

    def to_dict(self):
        if self.alpha is not None:
            return {"kind": "alpha", "alpha": self.alpha, "ramp": self.ramp.to_dict()}
        if isinstance(self.h1, PowerLaw) and isinstance(self.h2, PowerLaw):
            return {"kind": "power", "ramp": self.ramp.to_dict(),
                    "h1": {"exponent": self.h1.exponent, "c": self.h1.c},
                    "h2": {"exponent": self.h2.exponent, "c": self.h2.c}}
        raise DomainError("regulations built from arbitrary callables are not serializable")

    def to_json(self):
        return json.dumps(self.to_dict())


def regulation_from_dict(ctx: QuasiNormContext, data: dict) -> HybridRegulation:
    """Inverse of ``HybridRegulation.to_dict`` (kinds ``alpha`` and ``power``)."""
    kind = data.get("kind")
    ramp = RampFunction(**data.get("ramp", {}))
    if kind == "alpha":
        return alpha_regulation(ctx, float(data["alpha"]), ramp=ramp)
    if kind == "power":
        return HybridRegulation(ctx, PowerLaw(**data["h1"]), PowerLaw(**data["h2"]), ramp)
    raise DomainError(f"unknown regulation kind {kind!r}")


def hybrid_eval(h: HybridRegulation, xi):
    """``h(xi)`` for a nonzero point ``(d,)`` or rows ``(n, d)``."""
    r = aniso_norm(h.ctx, xi)
    if np.any(np.asarray(r) == 0):
        raise DomainError("hybrid regulation is undefined at the origin")
    out = h.from_norm(r)
    return float(out) if np.ndim(out) == 0 else out


def alpha_regulation(ctx: QuasiNormContext, alpha: float, ramp: Optional[RampFunction] = None):
    """The alpha family: ``h1 = |xi|_a**(2 - alpha)``, ``h2 = |xi|_a**alpha``."""
    if not (0.0 <= alpha <= 1.0):
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")
    return HybridRegulation(ctx, PowerLaw(2.0 - alpha), PowerLaw(alpha), ramp or RampFunction(),
                            alpha=float(alpha))


def envelope_constants(h: HybridRegulation, annulus) -> dict:
    """Constants for the growth envelopes of power-law ``h1``/``h2`` on ``annulus``.

    ``c0 r**e1 <= h1 <= c1 r`` and ``c2 <= h2 <= c3 r`` for ``r`` in the annulus.
    """
    r_min, r_max = _check_annulus(annulus)
    if not (isinstance(h.h1, PowerLaw) and isinstance(h.h2, PowerLaw)):
        raise DomainError("closed-form envelopes need power-law components")
    e1, e2 = h.h1.exponent, h.h2.exponent
    ends = np.array([r_min, r_max])
    return {
        "r": e1,
        "c0": h.h1.c,
        "c1": h.h1.c * float(np.max(ends ** (e1 - 1))),
        "c2": h.h2.c * float(np.min(ends ** e2)),
        "c3": h.h2.c * float(np.max(ends ** (e2 - 1))),
    }


def check_envelopes(h: HybridRegulation, annulus, n_samples: int = 2000, rtol: float = 1e-12) -> dict:
    """Verify the growth envelopes on a log grid of the annulus.

    For callables the constants are fitted from the grid and the report
    is ``ok`` when they are finite and positive.
    """
    r_min, r_max = _check_annulus(annulus)
    r = np.geomspace(r_min, r_max, n_samples)
    v1, v2 = np.asarray(h.h1(r), float), np.asarray(h.h2(r), float)
    if isinstance(h.h1, PowerLaw) and isinstance(h.h2, PowerLaw):
        c = envelope_constants(h, annulus)
        slack = 1 + rtol
        ok = bool(np.all(c["c0"] * r ** c["r"] <= v1 * slack) and np.all(v1 <= c["c1"] * r * slack)
                  and np.all(c["c2"] <= v2 * slack) and np.all(v2 <= c["c3"] * r * slack))
        return {"ok": ok, **c}
    c = {"r": 1.0, "c0": float(np.min(v1 / r)), "c1": float(np.max(v1 / r)),
         "c2": float(np.min(v2)), "c3": float(np.max(v2 / r))}
    vals = np.array(list(c.values()))
    ok = bool(np.all(np.isfinite(vals)) and np.all(vals > 0) and np.all(v1 > 0) and np.all(v2 > 0))
    return {"ok": ok, **c}


def _check_annulus(annulus):
    r_min, r_max = (float(v) for v in annulus)
    if not (0 < r_min < r_max):
        raise DomainError(f"annulus must satisfy 0 < r_min < r_max, got {annulus}")
    return r_min, r_max


def check_moderate(h: HybridRegulation, delta0: float, n_samples: int, annulus, seed: int = 0) -> dict:
    """Empirical moderateness constant of ``h`` on an annulus.

    Draws ``xi`` log-uniformly in the annulus and ``zeta`` uniformly (in
    quasi-radius) from the ball of radius ``delta0 * h(xi)`` about it,
    keeping pairs with both points in the annulus. Returns the largest
    value of ``max(h(xi)/h(zeta), h(zeta)/h(xi))`` and the pair attaining it.
    """
    if delta0 <= 0:
        raise DomainError("delta0 must be positive")
    r_min, r_max = _check_annulus(annulus)
    ctx = h.ctx
    rng = np.random.default_rng(seed)
    xs, zs = [], []
    got = 0
    while got < n_samples:
        m = max(n_samples - got, 16) * 2
        xi = sample_log_uniform(ctx, rng, m, r_min, r_max)
        hx = hybrid_eval(h, xi)
        rad = delta0 * hx * rng.uniform(0, 1, m)
        zeta = xi + points_at_norm(ctx, rad, sample_sphere(rng, m, ctx.d))
        rz = aniso_norm(ctx, zeta)
        keep = (rz >= r_min) & (rz <= r_max)
        xs.append(xi[keep])
        zs.append(zeta[keep])
        got += int(keep.sum())
    xi = np.vstack(xs)[:n_samples]
    zeta = np.vstack(zs)[:n_samples]
    ratio = hybrid_eval(h, xi) / hybrid_eval(h, zeta)
    ratio = np.maximum(ratio, 1.0 / ratio)
    k = int(np.argmax(ratio))
    return {"R_emp": float(ratio[k]), "worst_pair": (xi[k].tolist(), zeta[k].tolist())}


def knot_spacing_ratios(alpha: float, n_max: int = 10_000):
    """Spacing ratios of the one-dimensional alpha knots ``n**beta``.

    Returns ``(outer, inner)`` for ``n = 1..n_max`` with ``beta = 1/(1 - alpha)``:
    ``outer = ((n+1)**beta - n**beta) / n**(alpha*beta)`` and
    ``inner = (n**-beta - (n+1)**-beta) / n**(-beta*(2 - alpha))``.
    """
    if not (0.0 <= alpha < 1.0):
        raise DomainError("knots need 0 <= alpha < 1")
    beta = 1.0 / (1.0 - alpha)
    n = np.arange(1, n_max + 1, dtype=float)
    outer = ((n + 1) ** beta - n ** beta) / n ** (alpha * beta)
    inner = (n ** -beta - (n + 1) ** -beta) / n ** (-beta * (2 - alpha))
    return outer, inner
