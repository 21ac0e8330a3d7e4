"""Frequency-domain function evaluators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .anorm import QuasiNormContext, aniso_norm, sample_log_uniform
from .errors import DomainError


@dataclass
class SpectralFunction:
    """A closed-form spectrum ``xi -> f_hat(xi)``.

    Parameters
    ----------
    evaluator : callable
        Maps points ``(n, d)`` to complex values ``(n,)``.
    ctx : QuasiNormContext
        Geometry in which ``support_hint`` is expressed.
    support_hint : (float, float), optional
        Quasi-norm annulus outside which the evaluator vanishes identically.
    l2_norm_oracle : float, optional
        Independently computed ``||f_hat||_{L_2}``.
    """

    evaluator: Callable
    ctx: QuasiNormContext
    support_hint: Optional[tuple] = None
    l2_norm_oracle: Optional[float] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    check_support: bool = True

    def __post_init__(self):
        if self.support_hint is not None:
            lo, hi = (float(v) for v in self.support_hint)
            if not (0 <= lo < hi):
                raise DomainError("support_hint must satisfy 0 <= s_min < s_max")
            self.support_hint = (lo, hi)
            if self.check_support:
                self._spot_check()

    def _spot_check(self, n=100, seed=12345):
        lo, hi = self.support_hint
        rng = np.random.default_rng(seed)
        pts = []
        if lo > 0:
            pts.append(sample_log_uniform(self.ctx, rng, n // 2, lo * 1e-3, lo * (1 - 1e-9)))
        pts.append(sample_log_uniform(self.ctx, rng, n - sum(len(p) for p in pts), hi * (1 + 1e-9), hi * 1e3))
        vals = self(np.vstack(pts))
        if np.any(vals != 0):
            raise DomainError(f"{self.name}: evaluator is nonzero outside its support_hint")

    def __call__(self, xi):
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        return np.asarray(self.evaluator(x), dtype=complex).reshape(len(x))

    def supported_mask(self, xi):
        """Points that may carry a nonzero value (all points when no hint is given)."""
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.support_hint is None:
            return np.ones(len(x), dtype=bool)
        r = aniso_norm(self.ctx, x)
        return (r >= self.support_hint[0]) & (r <= self.support_hint[1])

    def dilate(self, t: float) -> "SpectralFunction":
        """``xi -> f_hat(D_a(t) xi)``: support and norm follow the dilation exactly."""
        s = float(t) ** self.ctx.a
        ev = self.evaluator
        hint = None if self.support_hint is None else (self.support_hint[0] / t, self.support_hint[1] / t)
        l2 = None if self.l2_norm_oracle is None else self.l2_norm_oracle * float(t) ** (-float(np.sum(self.ctx.a)) / 2)
        return SpectralFunction(lambda x: ev(x * s), self.ctx, hint, l2, f"{self.name}*D({t:g})",
                                {**self.params, "dilation": t}, check_support=False)

    def scale(self, lam: complex) -> "SpectralFunction":
        ev = self.evaluator
        l2 = None if self.l2_norm_oracle is None else abs(lam) * self.l2_norm_oracle
        return SpectralFunction(lambda x: lam * ev(x), self.ctx, self.support_hint, l2, self.name,
                                self.params, check_support=False)


def zero_function(ctx: QuasiNormContext) -> SpectralFunction:
    return SpectralFunction(lambda x: np.zeros(len(x), dtype=complex), ctx, (1.0, 2.0), 0.0, "zero")
