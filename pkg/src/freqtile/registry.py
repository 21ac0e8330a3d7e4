"""Registered smooth, compactly supported test spectra.

All families are built from the C-infinity bump ``B(t) = exp(1 - 1/(1 - t^2))``
on ``|t| < 1``, so their support hints are exact. Each comes with an
``l2_norm_oracle`` computed by one-dimensional quadrature in the radial
variable of the quasi-norm (or of the local ellipse), which does not touch
the covering or frame code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy import integrate

from .anorm import QuasiNormContext, aniso_norm, ball_semi_axes, ellipsoids_meet
from .errors import DomainError
from .spectral import SpectralFunction


def smooth_bump(t):
    """``exp(1 - 1/(1 - t^2))`` for ``|t| < 1``, else 0; equals 1 at the centre."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - t[m] ** 2))
    return out


def unit_ball_volume(d):
    return pi ** (d / 2) / gamma(d / 2 + 1)


def _radial_l2(g, lo, hi, d):
    """``int |g(|xi|_a)|^2 dxi`` using ``d|{|xi|_a < s}| = d |B_1| s^{d-1} ds``."""
    val, _ = integrate.quad(lambda s: abs(g(s)) ** 2 * s ** (d - 1), lo, hi, epsabs=0, epsrel=1e-13, limit=200)
    return d * unit_ball_volume(d) * val


def _bump_sq_integral(d):
    """``int_{|v|<1} B(|v|)^2 dv``."""
    val, _ = integrate.quad(lambda t: smooth_bump(t) ** 2 * t ** (d - 1), 0, 1, epsabs=0, epsrel=1e-13)
    return d * unit_ball_volume(d) * val


@dataclass
class TestFunctionSpec:
    __test__ = False  # not a pytest class

    name: str
    params: dict = field(default_factory=dict)


def gaussbump_annular(ctx: QuasiNormContext, center: float, width: float, amplitude: float = 1.0):
    """Radial bump ``A * B((|xi|_a - center) / width)`` supported on ``center +- width``."""
    if width <= 0 or center - width <= 0:
        raise DomainError("annular bump needs 0 < width < center")

    def ev(x):
        return amplitude * smooth_bump((aniso_norm(ctx, x) - center) / width)

    l2 = abs(amplitude) * np.sqrt(_radial_l2(lambda s: smooth_bump((s - center) / width),
                                             center - width, center + width, ctx.d))
    return SpectralFunction(ev, ctx, (center - width, center + width), float(l2), "gaussbump_annular",
                            {"center": center, "width": width, "amplitude": amplitude})


def _local_support(ctx, centers, widths):
    near = np.maximum(np.abs(centers) - ball_semi_axes(ctx, widths), 0.0)
    far = np.abs(centers) + ball_semi_axes(ctx, widths)
    return float(np.min(aniso_norm(ctx, near))), float(np.max(aniso_norm(ctx, far)))


def _local_bumps(ctx, centers, widths, amplitudes, modulation=None):
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = len(centers)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (k,)).copy()
    amplitudes = np.broadcast_to(np.asarray(amplitudes, dtype=complex), (k,)).copy()
    if centers.shape[1] != ctx.d:
        raise DomainError("bump centres have the wrong dimension")
    if np.any(widths <= 0):
        raise DomainError("bump widths must be positive")
    axes = ball_semi_axes(ctx, widths)
    lo, hi = _local_support(ctx, centers, widths)
    if lo <= 0:
        raise DomainError("a bump reaches the origin")

    def ev(x):
        out = np.zeros(len(x), dtype=complex)
        for c, s, amp in zip(centers, axes, amplitudes):
            v = (x - c) / s
            r2 = np.sum(v * v, axis=1)
            m = r2 < 1
            if m.any():
                out[m] += amp * np.exp(1.0 - 1.0 / (1.0 - r2[m]))
        if modulation is not None:
            out *= np.exp(1j * (x @ modulation))
        return out

    I, J = np.triu_indices(k, 1)
    disjoint = not np.any(ellipsoids_meet(centers[I] - centers[J], axes[I], axes[J])) if k > 1 else True
    if disjoint:
        l2sq = float(np.sum(np.abs(amplitudes) ** 2 * np.prod(axes, axis=1)) * _bump_sq_integral(ctx.d))
    else:
        l2sq = _grid_l2sq(ev, centers, axes)
    return ev, (lo, hi), float(np.sqrt(l2sq))


def _grid_l2sq(ev, centers, axes, n=2048):
    """Dense midpoint quadrature over the bounding box (used when bumps overlap)."""
    lo = np.min(centers - axes, axis=0)
    hi = np.max(centers + axes, axis=0)
    d = len(lo)
    m = n if d == 1 else int(round(n ** (2 / d) / 4))
    ax = [lo[i] + (hi[i] - lo[i]) * (np.arange(m) + 0.5) / m for i in range(d)]
    g = np.meshgrid(*ax, indexing="ij")
    pts = np.stack([v.ravel() for v in g], axis=1)
    return float(np.sum(np.abs(ev(pts)) ** 2) * np.prod((hi - lo) / m))


def multi_bump(ctx: QuasiNormContext, centers, widths, amplitudes=1.0):
    """Sum of bumps ``A_k B(|D_a(1/w_k)(xi - c_k)|)``, each supported on the quasi-ball ``B(c_k, w_k)``."""
    ev, hint, l2 = _local_bumps(ctx, centers, widths, amplitudes)
    return SpectralFunction(ev, ctx, hint, l2, "multi_bump",
                            {"centers": np.atleast_2d(centers).tolist(), "widths": np.atleast_1d(widths).tolist(),
                             "amplitudes": np.real(np.atleast_1d(amplitudes)).tolist()})


def atom_like(ctx: QuasiNormContext, center, width, shift, amplitude=1.0):
    """Modulated bump: a single local bump times ``exp(i xi . shift)`` (a translated wave packet)."""
    shift = np.asarray(shift, dtype=float).reshape(ctx.d)
    ev, hint, l2 = _local_bumps(ctx, [center], [width], [amplitude], modulation=shift)
    return SpectralFunction(ev, ctx, hint, l2, "atom_like",
                            {"center": np.asarray(center, float).tolist(), "width": width,
                             "shift": shift.tolist(), "amplitude": amplitude})


FAMILIES = {
    "gaussbump_annular": (gaussbump_annular, ("center", "width")),
    "gaussbump": (gaussbump_annular, ("center", "width")),
    "multi_bump": (multi_bump, ("centers", "widths")),
    "atom_like": (atom_like, ("center", "width", "shift")),
}


def registry_instantiate(spec: TestFunctionSpec, ctx: QuasiNormContext) -> SpectralFunction:
    """Build the registered family ``spec.name`` with ``spec.params``."""
    if spec.name not in FAMILIES:
        raise DomainError(f"unknown test function {spec.name!r}; known: {sorted(FAMILIES)}")
    fn, required = FAMILIES[spec.name]
    missing = [r for r in required if r not in spec.params]
    if missing:
        raise DomainError(f"{spec.name} needs parameters {missing}")
    return fn(ctx, **spec.params)


def default_test_set(ctx: QuasiNormContext, covered, center=None):
    """Three test spectra inside the covered region ``covered = (lo, hi)``.

    ``center`` is the quasi-norm the functions sit at (default: the geometric
    middle of the region). In ``d = 1`` the set is an annular bump, a pair of
    bumps and a modulated bump. In ``d >= 2`` the bumps sit on the last axis,
    where the dilation is strongest; that keeps them wide relative to every
    patch they touch.
    """
    lo, hi = covered
    m = float(np.sqrt(lo * hi)) if center is None else float(center)
    if not (lo < m < hi):
        raise DomainError("test-function centre outside the covered region")
    d = ctx.d
    # widths comparable to the local patch size keep the pulled-back spectra smooth
    if d == 1:
        return [
            gaussbump_annular(ctx, m, 0.6 * m),
            multi_bump(ctx, [[m], [-0.9 * m]], [0.5 * m, 0.45 * m], [1.0, 0.5]),
            atom_like(ctx, [1.3 * m], 0.6 * m, [3.0 / m]),
        ]
    up = np.zeros(d)
    up[-1] = m ** ctx.a[-1]
    shift = np.full(d, 0.5)
    shift[-1] = 2.0
    return [
        multi_bump(ctx, [up], [0.7 * m]),
        multi_bump(ctx, [up, -up], [0.7 * m, 0.6 * m], [1.0, -0.7]),
        atom_like(ctx, up, 0.75 * m, shift / m ** ctx.a),
    ]
