"""Anisotropic quasi-norm, dilations and quasi-balls.

For an anisotropy ``a = (a_1, ..., a_d)`` with ``a_i > 0`` and ``sum(a) == d``
the dilation group is ``D_a(t) = diag(t**a_1, ..., t**a_d)`` and ``|xi|_a`` is
the unique ``t > 0`` solving ``|D_a(1/t) xi| = 1``.

Quasi-balls ``B_d(c, r) = {xi : |xi - c|_a < r}`` are exactly the axis-aligned
ellipsoids ``c + D_a(r) B`` where ``B`` is the Euclidean unit ball, which makes
membership and intersection of balls cheap and exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

DEFAULT_ROOT_TOL = 1e-10
K_SAFETY = 1.1


@dataclass(frozen=True)
class Anisotropy:
    a: tuple
    root_tol: float = DEFAULT_ROOT_TOL

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        object.__setattr__(self, "a", a)
        if len(a) == 0:
            raise DomainError("anisotropy needs at least one exponent")
        if any(not math.isfinite(v) or v <= 0 for v in a):
            raise DomainError(f"anisotropy exponents must be positive, got {a}")
        if abs(sum(a) - len(a)) > 1e-12:
            raise DomainError(f"anisotropy exponents must sum to d={len(a)}, got {sum(a)!r}")
        if not (0 < self.root_tol <= 1e-6):
            raise DomainError("root_tol must lie in (0, 1e-6]")

    @property
    def d(self) -> int:
        return len(self.a)

    @property
    def alpha1(self) -> float:
        return min(self.a)

    @property
    def alpha2(self) -> float:
        return max(self.a)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.a, dtype=float)

    def to_dict(self) -> dict:
        return {"a": list(self.a), "root_tol": self.root_tol}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Anisotropy":
        return cls(tuple(data["a"]), float(data.get("root_tol", DEFAULT_ROOT_TOL)))

    @classmethod
    def from_json(cls, text: str) -> "Anisotropy":
        return cls.from_dict(json.loads(text))


@dataclass
class QuasiNormContext:
    """Anisotropy plus solver settings and the empirical quasi-triangle constant.

    ``K_est`` is ``None`` until :func:`estimate_K` has run; treat the context as
    read-only afterwards.
    """

    anisotropy: Anisotropy
    root_tol: float = DEFAULT_ROOT_TOL
    K_est: Optional[float] = None
    method: str = "newton"
    _a: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.root_tol <= 1e-6):
            raise DomainError("root_tol must lie in (0, 1e-6]")
        if self.method not in ("newton", "bisect"):
            raise DomainError(f"unknown root method {self.method!r}")
        if self.K_est is not None and self.K_est < 1:
            raise DomainError("K_est must be >= 1")
        self._a = self.anisotropy.vector

    @classmethod
    def create(cls, a, root_tol: float = DEFAULT_ROOT_TOL, **kwargs) -> "QuasiNormContext":
        return cls(Anisotropy(tuple(np.atleast_1d(a)), root_tol), root_tol, **kwargs)

    @property
    def d(self) -> int:
        return self.anisotropy.d

    @property
    def a(self) -> np.ndarray:
        return self._a

    @property
    def K(self) -> float:
        if self.K_est is None:
            raise DomainError("K_est not populated; call estimate_K first")
        return self.K_est

    def to_dict(self) -> dict:
        out = self.anisotropy.to_dict()
        out["root_tol"] = self.root_tol
        out["K_est"] = self.K_est
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QuasiNormContext":
        return cls(Anisotropy.from_dict(data), float(data.get("root_tol", DEFAULT_ROOT_TOL)),
                   K_est=data.get("K_est"))


def dilation(ctx: QuasiNormContext, t: float) -> np.ndarray:
    """Return the diagonal matrix ``D_a(t)``."""
    if not (np.isfinite(t) and t > 0):
        raise DomainError(f"dilation parameter must be positive, got {t!r}")
    return np.diag(float(t) ** ctx.a)


def dilation_scales(ctx: QuasiNormContext, t) -> np.ndarray:
    """Diagonal of ``D_a(t)``; broadcasts over an array of ``t`` (returns ``(..., d)``)."""
    t = np.asarray(t, dtype=float)
    return t[..., None] ** ctx.a


def _as_rows(ctx, xi):
    x = np.asarray(xi, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != ctx.d:
        raise DomainError(f"expected points of dimension {ctx.d}, got shape {np.shape(xi)}")
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input to aniso_norm")
    return x, single


def _bracket(ctx, x):
    """Log-bracket ``[u_lo, u_hi]`` of the root.

    At ``t = max_i |xi_i|**(1/a_i)`` one term of ``|D_a(1/t) xi|^2`` equals one,
    and at ``t * d**(1/(2 alpha1))`` every term is at most ``1/d``.
    """
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        u_lo = np.max(np.log(ax) / ctx.a, axis=1)
    u_hi = u_lo + np.log(ctx.d) / (2.0 * ctx.anisotropy.alpha1)
    return u_lo, u_hi


def _residual(a, sq, u):
    # log |D_a(e^{-u}) xi|^2, decreasing and convex in u
    return np.log(np.sum(sq * np.exp(-2.0 * a * u[:, None]), axis=1))


def _solve_newton(a, sq, u_lo, u_hi, tol):
    # Newton from the left on a convex decreasing residual never overshoots the root;
    # iterates that leave the bracket anyway fall back to bisection.
    u = u_lo.copy()
    lo, hi = u_lo.copy(), u_hi.copy()
    active = np.ones(len(u), dtype=bool)
    # the residual has phi''/(2|phi'|) <= spread^2 / (4 a_min), so a Newton step of
    # size s leaves an error below that constant times s^2
    curv = max((a.max() - a.min()) ** 2 / (4.0 * a.min()), 1e-3)
    small = np.sqrt(0.01 * tol / curv)
    for _ in range(200):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ui = u[idx]
        w = sq[idx] * np.exp(-2.0 * a * ui[:, None])
        s = w.sum(axis=1)
        f = np.log(s)
        fp = -2.0 * (w @ a) / s
        step = -f / fp
        new = ui + step
        pos = f > 0
        lo[idx] = np.where(pos, ui, lo[idx])
        hi[idx] = np.where(pos, hi[idx], ui)
        outside = ~((new >= lo[idx]) & (new <= hi[idx])) | ~np.isfinite(new)
        new = np.where(outside, 0.5 * (lo[idx] + hi[idx]), new)
        done = (np.abs(new - ui) <= small) | (f == 0)
        u[idx] = new
        active[idx[done]] = False
    return u


def _solve_bisect(a, sq, u_lo, u_hi, tol):
    lo, hi = u_lo.copy(), u_hi.copy()
    # u is log t, so the bracket width is the relative error in t
    n_iter = int(np.ceil(np.log2(max(np.max(hi - lo), tol) / tol))) + 2
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        pos = _residual(a, sq, mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def aniso_norm(ctx: QuasiNormContext, xi, method: Optional[str] = None):
    """Anisotropic quasi-norm ``|xi|_a`` of one point ``(d,)`` or rows ``(n, d)``.

    Zero maps to zero. The root of ``t -> |D_a(1/t) xi| = 1`` is bracketed as
    described by the defining inequalities and refined in ``log t``.
    """
    x, single = _as_rows(ctx, xi)
    method = method or ctx.method
    out = np.zeros(len(x))
    nz = np.any(x != 0, axis=1)
    if nz.any():
        if ctx.d == 1:
            out[nz] = np.abs(x[nz, 0])
        else:
            u0, u_hi = _bracket(ctx, x[nz])
            # pre-dilate so the largest term is exactly 1; avoids under/overflow in xi^2
            with np.errstate(divide="ignore"):
                y = np.exp(np.log(np.abs(x[nz])) - ctx.a * u0[:, None])
            sqn = y * y
            lo = np.zeros(len(u0))
            hi = u_hi - u0
            if method == "bisect":
                u = _solve_bisect(ctx.a, sqn, lo, hi, ctx.root_tol)
            else:
                u = _solve_newton(ctx.a, sqn, lo, hi, ctx.root_tol)
            out[nz] = np.exp(u0 + u)
    return float(out[0]) if single else out


def quasi_dist(ctx: QuasiNormContext, xi, zeta):
    """``d(xi, zeta) = |xi - zeta|_a``."""
    return aniso_norm(ctx, np.asarray(xi, dtype=float) - np.asarray(zeta, dtype=float))


def sample_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform points on the Euclidean unit sphere in R^d."""
    if d == 1:
        return rng.choice([-1.0, 1.0], size=(n, 1))
    v = rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def points_at_norm(ctx: QuasiNormContext, s, omega) -> np.ndarray:
    """``D_a(s) omega``; for unit ``omega`` the result has ``|.|_a == s`` exactly."""
    return dilation_scales(ctx, s) * np.asarray(omega, dtype=float)


def sample_log_uniform(ctx: QuasiNormContext, rng, n: int, r_min: float, r_max: float):
    """Points with ``|xi|_a`` log-uniform on ``[r_min, r_max]`` and uniform direction."""
    s = np.exp(rng.uniform(np.log(r_min), np.log(r_max), size=n))
    return points_at_norm(ctx, s, sample_sphere(rng, n, ctx.d))


def estimate_K(ctx: QuasiNormContext, n_samples: int = 100_000, seed: int = 0) -> float:
    """Empirical quasi-triangle constant, stored on ``ctx.K_est``.

    Takes the largest ratio ``|xi + zeta|_a / (|xi|_a + |zeta|_a)`` over random
    pairs with quasi-norms log-uniform on ``[1e-3, 1e3]``, together with the
    deterministic coincident pairs ``(t e_i, t e_i)`` that realise the
    homogeneity bound ``2**(1/a_i - 1)``, then applies the 1.1 safety factor.
    """
    if n_samples < 100:
        raise DomainError("estimate_K needs at least 100 samples")
    rng = np.random.default_rng(seed)
    xi = sample_log_uniform(ctx, rng, n_samples, 1e-3, 1e3)
    zeta = sample_log_uniform(ctx, rng, n_samples, 1e-3, 1e3)
    probes = np.eye(ctx.d)
    xi = np.vstack([xi, probes])
    zeta = np.vstack([zeta, probes])
    ratio = aniso_norm(ctx, xi + zeta) / (aniso_norm(ctx, xi) + aniso_norm(ctx, zeta))
    k = float(np.max(ratio)) * K_SAFETY
    # the context keeps K_est >= 1; the raw estimate is returned unchanged
    ctx.K_est = max(k, 1.0)
    return k


# --- quasi-balls as ellipsoids -------------------------------------------------

def ball_semi_axes(ctx: QuasiNormContext, radius) -> np.ndarray:
    """Semi-axes of ``B_d(c, r)``: ``r**a_i``. Broadcasts over radii."""
    return dilation_scales(ctx, radius)


def in_ball(ctx: QuasiNormContext, x, center, radius) -> np.ndarray:
    """Exact open-ball membership ``|x - center|_a < radius`` without root finding."""
    z = (np.asarray(x, dtype=float) - np.asarray(center, dtype=float)) / ball_semi_axes(ctx, radius)
    return np.sum(z * z, axis=-1) < 1.0


def _contact_newton(d2, A, B, n_iter, decide):
    C = B - A
    lo = np.zeros(len(d2))
    hi = np.ones(len(d2))
    # start from the exact maximiser for two spheres with the radii seen along delta
    r1 = 1.0 / np.sqrt(np.sum(d2 / A, axis=1))
    r2 = 1.0 / np.sqrt(np.sum(d2 / B, axis=1))
    lam = r1 / (r1 + r2)
    val = np.zeros(len(d2))
    active = np.arange(len(d2))
    for _ in range(n_iter):
        l = lam[active]
        dd, AA, CC = d2[active], A[active], C[active]
        inv = 1.0 / (AA + l[:, None] * CC)
        t0 = dd * inv
        t1 = t0 * CC * inv
        S0 = t0.sum(axis=1)
        S1 = t1.sum(axis=1)
        S2 = (t1 * CC * inv).sum(axis=1)
        w = l * (1.0 - l)
        F = w * S0
        g = (1.0 - 2.0 * l) * S0 - w * S1
        gp = -2.0 * S0 - 2.0 * (1.0 - 2.0 * l) * S1 + 2.0 * w * S2
        up = g > 0
        lo_a = np.where(up, l, lo[active])
        hi_a = np.where(up, hi[active], l)
        lo[active], hi[active] = lo_a, hi_a
        val[active] = F
        with np.errstate(divide="ignore", invalid="ignore"):
            step = l - g / gp
        bad = ~((step > lo_a) & (step < hi_a))
        new = np.where(bad, 0.5 * (lo_a + hi_a), step)
        lam[active] = new
        done = np.abs(new - l) < 1e-13
        if decide:
            # concavity: the tangent at l bounds F on the bracket from above
            upper = F + np.maximum(g * (hi_a - l), g * (lo_a - l))
            done |= (F >= 1.0) | (upper < 1.0)
        active = active[~done]
        if active.size == 0:
            break
    if active.size:
        l = lam[active]
        val[active] = np.maximum(val[active], l * (1.0 - l) * np.sum(
            d2[active] / (A[active] + l[:, None] * C[active]), axis=1))
    return val


def ellipsoid_contact(delta, s1, s2, n_iter: int = 60) -> np.ndarray:
    """Perram-Wertheim contact value of axis-aligned ellipsoids.

    ``delta`` are centre offsets ``(m, d)``; ``s1``, ``s2`` the semi-axes
    ``(m, d)``. Returns ``max_{0<l<1} l(1-l) sum delta^2 / ((1-l) s1^2 + l s2^2)``;
    the open ellipsoids intersect iff the value is ``< 1``.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    A = np.atleast_2d(np.asarray(s1, dtype=float)) ** 2
    B = np.atleast_2d(np.asarray(s2, dtype=float)) ** 2
    d2 = delta * delta
    if delta.shape[1] == 1:
        return d2[:, 0] / (np.sqrt(A[:, 0]) + np.sqrt(B[:, 0])) ** 2
    out = np.zeros(len(d2))
    nz = d2.sum(axis=1) > 0
    if nz.any():
        out[nz] = _contact_newton(d2[nz], A[nz], B[nz], n_iter, decide=False)
    return out


def ellipsoids_meet(delta, s1, s2, n_iter: int = 60) -> np.ndarray:
    """Whether open axis-aligned ellipsoids meet; stops as soon as each pair is decided."""
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    A = np.atleast_2d(np.asarray(s1, dtype=float)) ** 2
    B = np.atleast_2d(np.asarray(s2, dtype=float)) ** 2
    d2 = delta * delta
    if delta.shape[1] == 1:
        return d2[:, 0] < (np.sqrt(A[:, 0]) + np.sqrt(B[:, 0])) ** 2
    out = np.ones(len(d2), dtype=bool)
    nz = d2.sum(axis=1) > 0
    if nz.any():
        out[nz] = _contact_newton(d2[nz], A[nz], B[nz], n_iter, decide=True) < 1.0
    return out


def balls_intersect(ctx: QuasiNormContext, c1, r1, c2, r2) -> np.ndarray:
    """Whether the open quasi-balls ``B_d(c1, r1)`` and ``B_d(c2, r2)`` meet."""
    c1 = np.atleast_2d(np.asarray(c1, dtype=float))
    c2 = np.atleast_2d(np.asarray(c2, dtype=float))
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), (max(len(c1), len(c2)),))
    r2 = np.broadcast_to(np.asarray(r2, dtype=float), r1.shape)
    delta = np.broadcast_to(c1, (len(r1), ctx.d)) - np.broadcast_to(c2, (len(r1), ctx.d))
    return ellipsoids_meet(delta, ball_semi_axes(ctx, r1), ball_semi_axes(ctx, r2))
