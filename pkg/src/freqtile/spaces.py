"""Decomposition-space and coefficient-space norms, thresholding and scaling checks.

The decomposition norm aggregates ``h(xi_j)^beta ||phi_j^2(D) f||_{L_p}`` in
``l_q``. Each local piece is computed in the reference coordinates of its
patch: with ``G_j(zeta) = phi_j(T_j zeta)^2 f_hat(T_j zeta)``,

    ||phi_j^2(D) f||_{L_p} = |T_j|^{1 - 1/p} ||F^{-1} G_j||_{L_p},

and ``F^{-1} G_j`` comes from a zero-padded FFT on the reference box.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Optional

import numpy as np

from .anorm import QuasiNormContext, ball_semi_axes
from .bapu import Bapu
from .covering import AffineMap, Covering
from .errors import CoveringMismatch, DomainError
from .frame import CoefficientSet, FrameGeometry, box_halfsides, phi_grid, reference_grid, synthesize, touched_patches
from .spectral import SpectralFunction

INF = float("inf")


def _parse_exponent(v, name):
    if isinstance(v, str):
        v = INF if v.strip().lower() in ("inf", "infinity", "oo") else float(v)
    v = float(v)
    if not (v > 0):
        raise DomainError(f"{name} must lie in (0, inf], got {v}")
    return v


@dataclass(frozen=True)
class SpaceParams:
    """Integrability ``p``, summability ``q`` (both in ``(0, inf]``) and smoothness ``beta``."""

    p: float = 2.0
    q: float = 2.0
    beta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", _parse_exponent(self.p, "p"))
        object.__setattr__(self, "q", _parse_exponent(self.q, "q"))
        if not np.isfinite(self.beta):
            raise DomainError("beta must be finite")
        object.__setattr__(self, "beta", float(self.beta))

    def to_dict(self):
        enc = lambda v: "inf" if v == INF else v  # noqa: E731
        return {"p": enc(self.p), "q": enc(self.q), "beta": self.beta}


@dataclass
class NormReport:
    decomposition_norm: Optional[float] = None
    frame_norm: Optional[float] = None
    coefficient_norm: Optional[float] = None
    per_patch_terms: list = field(default_factory=list)
    params: Optional[SpaceParams] = None
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self):
        if self.decomposition_norm is None or not self.frame_norm:
            return None
        return self.decomposition_norm / self.frame_norm

    def recompute(self) -> float:
        """Re-aggregate ``per_patch_terms`` in ``l_q``."""
        return lq_aggregate(np.array([t for _, t in self.per_patch_terms]), self.params.q)

    def to_dict(self):
        return {"decomposition_norm": self.decomposition_norm, "frame_norm": self.frame_norm,
                "coefficient_norm": self.coefficient_norm, "ratio": self.ratio,
                "params": None if self.params is None else self.params.to_dict(),
                "per_patch_terms": [[int(j), float(t)] for j, t in self.per_patch_terms],
                "meta": self.meta}


def lp_sum(x, p):
    """``(sum |x|^p)^(1/p)`` (a quasi-norm for ``p < 1``), the supremum for ``p = inf``."""
    x = np.abs(np.asarray(x))
    if x.size == 0:
        return 0.0
    if p == INF:
        return float(x.max())
    m = x.max()
    if m == 0:
        return 0.0
    # factor out the max so large exponents do not overflow
    return float(m * np.sum((x / m) ** p) ** (1.0 / p))


lq_aggregate = lp_sum


# ---- spatial L_p norms from spectra ------------------------------------------

def _default_pad(d):
    # the L_p sums of |g| are Riemann sums on the padded grid; 16x oversampling gets
    # them to ~1e-6 in d = 1, while d = 2 keeps 4x to bound the FFT size
    return 16 if d == 1 else 4


def lp_norms_from_spectrum(G, cell, halves, ps, pad: Optional[int] = None):
    """L_p norms of ``g = F^{-1} G`` from samples of ``G`` on a box grid.

    ``G`` has shape ``(M,)*d`` on a box with half-sides ``halves`` and cell
    volume ``cell``. The spectrum is zero padded ``pad`` times so the spatial
    grid oversamples ``|g|``; the spatial period ``M pi / halves`` bounds the
    aliasing. Returns ``(norms, tail)`` where ``tail`` is the share of
    ``int |g|`` in the outer half of the period (a computed decay bound).
    """
    G = np.asarray(G)
    d = G.ndim
    M = G.shape[0]
    pad = _default_pad(d) if pad is None else int(pad)
    halves = np.broadcast_to(np.asarray(halves, dtype=float), (d,))
    big = np.zeros((pad * M,) * d, dtype=complex)
    big[tuple(slice(0, M) for _ in range(d))] = G
    g = np.abs(np.fft.fftn(big)) * cell * (2 * np.pi) ** (-d / 2)
    h = 2 * halves / M
    dx = float(np.prod(2 * np.pi / (pad * M * h)))
    out = {}
    for p in ps:
        if p == INF:
            out[p] = float(g.max())
        elif p == 2:
            # Plancherel on the frequency side (exact for the sampled spectrum)
            out[p] = float(np.sqrt(np.sum(np.abs(G) ** 2) * cell))
        else:
            out[p] = float((np.sum(g ** p) * dx) ** (1.0 / p))
    k = np.abs(np.fft.fftfreq(pad * M))
    outer = np.zeros(g.shape, dtype=bool)
    for i in range(d):
        sh = [1] * d
        sh[i] = -1
        outer |= (k > 0.25).reshape(sh)
    total = g.sum()
    tail = float(g[outer].sum() / total) if total > 0 else 0.0
    return out, tail


TAIL_TARGET = 1e-6


def local_lp_norms(b: Bapu, f: SpectralFunction, ps=(1.0, 2.0, INF), grid: int = 128, pad: Optional[int] = None,
                   patches=None, max_doublings: int = 2) -> dict:
    """``||phi_j^2(D) f||_{L_p}`` for every touched patch and every ``p`` in ``ps``.

    The spatial period is ``grid * pi / half``; while the ``L_1``-weighted tail
    share (see :func:`local_tail`) exceeds ``TAIL_TARGET`` the spectral grid is
    doubled, which doubles the period. Returns ``{"patches": array, p: array,
    ..., "tail": array, "grid": int, "tail_mass": float}``.
    """
    if f.support_hint is None:
        raise DomainError("decomposition norms need a band-limited function (support_hint)")
    if grid < 128:
        raise DomainError("grid must be >= 128 per dimension")
    ps = tuple(_parse_exponent(p, "p") for p in ps)
    # the tail estimate is weighted by L_1 mass
    need_ps = tuple(sorted(set(ps) | {1.0}))
    for k in range(max_doublings + 1):
        out = _local_pass(b, f, need_ps, grid * 2 ** k, pad, patches)
        out["tail_mass"] = local_tail(out)
        if out["tail_mass"] <= TAIL_TARGET:
            break
    return out


def _local_pass(b, f, ps, grid, pad, patches):
    cov = b.covering
    geom = FrameGeometry(tuple(box_halfsides(cov)), 0, int(grid))
    zeta, cell = reference_grid(cov, grid, geom.half)
    todo = touched_patches(b, f) if patches is None else np.asarray(patches, dtype=np.int64)
    res = {p: np.zeros(len(todo)) for p in ps}
    tails = np.zeros(len(todo))
    for i, j in enumerate(todo):
        xi = cov.patches[j].map.apply(zeta)
        inq = cov.in_reference(zeta - cov.p0, cov.q)
        idx = np.flatnonzero(inq)
        idx = idx[f.supported_mask(xi[idx])]
        if idx.size == 0:
            continue
        fv = f(xi[idx])
        keep = fv != 0
        idx, fv = idx[keep], fv[keep]
        if idx.size == 0:
            continue
        need = np.zeros(len(zeta), dtype=bool)
        need[idx] = True
        phi = phi_grid(b, geom, j, need).ravel()
        G = np.zeros(len(zeta), dtype=complex)
        G[idx] = phi[idx] ** 2 * fv
        norms, tails[i] = lp_norms_from_spectrum(G.reshape((grid,) * cov.d), cell, geom.halves, ps, pad)
        det = cov.dets[j]
        for p in ps:
            res[p][i] = det ** (1.0 - (0.0 if p == INF else 1.0 / p)) * norms[p]
    out = {"patches": todo, "tail": tails, "grid": int(grid)}
    out.update(res)
    return out


def local_tail(local: dict) -> float:
    """Share of the spatial ``L_1`` mass of all local pieces lying in the outer half of their periods."""
    l1 = local.get(1.0)
    if l1 is None or not np.any(l1 > 0):
        return float(np.max(local["tail"])) if len(local["tail"]) else 0.0
    return float(np.sum(local["tail"] * l1) / np.sum(l1))


def decomposition_norm(b: Bapu, f: SpectralFunction, params: SpaceParams, grid: int = 128,
                       local: Optional[dict] = None) -> NormReport:
    """``( sum_j (h(xi_j)^beta ||phi_j^2(D) f||_{L_p})^q )^{1/q}``.

    ``local`` may carry precomputed ``local_lp_norms`` to share work across
    several parameter sets.
    """
    if local is None or params.p not in local:
        local = local_lp_norms(b, f, (params.p,), grid)
    js = local["patches"]
    w = b.covering.weights()[js] ** params.beta if len(js) else np.zeros(0)
    terms = w * local[params.p]
    nz = terms > 0
    rep = NormReport(decomposition_norm=lq_aggregate(terms, params.q),
                     per_patch_terms=[(int(j), float(t)) for j, t in zip(js[nz], terms[nz])],
                     params=params)
    rep.meta["tail_mass"] = local.get("tail_mass", local_tail(local))
    rep.meta["grid"] = local.get("grid", grid)
    if params.p < 1 or params.q < 1:
        rep.meta["reduced_accuracy"] = True
    return rep


def _check_cov(c: CoefficientSet, cov: Covering):
    if c.covering_id != cov.covering_id:
        raise CoveringMismatch("coefficients were computed for a different covering")


def _patch_norms(c: CoefficientSet, p: float):
    """``(patch ids, (sum_n |c_{n,j}|^p)^{1/p})``."""
    if len(c) == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    js, inv = np.unique(c.j, return_inverse=True)
    a = np.abs(c.c)
    if p == INF:
        vals = np.zeros(len(js))
        np.maximum.at(vals, inv, a)
        return js, vals
    m = np.zeros(len(js))
    np.maximum.at(m, inv, a)
    scale = np.where(m > 0, m, 1.0)
    s = np.bincount(inv, weights=(a / scale[inv]) ** p, minlength=len(js))
    return js, scale * s ** (1.0 / p)


def coefficient_norm(c: CoefficientSet, cov: Covering, params: SpaceParams) -> float:
    """``l_q`` over patches of ``h(xi_j)^(beta + d/2 - d/p) ||c_{., j}||_{l_p}``."""
    _check_cov(c, cov)
    js, v = _patch_norms(c, params.p)
    inv_p = 0.0 if params.p == INF else 1.0 / params.p
    w = cov.weights()[js] ** (params.beta + cov.d / 2 - cov.d * inv_p)
    return lq_aggregate(w * v, params.q)


def frame_norm(c: CoefficientSet, cov: Covering, params: SpaceParams) -> float:
    """``l_q`` over patches of ``h(xi_j)^beta ||(|T_j|^{1/2-1/p} c_{n,j})_n||_{l_p}``."""
    _check_cov(c, cov)
    js, v = _patch_norms(c, params.p)
    inv_p = 0.0 if params.p == INF else 1.0 / params.p
    w = cov.weights()[js] ** params.beta * cov.dets[js] ** (0.5 - inv_p)
    return lq_aggregate(w * v, params.q)


def norm_report(b: Bapu, f: SpectralFunction, c: CoefficientSet, params: SpaceParams, grid: int = 128,
                local: Optional[dict] = None) -> NormReport:
    rep = decomposition_norm(b, f, params, grid, local)
    rep.frame_norm = frame_norm(c, b.covering, params)
    rep.coefficient_norm = coefficient_norm(c, b.covering, params)
    return rep


# ---- thresholding and reconstruction -----------------------------------------

def threshold(c: CoefficientSet, keep: Optional[int] = None, tau: Optional[float] = None) -> CoefficientSet:
    """Keep the ``keep`` largest coefficients, or all with ``|c| >= tau``.

    Ties in magnitude are broken by the ``(j, n)`` order, earlier first.
    """
    if (keep is None) == (tau is None):
        raise DomainError("give exactly one of keep or tau")
    mag = np.abs(c.c)
    mask = np.zeros(len(c), dtype=bool)
    if tau is not None:
        if tau < 0:
            raise DomainError("tau must be nonnegative")
        mask = mag >= tau
    else:
        keep = int(keep)
        if keep < 0:
            raise DomainError("keep must be nonnegative")
        keys = [c.n[:, i] for i in range(c.d - 1, -1, -1)] + [c.j, -mag]
        order = np.lexsort(keys)
        mask[order[:keep]] = True
    return c.with_values(mask)


def unit_sphere_area(d):
    return 2 * pi ** (d / 2) / gamma(d / 2)


def stratified_points(ctx: QuasiNormContext, lo: float, hi: float, n: int, seed: int = 0):
    """Points ``xi = D_a(s) omega`` with Latin-hypercube strata in ``log s`` and the angle.

    Returns ``(points, weights)`` so that ``sum w g(xi)`` approximates
    ``int_{lo < |xi|_a < hi} g``; uses ``dxi = s^{tr a - 1} <A omega, omega> ds dsigma``.
    """
    if not (0 < lo < hi):
        raise DomainError("need 0 < lo < hi")
    rng = np.random.default_rng(seed)
    d = ctx.d
    u = np.log(lo) + (np.log(hi) - np.log(lo)) * (rng.permutation(n) + rng.uniform(size=n)) / n
    s = np.exp(u)
    if d == 1:
        omega = np.where(rng.permutation(n) % 2 == 0, 1.0, -1.0)[:, None]
    elif d == 2:
        th = 2 * np.pi * (rng.permutation(n) + rng.uniform(size=n)) / n
        omega = np.stack([np.cos(th), np.sin(th)], axis=1)
    else:
        omega = rng.normal(size=(n, d))
        omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    xi = s[:, None] ** ctx.a * omega
    jac = s ** float(np.sum(ctx.a)) * np.sum(ctx.a * omega * omega, axis=1)
    w = jac * (np.log(hi) - np.log(lo)) * unit_sphere_area(d) / n
    return xi, w


def reconstruct_error(f: SpectralFunction, c: CoefficientSet, b: Bapu, n_samples: int = 4000,
                      seed: int = 0) -> float:
    """Relative ``L_2`` error of the synthesis of ``c`` against ``f_hat``.

    The numerator is a stratified quadrature over the support annulus of
    ``f``; the denominator is the function's independent norm oracle.
    """
    if f.l2_norm_oracle is None:
        raise DomainError("reconstruct_error needs an l2_norm_oracle")
    if f.support_hint is None:
        raise DomainError("reconstruct_error needs a band-limited function")
    if f.l2_norm_oracle == 0:
        return 0.0 if len(c) == 0 or c.energy() == 0 else float("inf")
    lo, hi = f.support_hint
    lo = max(lo, 1e-300)
    xi, w = stratified_points(f.ctx, lo, hi, n_samples, seed)
    err = synthesize(c, b, xi) - f(xi)
    return float(np.sqrt(np.sum(w * np.abs(err) ** 2)) / f.l2_norm_oracle)


def compression_curve(f: SpectralFunction, c: CoefficientSet, b: Bapu, fractions=(0.01, 0.05, 0.1, 0.5, 1.0),
                      n_samples: int = 4000, seed: int = 0):
    """``[(fraction, kept, relative error)]`` for the given keep fractions."""
    out = []
    for fr in fractions:
        k = int(round(fr * len(c)))
        out.append((float(fr), k, reconstruct_error(f, threshold(c, keep=k), b, n_samples, seed)))
    return out


# ---- scaling checks ----------------------------------------------------------

def _spectrum_box(f: SpectralFunction):
    if f.support_hint is None:
        raise DomainError("the check needs a compactly supported spectrum")
    r = f.support_hint[1]
    return ball_semi_axes(f.ctx, r)


def spatial_lp_norms(f_hat, lo, hi, ps, grid: int = 256, pad: Optional[int] = None):
    """``||F^{-1} f_hat||_{L_p}`` from samples on the box ``[lo, hi]``, spectrum vanishing outside."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    d = len(lo)
    step = (hi - lo) / grid
    ax = [lo[i] + step[i] * (np.arange(grid) + 0.5) for i in range(d)]
    g = np.meshgrid(*ax, indexing="ij")
    pts = np.stack([v.ravel() for v in g], axis=1)
    G = f_hat(pts).reshape((grid,) * d)
    norms, _ = lp_norms_from_spectrum(G, float(np.prod(step)), (hi - lo) / 2, ps, pad)
    return norms


def dilation_scaling_check(ctx: QuasiNormContext, T: AffineMap, f: SpectralFunction, p, grid: int = 256) -> float:
    """``||f_T||_p / (|T|^{1-1/p} ||f||_p)`` where ``f_T_hat = f_hat o T^{-1}``; expected 1.

    Both sides are quadratures on their own support boxes, ``f_T`` on the
    image box ``T(box)``.
    """
    p = _parse_exponent(p, "p")
    if p not in (1.0, 2.0, INF):
        raise DomainError("p must be 1, 2 or inf")
    ext = _spectrum_box(f)
    n_f = spatial_lp_norms(f, -ext, ext, (p,), grid)[p]
    lo_t, hi_t = T.apply(-ext), T.apply(ext)
    n_t = spatial_lp_norms(lambda x: f(T.inverse(x)), lo_t, hi_t, (p,), grid)[p]
    inv_p = 0.0 if p == INF else 1.0 / p
    return float(n_t / (T.det ** (1.0 - inv_p) * n_f))


def nikolskii_check(ctx: QuasiNormContext, T: AffineMap, f: SpectralFunction, p, q, grid: int = 256) -> float:
    """``||f_T||_q / (|T|^{1/p-1/q} ||f_T||_p)`` for ``f_T_hat = f_hat o T^{-1}``."""
    p, q = _parse_exponent(p, "p"), _parse_exponent(q, "q")
    if p > q:
        raise DomainError("nikolskii_check needs p <= q")
    if p == q:
        return 1.0
    ext = _spectrum_box(f)
    norms = spatial_lp_norms(lambda x: f(T.inverse(x)), T.apply(-ext), T.apply(ext), (p, q), grid)
    ip = 0.0 if p == INF else 1.0 / p
    iq = 0.0 if q == INF else 1.0 / q
    return float(norms[q] / (T.det ** (ip - iq) * norms[p]))
