"""Bump functions and the partitions of unity subordinate to a covering.

With ``g_j(xi) = Phi(T_j^{-1} xi)`` the partition is ``psi_j = g_j / sum_k g_k``
and the square-root partition is ``phi_j = g_j / sqrt(sum_k g_k^2)``, so that
``sum_j psi_j = 1`` and ``sum_j phi_j^2 = 1`` wherever the covering covers.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .anorm import aniso_norm
from .covering import Covering
from .errors import DomainError
from .regulation import smoothstep
from .spectral import SpectralFunction


@dataclass(frozen=True)
class BumpFunction:
    """Smooth bump equal to 1 on the inner reference set and 0 off the outer one."""

    p0: np.ndarray
    a: np.ndarray
    inner_radius: float = 1.0
    outer_radius: float = 2.0
    order: int = 3
    shape: str = "ball"

    def __post_init__(self):
        if self.order < 1:
            raise DomainError("bump order must be >= 1")
        if not (0 < self.inner_radius < self.outer_radius):
            raise DomainError("bump radii must satisfy 0 < inner < outer")
        if self.shape not in ("ball", "box"):
            raise DomainError(f"unknown bump shape {self.shape!r}")
        object.__setattr__(self, "p0", np.asarray(self.p0, dtype=float))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    @classmethod
    def for_covering(cls, cov: Covering, order: int = 3, inner_radius: float = 1.0) -> "BumpFunction":
        return cls(cov.p0, cov.ctx.a, float(inner_radius), cov.q, order, cov.shape)

    def from_offset(self, z, ctx=None):
        """Bump value at ``p0 + z``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        lo, hi = self.inner_radius, self.outer_radius
        if self.shape == "box":
            t = (np.abs(z) - lo) / (hi - lo)
            return np.prod(1.0 - smoothstep(t, self.order), axis=1)
        out = np.zeros(len(z))
        # ellipse tests settle the flat parts without solving for the norm
        q_in = np.sum((z / lo ** self.a) ** 2, axis=1)
        q_out = np.sum((z / hi ** self.a) ** 2, axis=1)
        out[q_in <= 1.0] = 1.0
        mid = (q_in > 1.0) & (q_out < 1.0)
        if mid.any():
            if ctx is None:
                from .anorm import QuasiNormContext
                ctx = QuasiNormContext.create(self.a)
            r = aniso_norm(ctx, z[mid])
            out[mid] = 1.0 - smoothstep((r - lo) / (hi - lo), self.order)
        return out


def bump_eval(b: BumpFunction, zeta, ctx=None):
    """``Phi(zeta)``; accepts a point ``(d,)`` or rows ``(n, d)``."""
    z = np.asarray(zeta, dtype=float)
    out = b.from_offset(np.atleast_2d(z) - b.p0, ctx)
    return float(out[0]) if z.ndim == 1 else out


class _LRU:
    """Small bounded memo for per-patch grids."""

    def __init__(self, maxsize=4096):
        self.maxsize = maxsize
        self._d = OrderedDict()

    def __contains__(self, key):
        return key in self._d

    def __getitem__(self, key):
        self._d.move_to_end(key)
        return self._d[key]

    def put(self, key, value):
        self._d[key] = value
        self._d.move_to_end(key)
        while len(self._d) > self.maxsize:
            self._d.popitem(last=False)

    def __len__(self):
        return len(self._d)


class Bapu:
    """Partition of unity and square-root partition for a covering.

    Denominators only involve the patches whose support contains the point,
    located through the covering's spatial index. ``debug=True`` sums over
    every patch instead, which validates the index and the neighbour lists.

    The bump is flat on the reference set of size ``inner_radius`` (0.5 by
    default). Any size below the support radius gives a valid partition, and
    a wider transition band makes the pulled-back ``phi_j`` smoother, which
    is what the frame truncation needs.
    """

    def __init__(self, cov: Covering, order: int = 3, debug: bool = False, inner_radius: float = 0.5):
        self.covering = cov
        self.bump = BumpFunction.for_covering(cov, order, inner_radius)
        self.debug = debug
        self.cache = _LRU()

    @property
    def ctx(self):
        return self.covering.ctx

    def _check_index(self, j):
        if not (0 <= int(j) < len(self.covering)):
            raise DomainError(f"patch index {j} out of range")
        return int(j)

    def g_pairs(self, xi):
        """Sparse ``g_k(xi)``: arrays ``(point, patch, value)`` over supports containing the point."""
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        cov = self.covering
        if self.debug:
            n, m = len(x), len(cov)
            pi = np.repeat(np.arange(n), m)
            pj = np.tile(np.arange(m), n)
        else:
            pi, pj = cov.containing(x)
        g = self.bump.from_offset(cov.to_reference(x[pi], pj), self.ctx)
        keep = g > 0
        return pi[keep], pj[keep], g[keep]

    def sums(self, xi, check=True):
        """``(sum_k g_k, sum_k g_k^2)`` at each point."""
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        pi, _, g = self.g_pairs(x)
        s1 = np.bincount(pi, weights=g, minlength=len(x))
        s2 = np.bincount(pi, weights=g * g, minlength=len(x))
        if check:
            self._require_covered(x, s1)
        return s1, s2

    def _require_covered(self, x, s1, mask=None):
        bad = s1 <= 0
        if mask is not None:
            bad &= mask
        if np.any(bad):
            raise DomainError(f"{int(bad.sum())} point(s) outside the covered region, e.g. {x[bad][0].tolist()}")

    def _single(self, j, xi, square_root):
        j = self._check_index(j)
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        cov = self.covering
        out = np.zeros(len(x))
        gj = self.bump.from_offset(cov.to_reference(x, np.full(len(x), j)), self.ctx)
        inside = gj > 0
        if inside.any():
            s1, s2 = self.sums(x[inside])
            out[inside] = gj[inside] / (np.sqrt(s2) if square_root else s1)
        return out

    def psi(self, j, xi):
        """``psi_j`` at rows ``xi``; zero off the support of patch ``j``."""
        return self._single(j, xi, False)

    def phi(self, j, xi):
        """``phi_j`` at rows ``xi``; zero off the support of patch ``j``."""
        return self._single(j, xi, True)

    def phi_on_patch(self, j, xi, mask=None):
        """``phi_j`` at rows ``xi`` using patch ``j``'s neighbour list for the denominator.

        Points outside ``mask`` (default: all) are not required to be covered.
        """
        j = self._check_index(j)
        cov = self.covering
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        gj = self.bump.from_offset(cov.to_reference(x, np.full(len(x), j)), self.ctx)
        out = np.zeros(len(x))
        rows = np.flatnonzero(gj > 0)
        if rows.size == 0:
            return out
        nb = cov.neighbors[j]
        xr = x[rows]
        s2 = np.zeros(len(rows))
        # sweep the neighbours in blocks with an exact support prefilter
        for start in range(0, len(nb), 64):
            blk = nb[start:start + 64]
            pi = np.repeat(np.arange(len(rows)), len(blk))
            pk = np.tile(blk, len(rows))
            z = cov.to_reference(xr[pi], pk)
            inq = cov.in_reference(z, cov.q)
            g = np.zeros(len(pi))
            g[inq] = self.bump.from_offset(z[inq], self.ctx)
            s2 += np.bincount(pi, weights=g * g, minlength=len(rows))
        out[rows] = gj[rows] / np.sqrt(s2)
        return out

    def partition(self, xi, check=True):
        """All nonzero partition values at the points.

        Returns ``(point, patch, psi, phi)`` arrays sorted by point then patch.
        """
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        pi, pj, g = self.g_pairs(x)
        s1 = np.bincount(pi, weights=g, minlength=len(x))
        s2 = np.bincount(pi, weights=g * g, minlength=len(x))
        if check:
            self._require_covered(x, s1)
        return pi, pj, g / s1[pi], g / np.sqrt(s2[pi])

    def verify_pou(self, n_samples: int = 10_000, seed: int = 0) -> dict:
        """Largest deviations of ``sum psi_j`` and ``sum phi_j^2`` from one on the covered region."""
        if n_samples < 10_000:
            raise DomainError("verify_pou needs at least 10^4 samples")
        rng = np.random.default_rng(seed)
        x = self.covering.sample_covered(rng, n_samples)
        pi, _, psi, phi = self.partition(x)
        s_psi = np.bincount(pi, weights=psi, minlength=len(x))
        s_phi = np.bincount(pi, weights=phi * phi, minlength=len(x))
        return {"n_samples": int(n_samples),
                "max_psi_residual": float(np.max(np.abs(s_psi - 1.0))),
                "max_phi2_residual": float(np.max(np.abs(s_phi - 1.0)))}

    def multiplier_apply(self, j, f: SpectralFunction, mode: str = "phi2") -> SpectralFunction:
        """Frequency-domain product of ``f_hat`` with ``psi_j``, ``phi_j^2`` or the neighbour sum of ``phi_k^2``."""
        j = self._check_index(j)
        if mode not in ("psi", "phi2", "phi2_tilde"):
            raise DomainError(f"unknown multiplier mode {mode!r}")
        nb = self.covering.neighbors[j]

        def ev(x):
            pi, pk, psi, phi = self.partition(x, check=False)
            if mode == "psi":
                sel, w = pk == j, psi
            elif mode == "phi2":
                sel, w = pk == j, phi * phi
            else:
                sel, w = np.isin(pk, nb), phi * phi
            m = np.bincount(pi[sel], weights=w[sel], minlength=len(x))
            out = np.zeros(len(x), dtype=complex)
            nz = m > 0
            if nz.any():
                out[nz] = m[nz] * f(x[nz])
            return out

        return SpectralFunction(ev, self.ctx, None, None, f"{mode}[{j}]({f.name})")

    def multiplier_l1_proxy(self, j, M: int = 64, pad: int = 4) -> float:
        """``||F^{-1} psi_j||_{L_1}`` via the reference-cube pull-back.

        The affine substitution removes ``|T_j|``, so the value is the L_1 norm
        of the inverse transform of ``zeta -> psi_j(T_j zeta)``, computed by a
        zero-padded FFT on the cube around ``p0``.
        """
        from .frame import cube_halfside, reference_grid

        j = self._check_index(j)
        cov = self.covering
        half = cube_halfside(cov)
        zeta, dv = reference_grid(cov, M, half)
        xi = cov.patches[j].map.apply(zeta)
        u = self.psi(j, xi)
        d = cov.d
        u = u.reshape((M,) * d)
        big = np.zeros((M * pad,) * d)
        big[tuple(slice(0, M) for _ in range(d))] = u
        # |F^{-1} u| on an x-grid of spacing 2*pi/(pad*M*h_i); phases drop out under |.|
        vals = np.abs(np.fft.fftn(big)) * dv * (2 * np.pi) ** (-d / 2)
        cell = (2 * np.pi / (pad * M)) ** d / dv
        return float(vals.sum() * cell)
