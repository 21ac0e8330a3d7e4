"""Tight frame built from local exponential bases on the patches.

For patch ``j`` the atoms are ``eta_hat_{n,j} = phi_j * e_{n,j}`` with

    e_{n,j}(xi) = |K|^{-1/2} |T_j|^{-1/2} 1_K(T_j^{-1} xi) exp(i sum_i pi/a_i n_i (T_j^{-1} xi)_i)

where ``K`` is a box of half-sides ``a_i`` about ``p0``. With equal half-sides
this is the usual cube; the default tight box is the cube after a fixed
diagonal change of reference coordinates, which leaves the frame tight and
spends the ``(2 N_c + 1)^d`` modes where the reference set actually lives.
Analysis pulls ``phi_j f_hat`` back to the box and takes one FFT per patch;
synthesis sums the trigonometric polynomials back.
"""

from __future__ import annotations

import json
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .anorm import aniso_norm
from .bapu import Bapu
from .covering import Covering
from .errors import CoveringMismatch, DomainError
from .spectral import SpectralFunction

MAGIC = b"FTCOEF1\n"


def cube_halfside(obj) -> float:
    """Half-side of the cube about ``p0`` that contains the support reference set.

    For a ball geometry ``|zeta|_a <= 2`` forces ``|zeta_i| <= 2**a_i``, giving
    ``max_i 2**a_i``; box coverings use their support box directly.
    """
    if isinstance(obj, Covering):
        if obj.shape == "box":
            return float(obj.q)
        a = obj.ctx.a
    else:
        a = obj.a
    return float(np.max(2.0 ** np.asarray(a)))


def box_halfsides(cov: Covering) -> np.ndarray:
    """Per-axis half-sides of the tightest box about ``p0`` containing the support reference set."""
    if cov.shape == "box":
        return np.full(cov.d, float(cov.q))
    return cov.q ** cov.ctx.a


def reference_grid(cov: Covering, M: int, half):
    """Uniform ``M^d`` grid on the box ``p0 + prod [-half_i, half_i)``.

    Returns ``(points, cell_volume)``; ``half`` may be a scalar (cube).
    """
    half = np.broadcast_to(np.asarray(half, dtype=float), (cov.d,))
    h = 2.0 * half / M
    ax = [cov.p0[i] - half[i] + h[i] * np.arange(M) for i in range(cov.d)]
    g = np.meshgrid(*ax, indexing="ij")
    return np.stack([v.ravel() for v in g], axis=1), float(np.prod(h))


@dataclass(frozen=True)
class FrameGeometry:
    """Reference box half-sides, coefficient truncation ``|n_i| <= N_c`` and FFT size ``M``."""

    half: tuple
    N_c: int
    M: int

    def __post_init__(self):
        half = np.atleast_1d(np.asarray(self.half, dtype=float))
        object.__setattr__(self, "half", tuple(float(v) for v in half))
        if self.N_c < 0 or self.M < 4 * self.N_c or self.M < 1:
            raise DomainError("frame geometry needs M >= 4 * N_c")
        if np.any(half <= 0):
            raise DomainError("box half-sides must be positive")

    @classmethod
    def for_covering(cls, cov: Covering, N_c: int, M: int, cube: bool = False) -> "FrameGeometry":
        """Tight box by default; ``cube=True`` uses the equal-sided cube of ``cube_halfside``."""
        half = np.full(cov.d, cube_halfside(cov)) if cube else box_halfsides(cov)
        return cls(tuple(half), int(N_c), int(M))

    @property
    def halves(self) -> np.ndarray:
        return np.asarray(self.half)

    @property
    def freq_step(self) -> np.ndarray:
        return np.pi / self.halves

    @property
    def volume(self) -> float:
        return float(np.prod(2.0 * self.halves))

    def matches(self, d: int) -> bool:
        return len(self.half) == d


def _multi_indices(N, d):
    r = np.arange(-N, N + 1)
    g = np.meshgrid(*([r] * d), indexing="ij")
    return np.stack([v.ravel() for v in g], axis=1)


@dataclass
class CoefficientSet:
    """Sparse frame coefficients ``(j, n) -> c`` sorted by ``(j, n)``."""

    covering_id: str
    geometry: FrameGeometry
    a: tuple
    j: np.ndarray
    n: np.ndarray
    c: np.ndarray
    skipped: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.j = np.asarray(self.j, dtype=np.int64).reshape(-1)
        d = len(self.a)
        self.n = np.asarray(self.n, dtype=np.int64).reshape(len(self.j), d)
        self.c = np.asarray(self.c, dtype=complex).reshape(-1)
        if len(self.c) != len(self.j):
            raise DomainError("coefficient arrays differ in length")
        if len(self.j) and np.any(np.abs(self.n) > self.geometry.N_c):
            raise DomainError("multi-index beyond the truncation N_c")

    def __len__(self):
        return len(self.c)

    @property
    def d(self):
        return len(self.a)

    def energy(self) -> float:
        return float(np.sum(np.abs(self.c) ** 2))

    def patch_ids(self):
        return np.unique(self.j)

    def blocks(self):
        """Dense ``(2N_c+1)^d`` arrays per patch."""
        N = self.geometry.N_c
        out = {}
        if len(self.j) == 0:
            return out
        order = np.argsort(self.j, kind="stable")
        js = self.j[order]
        cut = np.flatnonzero(np.diff(js)) + 1
        for grp in np.split(order, cut):
            blk = np.zeros((2 * N + 1,) * self.d, dtype=complex)
            blk[tuple((self.n[grp] + N).T)] = self.c[grp]
            out[int(self.j[grp[0]])] = blk
        return out

    def with_values(self, keep_mask) -> "CoefficientSet":
        return CoefficientSet(self.covering_id, self.geometry, self.a, self.j[keep_mask], self.n[keep_mask],
                              self.c[keep_mask], list(self.skipped), dict(self.meta))

    def scaled(self, lam) -> "CoefficientSet":
        return CoefficientSet(self.covering_id, self.geometry, self.a, self.j, self.n, lam * self.c,
                              list(self.skipped), dict(self.meta))

    # ---- file format: magic, header length, JSON header, packed records ----
    def _dtype(self):
        return np.dtype([("j", "<i8"), ("n", "<i8", (self.d,)), ("re", "<f8"), ("im", "<f8")])

    def to_bytes(self) -> bytes:
        header = {"covering_id": self.covering_id, "a": list(self.a), "N_c": self.geometry.N_c,
                  "M": self.geometry.M, "half": list(self.geometry.half), "skipped": list(map(int, self.skipped)),
                  "count": len(self), "meta": self.meta}
        hb = json.dumps(header, sort_keys=True).encode()
        rec = np.zeros(len(self), dtype=self._dtype())
        rec["j"], rec["n"], rec["re"], rec["im"] = self.j, self.n, self.c.real, self.c.imag
        return MAGIC + struct.pack("<Q", len(hb)) + hb + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CoefficientSet":
        if not data.startswith(MAGIC):
            raise DomainError("not a coefficient file")
        off = len(MAGIC)
        (hl,) = struct.unpack("<Q", data[off:off + 8])
        header = json.loads(data[off + 8:off + 8 + hl].decode())
        d = len(header["a"])
        dt = np.dtype([("j", "<i8"), ("n", "<i8", (d,)), ("re", "<f8"), ("im", "<f8")])
        rec = np.frombuffer(data[off + 8 + hl:], dtype=dt, count=header["count"])
        geom = FrameGeometry(tuple(header["half"]), int(header["N_c"]), int(header["M"]))
        return cls(header["covering_id"], geom, tuple(header["a"]), rec["j"].copy(), rec["n"].copy(),
                   rec["re"] + 1j * rec["im"], header.get("skipped", []), header.get("meta", {}))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CoefficientSet":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _norm_range_of_box(ctx, center, ext):
    """Bounds on ``|xi|_a`` over the box ``center +- ext`` (the norm is monotone in each ``|xi_i|``)."""
    near = np.maximum(np.abs(center) - ext, 0.0)
    far = np.abs(center) + ext
    return aniso_norm(ctx, near), aniso_norm(ctx, far)


def touched_patches(b: Bapu, f: SpectralFunction):
    """Patch indices whose support may meet the support of ``f``; the rest are skipped."""
    cov = b.covering
    if f.support_hint is None:
        return np.arange(len(cov))
    ctr = cov.offsets + cov.scales * cov.p0
    ext = cov.scales * (cov.q if cov.shape == "box" else cov.q ** cov.ctx.a)
    lo, hi = _norm_range_of_box(cov.ctx, ctr, ext)
    lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
    return np.flatnonzero((hi >= f.support_hint[0]) & (lo <= f.support_hint[1]))


def _threads():
    try:
        return max(1, int(os.environ.get("FREQTILE_THREADS", "1")))
    except ValueError:
        return 1


def _axis_grids(cov: Covering, geom: FrameGeometry):
    half = geom.halves
    h = 2.0 * half / geom.M
    return [cov.p0[i] - half[i] + h[i] * np.arange(geom.M) for i in range(cov.d)]


def phi_grid(b: Bapu, geom: FrameGeometry, j: int, need=None) -> np.ndarray:
    """``phi_j(T_j zeta)`` on the reference grid, shaped ``(M,)*d``.

    Each neighbour's support is an axis-aligned ellipse in the reference
    coordinates of patch ``j``; only the grid sub-block under its bounding box
    is evaluated, so the cost scales with the overlap rather than the
    neighbour count times the grid. ``need`` (flat boolean mask) restricts the
    work to some grid points; full grids are memoised on the Bapu.
    """
    key = ("phi_grid", geom, int(j))
    cache = b.cache
    if key in cache:
        return cache[key]
    if need is not None:
        need = np.asarray(need, dtype=bool).ravel()
    cov = b.covering
    d, M = cov.d, geom.M
    axes = _axis_grids(cov, geom)
    sj, oj = cov.scales[j], cov.offsets[j]
    ext = cov.q if cov.shape == "box" else cov.q ** cov.ctx.a
    flat_idx, zs, owner = [], [], []
    strides = M ** np.arange(d - 1, -1, -1)
    for k in cov.neighbors[j]:
        sk, ok = cov.scales[k], cov.offsets[k]
        # support of k, expressed in patch j's reference coordinates
        lo = (ok + sk * (cov.p0 - ext) - oj) / sj
        hi = (ok + sk * (cov.p0 + ext) - oj) / sj
        rng = [np.arange(*np.searchsorted(axes[i], [lo[i], hi[i]])) for i in range(d)]
        if any(r.size == 0 for r in rng):
            continue
        ii = np.meshgrid(*rng, indexing="ij")
        ii = np.stack([v.ravel() for v in ii], axis=1)
        if need is not None:
            ii = ii[need[ii @ strides]]
        zeta = np.stack([axes[i][ii[:, i]] for i in range(d)], axis=1)
        flat_idx.append(ii @ strides)
        zs.append((oj + sj * zeta - ok) / sk - cov.p0)
        owner.append(np.full(len(ii), k == j))
    out = np.zeros(M ** d)
    if flat_idx:
        flat_idx, z, owner = np.concatenate(flat_idx), np.vstack(zs), np.concatenate(owner)
        live = cov.in_reference(z, cov.q)
        g = np.zeros(len(z))
        g[live] = b.bump.from_offset(z[live], cov.ctx)
        s2 = np.bincount(flat_idx, weights=g * g, minlength=M ** d)
        mine = owner & (g > 0)
        out[flat_idx[mine]] = g[mine] / np.sqrt(s2[flat_idx[mine]])
    out = out.reshape((M,) * d)
    if need is None:
        cache.put(key, out)
    return out


def patch_samples(b: Bapu, geom: FrameGeometry, j: int, f: SpectralFunction):
    """``F_j(zeta) = phi_j(T_j zeta) f_hat(T_j zeta)`` on the reference grid, shaped ``(M,)*d``."""
    cov = b.covering
    zeta, dv = reference_grid(cov, geom.M, geom.half)
    xi = cov.patches[j].map.apply(zeta)
    F = np.zeros(len(xi), dtype=complex)
    inq = cov.in_reference(zeta - cov.p0, cov.q)
    idx = np.flatnonzero(inq)
    if f.support_hint is not None and idx.size:
        idx = idx[f.supported_mask(xi[idx])]
    if idx.size:
        fv = f(xi[idx])
        idx, fv = idx[fv != 0], fv[fv != 0]
    if idx.size:
        need = np.zeros(len(xi), dtype=bool)
        need[idx] = True
        key = ("phi_grid", geom, int(j))
        phi = (b.cache[key] if key in b.cache else phi_grid(b, geom, j, need)).ravel()
        F[idx] = phi[idx] * fv
    return F.reshape((geom.M,) * cov.d), dv


def analyze(b: Bapu, geom: FrameGeometry, f: SpectralFunction, patches=None) -> CoefficientSet:
    """Frame coefficients ``<f_hat, eta_hat_{n,j}>`` for ``|n_i| <= N_c``.

    Each patch costs one FFT of the pulled-back samples ``F_j``; the
    trapezoidal rule on the periodic cube is exact for trigonometric
    polynomials of degree below ``M - N_c``. Patches whose support misses
    ``support_hint`` are recorded in ``skipped``.
    """
    cov = b.covering
    d, N, M = cov.d, geom.N_c, geom.M
    todo = touched_patches(b, f) if patches is None else np.asarray(patches, dtype=np.int64)
    skipped = sorted(set(range(len(cov))) - set(todo.tolist())) if patches is None else []
    nidx = _multi_indices(N, d)
    wrap = tuple((nidx % M).T)
    corner = cov.p0 - geom.halves
    phase = np.exp(-1j * ((nidx * geom.freq_step) @ corner))
    norm = geom.volume ** -0.5

    def one(j):
        F, dv = patch_samples(b, geom, j, f)
        det = cov.dets[j]
        local = float(np.sum(np.abs(F) ** 2) * dv * det)
        if local == 0.0:
            return j, np.zeros(len(nidx), dtype=complex), 0.0
        coef = norm * np.sqrt(det) * dv * phase * np.fft.fftn(F)[wrap]
        return j, coef, local

    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, todo))
    else:
        results = [one(j) for j in todo]
    J, Nn, C = [], [], []
    local = {}
    for j, coef, energy in results:
        if energy == 0.0:
            continue
        J.append(np.full(len(nidx), j))
        Nn.append(nidx)
        C.append(coef)
        local[int(j)] = energy
    if J:
        J, Nn, C = np.concatenate(J), np.vstack(Nn), np.concatenate(C)
    else:
        J, Nn, C = np.zeros(0, np.int64), np.zeros((0, d), np.int64), np.zeros(0, complex)
    cs = CoefficientSet(cov.covering_id, geom, tuple(cov.ctx.a.tolist()), J, Nn, C, skipped)
    cs.meta["local_energy"] = {str(k): v for k, v in local.items()}
    return cs


def patch_leak(cs: CoefficientSet) -> dict:
    """Per-patch fraction of ``||phi_j f_hat||^2`` outside the retained multi-indices."""
    out = {}
    en = np.bincount(cs.j, weights=np.abs(cs.c) ** 2) if len(cs) else np.zeros(0)
    for k, v in cs.meta.get("local_energy", {}).items():
        j = int(k)
        got = en[j] if j < len(en) else 0.0
        out[j] = 1.0 - got / v if v > 0 else 0.0
    return out


def _check_match(cs: CoefficientSet, b: Bapu):
    if cs.covering_id != b.covering.covering_id:
        raise CoveringMismatch("coefficients were computed for a different covering")


def _trig_sum(block, zeta_rel, step):
    """``sum_n block[n] exp(i step n . zeta)`` for rows of ``zeta_rel``; separable in each axis."""
    d = zeta_rel.shape[1]
    N = (block.shape[0] - 1) // 2
    n = np.arange(-N, N + 1)
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,))
    E = [np.exp(1j * step[i] * np.outer(zeta_rel[:, i], n)) for i in range(d)]
    if d == 1:
        return E[0] @ block
    if d == 2:
        return np.einsum("pi,ij,pj->p", E[0], block, E[1], optimize=True)
    out = block
    # general d: contract one axis at a time
    res = np.einsum("pi,i...->p...", E[0], out)
    for i in range(1, d):
        res = np.einsum("pi,pi...->p...", E[i], res)
    return res


def synthesize(cs: CoefficientSet, b: Bapu, xi) -> np.ndarray:
    """``sum_{j,n} c_{n,j} eta_hat_{n,j}(xi)`` at rows ``xi``."""
    _check_match(cs, b)
    cov = b.covering
    x = np.atleast_2d(np.asarray(xi, dtype=float))
    out = np.zeros(len(x), dtype=complex)
    if len(cs) == 0:
        return out
    geom = cs.geometry
    blocks = cs.blocks()
    pi, pj, g = b.g_pairs(x)
    have = np.isin(pj, np.fromiter(blocks.keys(), dtype=np.int64))
    if not have.any():
        return out
    s2 = np.bincount(pi, weights=g * g, minlength=len(x))
    pi, pj, g = pi[have], pj[have], g[have]
    phi = g / np.sqrt(s2[pi])
    zeta = cov.to_reference(x[pi], pj)  # relative to p0
    inside = np.all(np.abs(zeta) < geom.halves, axis=1)
    pi, pj, phi, zeta = pi[inside], pj[inside], phi[inside], zeta[inside]
    norm = geom.volume ** -0.5
    vals = np.zeros(len(pi), dtype=complex)
    order = np.argsort(pj, kind="stable")
    cut = np.flatnonzero(np.diff(pj[order])) + 1
    for grp in np.split(order, cut):
        if grp.size == 0:
            continue
        j = int(pj[grp[0]])
        z_abs = zeta[grp] + cov.p0
        vals[grp] = _trig_sum(blocks[j], z_abs, geom.freq_step) / np.sqrt(cov.dets[j])
    np.add.at(out, pi, norm * phi * vals)
    return out


def eta_hat_eval(b: Bapu, geom: FrameGeometry, j: int, n, xi) -> np.ndarray:
    """Atom ``eta_hat_{n,j}`` at rows ``xi``."""
    cov = b.covering
    if not (0 <= int(j) < len(cov)):
        raise DomainError(f"patch index {j} out of range")
    x = np.atleast_2d(np.asarray(xi, dtype=float))
    n = np.asarray(n, dtype=float).reshape(cov.d)
    zeta = cov.patches[j].map.inverse(x)
    inside = np.all(np.abs(zeta - cov.p0) <= geom.halves, axis=1)
    out = np.zeros(len(x), dtype=complex)
    if inside.any():
        phi = b.phi(j, x[inside])
        amp = geom.volume ** -0.5 / np.sqrt(cov.dets[j])
        out[inside] = phi * amp * np.exp(1j * (zeta[inside] @ (geom.freq_step * n)))
    return out


def mu_eval(b: Bapu, geom: FrameGeometry, j: int, y, grid: int = 128) -> np.ndarray:
    """``mu_j(y) = (2 pi)^{-d/2} int_K phi_j(T_j zeta) exp(i zeta . y) d zeta`` by quadrature."""
    if grid < 64:
        raise DomainError("grid must be >= 64")
    cov = b.covering
    zeta, dv = reference_grid(cov, grid, geom.half)
    xi = cov.patches[j].map.apply(zeta)
    inq = cov.in_reference(zeta - cov.p0, cov.q)
    u = np.zeros(len(zeta))
    if inq.any():
        u[inq] = b.phi(j, xi[inq])
    y = np.atleast_2d(np.asarray(y, dtype=float))
    keep = u != 0
    w = u[keep] * dv * (2 * np.pi) ** (-cov.d / 2)
    zk = zeta[keep]
    out = np.empty(len(y), dtype=complex)
    for s in range(0, len(y), 256):
        out[s:s + 256] = np.exp(1j * (y[s:s + 256] @ zk.T)) @ w
    return out


def eta_time_eval(b: Bapu, geom: FrameGeometry, j: int, n, x, grid: int = 128) -> np.ndarray:
    """Time-domain atom ``eta_{n,j}(x) = |K|^{-1/2} |T_j|^{1/2} e^{i x.b_j} mu_j(pi n/a + A_j x)``."""
    cov = b.covering
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = np.asarray(n, dtype=float).reshape(cov.d)
    T = cov.patches[j].map
    y = geom.freq_step * n + x * T.scales
    amp = geom.volume ** -0.5 * np.sqrt(T.det)
    return amp * np.exp(1j * (x @ T.offset)) * mu_eval(b, geom, j, y, grid)


def parseval_check(cs: CoefficientSet, f: SpectralFunction) -> float:
    """``sum |c|^2 / ||f_hat||^2`` using the function's independent norm oracle."""
    if f.l2_norm_oracle is None:
        raise DomainError("parseval_check needs an l2_norm_oracle")
    if f.l2_norm_oracle == 0:
        return float("nan") if cs.energy() > 0 else 1.0
    return cs.energy() / f.l2_norm_oracle ** 2
