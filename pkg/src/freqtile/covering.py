"""Structured admissible coverings of a truncated frequency annulus.

Two families are provided:

* ball coverings, built by a greedy maximal packing of quasi-balls whose
  radii follow a hybrid regulation function (any ``d`` in {1, 2});
* the explicit dyadic box covering (corridors split into boxes) for the
  Besov case ``alpha = 1``.

Every patch carries an affine map ``T_j zeta = scales * zeta + offset`` that
sends the reference sets onto the patch. For ball coverings the reference
sets are ``P = B(p0, 1)`` and ``Q = B(p0, 2)``, for box coverings ``[-1, 1]^d``
and ``[-q, q]^d``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .anorm import (QuasiNormContext, aniso_norm, ball_semi_axes, ellipsoid_contact, ellipsoids_meet,
                    estimate_K, sample_sphere)
from .errors import ConstructionError, DomainError
from .regulation import HybridRegulation, alpha_regulation, regulation_from_dict

log = logging.getLogger(__name__)

BOX_Q = 1.5
MAX_DOUBLINGS = 3


@dataclass(frozen=True)
class AffineMap:
    """``zeta -> scales * zeta + offset`` with a positive diagonal linear part."""

    scales: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scales, dtype=float)
        b = np.asarray(self.offset, dtype=float)
        if s.shape != b.shape or s.ndim != 1:
            raise DomainError("scales and offset must be vectors of equal length")
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise DomainError("affine scales must be positive")
        object.__setattr__(self, "scales", s)
        object.__setattr__(self, "offset", b)

    @property
    def det(self) -> float:
        return float(np.prod(self.scales))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.scales)

    def apply(self, zeta):
        return np.asarray(zeta, dtype=float) * self.scales + self.offset

    def inverse(self, xi):
        return (np.asarray(xi, dtype=float) - self.offset) / self.scales


@dataclass(frozen=True)
class Patch:
    j: int
    center: np.ndarray
    radius: float
    map: AffineMap
    klass: str = "J1"
    level: Optional[int] = None
    k: Optional[tuple] = None


@dataclass
class Covering:
    """A finite structured covering together with its reference geometry.

    ``shape`` is ``"ball"`` or ``"box"``. ``covered`` names the region on
    which coverage (and hence the partition of unity) is guaranteed: a pair
    ``(lo, hi)`` of quasi-norm values for ball coverings, or of box-norm
    values ``max_i |xi_i|**(1/a_i)`` for box coverings.
    """

    ctx: QuasiNormContext
    patches: list
    p0: np.ndarray
    delta: float
    pack_ratio: float
    annulus: tuple
    regulation: Optional[HybridRegulation]
    C_split: float
    shape: str = "ball"
    q: float = 2.0
    covered: tuple = None
    neighbors: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=float)
        if self.covered is None:
            self.covered = inner_annulus(self.annulus)
        self._arrays = None
        self._indexes = {}
        if self.neighbors is None:
            self.neighbors = compute_neighbors(self)

    def __len__(self):
        return len(self.patches)

    @property
    def d(self):
        return self.ctx.d

    @property
    def norm_kind(self):
        return "box" if self.shape == "box" else "aniso"

    def _build_arrays(self):
        P = self.patches
        self._arrays = {
            "centers": np.array([p.center for p in P], dtype=float).reshape(len(P), self.d),
            "radii": np.array([p.radius for p in P], dtype=float),
            "scales": np.array([p.map.scales for p in P], dtype=float).reshape(len(P), self.d),
            "offsets": np.array([p.map.offset for p in P], dtype=float).reshape(len(P), self.d),
        }
        self._arrays["dets"] = np.prod(self._arrays["scales"], axis=1)

    def __getattr__(self, name):
        if name in ("centers", "radii", "scales", "offsets", "dets"):
            if self.__dict__.get("_arrays") is None:
                self._build_arrays()
            return self.__dict__["_arrays"][name]
        raise AttributeError(name)

    def weights(self):
        """Regulation value at every patch centre (used as the space weight)."""
        if self.regulation is None:
            return aniso_norm(self.ctx, self.centers)
        return self.regulation.from_norm(aniso_norm(self.ctx, self.centers))

    def to_reference(self, xi, idx):
        """``T_j^{-1} xi - p0`` for matching rows of ``xi`` and patch indices ``idx``."""
        return (np.asarray(xi, dtype=float) - self.offsets[idx]) / self.scales[idx] - self.p0

    def in_reference(self, z, rho, strict=True):
        """Membership of reference points ``z`` (relative to ``p0``) in the set of size ``rho``."""
        if self.shape == "box":
            m = np.max(np.abs(z), axis=-1)
        else:
            zz = z / rho ** self.ctx.a
            m = np.sum(zz * zz, axis=-1) * rho
        return m < rho if strict else m <= rho

    def index(self, rho):
        """Spatial index for the sets ``T_j(reference of size rho)``."""
        key = float(rho)
        if key not in self._indexes:
            self._indexes[key] = PatchIndex(self, key)
        return self._indexes[key]

    def containing(self, xi, rho=None, strict=True):
        """Pairs ``(point, patch)`` with the point inside ``T_j`` of the reference set of size ``rho``.

        ``rho`` defaults to the support size ``q``.
        """
        return self.index(self.q if rho is None else rho).query(xi, strict=strict)

    def in_covered(self, xi):
        """Whether points lie in the region with guaranteed coverage."""
        lo, hi = self.covered
        n = region_norm(self, xi)
        return (n >= lo) & (n <= hi)

    def sample_covered(self, rng, n, lo=None, hi=None):
        lo = self.covered[0] if lo is None else lo
        hi = self.covered[1] if hi is None else hi
        s = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
        if self.shape == "box":
            omega = sample_cube_surface(rng, n, self.d)
        else:
            omega = sample_sphere(rng, n, self.d)
        return s[:, None] ** self.ctx.a * omega

    # ---- serialization ----
    def to_dict(self) -> dict:
        out = {
            "anisotropy": self.ctx.anisotropy.to_dict(),
            "K_est": self.ctx.K_est,
            "shape": self.shape,
            "p0": self.p0.tolist(),
            "q": self.q,
            "delta": self.delta,
            "pack_ratio": self.pack_ratio,
            "annulus": list(self.annulus),
            "covered": list(self.covered),
            "C_split": self.C_split,
            "regulation": None if self.regulation is None else self.regulation.to_dict(),
            "meta": self.meta,
            "patches": [],
            "neighbors": [list(map(int, nb)) for nb in self.neighbors],
        }
        for p in self.patches:
            rec = {"j": p.j, "center": p.center.tolist(), "radius": p.radius,
                   "scales": p.map.scales.tolist(), "offset": p.map.offset.tolist(), "klass": p.klass}
            if p.level is not None:
                rec["level"] = p.level
                rec["k"] = list(p.k)
            out["patches"].append(rec)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def covering_id(self) -> str:
        if "_id" not in self.__dict__:
            self.__dict__["_id"] = hashlib.sha256(self.to_json().encode()).hexdigest()
        return self.__dict__["_id"]

    @classmethod
    def from_dict(cls, data: dict) -> "Covering":
        ctx = QuasiNormContext.create(data["anisotropy"]["a"], data["anisotropy"].get("root_tol", 1e-10),
                                      K_est=data.get("K_est"))
        reg = None if data.get("regulation") is None else regulation_from_dict(ctx, data["regulation"])
        patches = []
        for rec in data["patches"]:
            patches.append(Patch(int(rec["j"]), np.asarray(rec["center"], float), float(rec["radius"]),
                                 AffineMap(rec["scales"], rec["offset"]), rec["klass"],
                                 rec.get("level"), None if rec.get("k") is None else tuple(rec["k"])))
        nb = [np.asarray(v, dtype=np.int64) for v in data["neighbors"]]
        return cls(ctx, patches, data["p0"], float(data["delta"]), float(data["pack_ratio"]),
                   tuple(data["annulus"]), reg, float(data["C_split"]), data.get("shape", "ball"),
                   float(data.get("q", 2.0)), tuple(data["covered"]), nb, data.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "Covering":
        return cls.from_dict(json.loads(text))


def save_covering(cov: Covering, path):
    with open(path, "w") as fh:
        fh.write(cov.to_json())


def load_covering(path) -> Covering:
    with open(path) as fh:
        return Covering.from_json(fh.read())


def inner_annulus(annulus):
    """Coverage is asserted one ring away from the truncation edges."""
    return (2.0 * annulus[0], annulus[1] / 2.0)


def box_norm(ctx, xi):
    """``max_i |xi_i| ** (1 / a_i)``: the gauge whose level sets are the dyadic cubes."""
    x = np.abs(np.asarray(xi, dtype=float))
    return np.max(x ** (1.0 / ctx.a), axis=-1)


def region_norm(cov, xi):
    return box_norm(cov.ctx, xi) if cov.shape == "box" else aniso_norm(cov.ctx, np.atleast_2d(xi))


def sample_cube_surface(rng, n, d):
    """Uniform points on the boundary of ``[-1, 1]^d``."""
    w = rng.uniform(-1.0, 1.0, (n, d))
    face = rng.integers(0, d, n)
    w[np.arange(n), face] = rng.choice([-1.0, 1.0], n)
    return w


# ---- spatial index ---------------------------------------------------------

class PatchIndex:
    """Finds the patches whose scaled reference set contains given points.

    Patches are grouped by the binary order of magnitude of their bounding-box
    half-extents; each group gets a k-d tree on centres measured in units of
    the group's largest extents, so a Chebyshev query of radius one returns a
    superset that an exact membership test then filters.
    """

    def __init__(self, cov: Covering, rho: float):
        self.cov = cov
        self.rho = rho
        if len(cov) == 0:
            self.groups = []
            return
        if cov.shape == "box":
            ext = cov.scales * rho
        else:
            ext = cov.scales * rho ** cov.ctx.a
        ctr = cov.offsets + cov.scales * cov.p0
        key = np.floor(np.log2(ext)).astype(np.int64)
        self.groups = []
        order = np.lexsort(key.T[::-1])
        ks = key[order]
        breaks = np.flatnonzero(np.any(np.diff(ks, axis=0) != 0, axis=1)) + 1
        for members in np.split(order, breaks):
            E = ext[members].max(axis=0)
            self.groups.append((members, E, cKDTree(ctr[members] / E)))

    def query(self, xi, strict=True):
        x = np.atleast_2d(np.asarray(xi, dtype=float))
        pts, pat = [], []
        for members, E, tree in self.groups:
            hits = tree.query_ball_point(x / E, r=1.0, p=np.inf)
            lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
            if lens.sum() == 0:
                continue
            pts.append(np.repeat(np.arange(len(x)), lens))
            pat.append(members[np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if h])])
        if not pts:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        pi = np.concatenate(pts)
        pj = np.concatenate(pat)
        keep = self.cov.in_reference(self.cov.to_reference(x[pi], pj), self.rho, strict=strict)
        pi, pj = pi[keep], pj[keep]
        o = np.lexsort((pj, pi))
        return pi[o], pj[o]


# ---- pairwise geometry -----------------------------------------------------

def contact_values(c1, s1, c2, s2):
    """Contact value of ellipsoids given centres and semi-axes (rows); ``< 1`` iff they meet."""
    delta = np.asarray(c1, float) - np.asarray(c2, float)
    if len(delta) == 0:
        return np.zeros(0)
    return ellipsoid_contact(delta, s1, s2)


def meet(c1, s1, c2, s2):
    """Whether ellipsoids given by centres and semi-axes (rows) share interior points."""
    delta = np.asarray(c1, float) - np.asarray(c2, float)
    if len(delta) == 0:
        return np.zeros(0, dtype=bool)
    return ellipsoids_meet(delta, s1, s2)


def _candidate_pairs(centers, ext):
    """All pairs ``(i < j)`` whose axis-aligned boxes ``centers +- ext`` overlap."""
    n = len(centers)
    if n < 2:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    key = np.floor(np.log2(ext)).astype(np.int64)
    order = np.lexsort(key.T[::-1])
    ks = key[order]
    breaks = np.flatnonzero(np.any(np.diff(ks, axis=0) != 0, axis=1)) + 1
    groups = [(m, ext[m].max(axis=0)) for m in np.split(order, breaks)]
    I, J = [], []
    for gm, gE in groups:
        tree = cKDTree(centers[gm] / gE)
        for qm, qE in groups:
            # boxes overlap iff |c_i - c_j| <= e_i + e_j in every coordinate
            r = np.max((qE + gE) / gE)
            hits = tree.query_ball_point(centers[qm] / gE, r=r, p=np.inf)
            lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
            if lens.sum() == 0:
                continue
            a = np.repeat(qm, lens)
            b = gm[np.concatenate([np.asarray(h, dtype=np.int64) for h in hits if h])]
            keep = a < b
            I.append(a[keep])
            J.append(b[keep])
    if not I:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    I, J = np.concatenate(I), np.concatenate(J)
    keep = np.all(np.abs(centers[I] - centers[J]) <= ext[I] + ext[J], axis=1)
    I, J = I[keep], J[keep]
    o = np.lexsort((J, I))
    return I[o], J[o]


def intersecting_pairs(cov: Covering, rho: float):
    """Pairs ``i < j`` whose sets ``T(reference of size rho)`` share interior points."""
    ctr = cov.offsets + cov.scales * cov.p0
    if cov.shape == "box":
        ext = cov.scales * rho
        I, J = _candidate_pairs(ctr, ext)
        keep = np.all(np.abs(ctr[I] - ctr[J]) < ext[I] + ext[J], axis=1)
        return I[keep], J[keep]
    ext = cov.scales * rho ** cov.ctx.a
    I, J = _candidate_pairs(ctr, ext)
    keep = meet(ctr[I], ext[I], ctr[J], ext[J])
    return I[keep], J[keep]


def compute_neighbors(cov: Covering):
    """Neighbour lists: ``i`` neighbours ``j`` iff their supports ``Q_i`` and ``Q_j`` meet.

    Ball supports are compared with the exact ellipsoid contact test, box
    supports by interval overlap. Each patch neighbours itself.
    """
    n = len(cov)
    I, J = intersecting_pairs(cov, cov.q)
    rows = np.concatenate([I, J, np.arange(n)])
    cols = np.concatenate([J, I, np.arange(n)])
    o = np.lexsort((cols, rows))
    rows, cols = rows[o], cols[o]
    splits = np.searchsorted(rows, np.arange(1, n))
    return [np.asarray(v, dtype=np.int64) for v in np.split(cols, splits)]


def packing_report(cov: Covering) -> dict:
    """Exhaustive disjointness check of the packing balls.

    Every pair with overlapping bounding boxes (a necessary condition for
    intersection) gets the exact contact test. Returns the number of
    intersecting pairs and the smallest contact value found.
    """
    if cov.shape == "box":
        raise DomainError("packing balls are defined for ball coverings only")
    ctx = cov.ctx
    # the stored radii may include verification doublings; packing radii never change
    rho = cov.meta.get("packing_radii")
    rho = np.asarray(rho, float) if rho is not None else cov.pack_ratio * cov.radii
    ext = ball_semi_axes(ctx, rho)
    I, J = _candidate_pairs(cov.centers, ext)
    cv = contact_values(cov.centers[I], ext[I], cov.centers[J], ext[J])
    return {"pairs_checked": int(len(I)), "violations": int(np.sum(cv < 1.0)),
            "min_contact": float(cv.min()) if len(cv) else float("inf")}


# ---- greedy ball covering --------------------------------------------------

def _shell_edges(r_min, r_max, ratio=2 ** 0.25):
    n = max(1, int(np.ceil(np.log(r_max / r_min) / np.log(ratio) - 1e-9)))
    return np.geomspace(r_min, r_max, n + 1)


def _shell_candidates(ctx, lo, hi, spacing):
    """Lattice points ``k * spacing`` with quasi-norm in ``[lo, hi)``."""
    axes = []
    for i in range(ctx.d):
        m = int(np.floor(hi ** ctx.a[i] / spacing[i]))
        axes.append(np.arange(-m, m + 1) * spacing[i])
    if ctx.d == 1:
        pts = axes[0][:, None]
    else:
        g = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([v.ravel() for v in g], axis=1)
        # cheap necessary condition before solving for the norm
        pts = pts[np.sum((pts / hi ** ctx.a) ** 2, axis=1) < 1.0]
    nr = aniso_norm(ctx, pts) if len(pts) else np.zeros(0)
    keep = (nr >= lo) & (nr < hi)
    return pts[keep], nr[keep]


def _check_origin_exclusion(h, delta, annulus, K):
    r = np.geomspace(annulus[0], annulus[1], 4097)
    bad = delta * h.from_norm(r) >= r / (2.0 * K)
    if bad.any():
        raise DomainError(
            f"delta={delta} too large: covering balls reach the origin at |xi|_a={r[bad][0]:.4g} "
            f"(need delta*h(xi) < |xi|_a/(2K), K={K:.4g})")


def greedy_packing(ctx, h, delta, pack_ratio, annulus, candidate_resolution=32):
    """Centres of a greedy maximal packing over a graded lattice.

    Candidates are visited in ascending quasi-norm and accepted when their
    packing ball ``B(xi, pack_ratio * delta * h(xi))`` misses every accepted
    packing ball. Returns ``(centers, norms)``.
    """
    r_min, r_max = annulus
    csig = 8.0 / candidate_resolution
    edges = _shell_edges(r_min, r_max)
    pts, nrs, bounds = [], [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        hmin = float(np.min(h.from_norm(np.geomspace(lo, hi, 17))))
        spacing = csig * (pack_ratio * delta * hmin) ** ctx.a
        p, nr = _shell_candidates(ctx, lo, hi, spacing)
        o = np.lexsort(tuple(p.T[::-1]) + (nr,))
        pts.append(p[o])
        nrs.append(nr[o])
    sizes = np.array([len(p) for p in pts])
    starts = np.concatenate([[0], np.cumsum(sizes)])
    cand = np.vstack(pts)
    cnorm = np.concatenate(nrs)
    crho = pack_ratio * delta * h.from_norm(cnorm)
    cext = ball_semi_axes(ctx, crho)
    log.debug("greedy packing: %d candidates in %d shells", len(cand), len(pts))

    groups = []
    for b in range(len(pts)):
        sl = slice(starts[b], starts[b + 1])
        if sizes[b] == 0:
            groups.append(None)
            continue
        E = cext[sl].max(axis=0)
        groups.append((starts[b], E, cKDTree(cand[sl] / E)))
    gmax = np.array([crho[starts[b]:starts[b + 1]].max() if sizes[b] else 0.0 for b in range(len(pts))])
    shell_lo = edges[:-1]

    blocked = np.zeros(len(cand), dtype=bool)
    accepted = []
    ptr = 0
    n = len(cand)
    while ptr < n:
        window = blocked[ptr:ptr + 4096]
        free = np.flatnonzero(~window)
        if free.size == 0:
            ptr += len(window)
            continue
        i = ptr + int(free[0])
        accepted.append(i)
        blocked[i] = True
        ptr = i + 1
        x, e = cand[i], cext[i]
        b0 = int(np.searchsorted(starts, i, side="right") - 1)
        # norms are monotone in each |coordinate|, so this bounds every reachable candidate
        reach = aniso_norm(ctx, np.abs(x) + e + gmax[b0:, None] ** ctx.a)
        for b in range(b0, len(groups)):
            g = groups[b]
            if shell_lo[b] > reach[b - b0]:
                break
            if g is None:
                continue
            start, E, tree = g
            hits = tree.query_ball_point(x / E, r=float(np.max((E + e) / E)), p=np.inf)
            if not hits:
                continue
            idx = start + np.asarray(hits, dtype=np.int64)
            idx = idx[~blocked[idx]]
            if idx.size == 0:
                continue
            ok = np.all(np.abs(cand[idx] - x) < cext[idx] + e, axis=1)
            idx = idx[ok]
            if idx.size == 0:
                continue
            hit = meet(np.broadcast_to(x, cand[idx].shape), np.broadcast_to(e, cand[idx].shape),
                       cand[idx], cext[idx])
            blocked[idx[hit]] = True
    acc = np.asarray(accepted, dtype=np.int64)
    return cand[acc], cnorm[acc], {"n_candidates": int(n)}


def build_covering(h: HybridRegulation, delta: float, pack_ratio: float = 0.35, annulus=(2 ** -6, 2 ** 6),
                   candidate_resolution: int = 32, C_split: Optional[float] = None,
                   n_verify: int = 20_000, seed: int = 0) -> Covering:
    """Greedy structured ball covering of an annulus for the regulation ``h``.

    Parameters
    ----------
    h : HybridRegulation
        Radius rule; covering balls are ``B(xi_j, delta * h(xi_j))``.
    delta : float
        Covering scale. Must keep every ball clear of the origin.
    pack_ratio : float
        Ratio of packing to covering radius, in (0, 1).
    annulus : (float, float)
        Quasi-norm range ``[r_min, r_max]`` of the candidate lattice.
    candidate_resolution : int
        Lattice density; the spacing is ``8 / candidate_resolution`` packing radii.
    n_verify : int
        Samples for the a-posteriori coverage check of the inner annulus.

    Returns
    -------
    Covering
        With ``meta`` recording the nominal delta, the number of doublings
        the coverage check needed and the packing radii.
    """
    ctx = h.ctx
    if ctx.d not in (1, 2):
        raise DomainError("ball coverings are supported for d in {1, 2}")
    r_min, r_max = (float(v) for v in annulus)
    if not (0 < r_min < r_max):
        raise DomainError(f"annulus must satisfy 0 < r_min < r_max, got {annulus}")
    if not (delta > 0):
        raise DomainError("delta must be positive")
    if not (0 < pack_ratio < 1):
        raise DomainError("pack_ratio must lie in (0, 1)")
    if candidate_resolution < 32:
        raise DomainError("candidate_resolution must be >= 32")
    if ctx.K_est is None:
        estimate_K(ctx, 100_000, seed=0)
    K = ctx.K
    _check_origin_exclusion(h, delta, (r_min, r_max), K)

    centers, norms, info = greedy_packing(ctx, h, delta, pack_ratio, (r_min, r_max), candidate_resolution)
    hv = h.from_norm(norms)
    p0 = np.zeros(ctx.d)
    p0[0] = (3.0 * K) ** ctx.a[0]
    C_split = 4.0 * r_min if C_split is None else float(C_split)
    packing = pack_ratio * delta * hv

    eff = delta
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_DOUBLINGS + 1):
        if attempt:
            eff *= 2.0
            try:
                _check_origin_exclusion(h, eff, (r_min, r_max), K)
            except DomainError as err:
                raise ConstructionError(f"coverage needs delta={eff} which violates origin exclusion: {err}",
                                        uncovered) from None
        cov = _assemble(ctx, h, centers, eff * hv, p0, eff, packing / (eff * hv), (r_min, r_max), C_split,
                        {"nominal_delta": delta, "nominal_pack_ratio": pack_ratio, "doublings": attempt,
                         "candidate_resolution": candidate_resolution, "packing_radii": packing.tolist(),
                         **info})
        xs = cov.sample_covered(rng, n_verify)
        pi, _ = cov.containing(xs, rho=1.0)
        hit = np.zeros(len(xs), dtype=bool)
        hit[pi] = True
        uncovered = xs[~hit]
        if uncovered.size == 0:
            log.info("covering: %d patches, delta %.4g after %d doublings", len(cov), eff, attempt)
            return cov
        log.info("covering check: %d uncovered samples at delta %.4g", len(uncovered), eff)
    raise ConstructionError(f"{len(uncovered)} uncovered samples after {MAX_DOUBLINGS} doublings", uncovered)


def _assemble(ctx, h, centers, radii, p0, delta, pack_ratio, annulus, C_split, meta):
    pr = np.asarray(pack_ratio, dtype=float)
    patches = []
    origin_far = ellipsoid_contact(centers, ball_semi_axes(ctx, radii),
                                   ball_semi_axes(ctx, np.full(len(radii), C_split))) >= 1.0
    for j, (c, r) in enumerate(zip(centers, radii)):
        s = float(r) ** ctx.a
        patches.append(Patch(j, np.array(c, dtype=float), float(r), AffineMap(s, c - s * p0),
                             "J2" if origin_far[j] else "J1"))
    # packing radii are fixed at construction; the ratio is reported against the final radii
    return Covering(ctx, patches, p0, float(delta), float(pr.max()) if pr.size else 0.0, annulus, h,
                    C_split, "ball", 2.0, None, None, meta)


# ---- explicit dyadic box covering -----------------------------------------

def besov_index_set(d: int):
    """``E = {+-1, +-2}^d`` minus ``{+-1}^d``, in lexicographic order."""
    return [k for k in itertools.product((-2, -1, 1, 2), repeat=d) if any(abs(v) == 2 for v in k)]


def besov_halflengths(ctx, k):
    """Diagonal of ``B(k)``: half side lengths of the unit-level box for ``k``."""
    a = ctx.a
    k = np.abs(np.asarray(k))
    return np.where(k == 1, 2.0 ** (-(a + 1)), (1.0 - 2.0 ** (-a)) / 2.0)


def besov_covering(ctx: QuasiNormContext, j_min: int, j_max: int, q: float = BOX_Q,
                   C_split: Optional[float] = None) -> Covering:
    """Dyadic corridor covering for ``alpha = 1``.

    The corridor between the cubes of level ``j - 1`` and ``j`` is split into
    the boxes ``P_{j,k}``, ``k`` in :func:`besov_index_set`; each box is the
    image of ``[-1, 1]^d`` under ``zeta -> D_a(2^j) B(k) zeta + b_{j,k}`` with
    ``b_{j,k}`` the box centre. Supports are the images of ``[-q, q]^d``.
    """
    if j_min > j_max:
        raise DomainError("j_min must not exceed j_max")
    a = ctx.a
    limit = float(np.min((1 + 2.0 ** -a) / (1 - 2.0 ** -a)))
    if not (1.0 < q < limit):
        raise DomainError(f"support factor q must lie in (1, {limit:.4g}) to keep supports off the origin")
    if ctx.K_est is None:
        estimate_K(ctx, 100_000, seed=0)
    C_split = 4.0 * 2.0 ** (j_min - 1) if C_split is None else float(C_split)
    patches = []
    idx = 0
    for j in range(j_min, j_max + 1):
        for k in besov_index_set(ctx.d):
            half = 2.0 ** (j * a) * besov_halflengths(ctx, k)
            lo = np.where(np.abs(k) == 1, 0.0, 2.0 ** ((j - 1) * a))
            center = np.sign(k) * (lo + half)
            # closest point of the box to the origin decides the class
            near = np.sign(k) * lo
            klass = "J2" if aniso_norm(ctx, near) >= C_split else "J1"
            patches.append(Patch(idx, center, 2.0 ** j, AffineMap(half, center), klass, j, tuple(k)))
            idx += 1
    lo, hi = 2.0 ** (j_min - 1), 2.0 ** j_max
    reg = alpha_regulation(ctx, 1.0)
    return Covering(ctx, patches, np.zeros(ctx.d), 1.0, 1.0, (lo, hi), reg, C_split, "box", float(q),
                    (lo, hi), None, {"j_min": j_min, "j_max": j_max})


def alpha_knots_1d(alpha: float, n_max: int):
    """Knots ``+-n**beta`` and ``+-n**-beta``, ``beta = 1/(1 - alpha)``, sorted."""
    if not (0.0 <= alpha < 1.0):
        raise DomainError("alpha must lie in [0, 1); use besov_covering for alpha = 1")
    if n_max < 2:
        raise DomainError("n_max must be >= 2")
    beta = 1.0 / (1.0 - alpha)
    n = np.arange(1, n_max + 1, dtype=float)
    pos = np.unique(np.concatenate([n ** beta, n ** -beta]))
    return np.concatenate([-pos[::-1], pos])


# ---- diagnostics -----------------------------------------------------------

def check_admissible(cov: Covering, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Sampled admissibility diagnostics.

    Samples the covered region log-uniformly in the covering's gauge and
    reports the covered fraction and largest membership count of the patch
    sets, the largest support overlap, the origin margin
    ``min_j |xi_j|_a - K * r_j`` (ball coverings) and the largest transition
    norm ``max |A_k^{-1} A_j|`` over neighbouring pairs.
    """
    if n_samples < 10_000:
        raise DomainError("check_admissible needs at least 10^4 samples")
    rng = np.random.default_rng(seed)
    xs = cov.sample_covered(rng, n_samples)
    pi, _ = cov.containing(xs, rho=1.0)
    count = np.bincount(pi, minlength=len(xs))
    qi, _ = cov.containing(xs)
    qcount = np.bincount(qi, minlength=len(xs))
    if cov.shape == "box":
        # distance from the origin to the nearest support box
        near = np.maximum(np.abs(cov.centers) - cov.scales * cov.q, 0.0)
        margin = float(np.min(aniso_norm(cov.ctx, near)))
    else:
        margin = float(np.min(aniso_norm(cov.ctx, cov.centers) - cov.ctx.K * cov.radii))
    tn = 0.0
    for j, nb in enumerate(cov.neighbors):
        tn = max(tn, float(np.max(cov.scales[j] / cov.scales[nb])))
    nbmax = max((len(nb) for nb in cov.neighbors), default=0)
    return {
        "n_samples": int(n_samples),
        "n_patches": len(cov),
        "covered_fraction": float(np.mean(count >= 1)),
        "max_overlap": int(count.max()) if len(count) else 0,
        "max_support_overlap": int(qcount.max()) if len(qcount) else 0,
        "overlap_bound": int(nbmax),
        "min_dist_to_origin": margin,
        "max_transition_norm": tn,
        "uncovered": xs[count == 0].tolist()[:20],
    }


def cross_overlap(c1: Covering, c2: Covering) -> dict:
    """Largest number of covering balls of one covering meeting a single ball of the other."""
    if c1.shape != "ball" or c2.shape != "ball" or c1.d != c2.d:
        raise DomainError("cross overlap compares two ball coverings in the same dimension")
    n1 = len(c1)
    centers = np.vstack([c1.centers, c2.centers])
    ext = ball_semi_axes(c1.ctx, np.concatenate([c1.radii, c2.radii]))
    I, J = _candidate_pairs(centers, ext)
    cross = (I < n1) & (J >= n1)
    I, J = I[cross], J[cross]
    hit = meet(centers[I], ext[I], centers[J], ext[J])
    a = np.bincount(I[hit], minlength=n1)
    b = np.bincount(J[hit] - n1, minlength=len(c2))
    return {"sup_J_of_i": int(a.max()) if a.size else 0, "sup_I_of_j": int(b.max()) if b.size else 0}
