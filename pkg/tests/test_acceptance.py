"""Acceptance suite at desk scale (d in {1, 2}, annulus [2^-6, 2^6]).

Each test checks one criterion at its stated tolerance and records a single
``criterion N: PASS|FAIL ...`` line, printed in the pytest terminal summary.
Run on its own with ``python tests/test_acceptance.py`` or
``pytest tests/test_acceptance.py``. Norm-equivalence constants are written
to ``acceptance-out/norm_equivalence.json``.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from freqtile.anorm import QuasiNormContext, aniso_norm, dilation_scales, sample_log_uniform
from freqtile.bapu import Bapu
from freqtile.cli import main as cli_main
from freqtile.covering import (AffineMap, besov_covering, besov_halflengths, besov_index_set, build_covering,
                               check_admissible, packing_report)
from freqtile.frame import FrameGeometry, analyze, parseval_check
from freqtile.registry import default_test_set, gaussbump_annular, multi_bump
from freqtile.regulation import alpha_regulation, knot_spacing_ratios
from freqtile.spaces import (INF, SpaceParams, compression_curve, dilation_scaling_check, local_lp_norms,
                             nikolskii_check, norm_report)

OUT = Path(__file__).resolve().parent.parent / "acceptance-out"
DESK = (2.0 ** -6, 2.0 ** 6)
A2 = [0.5, 1.5]
KEEP = [0.01, 0.05, 0.1, 0.5, 1.0]

# (label, a, alpha, delta, annulus, test-function centre); see the README for the d = 2 choices
CASES = [
    ("d1-alpha0", [1.0], 0.0, 0.2, DESK, None),
    ("d1-alpha0.5", [1.0], 0.5, 0.2, DESK, None),
    ("d1-alpha1", [1.0], 1.0, 0.2, DESK, None),
    ("d2-alpha0.5", A2, 0.5, 0.2, (1 / 8, 8.0), 2.0),
    ("d2-alpha1", A2, 1.0, 0.15, DESK, None),
]


def verdict(log, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    log.append(line)
    return ok


class Built:
    """A covering plus everything derived from it, built on first use."""

    def __init__(self, label, a, alpha, delta, annulus, center):
        self.label, self.center = label, center
        self.ctx = QuasiNormContext.create(a)
        self.args = (alpha_regulation(self.ctx, alpha), delta, 0.35, annulus)
        t = time.perf_counter()
        self.cov = build_covering(*self.args, candidate_resolution=32)
        self.t_build = time.perf_counter() - t
        self.bapu = Bapu(self.cov)
        self._frame = None

    def frame(self):
        if self._frame is None:
            d = self.cov.d
            geom = FrameGeometry.for_covering(self.cov, *((32, 128) if d == 1 else (16, 64)))
            fns = default_test_set(self.ctx, self.cov.covered, self.center)
            t = time.perf_counter()
            coeffs = [analyze(self.bapu, geom, f) for f in fns]
            self._frame = (fns, coeffs, time.perf_counter() - t)
        return self._frame


@pytest.fixture(scope="module")
def built():
    return {c[0]: Built(*c) for c in CASES}


def dense_l2sq(f, n1=400_000, n2=2000):
    """Midpoint rule for ``||f||^2`` over the box enclosing the quasi-norm shell of the support."""
    ext = f.support_hint[1] ** f.ctx.a
    d = len(ext)
    n = n1 if d == 1 else n2
    ax = [-ext[i] + 2 * ext[i] * (np.arange(n) + 0.5) / n for i in range(d)]
    total = 0.0
    cell = float(np.prod(2 * ext / n))
    for row in ax[0].reshape(-1, 200 if d == 2 else n):  # bounded memory in d = 2
        g = np.meshgrid(row, *ax[1:], indexing="ij")
        pts = np.stack([v.ravel() for v in g], axis=1)
        total += float(np.sum(np.abs(f(pts)) ** 2))
    return total * cell


def test_homogeneity(acceptance_log):
    rng = np.random.default_rng(1)
    worst, t_max = 0.0, 0.0
    for a in ([1.0], A2, [1.0, 1.0]):
        ctx = QuasiNormContext.create(a)
        x = sample_log_uniform(ctx, rng, 1000, *DESK)
        t0 = time.perf_counter()
        base = aniso_norm(ctx, x)
        for t in (0.25, 0.5, 3.0, 10.0):
            scaled = aniso_norm(ctx, x * dilation_scales(ctx, t))
            worst = max(worst, float(np.max(np.abs(scaled - t * base) / (t * base))))
        t_max = max(t_max, time.perf_counter() - t0)
    ok = worst <= 1e-9 and t_max < 1.0
    assert verdict(acceptance_log, 1, ok, f"max rel dev {worst:.2e} (tol 1e-9), slowest {t_max:.2f}s (< 1s)")


def test_partition_of_unity(built, acceptance_log):
    parts, ok = [], True
    for label, b in built.items():
        t0 = time.perf_counter()
        r = b.bapu.verify_pou(10_000, seed=3)
        dt = time.perf_counter() - t0
        res = max(r["max_psi_residual"], r["max_phi2_residual"])
        ok &= res <= 1e-10 and dt < 30
        parts.append(f"{label} {res:.1e}/{dt:.1f}s")
    assert verdict(acceptance_log, 2, ok, "residual/time: " + ", ".join(parts))


def test_admissibility(built, acceptance_log):
    parts, ok = [], True
    for label, b in built.items():
        t0 = time.perf_counter()
        adm = check_admissible(b.cov, 10_000, seed=4)
        pk = packing_report(b.cov)
        doubled = build_covering(*b.args, candidate_resolution=64)
        adm2 = check_admissible(doubled, 10_000, seed=4)
        dt = time.perf_counter() - t0 + b.t_build
        good = (adm["covered_fraction"] == 1.0 and pk["violations"] == 0 and adm["max_overlap"] <= 64
                and adm2["max_overlap"] == adm["max_overlap"] and adm["min_dist_to_origin"] > 0 and dt < 60)
        ok &= good
        parts.append(f"{label} overlap {adm['max_overlap']}->{adm2['max_overlap']} "
                     f"margin {adm['min_dist_to_origin']:.2e} {dt:.0f}s")
    assert verdict(acceptance_log, 3, ok, "; ".join(parts))


def test_parseval(built, acceptance_log):
    parts, ok = [], True
    for label, b in built.items():
        fns, coeffs, dt = b.frame()
        dev = 0.0
        for f, cs in zip(fns, coeffs):
            quad = dense_l2sq(f)
            # the registry oracle is radial/closed form; confirm it against brute-force quadrature first
            assert abs(f.l2_norm_oracle ** 2 / quad - 1) < 1e-8
            dev = max(dev, abs(cs.energy() / quad - 1))
            assert parseval_check(cs, f) == pytest.approx(cs.energy() / f.l2_norm_oracle ** 2)
        ok &= dev <= 1e-4 and dt < 120
        parts.append(f"{label} {dev:.1e}/{dt:.0f}s")
    assert verdict(acceptance_log, 4, ok, "max |ratio-1|/time: " + ", ".join(parts))


def test_reconstruction(built, acceptance_log):
    parts, ok = [], True
    for label, b in built.items():
        fns, coeffs, _ = b.frame()
        worst, mono = 0.0, True
        for f, cs in zip(fns, coeffs):
            curve = compression_curve(f, cs, b.bapu, KEEP, 4000, seed=5)
            errs = [e for _, _, e in curve]
            worst = max(worst, errs[-1])
            mono &= bool(np.all(np.diff(errs) <= 0))
        ok &= worst <= 1e-4 and mono
        parts.append(f"{label} {worst:.1e}{'' if mono else ' NOT monotone'}")
    assert verdict(acceptance_log, 5, ok, "max full-keep error: " + ", ".join(parts))


def test_norm_equivalence(built, acceptance_log):
    b = built["d1-alpha0.5"]
    geom = FrameGeometry.for_covering(b.cov, 32, 128)
    params = [SpaceParams(p, q, beta) for p, q in [(2, 2), (1, 1), (2, 1), (INF, INF)] for beta in (-1, 0, 1)]
    base = gaussbump_annular(b.ctx, 1.0, 0.6)
    ratios = {prm: [] for prm in params}
    for m in range(-2, 3):
        f = base.dilate(2.0 ** m)
        cs = analyze(b.bapu, geom, f)
        local = local_lp_norms(b.bapu, f, (1.0, 2.0, INF))
        for prm in params:
            ratios[prm].append(norm_report(b.bapu, f, cs, prm, local=local).ratio)
    rows, spread = [], 0.0
    for prm, r in ratios.items():
        r = np.array(r)
        s = float(r.max() / r.min()) if np.all(np.isfinite(r)) and r.min() > 0 else np.inf
        spread = max(spread, s)
        rows.append({**prm.to_dict(), "ratios": r.tolist(), "C_lower": float(r.min()), "C_upper": float(r.max()),
                     "spread": s})
    OUT.mkdir(exist_ok=True)
    (OUT / "norm_equivalence.json").write_text(json.dumps(
        {"covering": b.label, "n_patches": len(b.cov), "family": "annular bump dilated by 2^m, m=-2..2",
         "constants": rows}, indent=1))
    ok = spread < 4
    assert verdict(acceptance_log, 6, ok, f"largest max/min ratio over the family {spread:.3f} (< 4); "
                                          f"constants in {OUT.name}/norm_equivalence.json")


def test_scaling_checks(built, acceptance_log):
    ctx = QuasiNormContext.create(A2)
    f = multi_bump(ctx, [[0.3, 1.5]], [0.6])
    maps = [AffineMap(dilation_scales(ctx, t), np.array(b)) for t, b in
            [(0.25, (0.0, 0.0)), (2.0, (1.0, -3.0)), (8.0, (0.0, 40.0))]]
    maps += [AffineMap(np.array([3.0, 0.2]), np.array([1.0, -4.0])), AffineMap(np.array([0.1, 7.0]), np.zeros(2))]
    dev = max(abs(dilation_scaling_check(ctx, T, f, p) - 1) for T in maps for p in (1, 2, INF))
    spreads = {}
    for label in ("d1-alpha0.5", "d2-alpha1"):
        cov = built[label].cov
        g = multi_bump(cov.ctx, [cov.p0], [0.5])
        sweep = np.linspace(0, len(cov) - 1, 10).astype(int)
        for p, q in [(1, 2), (2, INF)]:
            r = [nikolskii_check(cov.ctx, cov.patches[j].map, g, p, q) for j in sweep]
            spreads[(label, p, q)] = max(r) / min(r)
    worst = max(spreads.values())
    ok = dev <= 1e-4 and worst <= 2
    assert verdict(acceptance_log, 7, ok, f"dilation scaling max |ratio-1| {dev:.1e} (tol 1e-4); "
                                          f"nikolskii max spread {worst:.4f} (<= 2)")


@pytest.mark.xfail(strict=True, reason="for alpha > 2/3 the spacing ratio tends to 1/(1-alpha) > 3; see README")
def test_knot_ratios(acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for alpha in (0.25, 0.5, 0.75):
        outer, inner = knot_spacing_ratios(alpha, 10_000)
        lo = float(min(outer.min(), inner.min()))
        hi = float(max(outer.max(), inner.max()))
        good = 1 / 3 <= lo and hi <= 3
        ok &= good
        parts.append(f"alpha {alpha}: [{lo:.3f}, {hi:.3f}]")
    dt = time.perf_counter() - t0
    ok &= dt < 1
    assert verdict(acceptance_log, 8, ok, "ratio ranges " + ", ".join(parts) + f" (bound [1/3, 3]), {dt:.3f}s")


def test_besov_corridors(acceptance_log):
    rng = np.random.default_rng(9)
    parts, ok = [], True
    for a in ([1.0], A2, [1.0, 1.0]):
        ctx = QuasiNormContext.create(a)
        cov = besov_covering(ctx, -5, 6)
        xs = cov.sample_covered(rng, 100_000, *DESK)
        pi, _ = cov.containing(xs, rho=1.0, strict=True)
        count = np.bincount(pi, minlength=len(xs))
        ok &= count.max() == 1 and count.min() == 1
        parts.append(f"a={a} multiplicity {count.min()}..{count.max()}")
    # exact diagonal entries for the isotropic case, from the set definition
    for d in (1, 2):
        ctx = QuasiNormContext.create([1.0] * d)
        cov = besov_covering(ctx, -5, 6)
        for k in besov_index_set(d):
            ok &= bool(np.all(besov_halflengths(ctx, k) == 0.25))
        for p in cov.patches:
            k = np.abs(np.array(p.k))
            lo, hi = (k - 1) * 2.0 ** (p.level - 1), k * 2.0 ** (p.level - 1)
            ok &= bool(np.all(p.map.scales == (hi - lo) / 2) and np.all(p.map.offset == np.sign(p.k) * (lo + hi) / 2))
    assert verdict(acceptance_log, 9, ok, "; ".join(parts) + "; B(k) exact for a = 1")


def test_determinism(tmp_path, acceptance_log, capsys):
    runs = []
    for name in ("one", "two"):
        assert cli_main(["selftest", "-o", str(tmp_path / name)]) == 0
        runs.append(tmp_path / name)
    capsys.readouterr()
    m1, m2 = [(r / "manifest.json").read_bytes() for r in runs]
    files = sorted(json.loads(m1))
    same = m1 == m2 and all((runs[0] / n).read_bytes() == (runs[1] / n).read_bytes() for n in files)
    assert verdict(acceptance_log, 10, same, f"{len(files)} artifacts hash-identical across two selftest runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
