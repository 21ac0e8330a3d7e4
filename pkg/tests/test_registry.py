import numpy as np
import pytest

from freqtile.anorm import QuasiNormContext, aniso_norm
from freqtile.errors import DomainError
from freqtile.registry import (TestFunctionSpec, atom_like, default_test_set, gaussbump_annular, multi_bump,
                               registry_instantiate)


def grid_l2sq(f, lo, hi, n):
    """Dense 2-D midpoint quadrature of |f|^2 on a box."""
    ax = [lo[i] + (hi[i] - lo[i]) * (np.arange(n) + 0.5) / n for i in range(2)]
    g = np.meshgrid(*ax, indexing="ij")
    pts = np.stack([v.ravel() for v in g], axis=1)
    return float(np.sum(np.abs(f(pts)) ** 2) * np.prod((np.asarray(hi) - lo) / n))


def test_annular_bump_support(ctx2):
    f = registry_instantiate(TestFunctionSpec("gaussbump_annular", {"center": 4.0, "width": 0.5}), ctx2)
    lo, hi = f.support_hint
    assert 3.0 <= lo and hi <= 5.0
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20000, 2)) * [4.0, 16.0]
    v = f(x)
    r = aniso_norm(ctx2, x)
    assert np.all(v[(r < lo) | (r > hi)] == 0)


def test_zero_amplitude(ctx1):
    f = gaussbump_annular(ctx1, 2.0, 1.0, amplitude=0.0)
    assert f.l2_norm_oracle == 0.0
    assert np.all(f(np.linspace(-4, 4, 101)[:, None]) == 0)


def test_disjoint_bumps_add_in_square(ctx2):
    c1, c2 = [0.0, 2.0], [0.0, -3.0]
    both = multi_bump(ctx2, [c1, c2], [0.6, 0.8], [1.0, 0.5])
    a = multi_bump(ctx2, [c1], [0.6])
    b = multi_bump(ctx2, [c2], [0.8], 0.5)
    assert both.l2_norm_oracle ** 2 == pytest.approx(a.l2_norm_oracle ** 2 + b.l2_norm_oracle ** 2, rel=1e-10)


def test_oracles_against_grid_quadrature(ctx2):
    f = multi_bump(ctx2, [[0.3, 2.0], [0.0, 2.4]], [0.6, 0.5], [1.0, -0.4])  # overlapping
    g = atom_like(ctx2, [0.0, 2.0], 0.6, [1.0, 0.3])
    a = gaussbump_annular(ctx2, 1.0, 0.4)
    for fn, lo, hi in [(f, [-1.5, 0.5], [1.5, 3.5]), (g, [-1.0, 1.0], [1.0, 3.0]), (a, [-2.0, -3.0], [2.0, 3.0])]:
        assert fn.l2_norm_oracle ** 2 == pytest.approx(grid_l2sq(fn, lo, hi, 1500), rel=1e-5)


def test_annular_oracle_1d(ctx1):
    f = gaussbump_annular(ctx1, 2.0, 1.0)
    x = np.linspace(-3, 3, 600_001)[:, None]
    assert f.l2_norm_oracle ** 2 == pytest.approx(np.sum(np.abs(f(x)) ** 2) * 6 / 600_000, rel=1e-9)


def test_registry_errors(ctx1):
    with pytest.raises(DomainError):
        registry_instantiate(TestFunctionSpec("sinc", {}), ctx1)
    with pytest.raises(DomainError):
        registry_instantiate(TestFunctionSpec("multi_bump", {"centers": [[1.0]]}), ctx1)
    with pytest.raises(DomainError):
        gaussbump_annular(ctx1, 1.0, 2.0)
    with pytest.raises(DomainError):
        multi_bump(ctx1, [[0.1]], [0.5])


@pytest.mark.parametrize("a", [[1.0], [0.5, 1.5]])
def test_default_set_inside_covered(a):
    ctx = QuasiNormContext.create(a)
    covered = (0.5, 8.0)
    for f in default_test_set(ctx, covered):
        assert covered[0] < f.support_hint[0] and f.support_hint[1] < covered[1]
    with pytest.raises(DomainError):
        default_test_set(ctx, covered, 100.0)
