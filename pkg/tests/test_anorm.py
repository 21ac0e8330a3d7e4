import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from freqtile.anorm import (QuasiNormContext, aniso_norm, ball_semi_axes, balls_intersect, dilation,
                            estimate_K, in_ball, quasi_dist)
from freqtile.errors import DomainError


def brent_norm(a, x):
    """Independent oracle: root of |D_a(1/t) x| = 1 by Brent's method."""
    a = np.asarray(a)
    g = lambda u: np.sum(x * x * np.exp(-2 * a * u)) - 1.0
    return float(np.exp(brentq(g, -60, 60, xtol=1e-15, rtol=1e-15)))


def test_dilation_examples():
    assert np.array_equal(dilation(QuasiNormContext.create([1, 1]), 2), np.diag([2.0, 2.0]))
    np.testing.assert_allclose(dilation(QuasiNormContext.create([0.5, 1.5]), 4), np.diag([2.0, 8.0]))
    assert np.array_equal(dilation(QuasiNormContext.create([0.5, 1.5]), 1), np.eye(2))
    with pytest.raises(DomainError):
        dilation(QuasiNormContext.create([1.0]), 0.0)


def test_anisotropy_validation():
    with pytest.raises(DomainError):
        QuasiNormContext.create([0.5, 1.0])
    with pytest.raises(DomainError):
        QuasiNormContext.create([2.0, 0.0])


def test_isotropic_norm_is_euclidean(rng):
    ctx = QuasiNormContext.create([1, 1, 1])
    x = rng.normal(size=(200, 3))
    np.testing.assert_allclose(aniso_norm(ctx, x), np.linalg.norm(x, axis=1), rtol=1e-10)


def test_single_axis_value(ctx2):
    assert aniso_norm(ctx2, [2.0, 0.0]) == pytest.approx(4.0, rel=1e-10)
    assert quasi_dist(ctx2, [2.0, 0.0], [0.0, 0.0]) == pytest.approx(4.0, rel=1e-10)
    assert aniso_norm(ctx2, [0.0, 0.0]) == 0.0


def test_matches_brent_oracle(ctx2, rng):
    x = rng.normal(size=(100, 2)) * np.exp(rng.uniform(-4, 4, size=(100, 1)))
    ours = aniso_norm(ctx2, x)
    ref = np.array([brent_norm(ctx2.a, v) for v in x])
    np.testing.assert_allclose(ours, ref, rtol=1e-9)


def test_newton_and_bisect_agree(ctx2, rng):
    x = rng.normal(size=(500, 2)) * np.exp(rng.uniform(-6, 6, size=(500, 1)))
    np.testing.assert_allclose(aniso_norm(ctx2, x, "newton"), aniso_norm(ctx2, x, "bisect"), rtol=1e-9)


@settings(max_examples=60, deadline=None)
@given(x=st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2).filter(lambda v: np.hypot(*v) > 1e-3),
       t=st.floats(1e-2, 1e2))
def test_homogeneity_property(x, t):
    ctx = QuasiNormContext.create([0.5, 1.5])
    x = np.asarray(x)
    assert aniso_norm(ctx, dilation(ctx, t) @ x) == pytest.approx(t * aniso_norm(ctx, x), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(x=st.lists(st.one_of(st.just(0.0), st.floats(1e-100, 1e100), st.floats(-1e100, -1e-100)),
                  min_size=2, max_size=2))
def test_symmetry_and_positivity(x):
    ctx = QuasiNormContext.create([0.5, 1.5])
    x = np.asarray(x)
    v = aniso_norm(ctx, x)
    assert v >= 0
    assert v == aniso_norm(ctx, -x)
    assert (v == 0) == bool(np.all(x == 0))


def test_estimate_K_isotropic():
    ctx = QuasiNormContext.create([1, 1])
    k = estimate_K(ctx, 20_000, seed=1)
    assert 1.0 <= k <= 1.1 + 1e-12


def test_estimate_K_stable_across_seeds():
    k1 = estimate_K(QuasiNormContext.create([0.5, 1.5]), 100_000, seed=1)
    k2 = estimate_K(QuasiNormContext.create([0.5, 1.5]), 100_000, seed=2)
    assert abs(k1 - k2) <= 0.05 * max(k1, k2)
    # coincident pairs give |2 xi|_a / (2 |xi|_a), which is 2^{1/a_1 - 1} on the first axis
    assert k1 >= 2.0 ** (1 / 0.5 - 1) * 1.1 - 1e-9


def test_balls_are_ellipsoids(ctx2, rng):
    c = np.array([1.0, -2.0])
    x = c + rng.normal(size=(2000, 2)) * 3
    np.testing.assert_array_equal(in_ball(ctx2, x, c, 1.7), aniso_norm(ctx2, x - c) < 1.7)
    np.testing.assert_allclose(ball_semi_axes(ctx2, 4.0), [2.0, 8.0])


def test_ball_intersection_against_sampling(ctx2, rng):
    c1, r1 = np.array([0.0, 0.0]), 1.0
    for _ in range(20):
        c2 = rng.uniform(-3, 3, size=2)
        r2 = rng.uniform(0.2, 1.5)
        meet = bool(balls_intersect(ctx2, c1, r1, c2, r2))
        # sampled witness: a point in both balls proves intersection
        pts = c2 + ball_semi_axes(ctx2, r2) * rng.uniform(-1, 1, size=(20000, 2))
        witness = np.any(in_ball(ctx2, pts, c1, r1) & in_ball(ctx2, pts, c2, r2))
        if witness:
            assert meet
