from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqtile.anorm import QuasiNormContext, aniso_norm
from freqtile.errors import DomainError
from freqtile.regulation import (HybridRegulation, PowerLaw, RampFunction, alpha_regulation, check_envelopes,
                                 check_moderate, hybrid_eval, knot_spacing_ratios, ramp_eval,
                                 regulation_from_dict, smoothstep)


def test_ramp_plateaus():
    ramp = RampFunction()
    assert ramp_eval(ramp, 0.5) == 1.0
    assert ramp_eval(ramp, 2.0) == 0.0
    assert ramp_eval(ramp, 1.0) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DomainError):
        ramp_eval(ramp, -1.0)


@pytest.mark.parametrize("order", [1, 2, 3, 5])
def test_smoothstep_shape(order):
    x = np.linspace(0, 1, 1001)
    s = smoothstep(x, order)
    assert s[0] == 0 and s[-1] == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.diff(s) >= -1e-15)
    # odd symmetry about the midpoint
    np.testing.assert_allclose(s + smoothstep(1 - x, order), 1.0, atol=1e-13)
    # flat ends: first `order` derivatives vanish, so s(h) = O(h^{order+1})
    h = 1e-3
    assert smoothstep(h, order) < 2 * comb(2 * order + 1, order) * h ** (order + 1)


def test_alpha_family_values(ctx2):
    h = alpha_regulation(ctx2, 0.5)
    # both points lie on the plateaus of the ramp, so a single power law applies
    assert hybrid_eval(h, [2.0, 0.0]) == pytest.approx(2.0, rel=1e-12)  # |xi|_a = 2^2 = 4
    assert hybrid_eval(h, [0.5, 0.0]) == pytest.approx(0.125, rel=1e-12)  # |xi|_a = 1/4
    with pytest.raises(DomainError):
        hybrid_eval(h, [0.0, 0.0])


def test_alpha_one_is_the_norm(ctx2, rng):
    h = alpha_regulation(ctx2, 1.0)
    x = rng.normal(size=(300, 2)) * 5
    np.testing.assert_allclose(hybrid_eval(h, x), aniso_norm(ctx2, x), rtol=1e-12)


def test_alpha_exponents(ctx1):
    h = alpha_regulation(ctx1, 0.5)
    assert (h.h1.exponent, h.h2.exponent) == (1.5, 0.5)
    h0 = alpha_regulation(ctx1, 0.0)
    assert (h0.h1.exponent, h0.h2.exponent) == (2.0, 0.0)
    with pytest.raises(DomainError):
        alpha_regulation(ctx1, 1.5)


def test_envelopes_hold(ctx2):
    for alpha in (0.0, 0.5, 1.0):
        assert check_envelopes(alpha_regulation(ctx2, alpha), (2 ** -6, 2 ** 6))["ok"]


def test_bad_power_laws_rejected(ctx1):
    with pytest.raises(DomainError):
        HybridRegulation(ctx1, PowerLaw(0.5), PowerLaw(0.5))
    with pytest.raises(DomainError):
        HybridRegulation(ctx1, PowerLaw(2.0), PowerLaw(1.5))


def test_custom_callable_needs_annulus(ctx1):
    with pytest.raises(DomainError):
        HybridRegulation(ctx1, lambda r: r ** 2, lambda r: np.sqrt(r))
    h = HybridRegulation(ctx1, lambda r: r ** 2, lambda r: np.sqrt(r), annulus=(0.01, 100))
    assert hybrid_eval(h, [4.0]) == pytest.approx(2.0)


def test_moderate_constant_small_delta():
    ctx = QuasiNormContext.create([1.0, 1.0])
    rep = check_moderate(alpha_regulation(ctx, 1.0), 0.05, 20_000, (1e-2, 1e2), seed=3)
    assert 1.0 <= rep["R_emp"] < 2.0


def test_moderate_constant_region(ctx1):
    # alpha = 0 makes h constant beyond the ramp
    rep = check_moderate(alpha_regulation(ctx1, 0.0), 0.05, 5000, (2.0, 50.0), seed=1)
    assert rep["R_emp"] == 1.0


@pytest.mark.parametrize("kind", ["alpha", "power"])
def test_serialization_round_trip(ctx2, kind):
    h = alpha_regulation(ctx2, 0.3) if kind == "alpha" else HybridRegulation(ctx2, PowerLaw(1.7, 2.0), PowerLaw(0.2))
    h2 = regulation_from_dict(ctx2, h.to_dict())
    x = np.array([[0.3, 0.1], [2.0, -5.0], [0.01, 0.0]])
    np.testing.assert_array_equal(hybrid_eval(h, x), hybrid_eval(h2, x))


def test_knot_ratios_closed_form():
    # alpha = 1/2 gives beta = 2: outer ratio (2n + 1)/n, inner ratio n^3 (1/n^2 - 1/(n+1)^2)
    outer, inner = knot_spacing_ratios(0.5, 50)
    n = np.arange(1, 51, dtype=float)
    np.testing.assert_allclose(outer, (2 * n + 1) / n, rtol=1e-12)
    np.testing.assert_allclose(inner, n ** 3 * (1 / n ** 2 - 1 / (n + 1) ** 2), rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(r=st.floats(1e-4, 1e4), alpha=st.floats(0, 1))
def test_regulation_between_its_laws(r, alpha):
    ctx = QuasiNormContext.create([1.0])
    h = alpha_regulation(ctx, alpha)
    v = h.from_norm(np.array([r]))[0]
    lo, hi = sorted([r ** (2 - alpha), r ** alpha])
    assert lo * (1 - 1e-12) <= v <= hi * (1 + 1e-12)
