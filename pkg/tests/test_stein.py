import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from rademacher_stein.functionals import Functional, multiple_integral
from rademacher_stein.kernels import builtin_family, make_kernel
from rademacher_stein.space import make_space, symmetric_space
from rademacher_stein.stein import (
    DiscreteLaw,
    charfn_bound,
    charfn_bound_chaos,
    chaos_wasserstein_bound,
    contraction_bounds,
    contraction_norms_vanish,
    first_chaos_bounds,
    first_chaos_law,
    gamma_quantity,
    kolmogorov_bound,
    kolmogorov_to_normal,
    normal_distance_oracle,
    ratio_spread,
    second_order_terms,
    wasserstein_bound,
    wasserstein_to_normal,
)


def quad_wasserstein(law: DiscreteLaw) -> float:
    """Integral of |F_X - Phi| by adaptive quadrature between atoms."""
    a = law.atoms
    cuts = np.concatenate([[min(a[0], 0) - 12.0], a, [max(a[-1], 0) + 12.0]])
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        c = law.cdf(0.5 * (lo + hi))
        val, _ = integrate.quad(lambda x: abs(c - norm.cdf(x)), lo, hi, epsabs=1e-13, epsrel=1e-12,
                                limit=200)
        total += val
    return total


def grid_kolmogorov(law: DiscreteLaw) -> float:
    best = 0.0
    for x, m in zip(law.atoms, law.masses):
        right = law.cdf(x)
        best = max(best, abs(right - norm.cdf(x)), abs(right - m - norm.cdf(x)))
    return best


@st.composite
def laws(draw):
    k = draw(st.integers(1, 8))
    atoms = draw(st.lists(st.floats(-4, 4, allow_nan=False), min_size=k, max_size=k, unique=True))
    masses = np.array(draw(st.lists(st.floats(0.01, 1), min_size=k, max_size=k)))
    order = np.argsort(atoms)
    return DiscreteLaw(np.asarray(atoms)[order], masses[order] / masses.sum())


@given(laws())
@settings(max_examples=40, deadline=None)
def test_wasserstein_closed_form_vs_quadrature(law):
    assert wasserstein_to_normal(law) == pytest.approx(quad_wasserstein(law), abs=1e-9)


@given(laws())
@settings(max_examples=40, deadline=None)
def test_kolmogorov_vs_atom_scan(law):
    assert kolmogorov_to_normal(law) == pytest.approx(grid_kolmogorov(law), abs=1e-14)


def test_point_mass_at_zero():
    law = DiscreteLaw(np.array([0.0]), np.array([1.0]))
    assert wasserstein_to_normal(law) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-14)
    assert kolmogorov_to_normal(law) == pytest.approx(0.5)


def test_law_merges_coincident_atoms():
    space = symmetric_space(4)
    F = multiple_integral(space, builtin_family("sum1", 4))
    law = DiscreteLaw.of(F)
    np.testing.assert_allclose(law.atoms, [-2, -1, 0, 1, 2])
    np.testing.assert_allclose(law.masses, np.array([1, 4, 6, 4, 1]) / 16)


def test_first_chaos_law_matches_enumeration():
    rng = np.random.default_rng(5)
    p = rng.uniform(0.2, 0.8, 7)
    f = make_kernel(1, 7, [((k,), rng.normal()) for k in range(1, 8)])
    law = first_chaos_law(f, p)
    ref = DiscreteLaw.of(multiple_integral(make_space(p), f))
    np.testing.assert_allclose(law.atoms, ref.atoms, atol=1e-12)
    np.testing.assert_allclose(law.masses, ref.masses, atol=1e-15)


@pytest.mark.parametrize("p", [None, [0.3] * 6, [0.2, 0.4, 0.5, 0.6, 0.7, 0.9]])
def test_first_chaos_bounds_match_generic(p):
    f = make_kernel(1, 6, [((k,), 0.3 * k - 1) for k in range(1, 7)])
    space = make_space(p or [0.5] * 6)
    F = multiple_integral(space, f)
    w, k = first_chaos_bounds(f, p)
    for fast, slow in ((w, wasserstein_bound(F)), (k, kolmogorov_bound(F))):
        assert fast.terms.keys() == slow.terms.keys()
        for name in fast.terms:
            assert fast.terms[name] == pytest.approx(slow.terms[name], rel=1e-12, abs=1e-14)
        assert fast.oracle == pytest.approx(slow.oracle, abs=1e-14)


def test_bernoulli_single_coordinate_values():
    F = Functional.coordinate(symmetric_space(1), 1)
    w = wasserstein_bound(F)
    assert w.total == pytest.approx(2.0) and w.terms["gaussian"] == pytest.approx(0, abs=1e-15)
    assert w.oracle == pytest.approx(0.535377321547879, abs=1e-12)
    k = kolmogorov_bound(F)
    assert k.oracle == pytest.approx(norm.cdf(1) - 0.5, abs=1e-14)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_sum_rate(n):
    w, _ = first_chaos_bounds(builtin_family("sum1", n))
    assert w.total == pytest.approx(2 / math.sqrt(n), abs=1e-12)
    assert w.oracle <= w.total


def test_gamma_of_first_chaos_is_norm():
    space = make_space([0.3, 0.4, 0.6])
    f = make_kernel(1, 3, [((1,), 0.5), ((2,), -1.0), ((3,), 2.0)])
    g = gamma_quantity(multiple_integral(space, f))
    np.testing.assert_allclose(g.values, f.norm_sq())


def test_gamma_expectation_is_variance():
    rng = np.random.default_rng(6)
    space = make_space(rng.uniform(0.2, 0.8, 5))
    F = Functional(space, rng.normal(size=32)).centred()
    assert gamma_quantity(F).expectation() == pytest.approx(F.variance(), abs=1e-12)


@given(st.integers(0, 10 ** 6), st.integers(2, 6))
@settings(max_examples=30, deadline=None)
def test_bounds_dominate_random(seed, n):
    rng = np.random.default_rng(seed)
    space = make_space(rng.uniform(0.1, 0.9, n))
    F = Functional(space, rng.normal(size=space.size)).centred()
    F = F * (1 / math.sqrt(F.variance()))
    assert wasserstein_bound(F).dominates
    assert kolmogorov_bound(F).dominates
    o = normal_distance_oracle(F)
    assert o.d_K <= math.sqrt(o.d_W) + 1e-12
    for t in (-2.0, 0.5, 3.0):
        assert charfn_bound(F, t).dominates


def test_bounds_reject_uncentred():
    F = Functional.constant(symmetric_space(2), 1.0)
    with pytest.raises(ValueError):
        wasserstein_bound(F)


def test_chaos_bound_agrees_with_generic_for_homogeneous():
    space = symmetric_space(6)
    f = builtin_family("example2", 3)
    F = multiple_integral(space, f)
    generic = wasserstein_bound(F)
    chaos = chaos_wasserstein_bound(space, f)
    assert chaos.terms["gaussian_variance"] == pytest.approx(0, abs=1e-14)
    assert chaos.total >= generic.oracle


def test_charfn_spot_value():
    F = multiple_integral(symmetric_space(4), builtin_family("sum1", 4))
    rep = charfn_bound(F, 1.0)
    assert rep.oracle == pytest.approx(abs(math.cos(0.5) ** 4 - math.exp(-0.5)), abs=1e-12)
    chaos = charfn_bound_chaos(symmetric_space(4), builtin_family("sum1", 4), 1.0)
    assert chaos.oracle == rep.oracle and chaos.dominates


def test_second_order_terms_first_chaos():
    F = multiple_integral(symmetric_space(4), builtin_family("sum1", 4))
    rep = second_order_terms(F)
    # second derivatives vanish in the first chaos
    for name in ("A1", "A2", "A6", "A7"):
        assert rep.terms[name] == pytest.approx(0, abs=1e-15)
    assert rep.terms["A3"] == pytest.approx(1.0)
    assert rep.terms["A5"] == pytest.approx(1.0)
    assert rep.wasserstein.dominates and rep.kolmogorov.dominates
    with pytest.raises(ValueError, match="unit variance"):
        second_order_terms(F * 2)
    with pytest.raises(ValueError, match="Holder"):
        second_order_terms(F, 2, 2, 2)


def test_contraction_bounds_example2():
    for n in range(1, 5):
        rep = contraction_bounds(builtin_family("example2", n))
        assert rep.contraction_sum_sq == pytest.approx(1 / (8 * n), abs=1e-14)
        assert rep.fourth_sum == pytest.approx(2 / n, abs=1e-12)
        assert rep.var_DF_norm == pytest.approx(0, abs=1e-12)
        assert rep.fourth_ratio == pytest.approx(16)
    with pytest.raises(ValueError, match="symmetric"):
        contraction_bounds(builtin_family("example2", 1), make_space([0.3, 0.5]))
    first = contraction_bounds(builtin_family("sum1", 3))
    assert first.contraction_norms == [] and first.var_ratio is None


def test_ratio_spread_and_vanishing():
    assert ratio_spread([0.0, 1e-15]) == 1.0
    assert ratio_spread([2.0, 4.0]) == 2.0
    assert ratio_spread([0.0, 1.0]) == math.inf
    assert contraction_norms_vanish([1.0, 0.7, 0.4])
    assert not contraction_norms_vanish([1.0, 1.1, 0.4])


def test_report_json():
    F = multiple_integral(symmetric_space(2), builtin_family("sum1", 2))
    d = wasserstein_bound(F).to_json()
    assert set(d) == {"name", "terms", "total", "oracle", "slack"}
    assert d["slack"] == pytest.approx(d["total"] - d["oracle"])
