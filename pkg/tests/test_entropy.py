import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochcc.entropy import (EntropyFlux, default_lattice, growth_constant, interaction_defect,
                             lemma_constant, make_burgers, make_entropy, make_entropy_pair,
                             make_quartic, make_zero_flux, measure_nonlinearity, verify_lemma_bound)
from stochcc.errors import PropertyViolation

BURGERS = make_burgers()
PAIR = make_entropy(BURGERS)


def test_burgers_closed_form():
    assert BURGERS.f(2.0) == 2.0
    v = np.linspace(-3, 3, 13)
    assert np.array_equal(BURGERS.f_prime(v), v)
    assert np.all(BURGERS.f_second(v) == 1.0)


def test_entropy_flux_burgers():
    # q' = u * u -> q = u^3/3
    assert abs(PAIR.q(1.0) - 1 / 3) <= 1e-9
    u = np.linspace(-7.9, 7.9, 301)
    assert np.max(np.abs(PAIR.q(u) - u**3 / 3) / np.maximum(1, np.abs(u) ** 3)) <= 1e-12
    assert PAIR.q(0.0) == 0.0


def test_entropy_flux_outside_lattice_uses_quadrature():
    assert PAIR.q(9.5) == pytest.approx(9.5**3 / 3, rel=1e-12)
    assert PAIR.q(-12.0) == pytest.approx(-(12.0**3) / 3, rel=1e-12)


def test_identity_entropy_gives_flux():
    q = EntropyFlux(lambda s: np.ones_like(s), BURGERS.f_prime)
    u = np.linspace(-5, 5, 41)
    assert np.max(np.abs(q(u) - u * u / 2)) <= 1e-12


def test_q_derivative_matches_eta_prime_f_prime():
    u = default_lattice(7.0, 57)
    h = 1e-5
    fd = (PAIR.q(u + h) - PAIR.q(u - h)) / (2 * h)
    assert np.max(np.abs(fd - PAIR.eta_prime(u) * BURGERS.f_prime(u))) <= 1e-6


def test_quadrature_failure_reported():
    with pytest.raises(ArithmeticError, match=r"\["):
        EntropyFlux(lambda s: 1 / np.abs(s - 0.03) ** 1.5, lambda s: np.ones_like(s), half_width=1.0)


@pytest.mark.parametrize("v,w,expected", [(0.0, 0.0, 0.0), (0.0, 1.0, 1 / 12), (-3.0, 2.0, 5**4 / 12)])
def test_defect_examples(v, w, expected):
    assert interaction_defect(BURGERS, PAIR, v, w) == pytest.approx(expected, abs=1e-9)


def test_defect_identity_on_lattice():
    g = np.linspace(-5, 5, 101)
    V, W = np.meshgrid(g, g)
    d = interaction_defect(BURGERS, PAIR, V, W)
    assert np.max(np.abs(d - (W - V) ** 4 / 12)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.floats(-7, 7), st.floats(-7, 7))
def test_defect_symmetric(v, w):
    a = interaction_defect(BURGERS, PAIR, v, w)
    b = interaction_defect(BURGERS, PAIR, w, v)
    assert a == pytest.approx(b, abs=1e-10)


def test_defect_anchor_invariant():
    shifted = make_entropy_pair(BURGERS, PAIR.eta, PAIR.eta_prime, PAIR.eta_second, 1, 1)
    object.__setattr__(shifted, "q", EntropyFlux(PAIR.eta_prime, BURGERS.f_prime, anchor=3.25))
    assert shifted.q(0.0) == 3.25
    v, w = np.meshgrid(np.linspace(-4, 4, 17), np.linspace(-4, 4, 17))
    assert np.allclose(interaction_defect(BURGERS, shifted, v, w),
                       interaction_defect(BURGERS, PAIR, v, w), atol=1e-10, rtol=0)


def test_lemma_bound_burgers():
    rep = verify_lemma_bound(BURGERS, PAIR, np.round(np.arange(-50, 51) * 0.1, 12))
    assert rep.c_lemma == pytest.approx(1 / 12, abs=1e-15)
    assert abs(rep.min_ratio - 1 / 12) <= 1e-9
    assert rep.exponent == 4.0


def test_linear_entropy_rejected():
    lin = make_entropy_pair(BURGERS, lambda u: u, lambda u: np.ones_like(u), lambda u: np.zeros_like(u),
                            c_eta=1.0, p_eta=1.0, p0=2.0)
    with pytest.raises(PropertyViolation):
        verify_lemma_bound(BURGERS, lin, default_lattice(5.0, 41))


def test_quartic_constants_measured():
    q = make_quartic()
    lat = default_lattice(4.0, 81)
    assert measure_nonlinearity(q.f_prime, 3.0, lat) == pytest.approx(0.25, abs=1e-12)
    pair = make_entropy(q)
    rep = verify_lemma_bound(q, pair, lat)
    assert rep.c_lemma == pytest.approx(0.25 * 0.25 / 56)
    assert rep.min_ratio >= rep.c_lemma - 1e-9


def test_power_entropy_constants():
    pair = make_entropy(BURGERS, "power:4")
    lat = default_lattice(3.0, 61)
    assert measure_nonlinearity(pair.eta_prime, pair.p_eta, lat) >= pair.c_eta - 1e-12
    verify_lemma_bound(BURGERS, pair, lat)


def test_overstated_constant_is_a_violation():
    from dataclasses import replace

    with pytest.raises(PropertyViolation):
        verify_lemma_bound(replace(BURGERS, c_f=1.5), PAIR, default_lattice(2.0, 21))


def test_zero_flux_cannot_be_entropy():
    with pytest.raises(ValueError):
        make_entropy(make_zero_flux())


def test_growth_constant_finite():
    for pair in (PAIR, make_entropy(BURGERS, "power:3")):
        k = growth_constant(pair, default_lattice())
        assert np.isfinite(k) and k > 0


def test_lemma_constant_formula():
    assert lemma_constant(1, 1, 1, 1) == 1 / 12
    assert lemma_constant(2, 1, 3, 2) == 6 / (4 * 5)
