import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from stochcc.entropy import make_burgers, make_entropy
from stochcc.errors import PropertyViolation
from stochcc.estimators import (ModulusCurve, fit_rate, fit_window, interpolate_curve, kruzkov_rho_t,
                                mollified_modulus, mu_exponent, mu_x_exponent, power_moduli,
                                power_modulus, spacetime_mass, spatial_sup_modulus,
                                sup_vs_mollified_consistency, temporal_sup_modulus)
from stochcc.grid import GridSpec
from stochcc.mollifiers import friedrichs_kernel
from stochcc.solver import SolveConfig, frozen_path, make_noise, solve_ensemble, stable_n_steps
from stochcc.weights import make_constant_weight, make_power_weight

CHI = make_power_weight(1.0)
J = friedrichs_kernel()
T = 1.0


def frozen(profile_fn, L=4.0, n=256, boundary="dirichlet_zero", records=10):
    g = GridSpec(L, n, boundary)
    return g, [frozen_path(g, profile_fn(g.x), T, records)]


# ---------------------------------------------------------------- spatial sup modulus

def test_sup_modulus_of_constant_is_zero():
    g, ens = frozen(lambda x: np.full_like(x, 2.0), boundary="periodic")
    c = spatial_sup_modulus(ens, CHI, [g.dx, 4 * g.dx, 16 * g.dx])
    assert c.values == (0.0, 0.0, 0.0)


def test_sup_modulus_of_linear_profile():
    g, ens = frozen(lambda x: x)
    mask = g.interior_mask()
    inner = math.fsum(CHI.eval(g.x[mask]) * g.dx)
    lim = g.half_width * 7 / 8
    quad, _ = integrate.quad(lambda s: 1 / (1 + s * s), -lim, lim)
    deltas = [m * g.dx for m in (1, 2, 4, 8)]  # up to L/16
    c = spatial_sup_modulus(ens, CHI, deltas, mask=mask)
    for d, v in zip(c.deltas, c.values):
        assert v == pytest.approx(d * T * inner, rel=1e-12)
        assert v == pytest.approx(d * T * quad, rel=0.05)


def test_sup_modulus_of_step_profile():
    g, ens = frozen(lambda x: (x > 0).astype(float), n=512)
    for m in (1, 2, 4):
        d = m * g.dx
        v = spatial_sup_modulus(ens, CHI, [d], mask=g.interior_mask()).values[0]
        assert v == pytest.approx(d * T * CHI.eval(np.array([0.0]))[0], rel=0.02)


def test_sup_modulus_skips_subgrid_delta():
    g, ens = frozen(lambda x: x)
    with pytest.warns(UserWarning):
        c = spatial_sup_modulus(ens, CHI, [0.5 * g.dx, g.dx])
    assert c.deltas == (g.dx,)


def test_sup_modulus_monotone_on_solver_paths():
    ens = _burgers_ensemble()
    g = ens[0].grid
    c = spatial_sup_modulus(ens, CHI, [m * g.dx for m in (1, 2, 3, 5, 8, 13)])
    assert all(b >= a for a, b in zip(c.values, c.values[1:]))


def test_curve_invariants():
    with pytest.raises(ValueError):
        ModulusCurve((0.2, 0.1), (1.0, 2.0), (0.0, 0.0), "power_p")
    with pytest.raises(PropertyViolation):
        ModulusCurve((0.1, 0.2), (2.0, 1.0), (0.0, 0.0), "spatial_sup")
    ModulusCurve((0.1, 0.2), (2.0, 1.0), (0.0, 0.0), "power_p")


# ---------------------------------------------------------------- mollified modulus

def test_mollified_modulus_constant_is_zero():
    g, ens = frozen(lambda x: np.full_like(x, -1.0), boundary="periodic")
    assert mollified_modulus(ens, CHI, J, [4 * g.dx]).values == (0.0,)


def test_mollified_modulus_sin_matches_quadrature():
    a = 2 * np.pi / 4.0
    g, ens = frozen(lambda x: np.sin(a * x), boundary="periodic", n=1024)
    space = math.fsum(np.abs(np.cos(a * g.x)) * CHI.eval(g.x) * g.dx)
    vals, errs = [], []
    for m in (8, 16, 32):
        d = m * g.dx
        k = J.scaled(d)
        zpart, _ = integrate.quad(lambda z: float(k.eval(np.array([z]))[0]) * 2 * abs(math.sin(a * z)),
                                  -d, d, points=[0.0], epsabs=1e-14)
        v = mollified_modulus(ens, CHI, J, [d]).values[0]
        # grid-aligned z sampling of a kinked integrand: second order in dx/delta
        errs.append(abs(v / (T * zpart * space) - 1))
        assert errs[-1] <= (g.dx / d) ** 2
        vals.append(v)
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3
    assert vals[1] / vals[0] == pytest.approx(2.0, rel=0.01)


def test_mollified_modulus_step_is_linear_in_delta():
    g, ens = frozen(lambda x: (x > 0).astype(float), n=1024)
    v1, v2 = mollified_modulus(ens, CHI, J, [8 * g.dx, 16 * g.dx]).values
    assert v2 / v1 == pytest.approx(2.0, rel=0.02)


# ---------------------------------------------------------------- temporal modulus

def test_temporal_modulus_time_constant_is_zero():
    _, ens = frozen(lambda x: np.cos(x), records=100)
    assert temporal_sup_modulus(ens, CHI, [0.01, 0.05, 0.2]).values == (0.0, 0.0, 0.0)


def test_temporal_modulus_rejects_delta_beyond_horizon():
    _, ens = frozen(lambda x: x, records=10)
    with pytest.raises(ValueError):
        temporal_sup_modulus(ens, CHI, [0.5, T])


def test_temporal_modulus_linear_growth_in_time():
    g = GridSpec(1.0, 32, "periodic")
    u = np.outer(np.linspace(0, 1, 101), np.ones(32))  # u(t, x) = t
    p = frozen_path(g, np.zeros(32), 1.0, 100)
    p.u[:] = u
    mass = math.fsum(CHI.eval(g.x) * g.dx)
    ds = [0.01, 0.05, 0.1]
    c = temporal_sup_modulus([p], CHI, ds)
    # common window [0, 1 - 0.1], 90 left-point intervals
    for d, v in zip(ds, c.values):
        assert v == pytest.approx(d * 0.9 * mass, rel=1e-12)


# ---------------------------------------------------------------- power modulus

def test_power_modulus_constant_is_zero():
    g, ens = frozen(lambda x: np.ones_like(x), boundary="periodic")
    assert power_modulus(ens, CHI, 4, [g.dx, 2 * g.dx]).values == (0.0, 0.0)


def test_power_modulus_sin_slope_four():
    g, ens = frozen(lambda x: np.sin(2 * np.pi * x / 4.0), boundary="periodic", n=1024)
    c = power_modulus(ens, CHI, 4, [m * g.dx for m in (2, 4, 8, 16, 32)])
    assert fit_rate(c).slope == pytest.approx(4.0, abs=0.1)


def test_power_modulus_step_slope_one():
    g, ens = frozen(lambda x: (x > 0).astype(float), n=1024)
    c = power_modulus(ens, CHI, 4, [m * g.dx for m in (2, 4, 8, 16, 32)])
    assert fit_rate(c).slope == pytest.approx(1.0, abs=0.1)


def test_power_modulus_requires_aligned_shift():
    g, ens = frozen(lambda x: x)
    with pytest.raises(ValueError):
        power_modulus(ens, CHI, 4, [1.5 * g.dx])


def test_shift_symmetry_for_translation_invariant_weight():
    ens = _burgers_ensemble()
    g = ens[0].grid
    flat = make_constant_weight(g.half_width)
    zs = [m * g.dx for m in (1, 3, 7)]
    plus = power_modulus(ens, flat, 4, zs)
    minus = power_modulus(ens, flat, 4, zs, direction=-1)
    assert np.allclose(plus.values, minus.values, rtol=1e-12, atol=0)


def test_power_moduli_report_both_weights():
    ens = _burgers_ensemble()
    g = ens[0].grid
    both = power_moduli(ens, CHI, 4, [g.dx, 2 * g.dx])
    assert set(both) == {"chi", "chi2"}
    # chi^2 <= chi pointwise
    assert all(b <= a for a, b in zip(both["chi"].values, both["chi2"].values))


def test_holder_consistency():
    ens = _burgers_ensemble()
    g = ens[0].grid
    zs = [m * g.dx for m in (1, 2, 4, 8)]
    p1 = power_modulus(ens, CHI, 1, zs)
    p4 = power_modulus(ens, CHI, 4, zs)
    mass = spacetime_mass(ens[0], CHI)
    for a, b in zip(p1.values, p4.values):
        assert a <= b**0.25 * mass**0.75 + 1e-9


# ---------------------------------------------------------------- fits

def _curve(d, v):
    return ModulusCurve(tuple(d), tuple(v), (0.0,) * len(d), "power_p")


def test_fit_exact_power_law():
    d = np.logspace(-3, -1, 7)
    f = fit_rate(_curve(d, 3 * d**0.25))
    assert abs(f.slope - 0.25) <= 1e-10
    assert abs(f.intercept - math.log(3)) <= 1e-10
    assert abs(f.r_squared - 1) <= 1e-10


def test_fit_linear_two_decades():
    d = np.logspace(-3, -1, 9)
    assert abs(fit_rate(_curve(d, d)).slope - 1.0) <= 1e-10


def test_fit_noisy_quarter_power():
    rng = np.random.default_rng(0)
    d = np.logspace(-4, -1, 12)
    v = d**0.25 * (1 + 0.01 * rng.standard_normal(d.size))
    assert fit_rate(_curve(d, v)).slope == pytest.approx(0.25, abs=0.02)


def test_fit_preconditions():
    with pytest.raises(ValueError):
        fit_rate(_curve([0.1, 0.2], [1.0, 2.0]))
    with pytest.raises(ValueError):
        fit_rate(_curve([0.1, 0.2, 0.4], [1.0, 0.0, 2.0]))


def test_fit_window_excludes_extremes():
    dx = 0.01
    d = [0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64]
    lo, hi = fit_window(d, dx, 1.0)
    assert d[lo] >= 4 * dx and d[hi - 1] <= 0.25


def test_mu_bookkeeping():
    assert mu_exponent(8) == 0.875
    assert mu_exponent(math.inf) == 1.0
    assert mu_x_exponent(math.inf, 1, 1) == 0.25
    assert mu_x_exponent(2, 1, 1) == 0.125


# ---------------------------------------------------------------- Kruzkov interpolation

def test_kruzkov_closed_form():
    assert abs(kruzkov_rho_t(lambda n: n, 1, 1, 0, 2, 0, 1.0) - 3 * 2 ** (-2 / 3)) <= 1e-6
    for d in (1e-4, 1e-2, 0.5):
        assert kruzkov_rho_t(lambda n: n, 1, 1, 0, 2, 0, d) == pytest.approx(3 * 2 ** (-2 / 3) * d ** (1 / 3),
                                                                            rel=1e-8)


def test_kruzkov_vanishing_spatial_modulus():
    for d in (1e-6, 0.1, 1.0):
        assert kruzkov_rho_t(lambda n: 0.0, 1, 1, 0, 2, 0, d) == 0.0
    # a zeroth-order noise term survives as nu -> infinity
    assert kruzkov_rho_t(lambda n: 0.0, 1, 1, 2, 2, 0, 0.25) == pytest.approx(1.0)


@pytest.mark.parametrize("a", [1.0, 0.5, 0.25])
def test_kruzkov_exponent(a):
    d = np.logspace(-6, -2, 9)
    v = [kruzkov_rho_t(lambda n: n**a, 1, 1, 0, 2, 0, x) for x in d]
    slope = fit_rate(_curve(d, v)).slope
    assert abs(slope - a / (a + 2)) <= 0.005


def test_kruzkov_rejects_non_monotone():
    with pytest.raises(ValueError):
        kruzkov_rho_t(lambda n: math.sin(math.log(n)) + 2, 1, 1, 0, 2, 0, 0.1)


def test_interpolated_curve_feeds_optimizer():
    d = np.logspace(-3, -1, 5)
    rho = interpolate_curve(_curve(d, 2 * d**0.5))
    assert rho(1e-2) == pytest.approx(2 * 1e-2**0.5, rel=1e-12)
    assert rho(1e-5) == pytest.approx(2 * 1e-5**0.5, rel=1e-9)
    assert rho(10.0) == pytest.approx(2 * 0.1**0.5)
    assert kruzkov_rho_t(rho, 1, 1, 0, 2, 0, 1e-4) > 0


# ---------------------------------------------------------------- sup vs mollified

def test_consistency_linear_profile():
    g, ens = frozen(lambda x: x)
    r = sup_vs_mollified_consistency(ens, CHI, J, [m * g.dx for m in (2, 4, 8)], mask=g.interior_mask())
    vals = [x[1] for x in r]
    assert len(vals) == 3 and max(vals) / min(vals) <= 3


def test_consistency_constant_profile_skipped():
    g, ens = frozen(lambda x: np.full_like(x, 5.0), boundary="periodic")
    assert sup_vs_mollified_consistency(ens, CHI, J, [2 * g.dx, 4 * g.dx]) == []


_CACHE = {}


def _burgers_ensemble():
    if "ens" not in _CACHE:
        burgers = make_burgers()
        g = GridSpec(1.0, 128, "periodic")
        n = stable_n_steps(burgers, 0.02, g, 0.4, 3.0, multiple_of=20)
        cfg = SolveConfig(0.02, 0.4, n, g, seed=5, record_every=n // 20)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            _CACHE["ens"] = solve_ensemble(burgers, make_noise("linear", 0.5), make_entropy(burgers),
                                           cfg, 6)
    return _CACHE["ens"]
