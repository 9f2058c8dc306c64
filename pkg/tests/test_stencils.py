"""Finite-difference stencil construction and symbol checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from decader.stencils import (
    Stencil,
    advection_closed_form,
    advection_stencil,
    advection_stencil_for_order,
    diffusion_stencil,
    dispersion_stencil,
    stencil_dict,
    symbol_eval,
)


# ---------------------------------------------------------------------------
# known coefficient sets


def test_upwind_first_order():
    s = advection_stencil(1, 0)
    assert s.d == 1 and s.q == 1
    assert np.array_equal(s.offsets, [-1, 0])
    assert np.allclose(s.coefficients, [-1.0, 1.0], atol=1e-15)


def test_centered_second_order():
    s = advection_stencil(1, 1)
    assert s.q == 2
    assert np.array_equal(s.offsets, [-1, 0, 1])
    assert np.allclose(s.coefficients, [-0.5, 0.0, 0.5], atol=1e-15)


def test_biased_third_order():
    s = advection_stencil(2, 1)
    assert s.q == 3
    assert np.array_equal(s.offsets, [-2, -1, 0, 1])
    assert np.allclose(s.coefficients, [1 / 6, -1.0, 0.5, 1 / 3], atol=1e-14)


def test_order_selector_prefers_upwind_bias():
    # even order q pairs with the one-sided-leaning (q, q-2)-style choice:
    # q = 2 gives the fully upwinded three-point stencil
    s = advection_stencil_for_order(2)
    assert np.array_equal(s.offsets, [-2, -1, 0])
    assert np.allclose(s.coefficients, [0.5, -2.0, 1.5], atol=1e-15)
    for q in range(1, 9):
        assert advection_stencil_for_order(q).q == q


@pytest.mark.parametrize(
    "q,expected",
    [
        (2, [1.0, -2.0, 1.0]),
        (4, [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]),
        (6, [1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90]),
    ],
)
def test_centered_diffusion_weights(q, expected):
    s = diffusion_stencil(q)
    assert s.d == 2 and s.q == q
    w = q // 2
    assert np.array_equal(s.offsets, np.arange(-w, w + 1))
    assert np.allclose(s.coefficients, expected, atol=1e-13)


def test_third_derivative_biased_weights():
    s = dispersion_stencil(3)
    assert s.d == 3 and s.q == 3
    assert np.array_equal(s.offsets, np.arange(-2, 4))
    assert np.allclose(4.0 * s.coefficients, [-1, -1, 10, -14, 7, -1], atol=1e-12)


# ---------------------------------------------------------------------------
# moment conditions and order of accuracy


@pytest.mark.parametrize(
    "stencil",
    [
        advection_stencil(1, 0),
        advection_stencil(3, 2),
        advection_stencil(2, 4),
        diffusion_stencil(2),
        diffusion_stencil(8),
        dispersion_stencil(3),
        dispersion_stencil(5),
    ],
    ids=lambda s: f"d{s.d}q{s.q}",
)
def test_moment_conditions(stencil):
    # normalized moments vanish below d + q except the d-th, which is 1
    for m in range(stencil.d + stencil.q):
        want = 1.0 if m == stencil.d else 0.0
        assert abs(stencil.moment(m) - want) <= 1e-12


@pytest.mark.parametrize("r", range(0, 6))
@pytest.mark.parametrize("s", range(0, 6))
def test_closed_form_matches_solver(r, s):
    if r == 0 and s == 0:
        return
    got = advection_stencil(r, s).coefficients
    ref = advection_closed_form(r, s)
    assert np.abs(got - ref).max() <= 1e-12


def test_taylor_order_on_smooth_function():
    # halving h must shrink the derivative error by about 2^q
    s = advection_stencil(2, 2)
    x0 = 0.3
    errs = []
    for h in (0.1, 0.05):
        approx = np.sum(s.coefficients * np.cos(x0 + s.offsets * h)) / h
        errs.append(abs(approx - (-np.sin(x0))))
    rate = np.log2(errs[0] / errs[1])
    assert abs(rate - s.q) < 0.2


# ---------------------------------------------------------------------------
# Fourier symbols


def test_upwind_symbol_closed_form():
    s = advection_stencil(1, 0)
    for theta in np.linspace(-np.pi, np.pi, 17):
        got = symbol_eval(s, theta)
        assert abs(got - (1.0 - np.exp(-1j * theta))) <= 1e-14


def test_diffusion_symbol_closed_form():
    s = diffusion_stencil(2)
    for theta in np.linspace(0, np.pi, 9):
        got = symbol_eval(s, theta)
        assert abs(got - (2.0 * np.cos(theta) - 2.0)) <= 1e-14


def test_dispersion_symbol_at_pi():
    assert abs(symbol_eval(dispersion_stencil(3), np.pi) - 8.0) <= 1e-12


@pytest.mark.parametrize("rs", [(1, 0), (2, 1), (3, 2), (4, 3), (2, 0)])
def test_advection_symbol_dissipative(rs):
    # upwind-biased transport stencils must not amplify any Fourier mode
    s = advection_stencil(*rs)
    theta = np.linspace(-np.pi, np.pi, 1001)
    re = np.array([symbol_eval(s, t).real for t in theta])
    assert re.min() >= -1e-12


@pytest.mark.parametrize("q", [2, 4, 6, 8])
def test_diffusion_symbol_real_nonpositive(q):
    s = diffusion_stencil(q)
    theta = np.linspace(-np.pi, np.pi, 1001)
    vals = np.array([symbol_eval(s, t) for t in theta])
    assert np.abs(vals.imag).max() <= 1e-12
    assert vals.real.max() <= 1e-12


@given(
    r=hst.integers(min_value=0, max_value=5),
    s=hst.integers(min_value=0, max_value=5),
    theta=hst.floats(min_value=-np.pi, max_value=np.pi),
)
@settings(max_examples=80, deadline=None)
def test_symbol_conjugate_pairing(r, s, theta):
    if r == 0 and s == 0:
        return
    st = advection_stencil(r, s)
    a = symbol_eval(st, theta)
    b = symbol_eval(st, -theta)
    assert abs(a - np.conj(b)) <= 1e-12 * max(1.0, abs(a))


def test_symbol_vanishes_at_zero_mode():
    for st in (advection_stencil(3, 1), diffusion_stencil(4), dispersion_stencil(3)):
        assert abs(symbol_eval(st, 0.0)) <= 1e-13


# ---------------------------------------------------------------------------
# validation and serialization


def test_bad_arguments_rejected():
    with pytest.raises(ValueError):
        advection_stencil(0, 0)
    with pytest.raises(ValueError):
        advection_stencil(-1, 2)
    with pytest.raises(ValueError):
        diffusion_stencil(3)  # centered even-derivative stencils need even q
    with pytest.raises(ValueError):
        diffusion_stencil(0)
    with pytest.raises(ValueError):
        dispersion_stencil(0)


def test_stencil_dict_round_trip():
    s = advection_stencil(2, 1)
    d = stencil_dict(s)
    assert d["d"] == 1 and d["q"] == 3
    assert d["offsets"] == [-2, -1, 0, 1]
    assert np.allclose(d["coefficients"], s.coefficients)
    rebuilt = Stencil(
        d=d["d"],
        q=d["q"],
        offsets=np.array(d["offsets"]),
        coefficients=np.array(d["coefficients"]),
    )
    assert abs(symbol_eval(rebuilt, 1.3) - symbol_eval(s, 1.3)) <= 1e-15
