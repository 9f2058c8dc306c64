import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decader.nodes import (ADEROperators, EQUISPACED, GAUSS_LEGENDRE,
                           GAUSS_LOBATTO, ader_operators, coefficients_dict,
                           dec_coefficients, lagrange_basis, lagrange_eval,
                           make_nodes, node_quadrature_weights)

KINDS = (EQUISPACED, GAUSS_LOBATTO, GAUSS_LEGENDRE)


def test_equispaced_three_nodes():
    ns = make_nodes(EQUISPACED, 2)
    assert np.array_equal(ns.nodes, [0.0, 0.5, 1.0])


def test_gauss_lobatto_three_nodes():
    ns = make_nodes(GAUSS_LOBATTO, 2)
    assert np.allclose(ns.nodes, [0.0, 0.5, 1.0], atol=1e-15)


def test_gauss_legendre_two_nodes_closed_form():
    ns = make_nodes(GAUSS_LEGENDRE, 1)
    lo = 0.5 - 1.0 / (2.0 * np.sqrt(3.0))
    hi = 0.5 + 1.0 / (2.0 * np.sqrt(3.0))
    assert np.allclose(ns.nodes, [lo, hi], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("M", range(1, 11))
def test_node_invariants(kind, M):
    ns = make_nodes(kind, M)
    t = ns.nodes
    assert t.size == M + 1
    assert np.all(np.diff(t) > 0)
    assert t[0] >= 0.0 and t[-1] <= 1.0
    if kind == GAUSS_LEGENDRE:
        assert t[0] > 0.0 and t[-1] < 1.0
    else:
        assert t[0] == 0.0 and t[-1] == 1.0
    if kind != EQUISPACED:
        assert np.abs(t + t[::-1] - 1.0).max() <= 1e-14


def test_make_nodes_rejects_bad_input():
    with pytest.raises(ValueError):
        make_nodes("chebyshev", 3)
    with pytest.raises(ValueError):
        make_nodes(EQUISPACED, 0)
    with pytest.raises(ValueError):
        make_nodes(GAUSS_LOBATTO, 31)


def test_lagrange_interpolation_property():
    ns = make_nodes(EQUISPACED, 3)
    for r in range(4):
        for m in range(4):
            want = 1.0 if r == m else 0.0
            assert lagrange_eval(ns, r, ns.nodes[m]) == pytest.approx(want, abs=1e-13)


def test_lagrange_quadratic_value():
    # phi_1 on {0, 1/2, 1} is 4 t (1 - t)
    ns = make_nodes(EQUISPACED, 2)
    assert lagrange_eval(ns, 1, 0.25) == pytest.approx(0.75, abs=1e-14)


@given(t=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
       M=st.integers(min_value=1, max_value=8),
       kind=st.sampled_from(KINDS))
@settings(max_examples=60, deadline=None)
def test_partition_of_unity(t, M, kind):
    ns = make_nodes(kind, M)
    assert abs(lagrange_basis(ns, t).sum() - 1.0) <= 1e-12


@given(M=st.integers(min_value=1, max_value=7),
       kind=st.sampled_from(KINDS),
       data=st.data())
@settings(max_examples=40, deadline=None)
def test_interpolation_reproduces_polynomials(M, kind, data):
    # degree-M data is reproduced exactly at any evaluation point
    ns = make_nodes(kind, M)
    coeff = data.draw(st.lists(st.floats(-2, 2), min_size=M + 1, max_size=M + 1))
    t = data.draw(st.floats(min_value=0.0, max_value=1.0))
    vals = np.polyval(coeff, ns.nodes)
    assert lagrange_basis(ns, t) @ vals == pytest.approx(
        np.polyval(coeff, t), abs=1e-10)


def test_integral_rows_trapezoid_simpson():
    c1 = dec_coefficients(make_nodes(EQUISPACED, 1))
    assert np.allclose(c1.theta[1], [0.5, 0.5], atol=1e-14)
    c2 = dec_coefficients(make_nodes(EQUISPACED, 2))
    assert np.allclose(c2.theta[2], [1 / 6, 2 / 3, 1 / 6], atol=1e-14)
    assert np.allclose(c2.theta[1], [5 / 24, 1 / 3, -1 / 24], atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("M", range(1, 11))
def test_integral_row_sums_match_abscissae(kind, M):
    c = dec_coefficients(make_nodes(kind, M))
    assert np.abs(c.theta.sum(axis=1) - c.beta).max() <= 1e-13
    # partial-subinterval integrals accumulate to the from-the-start rows
    # (offset by the row at the first node when that node is interior)
    accum = np.cumsum(c.delta, axis=0) + c.theta[0]
    assert np.abs(accum - c.theta).max() <= 1e-13
    if kind != GAUSS_LEGENDRE:
        assert c.beta[0] == 0.0 and c.beta[-1] == 1.0
    assert np.allclose(c.gamma[1:], np.diff(c.beta), atol=1e-15)
    assert c.gamma[0] == 0.0 and np.all(c.delta[0] == 0.0)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("M", range(1, 11))
def test_predictor_operator_invariants(kind, M):
    ops = ader_operators(make_nodes(kind, M))
    ones = np.linalg.solve(ops.mass, ops.phi0)
    assert np.abs(ones - 1.0).max() <= 1e-12
    assert abs(ops.b.sum() - 1.0) <= 1e-14
    assert np.allclose(ops.P, ops.Q.sum(axis=1), atol=1e-14)
    if kind != EQUISPACED:
        # collocated quadrature: the right-hand-side matrix is diagonal
        w = node_quadrature_weights(ops.nodes)
        assert np.allclose(ops.R, np.diag(w), atol=1e-13)


def test_two_point_lobatto_weights():
    ops = ader_operators(make_nodes(GAUSS_LOBATTO, 1))
    assert np.allclose(ops.R, np.diag([0.5, 0.5]), atol=1e-15)


@pytest.mark.parametrize("kind", (EQUISPACED, GAUSS_LOBATTO))
@pytest.mark.parametrize("M", range(1, 9))
def test_last_integral_row_equals_weights(kind, M):
    # both integrate the basis over the whole step when t=1 is a node
    c = dec_coefficients(make_nodes(kind, M))
    ops = ader_operators(make_nodes(kind, M))
    assert np.abs(c.theta[-1] - ops.b).max() <= 1e-13


@pytest.mark.parametrize("kind", KINDS)
def test_quadrature_refinement_invariance(kind):
    ns = make_nodes(kind, 5)
    base = dec_coefficients(ns)
    finer = dec_coefficients(ns, quad_points=base.theta.shape[0] + 9)
    assert np.abs(base.theta - finer.theta).max() <= 1e-13
    ob = ader_operators(ns)
    of = ader_operators(ns, quad_points=20)
    assert np.abs(ob.b - of.b).max() <= 1e-13


def test_coefficients_dump_fields():
    d = coefficients_dict(make_nodes(GAUSS_LOBATTO, 2))
    for key in ("kind", "M", "nodes", "theta", "beta", "delta",
                "massM", "R", "Q", "P", "b"):
        assert key in d
    assert d["M"] == 2 and len(d["nodes"]) == 3


def test_mass_condition_reported():
    ops = ader_operators(make_nodes(GAUSS_LOBATTO, 3))
    assert np.isfinite(ops.mass_condition) and ops.mass_condition >= 1.0
