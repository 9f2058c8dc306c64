"""Butcher tableau assembly, structure flags, and stage reduction."""

import numpy as np
import pytest

from decader.nodes import ader_operators, dec_coefficients, make_nodes
from decader.stability import stability_agreement, stability_value
from decader.tableaux import (
    ButcherTableau,
    IMEXTableau,
    MethodSpec,
    build_tableau,
    reduce_tableau,
    tableau_dict,
)

DEC_KINDS = ("equispaced", "gauss-lobatto")
ADER_KINDS = ("equispaced", "gauss-lobatto", "gauss-legendre")
MODES = ("explicit", "implicit", "imex")


def both_parts(t):
    if isinstance(t, IMEXTableau):
        return [t.implicit, t.explicit]
    return [t]


def strictly_lower(A):
    return np.all(np.abs(np.triu(A)) == 0.0)


# ---------------------------------------------------------------------------
# method descriptors


def test_spec_derived_counts():
    assert MethodSpec("dec", "equispaced", 5, "explicit").M == 4
    assert MethodSpec("dec", "gauss-lobatto", 5, "explicit").M == 3
    assert MethodSpec("ader", "gauss-legendre", 5, "explicit").M == 2
    assert MethodSpec("ader", "gauss-lobatto", 6, "implicit").K == 6


def test_spec_rejects_bad_input():
    with pytest.raises(ValueError):
        MethodSpec("rk", "equispaced", 3, "explicit")
    with pytest.raises(ValueError):
        MethodSpec("dec", "gauss-legendre", 3, "explicit")  # needs endpoint nodes
    with pytest.raises(ValueError):
        MethodSpec("dec", "equispaced", 1, "explicit")
    with pytest.raises(ValueError):
        MethodSpec("dec", "equispaced", 21, "explicit")
    with pytest.raises(ValueError):
        MethodSpec("dec", "equispaced", 4, "midpoint")
    with pytest.raises(ValueError):
        # fewer subintervals than accuracy requires
        MethodSpec("dec", "equispaced", 4, "explicit", subintervals=2)


def test_spec_allows_extra_subintervals():
    sp = MethodSpec("sdec", "gauss-lobatto", 4, "implicit", subintervals=7)
    assert sp.M == 7 and sp.K == 4
    t = build_tableau(sp)
    assert np.abs(t.A.sum(axis=1) - t.c).max() <= 1e-13


# ---------------------------------------------------------------------------
# known small tableaux


def test_second_order_explicit_reduces_to_heun():
    t = reduce_tableau(build_tableau(MethodSpec("dec", "equispaced", 2, "explicit")))
    assert t.Z == 2
    assert np.allclose(t.A, [[0.0, 0.0], [1.0, 0.0]], atol=1e-14)
    assert np.allclose(t.b, [0.5, 0.5], atol=1e-14)
    assert np.allclose(t.c, [0.0, 1.0], atol=1e-14)
    for z in (0.1, -0.5, 0.3 + 0.2j):
        assert abs(stability_value(t, z) - (1 + z + z * z / 2)) <= 1e-13


def test_lobatto_iiic_block_inside_implicit_predictor():
    sp = MethodSpec("ader", "gauss-lobatto", 2, "implicit")
    t = build_tableau(sp)
    assert t.Z == 5
    assert np.allclose(t.A[1:3, 1:3], [[0.5, -0.5], [0.5, 0.5]], atol=1e-13)
    assert np.allclose(t.b[-2:], [0.5, 0.5], atol=1e-13)


def test_first_sweep_column_is_integral_vector():
    for kind in DEC_KINDS:
        sp = MethodSpec("dec", kind, 4, "explicit")
        co = dec_coefficients(make_nodes(kind, sp.M))
        t = build_tableau(sp)
        assert np.abs(t.A[1 : sp.M + 2, 0] - co.beta).max() <= 1e-14


def test_chained_sweep_uses_single_previous_stage():
    # first-sweep rows differ from their predecessor in exactly one entry,
    # and that entry is the subinterval length
    sp = MethodSpec("sdec", "gauss-lobatto", 5, "explicit")
    t = build_tableau(sp)
    nodes = make_nodes("gauss-lobatto", sp.M).nodes
    for m in range(1, sp.M + 1):
        d = t.A[1 + m] - t.A[m]
        nz = np.flatnonzero(np.abs(d) > 1e-14)
        assert nz.tolist() == [m]
        assert abs(d[m] - (nodes[m] - nodes[m - 1])) <= 1e-14


def test_second_order_imex_chained_equals_plain():
    a = reduce_tableau(build_tableau(MethodSpec("sdec", "gauss-lobatto", 2, "imex")))
    b = reduce_tableau(build_tableau(MethodSpec("dec", "gauss-lobatto", 2, "imex")))
    for pa, pb in zip(both_parts(a), both_parts(b)):
        assert pa.Z == pb.Z
        assert np.abs(pa.A - pb.A).max() <= 1e-14
        assert np.abs(pa.b - pb.b).max() <= 1e-14
        assert np.abs(pa.c - pb.c).max() <= 1e-14


def test_predictor_stage_count():
    for kind in ADER_KINDS:
        for p in (2, 3, 5, 8):
            sp = MethodSpec("ader", kind, p, "explicit")
            t = build_tableau(sp)
            assert t.Z == sp.K * (sp.M + 1) + 1


def test_explicit_predictor_first_column_is_row_sums():
    sp = MethodSpec("ader", "gauss-lobatto", 4, "explicit")
    ops = ader_operators(make_nodes("gauss-lobatto", sp.M))
    t = build_tableau(sp)
    w = sp.M + 1
    assert np.abs(t.A[1 : 1 + w, 0] - ops.P).max() <= 1e-13
    assert np.abs(ops.P - ops.Q.sum(axis=1)).max() <= 1e-13
    # later sweeps read the previous sweep's stages through the same matrix
    assert np.abs(t.A[1 + w : 1 + 2 * w, 1 : 1 + w] - ops.Q).max() <= 1e-13


# ---------------------------------------------------------------------------
# structural invariants across the whole catalog


def catalog():
    out = []
    for family in ("dec", "sdec", "ader"):
        kinds = ADER_KINDS if family == "ader" else DEC_KINDS
        for kind in kinds:
            for mode in MODES:
                for p in range(2, 9):
                    out.append(MethodSpec(family, kind, p, mode))
    return out


CATALOG = catalog()


@pytest.mark.parametrize("sp", CATALOG, ids=lambda s: s.label())
def test_row_sum_consistency(sp):
    t = build_tableau(sp)
    for part in both_parts(t):
        assert np.abs(part.A.sum(axis=1) - part.c).max() <= 1e-13


@pytest.mark.parametrize("sp", CATALOG, ids=lambda s: s.label())
def test_structure_flags(sp):
    t = build_tableau(sp)
    if isinstance(t, IMEXTableau):
        assert t.explicit.Z == t.implicit.Z
        assert np.abs(t.explicit.c - t.implicit.c).max() <= 1e-13
        assert t.explicit.structure == "explicit"
        assert strictly_lower(t.explicit.A)
    elif sp.mode == "explicit":
        assert t.structure == "explicit"
        assert strictly_lower(t.A)
    else:
        assert t.structure in ("diagonally-implicit", "block-implicit")


@pytest.mark.parametrize(
    "sp",
    [s for s in CATALOG if s.family in ("dec", "sdec") and s.mode == "implicit"],
    ids=lambda s: s.label(),
)
def test_implicit_sweeps_diagonally_implicit_and_stiffly_accurate(sp):
    t = build_tableau(sp)
    assert t.structure == "diagonally-implicit"
    assert np.all(np.abs(np.triu(t.A, 1)) == 0.0)
    assert np.array_equal(t.b, t.A[-1])


# ---------------------------------------------------------------------------
# reduction pass


REDUCE_SAMPLE = [
    MethodSpec("dec", "equispaced", 2, "explicit"),
    MethodSpec("dec", "gauss-lobatto", 5, "implicit"),
    MethodSpec("dec", "equispaced", 4, "imex"),
    MethodSpec("sdec", "gauss-lobatto", 3, "explicit"),
    MethodSpec("sdec", "equispaced", 6, "imex"),
    MethodSpec("ader", "gauss-lobatto", 4, "explicit"),
    MethodSpec("ader", "gauss-legendre", 5, "implicit"),
    MethodSpec("ader", "equispaced", 3, "imex"),
]


@pytest.mark.parametrize("sp", REDUCE_SAMPLE, ids=lambda s: s.label())
def test_reduction_preserves_amplification(sp):
    t = build_tableau(sp)
    r = reduce_tableau(t)
    assert r.Z <= t.Z
    assert stability_agreement(t, r) <= 1e-10


@pytest.mark.parametrize("sp", REDUCE_SAMPLE, ids=lambda s: s.label())
def test_reduction_is_idempotent(sp):
    r = reduce_tableau(build_tableau(sp))
    rr = reduce_tableau(r)
    assert rr.Z == r.Z
    for pa, pb in zip(both_parts(r), both_parts(rr)):
        assert np.array_equal(pa.A, pb.A)
        assert np.array_equal(pa.b, pb.b)


@pytest.mark.parametrize("p", [2, 3, 4, 5, 6])
def test_reduced_explicit_sweep_stage_count(p):
    sp = MethodSpec("dec", "gauss-lobatto", p, "explicit")
    r = reduce_tableau(build_tableau(sp))
    assert r.Z == sp.M * (sp.K - 1) + 1


# ---------------------------------------------------------------------------
# serialization and validation glue


def test_tableau_dict_plain():
    sp = MethodSpec("dec", "equispaced", 3, "explicit")
    t = build_tableau(sp)
    d = tableau_dict(t, sp)
    assert d["family"] == "dec" and d["order"] == 3 and d["mode"] == "explicit"
    assert d["Z"] == t.Z and len(d["c"]) == t.Z and len(d["A"]) == t.Z
    assert np.allclose(d["A"], t.A)


def test_tableau_dict_imex_has_both_parts():
    t = build_tableau(MethodSpec("dec", "equispaced", 3, "imex"))
    d = tableau_dict(t)
    assert np.allclose(d["A"], t.implicit.A)
    assert np.allclose(d["AHat"], t.explicit.A)
    assert np.allclose(d["bHat"], t.explicit.b)


def test_tableau_type_validation():
    with pytest.raises(ValueError):
        ButcherTableau(
            A=np.array([[0.0, 0.0], [1.0, 0.0]]),
            b=np.array([0.5, 0.5]),
            c=np.array([0.0, 0.5]),  # inconsistent with row sums
            structure="explicit",
        )
    with pytest.raises(ValueError):
        ButcherTableau(
            A=np.array([[0.1, 0.0], [1.0, 0.0]]),
            b=np.array([0.5, 0.5]),
            c=np.array([0.1, 1.0]),
            structure="explicit",  # diagonal entry contradicts the flag
        )
