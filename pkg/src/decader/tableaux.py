"""Butcher tableaux for DeC, sDeC and ADER methods at arbitrary order.

The iterative schemes are linear in the right-hand-side evaluations at their
subtimestep stages, so each one is exactly a Runge-Kutta method.  This module
assembles those tableaux in full unreduced block form (one block of M+1 stages
per correction sweep, plus the trivial initial stage and, for implicit/IMEX
variants, a stiffly accurate final stage), and provides a verified reduction
pass that merges duplicate stages.

Stage layout per family (K sweeps, M+1 subnodes):

* dec:  initial stage; blocks k = 1..K-1; final update from sweep K (a real
  stage only in implicit/IMEX mode, where b equals its row).
* sdec: like dec, but stages chain through the previous subnode inside each
  sweep, so sweep K contributes subnode stages 0..M-1 as well.
* ader: initial stage; K blocks of M+1 stages; b weights the last block.
  The implicit part is block diagonal (each sweep solves its own block), the
  explicit part carries the previous sweep's block on the subdiagonal with
  P = Q 1 in the first column.

IMEX methods are a pair of tableaux sharing stage count and abscissae: the
stiff term runs through the implicit part, the non-stiff term through the
explicit (strictly lower triangular) part.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .nodes import (ADEROperators, DeCCoefficients, EQUISPACED, GAUSS_LEGENDRE,
                    GAUSS_LOBATTO, ader_operators, dec_coefficients, make_nodes)

EXPLICIT = "explicit"
IMPLICIT = "implicit"
IMEX = "imex"
MODES = (EXPLICIT, IMPLICIT, IMEX)

DEC = "dec"
SDEC = "sdec"
ADER = "ader"
FAMILIES = (DEC, SDEC, ADER)

STRUCT_EXPLICIT = "explicit"
STRUCT_DIAGONALLY_IMPLICIT = "diagonally-implicit"
STRUCT_BLOCK_IMPLICIT = "block-implicit"


def _detect_structure(A: np.ndarray) -> str:
    if not np.any(np.triu(A)):
        return STRUCT_EXPLICIT
    if not np.any(np.triu(A, 1)):
        return STRUCT_DIAGONALLY_IMPLICIT
    return STRUCT_BLOCK_IMPLICIT


def block_partition(*mats: np.ndarray) -> list[tuple[int, int]]:
    """Contiguous diagonal blocks (start, end) that make every given matrix
    block lower triangular; singleton blocks for (diagonally) explicit rows.
    """
    Z = mats[0].shape[0]
    reach = np.arange(Z)
    for m in mats:
        for i in range(Z):
            cols = np.nonzero(m[i])[0]
            if cols.size:
                reach[i] = max(reach[i], cols[-1])
    blocks = []
    s = 0
    while s < Z:
        e = s + 1
        j = s
        while j < e:
            e = max(e, reach[j] + 1)
            j += 1
        blocks.append((s, e))
        s = e
    return blocks


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    structure: str = ""

    def __post_init__(self):
        A, b, c = _frozen(self.A), _frozen(self.b), _frozen(self.c)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if b.shape != (A.shape[0],) or c.shape != (A.shape[0],):
            raise ValueError("b and c must have length Z")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        detected = _detect_structure(A)
        if not self.structure:
            object.__setattr__(self, "structure", detected)
        elif self.structure == STRUCT_EXPLICIT and detected != STRUCT_EXPLICIT:
            raise ValueError("explicit flag requires a strictly lower triangular A")
        elif self.structure == STRUCT_DIAGONALLY_IMPLICIT and detected == STRUCT_BLOCK_IMPLICIT:
            raise ValueError("diagonally-implicit flag requires a lower triangular A")
        elif self.structure not in (
            STRUCT_EXPLICIT,
            STRUCT_DIAGONALLY_IMPLICIT,
            STRUCT_BLOCK_IMPLICIT,
        ):
            raise ValueError(f"unknown structure flag {self.structure!r}")
        if np.max(np.abs(A @ np.ones(A.shape[0]) - c)) > 1e-12:
            raise ValueError("row sums of A do not match c")

    @property
    def Z(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class IMEXTableau:
    """Implicit/explicit tableau pair sharing stage count and abscissae."""

    implicit: ButcherTableau
    explicit: ButcherTableau

    def __post_init__(self):
        if self.implicit.Z != self.explicit.Z:
            raise ValueError("IMEX parts must share the stage count")
        if np.max(np.abs(self.implicit.c - self.explicit.c)) > 1e-12:
            raise ValueError("IMEX parts must share the abscissae")
        if self.explicit.structure != STRUCT_EXPLICIT:
            raise ValueError("explicit part must be strictly lower triangular")

    @property
    def Z(self) -> int:
        return self.implicit.Z

    @property
    def c(self) -> np.ndarray:
        return self.implicit.c


QUADRATURE_UPDATE = "quadrature"
FINAL_STATE_UPDATE = "final-state"
FINAL_UPDATES = (QUADRATURE_UPDATE, FINAL_STATE_UPDATE)


@dataclass(frozen=True)
class MethodSpec:
    """Method selector: family, node kind, accuracy order and mode.

    Derives the sweep count K = p and the polynomial degree M needed for the
    underlying discretization to reach accuracy >= p: M = p-1 for equispaced
    nodes (accuracy M+1), M = ceil(p/2) for Gauss-Lobatto (accuracy 2M), and
    M = floor(p/2) for Gauss-Legendre (accuracy 2M+1, ADER only).

    `subintervals` overrides the derived M upward (more subnodes than the
    accuracy minimum; the order is preserved since the quadrature only gets
    better).  `final_update` selects how ADER forms the step value from the
    last sweep: "quadrature" integrates the right-hand side with the b weights
    (one extra degree in the explicit stability polynomial), "final-state"
    evaluates the reconstruction at the step end (stiffly accurate for node
    sets containing the endpoint).
    """

    family: str
    kind: str
    order: int
    mode: str
    subintervals: int | None = None
    final_update: str = QUADRATURE_UPDATE

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        allowed = (EQUISPACED, GAUSS_LOBATTO) if self.family != ADER else \
                  (EQUISPACED, GAUSS_LOBATTO, GAUSS_LEGENDRE)
        if self.kind not in allowed:
            raise ValueError(f"node kind {self.kind!r} not supported for family {self.family!r}")
        if not 2 <= self.order <= 20:
            raise ValueError(f"order {self.order} outside supported range [2, 20]")
        if self.final_update not in FINAL_UPDATES:
            raise ValueError(f"unknown final update {self.final_update!r}; "
                             f"expected one of {FINAL_UPDATES}")
        if self.final_update != QUADRATURE_UPDATE and self.family != ADER:
            raise ValueError("final_update applies to the ader family only")
        if self.subintervals is not None and self.subintervals < self.default_subintervals:
            raise ValueError(
                f"subintervals {self.subintervals} below the accuracy minimum "
                f"{self.default_subintervals} for order {self.order} ({self.kind})")

    @property
    def K(self) -> int:
        return self.order

    @property
    def default_subintervals(self) -> int:
        if self.kind == EQUISPACED:
            return self.order - 1
        if self.kind == GAUSS_LOBATTO:
            return ceil(self.order / 2)
        return floor(self.order / 2)

    @property
    def M(self) -> int:
        if self.subintervals is not None:
            return self.subintervals
        return self.default_subintervals

    def label(self) -> str:
        prefix = {EXPLICIT: "", IMPLICIT: "Im", IMEX: "IMEX-"}[self.mode]
        name = {DEC: "DeC", SDEC: "sDeC", ADER: "ADER"}[self.family]
        extras = []
        if self.subintervals is not None and self.subintervals != self.default_subintervals:
            extras.append(f"M={self.subintervals}")
        if self.final_update != QUADRATURE_UPDATE:
            extras.append(self.final_update)
        suffix = ", " + ", ".join(extras) if extras else ""
        return f"{prefix}{name}{self.order}({self.kind}{suffix})"


def _pack(mode: str, A, Ahat, b, bhat, c):
    if mode == EXPLICIT:
        return ButcherTableau(A=Ahat, b=bhat, c=c)
    if mode == IMPLICIT:
        return ButcherTableau(A=A, b=b, c=c)
    return IMEXTableau(implicit=ButcherTableau(A=A, b=b, c=c),
                       explicit=ButcherTableau(A=Ahat, b=bhat, c=c))


def _check_coeffs(obj_nodes, spec: MethodSpec, family: str):
    if spec.family != family:
        raise ValueError(f"spec.family is {spec.family!r}, expected {family!r}")
    if obj_nodes.kind != spec.kind or obj_nodes.M != spec.M:
        raise ValueError(
            f"coefficients built for ({obj_nodes.kind}, M={obj_nodes.M}) do not match "
            f"spec ({spec.kind}, M={spec.M})")


def dec_tableau(coeffs: DeCCoefficients, spec: MethodSpec):
    """Deferred-correction tableau: sweep blocks referencing the previous sweep.

    First sweep collapses to the beta column (sum_r theta[m, r] = beta[m]);
    later sweeps carry theta minus the beta diagonal in the implicit part and
    plain theta in the explicit part.  Implicit/IMEX variants end with a
    stiffly accurate stage whose row is b.
    """
    _check_coeffs(coeffs.nodes, spec, DEC)
    th, be = coeffs.theta, coeffs.beta
    M, K = spec.M, spec.K
    n = M + 1
    has_final = spec.mode != EXPLICIT
    Z = 1 + (K - 1) * n + (1 if has_final else 0)
    A = np.zeros((Z, Z))
    Ahat = np.zeros((Z, Z))
    c = np.zeros(Z)

    def start(k):
        return 1 + (k - 1) * n

    for k in range(1, K):
        for m in range(n):
            i = start(k) + m
            c[i] = be[m]
            if k == 1:
                A[i, i] = be[m]
                Ahat[i, 0] = be[m]
            else:
                prev = start(k - 1)
                A[i, prev:prev + n] = th[m]
                A[i, prev + m] -= be[m]
                A[i, i] = be[m]
                Ahat[i, prev:prev + n] = th[m]

    #final update: sweep K evaluated at the last subnode only
    rowA = np.zeros(Z)
    rowAhat = np.zeros(Z)
    prev = start(K - 1)
    rowA[prev:prev + n] = th[M]
    rowA[prev + M] -= be[M]
    rowAhat[prev:prev + n] = th[M]
    if has_final:
        f = Z - 1
        c[f] = be[M]
        rowA[f] = be[M]
        A[f] = rowA
        Ahat[f] = rowAhat
    b = rowA
    bhat = rowAhat
    return _pack(spec.mode, A, Ahat, b, bhat, c)


def sdec_tableau(coeffs: DeCCoefficients, spec: MethodSpec):
    """Subtimestep-marching variant: each sweep is an Euler-type chain.

    Stage values chain through the previous subnode of the same sweep, so the
    rows accumulate along m; the delta matrix replaces theta and gamma (the
    subinterval length) replaces beta in the Euler terms.
    """
    _check_coeffs(coeffs.nodes, spec, SDEC)
    de, ga, be = coeffs.delta, coeffs.gamma, coeffs.beta
    M, K = spec.M, spec.K
    n = M + 1
    has_final = spec.mode != EXPLICIT
    Z = 1 + (K - 1) * n + M + (1 if has_final else 0)
    A = np.zeros((Z, Z))
    Ahat = np.zeros((Z, Z))
    c = np.zeros(Z)

    def idx(m, k):
        if k == 0:
            return 0
        return 1 + (k - 1) * n + m

    b = bhat = None
    for k in range(1, K + 1):
        rowA = np.zeros(Z)
        rowAhat = np.zeros(Z)
        for m in range(1, M + 1):
            rowA = rowA.copy()
            rowAhat = rowAhat.copy()
            if k == 1:
                #first sweep collapses to an Euler chain along the subnodes
                #(the delta row sums to gamma^m and cancels the corrections)
                rowAhat[idx(m - 1, 1)] += ga[m]
            else:
                #Euler corrections gamma^m (F at (m,k) minus F at (m,k-1))
                #implicitly and gamma^m (G at (m-1,k) minus (m-1,k-1)) explicitly,
                #plus the high-order quadrature of the previous sweep
                rowA[idx(m, k - 1)] -= ga[m]
                rowAhat[idx(m - 1, k)] += ga[m]
                rowAhat[idx(m - 1, k - 1)] -= ga[m]
                prev = idx(0, k - 1)
                rowA[prev:prev + n] += de[m]
                rowAhat[prev:prev + n] += de[m]
            is_stage = k < K or m < M or has_final
            if is_stage:
                i = Z - 1 if (k == K and m == M) else idx(m, k)
                rowA[i] += ga[m]
                A[i] = rowA
                Ahat[i] = rowAhat
                c[i] = be[m]
        if k == K:
            b = rowA.copy()
            bhat = rowAhat.copy()
    return _pack(spec.mode, A, Ahat, b, bhat, c)


def ader_tableau(ops: ADEROperators, spec: MethodSpec):
    """ADER tableau: K repeated blocks of the evolution matrix Q.

    Implicit part is block diagonal (each sweep is its own solve and does not
    see the previous sweep); explicit part has P = Q 1 in the first column and
    Q blocks on the subdiagonal.  With the quadrature update, b weights the
    last block on both parts.  With the final-state update, the step value is
    the reconstruction at the step end: the implicit weights are phi(1)^T Q on
    the last block and the explicit weights the same vector one block earlier
    (the last sweep's explicit term evaluates the previous sweep).
    """
    _check_coeffs(ops.nodes, spec, ADER)
    Q, P, bvec = ops.Q, ops.P, ops.b
    M, K = spec.M, spec.K
    n = M + 1
    Z = 1 + K * n
    A = np.zeros((Z, Z))
    Ahat = np.zeros((Z, Z))
    c = np.zeros(Z)
    b = np.zeros(Z)
    bhat = np.zeros(Z)
    for k in range(1, K + 1):
        s = 1 + (k - 1) * n
        c[s:s + n] = P
        A[s:s + n, s:s + n] = Q
        if k == 1:
            Ahat[s:s + n, 0] = P
        else:
            Ahat[s:s + n, s - n:s] = Q
    if spec.final_update == QUADRATURE_UPDATE:
        b[Z - n:] = bvec
        bhat[Z - n:] = bvec
    else:
        end_weights = ops.phi1 @ Q
        b[Z - n:] = end_weights
        if K == 1:
            bhat[0] = ops.phi1 @ P
        else:
            bhat[Z - 2 * n:Z - n] = end_weights
    return _pack(spec.mode, A, Ahat, b, bhat, c)


def ader_iwf_tableau(ops: ADEROperators) -> ButcherTableau:
    """Single-block implicit ADER form: A = Q, b, c = P.

    The block-diagonal implicit tableau repeats this block; its stability
    function equals this form's, which for Gauss-Lobatto nodes coincides with
    the classical Lobatto IIIC method.
    """
    return ButcherTableau(A=ops.Q, b=ops.b, c=ops.P)


def build_tableau(spec: MethodSpec, quadrature: str = "nodes"):
    """Construct the tableau for a method spec from scratch (nodes included)."""
    ns = make_nodes(spec.kind, spec.M)
    if spec.family == ADER:
        return ader_tableau(ader_operators(ns, quadrature=quadrature), spec)
    coeffs = dec_coefficients(ns)
    if spec.family == DEC:
        return dec_tableau(coeffs, spec)
    return sdec_tableau(coeffs, spec)


def _round_key(a: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(a, dtype=float), 14) + 0.0   # normalize -0.0


def reduce_tableau(t):
    """Merge duplicate stages (identical rows in all parts and identical c).

    Coefficients referencing a removed stage are folded onto its surviving
    duplicate, so the method (and its stability function) is unchanged.
    """
    if isinstance(t, IMEXTableau):
        mats = [t.implicit.A.copy(), t.explicit.A.copy()]
        weights = [t.implicit.b.copy(), t.explicit.b.copy()]
    else:
        mats = [t.A.copy()]
        weights = [t.b.copy()]
    c = t.c.copy()

    changed = True
    while changed:
        changed = False
        keys = [[_round_key(m[i]) for m in mats] + [round(float(c[i]), 14)]
                for i in range(len(c))]
        for j in range(1, len(c)):
            for i in range(j):
                if all(np.array_equal(keys[i][p], keys[j][p]) for p in range(len(mats))) \
                        and keys[i][-1] == keys[j][-1]:
                    for p, m in enumerate(mats):
                        m[:, i] += m[:, j]
                        mats[p] = np.delete(np.delete(m, j, axis=0), j, axis=1)
                        weights[p][i] += weights[p][j]
                        weights[p] = np.delete(weights[p], j)
                    c = np.delete(c, j)
                    changed = True
                    break
            if changed:
                break

    if isinstance(t, IMEXTableau):
        return IMEXTableau(implicit=ButcherTableau(A=mats[0], b=weights[0], c=c),
                           explicit=ButcherTableau(A=mats[1], b=weights[1], c=c))
    return ButcherTableau(A=mats[0], b=weights[0], c=c)


def tableau_dict(t, spec: MethodSpec | None = None) -> dict:
    """Tableau as a JSON-ready dict (bHat/AHat present for IMEX pairs)."""
    out: dict = {}
    if spec is not None:
        out.update({"family": spec.family, "kind": spec.kind,
                    "order": spec.order, "mode": spec.mode})
    if isinstance(t, IMEXTableau):
        out.update({
            "Z": t.Z,
            "c": t.c.tolist(),
            "b": t.implicit.b.tolist(),
            "A": t.implicit.A.tolist(),
            "bHat": t.explicit.b.tolist(),
            "AHat": t.explicit.A.tolist(),
        })
    else:
        out.update({
            "Z": t.Z,
            "c": t.c.tolist(),
            "b": t.b.tolist(),
            "A": t.A.tolist(),
            "structure": t.structure,
        })
    return out
