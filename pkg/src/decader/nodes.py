"""Subtimestep nodes, Lagrange-basis quantities and coefficient matrices.

Every integrator in this package is assembled from the objects built here:

* ``NodeSet``: M+1 interpolation nodes on [0, 1] (equispaced, Gauss-Lobatto
  or Gauss-Legendre).
* ``DeCCoefficients``: the integrated-basis matrices used by the deferred
  correction sweeps,

      theta[m, r] = int_0^{t_m} phi_r(s) ds,      beta[m]  = t_m,
      delta[m, r] = int_{t_{m-1}}^{t_m} phi_r(s) ds,  gamma[m] = t_m - t_{m-1},

  where phi_r is the Lagrange basis on the nodes (phi_r(t_m) = delta_{rm}).
* ``ADEROperators``: the mass matrix, quadrature matrix R, evolution matrix
  Q = mass^-1 R, its row sums P, and the final-update weights b_i = int_0^1 phi_i.

All integrals are evaluated with an internal Gauss-Legendre rule that is exact
for every polynomial integrand appearing here.  The ADER mass/R matrices use,
by default, the quadrature collocated at the basis nodes (Lobatto or Legendre
weights; closed Newton-Cotes weights for equispaced nodes), which is what makes
R diagonal in the Lobatto/Legendre case and reproduces the known fragility of
high-order Newton-Cotes for equispaced nodes.  Pass ``quadrature="exact"`` to
use the exact rule instead.

Everything is immutable after construction and cached per (kind, M), so the
module is safe for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EQUISPACED = "equispaced"
GAUSS_LOBATTO = "gauss-lobatto"
GAUSS_LEGENDRE = "gauss-legendre"
NODE_KINDS = (EQUISPACED, GAUSS_LOBATTO, GAUSS_LEGENDRE)

#node computation is well conditioned up to roughly this degree
MAX_DEGREE = 30


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class NodeSet:
    """M+1 strictly increasing interpolation nodes on [0, 1]."""

    kind: str
    M: int
    nodes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes))
        if self.nodes.shape != (self.M + 1,):
            raise ValueError("node count does not match degree M")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if self.nodes[0] < -1e-15 or self.nodes[-1] > 1 + 1e-15:
            raise ValueError("nodes must lie in [0, 1]")


@dataclass(frozen=True)
class DeCCoefficients:
    """Integrated Lagrange-basis matrices for deferred-correction sweeps."""

    nodes: NodeSet
    theta: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        for name in ("theta", "beta", "delta", "gamma"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class ADEROperators:
    """Mass matrix, quadrature matrix and evolution operator for ADER."""

    nodes: NodeSet
    mass: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    b: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    mass_condition: float
    quadrature: str

    def __post_init__(self):
        for name in ("mass", "R", "Q", "P", "b", "phi0", "phi1"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


def _legendre_value_and_derivative(n: int, x: np.ndarray):
    """Legendre polynomial P_n and P_n' on [-1, 1] via the three-term recursion."""
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    denom = x * x - 1.0
    safe = np.where(denom == 0.0, 1.0, denom)
    dp = np.where(denom == 0.0, 0.0, n * (x * p - p_prev) / safe)
    return p, dp


def _gauss_lobatto_unit(M: int):
    """Lobatto nodes and weights on [-1, 1] for degree M (M+1 points).

    Interior nodes are the roots of P_M', found by Newton iteration from
    Chebyshev-Lobatto initial guesses; weights are 2 / (M (M+1) P_M(x)^2).
    """
    if M == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    x = -np.cos(np.pi * np.arange(M + 1) / M)
    interior = x[1:-1].copy()
    for _ in range(100):
        p, dp = _legendre_value_and_derivative(M, interior)
        #P_M' satisfies the Legendre ODE: (1 - x^2) P_M'' = 2 x P_M' - M(M+1) P_M
        d2p = (2.0 * interior * dp - M * (M + 1) * p) / (1.0 - interior**2)
        step = dp / d2p
        interior -= step
        if np.max(np.abs(step)) < 1e-15:
            break
    x[1:-1] = interior
    p, _ = _legendre_value_and_derivative(M, x)
    w = 2.0 / (M * (M + 1) * p**2)
    return x, w


@lru_cache(maxsize=None)
def make_nodes(kind: str, M: int) -> NodeSet:
    """Build the M+1 nodes of the requested family on [0, 1]."""
    if kind not in NODE_KINDS:
        raise ValueError(f"unsupported node kind {kind!r}; expected one of {NODE_KINDS}")
    min_degree = 0 if kind == GAUSS_LEGENDRE else 1
    if not min_degree <= M <= MAX_DEGREE:
        raise ValueError(f"degree M={M} outside supported range [{min_degree}, {MAX_DEGREE}]")
    if kind == EQUISPACED:
        nodes = np.linspace(0.0, 1.0, M + 1)
    elif kind == GAUSS_LOBATTO:
        x, _ = _gauss_lobatto_unit(M)
        nodes = (x + 1.0) / 2.0
        nodes[0], nodes[-1] = 0.0, 1.0
        #enforce exact symmetry about 1/2
        nodes = (nodes + (1.0 - nodes[::-1])) / 2.0
    else:
        x, _ = np.polynomial.legendre.leggauss(M + 1)
        nodes = (x + 1.0) / 2.0
        nodes = (nodes + (1.0 - nodes[::-1])) / 2.0
    return NodeSet(kind=kind, M=M, nodes=nodes)


def lagrange_eval(nodes: NodeSet, r: int, t) -> float:
    """Value of the r-th Lagrange basis polynomial at t (extrapolation allowed)."""
    if not 0 <= r <= nodes.M:
        raise IndexError(f"basis index {r} outside 0..{nodes.M}")
    return lagrange_basis(nodes, t)[..., r]


def lagrange_basis(nodes: NodeSet, t) -> np.ndarray:
    """All M+1 basis values at t; shape (..., M+1) for array t."""
    x = nodes.nodes
    t = np.asarray(t, dtype=float)
    diff = t[..., None, None] - x[None, :]          # (..., 1, M+1) broadcast target
    diff = np.broadcast_to(diff, t.shape + (x.size, x.size)).copy()
    idx = np.arange(x.size)
    diff[..., idx, idx] = 1.0
    numer = np.prod(diff, axis=-1)                  # prod_{l != r} (t - t_l)
    denom = x[:, None] - x[None, :]
    denom[idx, idx] = 1.0
    return numer / np.prod(denom, axis=-1)


def lagrange_basis_derivative(nodes: NodeSet, t) -> np.ndarray:
    """All M+1 basis derivative values at t; shape (..., M+1)."""
    x = nodes.nodes
    t = np.asarray(t, dtype=float)
    n = x.size
    out = np.zeros(t.shape + (n,))
    for r in range(n):
        denom = np.prod([x[r] - x[l] for l in range(n) if l != r]) if n > 1 else 1.0
        total = np.zeros_like(t)
        for j in range(n):
            if j == r:
                continue
            term = np.ones_like(t)
            for l in range(n):
                if l in (r, j):
                    continue
                term = term * (t - x[l])
            total = total + term
        out[..., r] = total / denom
    return out


def _gl_rule(a: float, b: float, npts: int):
    """Gauss-Legendre rule with npts points on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return (a + b) / 2.0 + (b - a) / 2.0 * x, (b - a) / 2.0 * w


def _integrate_basis(nodes: NodeSet, a: float, b: float, npts: int) -> np.ndarray:
    """Exact integrals int_a^b phi_r for all r (vector of length M+1)."""
    x, w = _gl_rule(a, b, npts)
    return w @ lagrange_basis(nodes, x)


def _default_quad_points(M: int) -> int:
    #exact through degree 2*(M+2)-1 = 2M+3, enough for every product integrand here
    return M + 2


@lru_cache(maxsize=None)
def _dec_coefficients_cached(kind: str, M: int, npts: int) -> DeCCoefficients:
    nodes = make_nodes(kind, M)
    t = nodes.nodes
    n = M + 1
    theta = np.zeros((n, n))
    delta = np.zeros((n, n))
    for m in range(n):
        if t[m] > 0.0:
            theta[m] = _integrate_basis(nodes, 0.0, t[m], npts)
        if m >= 1:
            delta[m] = _integrate_basis(nodes, t[m - 1], t[m], npts)
    gamma = np.concatenate([[0.0], np.diff(t)])
    return DeCCoefficients(nodes=nodes, theta=theta, beta=t.copy(), delta=delta, gamma=gamma)


def dec_coefficients(nodes: NodeSet, quad_points: int | None = None) -> DeCCoefficients:
    """Integrated-basis matrices theta, beta, delta, gamma for a node set.

    quad_points overrides the internal integration rule size (used by the
    refinement-invariance checks); the default is exact for all integrands.
    """
    npts = _default_quad_points(nodes.M) if quad_points is None else quad_points
    return _dec_coefficients_cached(nodes.kind, nodes.M, npts)


def node_quadrature_weights(nodes: NodeSet) -> np.ndarray:
    """Interpolatory quadrature weights collocated at the nodes: w_q = int_0^1 phi_q.

    For Gauss-Lobatto/Gauss-Legendre these are the classical Lobatto/Legendre
    weights; for equispaced nodes they are the closed Newton-Cotes weights.
    """
    return _integrate_basis(nodes, 0.0, 1.0, _default_quad_points(nodes.M))


@lru_cache(maxsize=None)
def _ader_operators_cached(kind: str, M: int, quadrature: str, npts: int) -> ADEROperators:
    nodes = make_nodes(kind, M)
    t = nodes.nodes
    n = M + 1
    phi0 = lagrange_basis(nodes, 0.0)
    phi1 = lagrange_basis(nodes, 1.0)
    b = _integrate_basis(nodes, 0.0, 1.0, npts)

    if quadrature == "nodes":
        #quadrature collocated at the basis nodes: phi_l(x_q) = delta_{lq}
        w = node_quadrature_weights(nodes)
        R = np.diag(w)
        dphi_at_nodes = lagrange_basis_derivative(nodes, t)   # (q, m): phi_m'(t_q)
        mass = np.outer(phi1, phi1) - dphi_at_nodes.T * w[None, :]
    elif quadrature == "exact":
        x, w = _gl_rule(0.0, 1.0, npts)
        phi = lagrange_basis(nodes, x)                        # (q, m)
        dphi = lagrange_basis_derivative(nodes, x)            # (q, m)
        R = (phi * w[:, None]).T @ phi
        mass = np.outer(phi1, phi1) - (dphi * w[:, None]).T @ phi
    else:
        raise ValueError(f"unknown quadrature variant {quadrature!r}; use 'nodes' or 'exact'")

    condition = float(np.linalg.cond(mass))
    if not np.isfinite(condition) or condition > 1e15:
        raise np.linalg.LinAlgError(
            f"mass matrix numerically singular for {kind} M={M} (cond={condition:.3g})"
        )
    Q = np.linalg.solve(mass, R)
    P = Q @ np.ones(n)
    return ADEROperators(
        nodes=nodes, mass=mass, R=R, Q=Q, P=P, b=b, phi0=phi0, phi1=phi1,
        mass_condition=condition, quadrature=quadrature,
    )


def ader_operators(nodes: NodeSet, quadrature: str = "nodes",
                   quad_points: int | None = None) -> ADEROperators:
    """Mass matrix, R, Q = mass^-1 R, P = Q 1, b and endpoint basis values."""
    npts = _default_quad_points(nodes.M) if quad_points is None else quad_points
    return _ader_operators_cached(nodes.kind, nodes.M, quadrature, npts)


def coefficients_dict(nodes: NodeSet) -> dict:
    """All coefficient matrices for a node set, as plain lists (for JSON dumps)."""
    dec = dec_coefficients(nodes)
    ader = ader_operators(nodes)
    return {
        "kind": nodes.kind,
        "M": nodes.M,
        "nodes": nodes.nodes.tolist(),
        "theta": dec.theta.tolist(),
        "beta": dec.beta.tolist(),
        "delta": dec.delta.tolist(),
        "massM": ader.mass.tolist(),
        "R": ader.R.tolist(),
        "Q": ader.Q.tolist(),
        "P": ader.P.tolist(),
        "b": ader.b.tolist(),
    }
