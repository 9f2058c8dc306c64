"""Finite-difference stencils on uniform periodic grids and their symbols.

Three families are provided, all for use as right-hand-side operators of the
semi-discretized PDEs:

* optimal first-derivative stencils on offsets {-r..s} of order q = r + s
  (one or two extra upwind points for odd/even target order),
* symmetric central second-derivative stencils of order q in {2, 4, 6, 8},
* upwind-biased third-derivative stencils of order q in {3, 5, 7} on offsets
  {-r..r+1}.

Every stencil is generated by solving the moment conditions

    sum_k alpha_k k^m / m! = 1 if m == d else 0,   m = 0 .. q+d-1,

as a square Vandermonde system; the closed-form coefficient formula for the
first-derivative family is kept as an independent cross-check.  The Fourier
symbol sigma(theta) = sum_k alpha_k exp(i k theta) feeds the von Neumann
analysis; coefficients divide Delta x^d.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np


@dataclass(frozen=True)
class Stencil:
    """Finite-difference weights for the d-th derivative, dividing Delta x^d."""

    d: int
    q: int
    offsets: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.offsets, dtype=int)
        coef = np.asarray(self.coefficients, dtype=float)
        if off.shape != coef.shape:
            raise ValueError("offsets and coefficients must have equal length")
        if np.any(np.diff(off) != 1):
            raise ValueError("offsets must be contiguous and sorted")
        off.flags.writeable = False
        coef.flags.writeable = False
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "coefficients", coef)

    def moment(self, m: int) -> float:
        """sum_k alpha_k k^m / m! (equals 1 at m = d, 0 for other m < q+d)."""
        k = self.offsets.astype(float)
        return float(np.sum(self.coefficients * k**m) / factorial(m))


def _moment_solve(offsets: np.ndarray, d: int, n_conditions: int) -> np.ndarray:
    """Solve sum_k alpha_k k^m/m! = delta_{m,d} for m = 0..n_conditions-1."""
    k = np.asarray(offsets, dtype=float)
    m = np.arange(n_conditions)
    vander = k[None, :] ** m[:, None] / np.array([factorial(i) for i in m], dtype=float)[:, None]
    rhs = np.zeros(n_conditions)
    rhs[d] = 1.0
    return np.linalg.solve(vander, rhs)


@lru_cache(maxsize=None)
def advection_stencil(r: int, s: int) -> Stencil:
    """Optimal-order first-derivative stencil on offsets {-r..s}, order q = r+s."""
    if r < 0 or s < 0 or r + s < 1:
        raise ValueError("need r >= 0, s >= 0 and r + s >= 1")
    q = r + s
    offsets = np.arange(-r, s + 1)
    coefficients = _moment_solve(offsets, d=1, n_conditions=q + 1)
    return Stencil(d=1, q=q, offsets=offsets, coefficients=coefficients)


def advection_closed_form(r: int, s: int) -> np.ndarray:
    """Closed-form coefficients of the optimal {-r..s} stencil (cross-check).

    alpha_k = (-1)^(k+1)/k * r! s! / ((r+k)! (s-k)!) for k != 0; alpha_0 makes
    the weights sum to zero: +sum_{k=s+1}^{r} 1/k when r > s, -sum_{k=r+1}^{s} 1/k
    when s > r, 0 when r = s.
    """
    coef = []
    for k in range(-r, s + 1):
        if k == 0:
            if r > s:
                coef.append(sum(Fraction(1, j) for j in range(s + 1, r + 1)))
            elif s > r:
                coef.append(-sum(Fraction(1, j) for j in range(r + 1, s + 1)))
            else:
                coef.append(Fraction(0))
        else:
            sign = 1 if (k + 1) % 2 == 0 else -1
            coef.append(Fraction(sign, k)
                        * Fraction(factorial(r) * factorial(s),
                                   factorial(r + k) * factorial(s - k)))
    return np.array([float(c) for c in coef])


@lru_cache(maxsize=None)
def advection_stencil_for_order(q: int) -> Stencil:
    """Upwind-dissipative first-derivative stencil of order q for a > 0.

    Odd q uses (r, s) = (s+1, s), even q uses (s+2, s); both satisfy the
    stability window s <= r <= s+2 and have Re sigma(theta) >= 0.
    """
    if q < 1:
        raise ValueError("order must be >= 1")
    if q % 2:
        s = (q - 1) // 2
        r = s + 1
    else:
        s = (q - 2) // 2
        r = s + 2
    return advection_stencil(r, s)


@lru_cache(maxsize=None)
def diffusion_stencil(q: int) -> Stencil:
    """Symmetric central second-derivative stencil of order q in {2, 4, 6, 8}."""
    if q not in (2, 4, 6, 8):
        raise ValueError("diffusion stencil order must be one of 2, 4, 6, 8")
    half = q // 2
    offsets = np.arange(-half, half + 1)
    #the symmetric solution of m = 0..q also satisfies the odd moment m = q+1
    coefficients = _moment_solve(offsets, d=2, n_conditions=q + 1)
    return Stencil(d=2, q=q, offsets=offsets, coefficients=coefficients)


@lru_cache(maxsize=None)
def dispersion_stencil(q: int) -> Stencil:
    """Upwind-biased third-derivative stencil of order q in {3, 5, 7}.

    Lives on offsets {-r..r+1} with r = 2, 3, 4; the 2r+2 points support
    maximal order q = 2r-1 for the third derivative.
    """
    if q not in (3, 5, 7):
        raise ValueError("dispersion stencil order must be one of 3, 5, 7")
    r = (q + 1) // 2
    offsets = np.arange(-r, r + 2)
    coefficients = _moment_solve(offsets, d=3, n_conditions=q + 3)
    return Stencil(d=3, q=q, offsets=offsets, coefficients=coefficients)


def symbol_eval(st: Stencil, theta) -> complex:
    """Fourier symbol sigma(theta) = sum_k alpha_k exp(i k theta)."""
    theta = np.asarray(theta, dtype=float)
    return np.exp(1j * np.multiply.outer(theta, st.offsets)) @ st.coefficients


def stencil_dict(st: Stencil) -> dict:
    """Stencil as a JSON-ready dict; small-integer rationals included when exact."""
    out = {
        "d": st.d,
        "q": st.q,
        "offsets": st.offsets.tolist(),
        "coefficients": st.coefficients.tolist(),
    }
    rationals = []
    for x in st.coefficients:
        frac = Fraction(x).limit_denominator(10**6)
        if abs(float(frac) - x) <= 1e-12 * max(1.0, abs(x)):
            rationals.append([frac.numerator, frac.denominator])
        else:
            rationals = None
            break
    if rationals is not None:
        out["rationals"] = rationals
    return out
