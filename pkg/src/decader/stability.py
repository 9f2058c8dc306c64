"""Linear stability machinery for scalar and IMEX Runge-Kutta tableaux.

The scalar stability function of a tableau (A, b) is

    R(z) = 1 + z b^T (I - z A)^{-1} 1,

and the IMEX pair (A, b; Ahat, bhat) on u' = lambda_I u + lambda_E u gives

    R(zI, zE) = 1 + (zI b + zE bhat)^T (I - zI A - zE Ahat)^{-1} 1.

``StabilityFunction`` evaluates these in batch over arbitrary point sets by
forward substitution over the block lower-triangular structure of the stage
matrix (scalar recurrences for diagonally implicit methods, small batched
block solves for the block-implicit ADER form), which keeps full-region scans
at paper resolution in the seconds range.

On top of that sit the four region notions used for the IMEX analysis:

* plain |R| grids over a complex window (``scan_region``),
* the wedge region over real implicit / imaginary explicit spectra with its
  measured half-angle (``minion_region``),
* the region of explicit eigenvalues stable against every implicit eigenvalue
  in the left half-plane (``d0_region``),
* the region of implicit eigenvalues stable against the whole explicit-Euler
  disk (``d1_region``),

plus the diagnostic identities: Pade form of the single-block implicit ADER
stability function and the zero determinant of Q - 1 b^T.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import atan2, degrees, factorial, floor

import numpy as np

from .nodes import ADEROperators
from .tableaux import ButcherTableau, IMEXTableau, ader_iwf_tableau, block_partition

#round-off allowance when classifying |R| <= 1 on iterated region tests
STABLE_TOL = 1e-12


class StabilityFunction:
    """Vectorized evaluator of R(zI, zE) for a tableau or IMEX pair.

    A plain tableau is treated as the implicit slot (pass zE=0); evaluation
    broadcasts its two arguments and returns complex values with resolvent
    poles mapped to +inf.
    """

    def __init__(self, t: ButcherTableau | IMEXTableau):
        if isinstance(t, IMEXTableau):
            self.A = t.implicit.A
            self.Ahat = t.explicit.A
            self.b = t.implicit.b
            self.bhat = t.explicit.b
        else:
            self.A = t.A
            self.Ahat = np.zeros_like(t.A)
            self.b = t.b
            self.bhat = np.zeros_like(t.b)
        self.Z = self.A.shape[0]
        self.blocks = block_partition(self.A, self.Ahat)
        #identical diagonal blocks (ADER repeats one) share their inverses
        sig = {}
        self.block_group = []
        for (s, e) in self.blocks:
            key = (self.A[s:e, s:e].tobytes(), self.Ahat[s:e, s:e].tobytes())
            self.block_group.append(sig.setdefault(key, len(sig)))

    def __call__(self, zI, zE):
        zI = np.asarray(zI, dtype=complex)
        zE = np.asarray(zE, dtype=complex)
        zI, zE = np.broadcast_arrays(zI, zE)
        shape = zI.shape
        zi = zI.reshape(-1)
        ze = zE.reshape(-1)
        B = zi.size
        X = np.zeros((B, self.Z), dtype=complex)
        inv_cache: dict[int, np.ndarray] = {}
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            for bi, (s, e) in enumerate(self.blocks):
                nb = e - s
                rhs = np.ones((B, nb), dtype=complex)
                if s > 0:
                    Asub = self.A[s:e, :s]
                    if Asub.any():
                        rhs += zi[:, None] * (X[:, :s] @ Asub.T)
                    Ahsub = self.Ahat[s:e, :s]
                    if Ahsub.any():
                        rhs += ze[:, None] * (X[:, :s] @ Ahsub.T)
                if nb == 1:
                    denom = 1.0 - zi * self.A[s, s] - ze * self.Ahat[s, s]
                    X[:, s] = rhs[:, 0] / denom
                else:
                    gid = self.block_group[bi]
                    if gid not in inv_cache:
                        mats = (np.eye(nb)[None, :, :]
                                - zi[:, None, None] * self.A[s:e, s:e]
                                - ze[:, None, None] * self.Ahat[s:e, s:e])
                        inv_cache[gid] = _robust_inv(mats)
                    X[:, s:e] = np.einsum("bij,bj->bi", inv_cache[gid], rhs)
            g = 1.0 + zi * (X @ self.b) + ze * (X @ self.bhat)
        g = np.where(np.isfinite(g), g, complex(np.inf)).reshape(shape)
        return g[()] if g.ndim == 0 else g


def _robust_inv(mats: np.ndarray) -> np.ndarray:
    """Batched inverse; exactly singular members become all-inf blocks."""
    try:
        return np.linalg.inv(mats)
    except np.linalg.LinAlgError:
        out = np.empty_like(mats)
        for i in range(mats.shape[0]):
            try:
                out[i] = np.linalg.inv(mats[i])
            except np.linalg.LinAlgError:
                out[i] = np.inf
        return out


def stability_value(t: ButcherTableau, z):
    """R(z) for a scalar tableau; resolvent poles map to +inf."""
    return StabilityFunction(t)(z, np.zeros_like(np.asarray(z, dtype=complex)))


def imex_stability_value(t: IMEXTableau, zI, zE):
    """R(zI, zE) for an IMEX pair; reduces to each part when the other arg is 0."""
    return StabilityFunction(t)(zI, zE)


@dataclass(frozen=True)
class StabilityGrid:
    """|R| sampled on a rectangular complex grid with a fixed axis offset."""

    re: np.ndarray
    im: np.ndarray
    values: np.ndarray        # shape (len(im), len(re))
    offset: float
    tol: float = 0.0

    @property
    def stable(self) -> np.ndarray:
        return self.values <= 1.0 + self.tol


def _axis(lo: float, hi: float, resolution: int, offset: float) -> np.ndarray:
    if resolution < 2:
        raise ValueError("resolution must be >= 2 per axis")
    return np.linspace(lo, hi, resolution) + offset


def scan_region(evaluator, bounds, resolution: int = 200, offset: float = 0.01,
                tol: float = 0.0) -> StabilityGrid:
    """|R| over the complex window bounds = (re_min, re_max, im_min, im_max).

    ``evaluator`` is a tableau or a vectorized callable z -> R(z); both axes
    are shifted by +offset to keep the grid off the origin.
    """
    if isinstance(evaluator, (ButcherTableau, IMEXTableau)):
        fn = StabilityFunction(evaluator)
        evaluator = lambda z: fn(z, np.zeros_like(z))
    re_min, re_max, im_min, im_max = bounds
    re = _axis(re_min, re_max, resolution, offset)
    im = _axis(im_min, im_max, resolution, offset)
    zz = re[None, :] + 1j * im[:, None]
    values = np.abs(evaluator(zz.reshape(-1))).reshape(zz.shape)
    return StabilityGrid(re=re, im=im, values=values, offset=offset, tol=tol)


def negative_real_axis_border(t, xmax: float, n: int = 4000) -> float:
    """Largest |z| on the negative real axis below which |R| stays <= 1.

    Scans z = -x for x on a uniform grid in (0, xmax]; returns xmax when the
    whole segment is stable.
    """
    fn = StabilityFunction(t)
    x = np.linspace(0.0, xmax, n + 1)[1:]
    vals = np.abs(fn(-x, np.zeros_like(x)))
    bad = np.nonzero(vals > 1.0 + STABLE_TOL)[0]
    if bad.size == 0:
        return float(xmax)
    return float(x[bad[0]])


def minion_region(t: IMEXTableau, real_range=(-50.0, 0.0), imag_range=(0.0, 50.0),
                  resolution: int = 200, offset: float = 0.01):
    """Wedge-style region: implicit spectrum real, explicit purely imaginary.

    Returns (grid, alpha) where alpha is the measured half-angle in whole
    degrees: the largest angle such that every scanned point (zI < 0, zE')
    with atan2(|zE'|, -zI) below it is stable (90 when nothing is unstable).

    The wedge of these methods narrows with distance from the origin (the
    implicit parts are not A-stable), so alpha depends on the window; the
    default square covers the regime the reference angles were read from.
    """
    fn = StabilityFunction(t)
    re = _axis(real_range[0], real_range[1], resolution, offset)
    im = _axis(imag_range[0], imag_range[1], resolution, offset)
    zi = np.broadcast_to(re[None, :], (im.size, re.size)).reshape(-1)
    ze = np.broadcast_to(1j * im[:, None], (im.size, re.size)).reshape(-1)
    values = np.abs(fn(zi, ze)).reshape(im.size, re.size)
    grid = StabilityGrid(re=re, im=im, values=values, offset=offset, tol=STABLE_TOL)

    unstable = ~grid.stable
    neg = re < 0.0
    alpha = 90.0
    if np.any(unstable[:, neg]):
        ii, jj = np.nonzero(unstable[:, neg])
        angles = np.degrees(np.arctan2(np.abs(im[ii]), -re[neg][jj]))
        alpha = min(alpha, float(np.min(angles)))
    return grid, int(floor(alpha))


def d0_samples() -> np.ndarray:
    """Deterministic sample of the closed left half-plane for the D0 test:
    40 log-spaced magnitudes x 36 arguments from 90 to 270 degrees (the
    imaginary axis included; that is where barely-unstable implicit parts
    violate |R| <= 1) plus the negative real axis.
    """
    mags = np.logspace(-2, 6, 40)
    args = np.deg2rad(np.linspace(90.0, 270.0, 36))
    pts = (mags[:, None] * np.exp(1j * args)[None, :]).reshape(-1)
    return np.concatenate([pts, -mags])


def s0_samples(n_radii: int = 16, n_angles: int = 64) -> np.ndarray:
    """Samples of the closed explicit-Euler disk |1 + zE| <= 1 (center included)."""
    radii = np.linspace(0.0, 1.0, n_radii + 1)[1:]
    angles = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    pts = -1.0 + radii[:, None] * np.exp(1j * angles)[None, :]
    return np.concatenate([pts.reshape(-1), [-1.0 + 0.0j]])


def _survivor_region(fn: StabilityFunction, grid_points: np.ndarray,
                     samples: np.ndarray, grid_is_explicit: bool) -> np.ndarray:
    """max |R| over samples per grid point, with early exit once a point fails."""
    flat = grid_points.reshape(-1)
    worst = np.zeros(flat.size)
    alive = np.ones(flat.size, dtype=bool)
    for s in samples:
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        if grid_is_explicit:
            g = np.abs(fn(np.full(idx.size, s), flat[idx]))
        else:
            g = np.abs(fn(flat[idx], np.full(idx.size, s)))
        worst[idx] = np.maximum(worst[idx], g)
        alive[idx] = g <= 1.0 + STABLE_TOL
    return worst.reshape(grid_points.shape)


def d0_region(t: IMEXTableau, bounds=(-5.0, 1.0, -4.0, 4.0), resolution: int = 200,
              offset: float = 0.01, samples: np.ndarray | None = None,
              require_implicit_a_stable: bool = True) -> StabilityGrid:
    """Explicit eigenvalues stable for every sampled implicit one in C^-.

    The mask marks zE values for which no sampled zI violates |R| <= 1; a
    single violation removes the point (and stops further sampling there, so
    stored values are exact maxima only for surviving points).

    By default each point must also survive the zE -> 0 closure of the test:
    a periodic semi-discretization always contains the constant Fourier mode,
    whose explicit eigenvalue is 0, so membership is only meaningful when the
    implicit part alone tolerates the whole sampled left half-plane. When it
    does not, the worst implicit |R| is folded into every grid value and the
    region comes out empty. Pass require_implicit_a_stable=False for the raw
    per-point survivor mask (isolated pockets where the explicit eigenvalue
    damps an implicit instability).
    """
    if samples is None:
        samples = d0_samples()
    fn = StabilityFunction(t)
    re = _axis(bounds[0], bounds[1], resolution, offset)
    im = _axis(bounds[2], bounds[3], resolution, offset)
    zz = re[None, :] + 1j * im[:, None]
    values = _survivor_region(fn, zz, samples, grid_is_explicit=True)
    if require_implicit_a_stable:
        worst = np.abs(fn(samples, np.zeros(samples.size))).max()
        if worst > 1.0 + STABLE_TOL:
            values = np.maximum(values, worst)
    return StabilityGrid(re=re, im=im, values=values, offset=offset, tol=STABLE_TOL)


def d1_region(t: IMEXTableau, bounds=(-20.0, 2.0, -15.0, 15.0), resolution: int = 200,
              offset: float = 0.01, samples: np.ndarray | None = None) -> StabilityGrid:
    """Implicit eigenvalues stable for the whole sampled explicit-Euler disk."""
    if samples is None:
        samples = s0_samples()
    fn = StabilityFunction(t)
    re = _axis(bounds[0], bounds[1], resolution, offset)
    im = _axis(bounds[2], bounds[3], resolution, offset)
    zz = re[None, :] + 1j * im[:, None]
    values = _survivor_region(fn, zz, samples, grid_is_explicit=False)
    return StabilityGrid(re=re, im=im, values=values, offset=offset, tol=STABLE_TOL)


@dataclass(frozen=True)
class RationalFit:
    """R(z) = num(z)/den(z), coefficients in ascending powers, den[0] = 1."""

    num: np.ndarray
    den: np.ndarray

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        n = np.polyval(self.num[::-1], z)
        d = np.polyval(self.den[::-1], z)
        return n / d


def pade_coefficients(k: int, j: int) -> RationalFit:
    """Pade(k, j) approximation of exp(z): numerator degree k, denominator j."""
    if k < 0 or j < 0:
        raise ValueError("degrees must be nonnegative")
    num = np.array([factorial(k) * factorial(k + j - i)
                    / (factorial(k + j) * factorial(i) * factorial(k - i))
                    for i in range(k + 1)])
    den = np.array([factorial(j) * factorial(k + j - i)
                    / (factorial(k + j) * factorial(i) * factorial(j - i)) * (-1) ** i
                    for i in range(j + 1)])
    return RationalFit(num=num / den[0], den=den / den[0])


def pade_check(t: ButcherTableau, k: int, j: int, n_samples: int = 100,
               radius: float = 5.0, seed: int = 2023) -> float:
    """Max relative deviation of R(z) from Pade(k, j) at random points.

    Points come from a fixed-seed uniform draw on |z| <= radius; near-pole
    points (tiny Pade denominator or non-finite R) are excluded.
    """
    fit = pade_coefficients(k, j)
    rng = np.random.default_rng(seed)
    z = (rng.uniform(-radius, radius, n_samples)
         + 1j * rng.uniform(-radius, radius, n_samples))
    z = z[np.abs(z) <= radius]
    r = stability_value(t, z)
    p = fit(z)
    den = np.abs(np.polyval(fit.den[::-1], z))
    ok = np.isfinite(r) & (den > 1e-6) & (np.abs(p) > 1e-12)
    return float(np.max(np.abs(r[ok] - p[ok]) / np.abs(p[ok])))


def zero_det_check(ops: ADEROperators) -> float:
    """Scaled magnitude of det(Q - 1 b^T); near zero iff the matrix is singular.

    Returns the product of singular values at or below 1e-8 * sigma_max (the
    numerically-zero part of the determinant); if none fall below, returns
    sigma_min / sigma_max, which is O(1) for a well-conditioned matrix.
    """
    m = ops.Q - np.outer(np.ones(ops.Q.shape[0]), ops.b)
    s = np.linalg.svd(m, compute_uv=False)
    small = s <= 1e-8 * s[0]
    if not np.any(small):
        return float(s[-1] / s[0])
    return float(np.prod(s[small]))


def ader_iwf_stability(ops: ADEROperators) -> ButcherTableau:
    """Single-block implicit ADER tableau (A = Q, b); scalar R(z) carrier."""
    return ader_iwf_tableau(ops)


def stability_agreement(t1, t2, n: int = 64, radius: float = 10.0,
                        seed: int = 7) -> float:
    """Max relative difference of the (IMEX) stability functions at random points."""
    rng = np.random.default_rng(seed)
    z1 = (rng.uniform(-radius, radius, n) + 1j * rng.uniform(-radius, radius, n))
    z2 = (rng.uniform(-radius, radius, n) + 1j * rng.uniform(-radius, radius, n))
    f1, f2 = StabilityFunction(t1), StabilityFunction(t2)
    imex = isinstance(t1, IMEXTableau)
    a = f1(z1, z2) if imex else f1(z1, np.zeros_like(z1))
    b = f2(z1, z2) if imex else f2(z1, np.zeros_like(z1))
    ok = np.isfinite(a) & np.isfinite(b)
    scale = np.maximum(1.0, np.abs(a[ok]))
    return float(np.max(np.abs(a[ok] - b[ok]) / scale))
