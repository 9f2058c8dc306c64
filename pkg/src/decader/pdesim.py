"""Periodic finite-difference semidiscretizations of advection-diffusion and
advection-dispersion, time-stepped with the tableau integrators.

The domain is [0, 2*pi) with J cells; spatial operators are circulant
applications of the stencil families (advection scaled by -a/dx, diffusion by
d/dx^2, dispersion by -beta/dx^3), so the operator spectra are the stencil
symbols evaluated at the resolvable angles theta_k = 2*pi*k/J.  Runs are
parameterized the same way as the fully discrete stability scans: dt = C*dx/a
and, when requested, the diffusion coefficient is derived from the ratio
E = C^2/D (d = a^2*dt/E) respectively the dispersion coefficient from
E_P = C/P (beta = a*dx^2/E_P).

Operators are stored as offset/coefficient pairs and applied by periodic
index shifts; implicit stage systems factor a dense LU once per step size
(reused across steps through the integrator cache).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .integrators import solve_ivp
from .stencils import (Stencil, advection_stencil_for_order, diffusion_stencil,
                       dispersion_stencil)
from .tableaux import IMEX, MethodSpec, build_tableau

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicProblem:
    """Advection plus one implicit operator on the periodic unit circle.

    Exactly one of d (diffusion) and beta (dispersion) may be set; leaving
    both unset means a vanishing implicit part.  ``exact`` maps
    (t, x, coefficient) to the reference solution, taking the implicit
    coefficient as an argument because the convergence experiment derives it
    from the step size.
    """

    J: int
    a: float = 1.0
    d: float | None = None
    beta: float | None = None
    initial: Callable = np.sin
    exact: Callable | None = None

    def __post_init__(self):
        if self.J < 4:
            raise ValueError("J must be at least 4")
        if self.d is not None and self.beta is not None:
            raise ValueError("set at most one of d and beta")

    @property
    def dx(self) -> float:
        return TWO_PI / self.J

    @property
    def dispersive(self) -> bool:
        return self.beta is not None

    def grid(self) -> np.ndarray:
        return self.dx * np.arange(self.J)

    def initial_state(self) -> np.ndarray:
        return np.asarray(self.initial(self.grid()), dtype=float)


def sine_diffusion_problem(J: int, a: float = 1.0, d: float | None = None) -> PeriodicProblem:
    """sin(x) initial data advected and damped: u = exp(-d t) sin(x - a t)."""
    def exact(t, x, coeff):
        return np.exp(-coeff * t) * np.sin(x - a * t)
    return PeriodicProblem(J=J, a=a, d=d, initial=np.sin, exact=exact)


def sine_dispersion_problem(J: int, a: float = 1.0, beta: float | None = None) -> PeriodicProblem:
    """sin(x) under advection-dispersion: the wavenumber-one mode only picks
    up a phase shift, u = sin(x - (a - beta) t)."""
    def exact(t, x, coeff):
        return np.sin(x - (a - coeff) * t)
    return PeriodicProblem(J=J, a=a, beta=beta, initial=np.sin, exact=exact)


@dataclass(frozen=True)
class SemiDiscretization:
    """Circulant split operators: explicit advection, implicit diffusion or
    dispersion, stored as offset/coefficient pairs (coefficients include the
    physical scalings)."""

    J: int
    explicit_offsets: np.ndarray
    explicit_coefficients: np.ndarray
    implicit_offsets: np.ndarray
    implicit_coefficients: np.ndarray

    def _apply(self, offsets, coeffs, u):
        out = np.zeros(u.shape, dtype=np.result_type(u, coeffs))
        for off, c in zip(offsets, coeffs):
            out += c * np.roll(u, -int(off))
        return out

    def apply_explicit(self, u: np.ndarray) -> np.ndarray:
        return self._apply(self.explicit_offsets, self.explicit_coefficients, u)

    def apply_implicit(self, u: np.ndarray) -> np.ndarray:
        return self._apply(self.implicit_offsets, self.implicit_coefficients, u)

    def _first_row(self, offsets, coeffs) -> np.ndarray:
        row = np.zeros(self.J)
        for off, c in zip(offsets, coeffs):
            row[int(off) % self.J] += c
        return row

    def _dense(self, offsets, coeffs) -> np.ndarray:
        j = np.arange(self.J)
        m = np.zeros((self.J, self.J))
        for off, c in zip(offsets, coeffs):
            m[j, (j + int(off)) % self.J] += c
        return m

    def explicit_dense(self) -> np.ndarray:
        return self._dense(self.explicit_offsets, self.explicit_coefficients)

    def implicit_dense(self) -> np.ndarray:
        return self._dense(self.implicit_offsets, self.implicit_coefficients)

    def eigenvalues(self, part: str = "implicit") -> np.ndarray:
        """Circulant spectrum: Sum_m c_m exp(i theta_k m), theta_k = 2 pi k/J."""
        th = TWO_PI * np.arange(self.J) / self.J
        if part == "explicit":
            off, co = self.explicit_offsets, self.explicit_coefficients
        elif part == "implicit":
            off, co = self.implicit_offsets, self.implicit_coefficients
        else:
            raise ValueError("part must be 'explicit' or 'implicit'")
        return np.exp(1j * np.outer(th, off)) @ co


def semidiscretize(problem: PeriodicProblem, adv: Stencil, op: Stencil) -> SemiDiscretization:
    """Scale the stencils into the split circulant right-hand side."""
    if adv.d != 1:
        raise ValueError("advection stencil must differentiate once")
    expected = 3 if problem.dispersive else 2
    if op.d != expected:
        raise ValueError(f"implicit stencil must have derivative order {expected}")
    for st in (adv, op):
        if st.offsets.size >= problem.J:
            raise ValueError("stencil wider than the grid")
    dx = problem.dx
    e_co = (-problem.a / dx) * adv.coefficients
    if problem.dispersive:
        i_co = (-problem.beta / dx ** 3) * op.coefficients
    else:
        d = 0.0 if problem.d is None else problem.d
        i_co = (d / dx ** 2) * op.coefficients
    return SemiDiscretization(J=problem.J,
                              explicit_offsets=adv.offsets.copy(),
                              explicit_coefficients=e_co,
                              implicit_offsets=op.offsets.copy(),
                              implicit_coefficients=i_co)


class SemidiscreteODE:
    """Adapter exposing the circulant split system to the time steppers."""

    constant_jacobian = True

    def __init__(self, sd: SemiDiscretization, u0):
        self.sd = sd
        self.u0 = np.asarray(u0, dtype=float).copy()
        if self.u0.shape != (sd.J,):
            raise ValueError("initial state must have one value per cell")
        self.dimension = sd.J
        self._jac = None

    def stiff(self, u):
        return self.sd.apply_implicit(u)

    def explicit(self, u):
        return self.sd.apply_explicit(u)

    def stiff_jacobian(self, u):
        if self._jac is None:
            self._jac = self.sd.implicit_dense()
        return self._jac


@dataclass(frozen=True)
class RunResult:
    """One configured PDE run: setup echo, final state and error measures."""

    method: str
    J: int
    dt: float
    coefficient: float
    t_end: float
    final: np.ndarray
    error: float
    max_norm: float
    step_growth: float
    stable: bool


def _l2(u: np.ndarray, dx: float) -> float:
    return float(np.sqrt(dx * np.sum(np.abs(u) ** 2)))


def _default_op_order(order: int, dispersive: bool) -> int:
    if dispersive:
        return min(7, order | 1)
    return 2 * ((order + 1) // 2)


def run_single(method, problem: PeriodicProblem, C: float, E: float | None = None,
               E_P: float | None = None, t_end: float = 1.0,
               adv_order: int | None = None, op_order: int | None = None,
               dt: float | None = None, quadrature: str = "nodes") -> RunResult:
    """Run one advection-diffusion/-dispersion configuration to t_end.

    dt = C*dx/a unless given explicitly (needed when a = 0).  The implicit
    coefficient comes from the problem when set, else is derived from E
    (d = a^2*dt/E) or E_P (beta = a*dx^2/E_P).  Instability is reported via
    the stable flag (growth beyond 1e3 in the discrete L2 norm), not raised.
    """
    if isinstance(method, MethodSpec):
        spec = method
        tableau = build_tableau(spec, quadrature=quadrature)
        label = spec.label()
        order = spec.order
    else:
        tableau = method
        label = getattr(method, "structure", method.__class__.__name__)
        order = None
    if dt is None:
        if problem.a == 0:
            raise ValueError("dt must be given explicitly when a = 0")
        dt = C * problem.dx / problem.a
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")

    dispersive = problem.dispersive or E_P is not None
    if dispersive:
        beta = problem.beta if problem.beta is not None else problem.a * problem.dx ** 2 / E_P
        prob = replace(problem, d=None, beta=beta)
        coeff = beta
    else:
        d = problem.d if problem.d is not None else problem.a ** 2 * dt / E
        prob = replace(problem, d=d, beta=None)
        coeff = d

    if adv_order is None:
        adv_order = order if order is not None else 2
    if op_order is None:
        op_order = _default_op_order(order if order is not None else 2, dispersive)
    adv = advection_stencil_for_order(adv_order)
    op = dispersion_stencil(op_order) if dispersive else diffusion_stencil(op_order)
    sd = semidiscretize(prob, adv, op)
    ode = SemidiscreteODE(sd, prob.initial_state())

    traj = solve_ivp(tableau, ode, t_end, dt)
    dx = prob.dx
    norms = np.array([_l2(s, dx) for s in traj.states])
    max_norm = float(norms.max())
    n0 = norms[0] if norms[0] > 0 else 1.0
    steps = len(norms) - 1
    growth = float((norms[-1] / n0) ** (1.0 / steps)) if steps else 1.0

    if prob.exact is not None:
        ref = np.asarray(prob.exact(t_end, prob.grid(), coeff), dtype=float)
        error = _l2(traj.final - ref, dx)
    else:
        error = float("nan")
    blown = not np.isfinite(max_norm) or max_norm > 1e3 * max(n0, 1.0) or \
        (np.isfinite(error) and error > 1e3)
    return RunResult(method=label, J=prob.J, dt=dt, coefficient=coeff,
                     t_end=t_end, final=traj.final, error=error,
                     max_norm=max_norm, step_growth=growth, stable=not blown)


@dataclass(frozen=True)
class ConvergenceTable:
    """Discrete L2 errors on a mesh sequence, one column per method order."""

    family: str
    kind: str
    orders: tuple
    j_values: tuple
    errors: np.ndarray
    stable: np.ndarray
    metadata: dict

    def observed_order(self, order: int) -> float:
        """Least-squares slope of log error against log J for one column."""
        col = self.errors[:, self.orders.index(order)]
        good = np.isfinite(col) & (col > 0)
        if good.sum() < 2:
            return float("nan")
        slope = np.polyfit(np.log(np.array(self.j_values)[good]), np.log(col[good]), 1)[0]
        return float(-slope)

    def interval_orders(self, order: int) -> np.ndarray:
        col = self.errors[:, self.orders.index(order)]
        jr = np.array(self.j_values, dtype=float)
        return np.log(col[:-1] / col[1:]) / np.log(jr[1:] / jr[:-1])


def run_convergence(family: str, kind: str = "gauss-lobatto",
                    orders=(2, 3, 4, 5), j_values=(32, 64, 128, 256, 512),
                    C: float = 0.4, E: float = 0.5, t_end: float = 1.0,
                    a: float = 1.0, quadrature: str = "nodes") -> ConvergenceTable:
    """Mesh-refinement study on the sine advection-diffusion problem.

    dt = C*dx/a and d = a^2*dt/E per run, so the diffusion coefficient
    shrinks with the mesh; the exact solution exp(-d t) sin(x - a t) is
    evaluated with the matching d.  Advection stencil order matches the
    method order, diffusion stencil order is the next even number.  The full
    mesh range of the reference experiment extends to J = 2^11; the default
    stops at 2^9 to keep runtimes moderate.
    """
    errs = np.full((len(j_values), len(orders)), np.nan)
    stab = np.zeros((len(j_values), len(orders)), dtype=bool)
    for col, order in enumerate(orders):
        spec = MethodSpec(family=family, kind=kind, order=order, mode=IMEX)
        for row, J in enumerate(j_values):
            problem = sine_diffusion_problem(J, a=a)
            res = run_single(spec, problem, C=C, E=E, t_end=t_end,
                             quadrature=quadrature)
            errs[row, col] = res.error
            stab[row, col] = res.stable
    meta = {"family": family, "kind": kind, "C": C, "E": E, "t_end": t_end,
            "a": a, "norm": "discrete-L2", "quadrature": quadrature}
    return ConvergenceTable(family=family, kind=kind, orders=tuple(orders),
                            j_values=tuple(j_values), errors=errs,
                            stable=stab, metadata=meta)


def write_convergence_csv(table: ConvergenceTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N"] + [f"order{p}" for p in table.orders])
        for i, J in enumerate(table.j_values):
            w.writerow([J] + [f"{e:.17g}" for e in table.errors[i]])
