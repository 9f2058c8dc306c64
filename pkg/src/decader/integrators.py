"""ODE time stepping for the generated methods.

Two interchangeable execution paths are provided and used as mutual oracles:

* ``rk_step`` runs any generated tableau as a plain (IMEX) Runge-Kutta
  method, with dense direct solves for implicit stages -- sequential scalar
  solves for diagonally implicit rows, one coupled solve per repeated
  node-block for the block-implicit form;
* ``dec_iterate`` / ``ader_iterate`` run the iterative corrector form the
  tableaux were derived from (constant initial guess, K correction sweeps).

On linear problems the two paths agree to round-off.  Nonlinear stiff parts
are handled by the documented linearization: an implicit stage never iterates
internally, it solves one linear system with the stiff Jacobian evaluated at
the step start.  That treatment is exact for linear stiff parts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .nodes import ADEROperators, DeCCoefficients
from .tableaux import (ADER, DEC, EXPLICIT, IMEX, IMPLICIT, SDEC, ButcherTableau,
                       IMEXTableau, MethodSpec, block_partition, build_tableau)


def _as_state(u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.ndim != 1:
        raise ValueError("state must be one-dimensional")
    return u


class SplitLinearODE:
    """u' = S u + G u with constant matrices: stiff part S, explicit part G."""

    def __init__(self, S, G, u0):
        self.S = np.atleast_2d(np.asarray(S, dtype=float))
        self.G = np.atleast_2d(np.asarray(G, dtype=float))
        self.u0 = _as_state(u0)
        n = self.u0.size
        if self.S.shape != (n, n) or self.G.shape != (n, n):
            raise ValueError("S and G must be square matrices matching u0")
        self.dimension = n

    def stiff(self, u):
        return self.S @ u

    def stiff_jacobian(self, u):
        return self.S

    def explicit(self, u):
        return self.G @ u


class LinearizedODE:
    """u' = S(u) + G(u) with a user-supplied stiff Jacobian for linearization.

    The Jacobian evaluator is validated against central finite differences of
    the stiff map at u0 (relative 1e-5) when the problem is constructed.
    """

    def __init__(self, stiff, stiff_jacobian, u0, explicit=None):
        self.u0 = _as_state(u0)
        self.dimension = self.u0.size
        self._stiff = stiff
        self._jac = stiff_jacobian
        self._explicit = explicit
        jac = np.atleast_2d(np.asarray(stiff_jacobian(self.u0), dtype=float))
        fd = np.empty_like(jac)
        for i in range(self.dimension):
            e = np.zeros(self.dimension)
            e[i] = 1e-6 * max(1.0, abs(self.u0[i]))
            fd[:, i] = (np.atleast_1d(stiff(self.u0 + e))
                        - np.atleast_1d(stiff(self.u0 - e))) / (2.0 * e[i])
        scale = max(1.0, float(np.abs(fd).max()))
        if np.abs(jac - fd).max() > 1e-5 * scale:
            raise ValueError("stiff Jacobian disagrees with finite differences at u0")

    def stiff(self, u):
        return np.atleast_1d(np.asarray(self._stiff(u), dtype=float))

    def stiff_jacobian(self, u):
        return np.atleast_2d(np.asarray(self._jac(u), dtype=float))

    def explicit(self, u):
        if self._explicit is None:
            return np.zeros_like(u)
        return np.atleast_1d(np.asarray(self._explicit(u), dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Uniformly stepped solution samples, first state equal to u0."""

    times: np.ndarray
    states: np.ndarray
    method: str = ""

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


class _LUCache:
    """Factorizations of (I - coeff * J), valid while the cache key holds.

    Scalar coefficients cover diagonally implicit stages; coefficient
    matrices cover coupled implicit blocks, factoring I - kron(coeffs, J)
    once per distinct block matrix.
    """

    def __init__(self):
        self.key = object()
        self.factors: dict = {}

    def _fresh(self, key):
        if key is None or key != self.key:
            self.factors.clear()
            self.key = key if key is not None else object()

    def solve(self, coeff: float, J: np.ndarray, rhs: np.ndarray,
              key=None, context: str = "stage"):
        self._fresh(key)
        c = float(coeff)
        fac = self.factors.get(c)
        if fac is None:
            mat = np.eye(J.shape[0]) - c * J
            try:
                fac = lu_factor(mat)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise np.linalg.LinAlgError(
                    f"singular implicit system in {context} (coefficient {c:g})"
                ) from exc
            self.factors[c] = fac
        return lu_solve(fac, rhs)

    def solve_block(self, coeffs: np.ndarray, J: np.ndarray, rhs: np.ndarray,
                    key=None, context: str = "block"):
        self._fresh(key)
        ckey = (coeffs.shape[0], np.ascontiguousarray(coeffs).tobytes())
        fac = self.factors.get(ckey)
        if fac is None:
            big = np.eye(coeffs.shape[0] * J.shape[0]) - np.kron(coeffs, J)
            try:
                fac = lu_factor(big)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise np.linalg.LinAlgError(
                    f"singular implicit system in {context}") from exc
            self.factors[ckey] = fac
        return lu_solve(fac, rhs)


def _total_field(ode):
    if isinstance(ode, SplitLinearODE):
        total = ode.S + ode.G
        return (lambda u: total @ u), (lambda u: total)
    return (lambda u: ode.stiff(u) + ode.explicit(u)), ode.stiff_jacobian


def _mode_fields(mode: str, ode, u):
    """(stiff, explicit, jacobian-at-u) as the mode treats them.

    Explicit mode folds everything into one explicitly treated field;
    implicit mode folds everything into the implicitly treated field (for a
    nonlinear split this requires the supplied Jacobian to cover the whole
    field, which holds when the explicit part is absent); imex keeps the
    split.
    """
    zero = lambda v: np.zeros_like(v)
    if mode == EXPLICIT:
        f, _ = _total_field(ode)
        return f, zero, None
    if mode == IMPLICIT:
        if isinstance(ode, SplitLinearODE):
            total = ode.S + ode.G
            return (lambda v: total @ v), zero, total
        if np.any(ode.explicit(u)):
            raise ValueError("implicit mode treats the whole field implicitly; "
                             "supply it as the stiff part")
        return ode.stiff, zero, ode.stiff_jacobian(u)
    return ode.stiff, ode.explicit, ode.stiff_jacobian(u)


def rk_step(t, ode, u, dt: float, _cache: _LUCache | None = None,
            _cache_key=None) -> np.ndarray:
    """One step of the (IMEX) Runge-Kutta method given by the tableau.

    Implicit diagonal entries are solved with the stiff Jacobian at u (exact
    for linear problems); contiguous implicit blocks are solved as one
    coupled dense system.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = _as_state(u)
    if isinstance(t, IMEXTableau):
        stiff, expl, jac = ode.stiff, ode.explicit, ode.stiff_jacobian
        A, Ahat, b, bhat = t.implicit.A, t.explicit.A, t.implicit.b, t.explicit.b
    else:
        if isinstance(ode, SplitLinearODE):
            total_m = ode.S + ode.G
            stiff, expl, jac = (lambda v: total_m @ v), None, (lambda v: total_m)
        else:
            if np.any(ode.explicit(ode.u0)):
                raise ValueError("plain tableaux apply one weight set to the whole "
                                 "field; supply it as the stiff part")
            stiff, expl, jac = ode.stiff, None, ode.stiff_jacobian
        A, b = t.A, t.b
        Ahat = np.zeros_like(A)
        bhat = np.zeros_like(b)
    Z = A.shape[0]
    n = u.size
    S_vals = np.zeros((Z, n))
    G_vals = np.zeros((Z, n))
    cache = _cache if _cache is not None else _LUCache()
    J = None
    for (s, e) in block_partition(A, Ahat):
        base = u[None, :] + dt * (A[s:e, :s] @ S_vals[:s] + Ahat[s:e, :s] @ G_vals[:s])
        nb = e - s
        if nb == 1:
            if A[s, s] == 0.0:
                stage = base[0]
            else:
                if J is None:
                    J = jac(u)
                    f0 = stiff(u) - J @ u
                rhs = base[0] + dt * A[s, s] * f0
                stage = cache.solve(dt * A[s, s], J, rhs, key=_cache_key,
                                    context=f"stage {s} at dt={dt:g}")
            S_vals[s] = stiff(stage)
            if expl is not None:
                G_vals[s] = expl(stage)
        else:
            if J is None:
                J = jac(u)
                f0 = stiff(u) - J @ u
            Ablk = A[s:e, s:e]
            rhs = (base + dt * (Ablk.sum(axis=1)[:, None] * f0[None, :])).reshape(-1)
            stages = cache.solve_block(
                dt * Ablk, J, rhs, key=_cache_key,
                context=f"stages {s}..{e - 1} at dt={dt:g}").reshape(nb, n)
            for i in range(nb):
                S_vals[s + i] = stiff(stages[i])
                if expl is not None:
                    G_vals[s + i] = expl(stages[i])
    return u + dt * (b @ S_vals + bhat @ G_vals)


def dec_iterate(coeffs: DeCCoefficients, spec: MethodSpec, ode, u, dt: float,
                _cache: _LUCache | None = None, _cache_key=None,
                sweeps: int | None = None) -> np.ndarray:
    """One step of the deferred-correction iteration in its native form.

    All subnodes start at u; spec.order correction sweeps are applied
    (override with ``sweeps``); the last subnode of the last sweep is
    returned.  The dec family integrates from the interval start (theta
    rows), the sdec family chains through the previous subnode (gamma steps
    plus delta rows).  Implicit updates solve the correction increment with
    the stiff Jacobian at u, which is exact for linear stiff parts.
    """
    if spec.family not in (DEC, SDEC):
        raise ValueError("dec_iterate handles the dec and sdec families")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = _as_state(u)
    stiff, expl, J = _mode_fields(spec.mode, ode, u)
    th, de, ga = coeffs.theta, coeffs.delta, coeffs.gamma
    be = coeffs.beta
    M = th.shape[0] - 1
    K = spec.order if sweeps is None else int(sweeps)
    if K < 1:
        raise ValueError("at least one correction sweep is required")
    cache = _cache if _cache is not None else _LUCache()

    prev = np.tile(u, (M + 1, 1))
    for k in range(1, K + 1):
        f_prev = np.array([stiff(p) for p in prev])
        if spec.mode == IMEX:
            g_prev = np.array([expl(p) for p in prev])
            f_prev = f_prev + g_prev
        cur = np.empty_like(prev)
        cur[0] = u
        for m in range(1, M + 1):
            if spec.family == DEC:
                base = u + dt * (th[m] @ f_prev)
                w = be[m]
            else:
                base = cur[m - 1] + dt * (de[m] @ f_prev)
                if spec.mode == EXPLICIT:
                    base = base + dt * ga[m] * (stiff(cur[m - 1]) - f_prev[m - 1])
                elif spec.mode == IMEX:
                    base = base + dt * ga[m] * (expl(cur[m - 1]) - g_prev[m - 1])
                w = ga[m]
            if spec.mode == EXPLICIT or w == 0.0:
                cur[m] = base
            else:
                rhs = base - dt * w * (J @ prev[m])
                cur[m] = cache.solve(dt * w, J, rhs, key=_cache_key,
                                     context=f"subnode {m}, sweep {k}, dt={dt:g}")
        prev = cur
    return prev[M]


def ader_iterate(ops: ADEROperators, spec: MethodSpec, ode, u, dt: float,
                 _cache=None, _cache_key=None, sweeps: int | None = None) -> np.ndarray:
    """One step of the space-time predictor iteration plus the final update.

    Runs spec.order fixed-point iterations of the node-stage system from the
    constant initial guess (override with ``sweeps``), then applies the
    quadrature weights to the last iterate.  With a purely implicit linear
    field one iteration already yields the fixed point, so further
    iterations are idempotent; they are still performed for uniformity.
    """
    if spec.family != ADER:
        raise ValueError("ader_iterate handles the ader family")
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = _as_state(u)
    stiff, expl, J = _mode_fields(spec.mode, ode, u)
    Q, bvec = ops.Q, ops.b
    M = Q.shape[0] - 1
    n = u.size
    K = spec.order if sweeps is None else int(sweeps)
    if K < 1:
        raise ValueError("at least one correction sweep is required")
    stages = np.tile(u, (M + 1, 1))
    if spec.mode == EXPLICIT:
        for _ in range(K):
            f = np.array([stiff(s) for s in stages])
            stages = u[None, :] + dt * (Q @ f)
    else:
        big = np.eye((M + 1) * n) - dt * np.kron(Q, J)
        try:
            fac = lu_factor(big)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise np.linalg.LinAlgError(
                f"singular node-stage system at dt={dt:g}") from exc
        for _ in range(K):
            f = np.array([stiff(s) - J @ s for s in stages])
            if spec.mode == IMEX:
                f = f + np.array([expl(s) for s in stages])
            rhs = (u[None, :] + dt * (Q @ f)).reshape(-1)
            stages = lu_solve(fac, rhs).reshape(M + 1, n)
    f = np.array([stiff(s) for s in stages])
    if spec.mode == IMEX:
        f = f + np.array([expl(s) for s in stages])
    return u + dt * (bvec @ f)


def iterate_step(method_data, spec: MethodSpec, ode, u, dt: float,
                 _cache=None, _cache_key=None, sweeps: int | None = None) -> np.ndarray:
    """Family dispatch: dec/sdec take DeCCoefficients, ader takes ADEROperators."""
    if spec.family == ADER:
        return ader_iterate(method_data, spec, ode, u, dt, _cache, _cache_key, sweeps)
    return dec_iterate(method_data, spec, ode, u, dt, _cache, _cache_key, sweeps)


def step_size_guard(ode, dt: float, t) -> None:
    """Warn when dt exceeds the documented linearization comfort bound.

    The bound is 1/(2 w L) with w the largest implicit stage coefficient and
    L the stiff Lipschitz scale (2-norm of the Jacobian at u0).  Purely a
    diagnostic: linear problems and diffusion-dominated cases remain fine
    beyond it.
    """
    try:
        J = ode.stiff_jacobian(ode.u0)
        L = float(np.linalg.norm(J, 2))
        A = t.implicit.A if isinstance(t, IMEXTableau) else t.A
        w = float(np.abs(np.diag(A)).max())
    except Exception:
        return
    if w > 0 and L > 0 and dt >= 1.0 / (2.0 * w * L):
        warnings.warn(f"dt={dt:g} exceeds the linearization guard "
                      f"1/(2*{w:g}*{L:g}); accuracy may degrade for "
                      "nonlinear stiff parts", RuntimeWarning, stacklevel=2)


def solve_ivp(method, ode, t_end: float, h: float, use_iteration: bool = False,
              warn_guard: bool = False) -> Trajectory:
    """Integrate from 0 to t_end with uniform steps of size h.

    A shorter final step lands exactly on t_end.  ``method`` is a MethodSpec
    (tableau built on the fly) or a prebuilt tableau; with use_iteration a
    MethodSpec runs through its native corrector loop instead of the tableau.
    """
    if h <= 0 or t_end <= 0:
        raise ValueError("h and t_end must be positive")
    if isinstance(method, MethodSpec):
        label = method.label()
        if use_iteration:
            from .nodes import ader_operators, dec_coefficients, make_nodes
            nodes = make_nodes(method.kind, method.M)
            data = (ader_operators(nodes) if method.family == ADER
                    else dec_coefficients(nodes))
            stepper = lambda uu, hh, cache, key: iterate_step(
                data, method, ode, uu, hh, cache, key)
            tab = None
        else:
            tab = build_tableau(method)
    else:
        label = getattr(method, "structure", method.__class__.__name__)
        tab = method
    if tab is not None:
        stepper = lambda uu, hh, cache, key: rk_step(tab, ode, uu, hh, cache, key)
        if warn_guard:
            step_size_guard(ode, h, tab)
    u = ode.u0.copy()
    jac_is_constant = (isinstance(ode, SplitLinearODE)
                       or getattr(ode, "constant_jacobian", False))
    cache = _LUCache()
    times = [0.0]
    states = [u.copy()]
    t = 0.0
    n_steps = int(np.floor(t_end / h + 1e-12))
    for i in range(n_steps):
        key = ("uniform", h) if jac_is_constant else ("step", i)
        u = stepper(u, h, cache, key)
        t = (i + 1) * h
        times.append(t)
        states.append(u.copy())
    if t_end - t > 1e-12 * max(1.0, t_end):
        stub = t_end - t
        key = ("stub", stub) if jac_is_constant else ("laststep",)
        u = stepper(u, stub, cache, key)
        times.append(t_end)
        states.append(u.copy())
    return Trajectory(times=np.asarray(times), states=np.asarray(states),
                      method=label)


def convergence_study(method, ode, exact, h_list, t_end: float = 1.0):
    """Error table for a geometric step-size sequence.

    ``exact`` maps t to the reference state.  Returns a list of rows
    (h, error, observed order); the first row's order is nan.  Errors are
    Euclidean norms at t_end.
    """
    h_list = list(h_list)
    if len(h_list) < 3:
        raise ValueError("need at least 3 step sizes")
    ref = np.atleast_1d(np.asarray(exact(t_end), dtype=float))
    rows = []
    prev_err = None
    prev_h = None
    for h in h_list:
        traj = solve_ivp(method, ode, t_end, h)
        err = float(np.linalg.norm(traj.final - ref))
        if prev_err is None or err == 0.0 or prev_err == 0.0:
            order = float("nan")
        else:
            order = float(np.log(prev_err / err) / np.log(prev_h / h))
        rows.append((float(h), err, order))
        prev_err, prev_h = err, h
    return rows
