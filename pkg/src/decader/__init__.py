"""Arbitrary-order DeC / sDeC / ADER time integrators.

Builds deferred-correction and ADER iterative methods in explicit, implicit
and implicit-explicit (IMEX) modes, exposes them as Runge-Kutta tableaux,
and provides the analysis machinery around them: linear (IMEX) stability
regions, finite-difference stencil generation, fully discrete von Neumann
stability maps for advection-diffusion / advection-dispersion, and ODE / PDE
convergence experiments.
"""

__version__ = "0.1.0"
