"""Geometric Langevin and fibre lay-down dynamics on Riemannian manifolds.

Modules: :mod:`geometry` (atlases, Christoffel symbols, geodesics),
:mod:`bundle` (tangent-bundle calculus), :mod:`dynamics` (integrators and
ensembles), :mod:`measures` (invariant measures, sampling, quadrature),
:mod:`analysis` (operator identities, constants, decay) and :mod:`cli`.
"""

__version__ = "0.1.0"
