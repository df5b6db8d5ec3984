"""branchflow: discrete Galton-Watson branching flows, their measure-valued
scaling limits, and the experiments that verify the convergence at desk
scale.

Layout
------
mechanisms
    branching mechanisms, decreasing families, the nonlocal operator
genfun
    probability generating functions and their scaled constructions
discrete_flow
    exact simulation of the independent and interacting flows
limit_semigroup
    continuum cumulant equations and Laplace functionals
measures
    lattice step measures and the truncated weak-convergence metric
convergence_lab
    the deterministic and Monte Carlo convergence experiments
kernels
    compiled stepping core with a bit-identical pure-Python fallback
cli
    `branchflow run/list/describe` over JSON experiment configs
"""

from .kernels import HAVE_COMPILED, backend_name

__version__ = "0.1.0"

__all__ = ["HAVE_COMPILED", "backend_name", "__version__"]
