"""Numerical laboratory for a two-parameter polynomial vector field on S^3.

The field has two saddle-foci ``v = (0, 0, 0, 1)`` and ``w = (0, 0, 0, -1)``
joined by a heteroclinic network.  Submodules: ``model`` (vector field,
equilibria, symmetries), ``integrator`` (RK45 with events), ``sections``
(cylinder charts and model return maps), ``melnikov``, ``manifolds``
(invariant manifolds, connections, tangencies, linking numbers),
``scanner`` (parameter sweeps and tongue boundaries), ``switching``
(network paths and shadowing) and ``cli``.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import BykovError, ConfigError, NotFound, NumericalFailure
from .integrator import IntegratorOptions, integrate
from .model import ModelParams, equilibria

__all__ = [
    "BACKEND",
    "BykovError",
    "ConfigError",
    "IntegratorOptions",
    "ModelParams",
    "NotFound",
    "NumericalFailure",
    "equilibria",
    "integrate",
    "__version__",
]
