"""polyflow: spectral simulator and verification harness for a compressible
micro-macro polymeric fluid near its global equilibrium.

The package couples a pseudo-spectral periodic flow solver for the density
and velocity fluctuations with a Maxwellian-weighted spectral-Galerkin
discretization of the configuration-space distribution, and instruments the
coupled dynamics with the structural diagnostics the model's stability
theory is built on: the energy/dissipation law audit, the weighted spectral
gap, the micro-macro cancellation identity, fixed-point contraction
measurement, and the exact second-moment closure for quadratic springs.
"""

__version__ = "0.1.0"

from .potential import make_fene, make_hookean, validate_assumptions
from .qbasis import build_basis, poincare_constant
from .xgrid import TorusGrid

__all__ = [
    "make_hookean",
    "make_fene",
    "validate_assumptions",
    "build_basis",
    "poincare_constant",
    "TorusGrid",
    "__version__",
]
