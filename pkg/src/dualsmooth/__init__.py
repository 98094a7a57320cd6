"""dualsmooth: fixed-interval smoothing for hidden Markov processes.

Two independent solution routes are implemented for each model family --
pathwise forward-backward integration of log-domain fields, and transport of
the law under the corresponding optimal control -- together with brute-force
oracles and a verification suite that checks the routes against each other
and against the references.
"""

from ._kernels import BACKEND
from .models import (
    CtmcModel,
    DiffusionModel1D,
    GaussianModel,
    ObservationPath,
    load_model,
    load_observations,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CtmcModel",
    "DiffusionModel1D",
    "GaussianModel",
    "ObservationPath",
    "load_model",
    "load_observations",
    "__version__",
]
