"""Kernel backend selection.

The hot inner loops (time-stepped sweeps and the fine-grid forward-backward
pass) exist twice: a compiled Cython extension (``_fast``) and a pure-NumPy
fallback (``_pure``) with identical signatures. The compiled backend is used
when the extension built; set ``DUALSMOOTH_BACKEND=pure`` or ``fast`` to force
one (``fast`` raises if the extension is unavailable).
"""

import logging
import os

from . import _pure

_choice = os.environ.get("DUALSMOOTH_BACKEND", "auto").lower()

if _choice not in ("auto", "fast", "pure"):
    raise ValueError(f"DUALSMOOTH_BACKEND must be auto|fast|pure, got {_choice!r}")

if _choice == "pure":
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]

        BACKEND = "fast"
    except ImportError:
        if _choice == "fast":
            raise
        logging.getLogger("dualsmooth").info(
            "compiled kernels unavailable, falling back to pure NumPy"
        )
        _impl = _pure
        BACKEND = "pure"

ctmc_pathwise_sweep = _impl.ctmc_pathwise_sweep
ctmc_transport_sweep = _impl.ctmc_transport_sweep
grid_pathwise_sweep = _impl.grid_pathwise_sweep
grid_transport_sweep = _impl.grid_transport_sweep
hmm_fine_sweep = _impl.hmm_fine_sweep

# always available in NumPy form (cheap, used for stage reconstruction)
ctmc_pathwise_rhs = _pure.ctmc_pathwise_rhs
grid_pathwise_rhs = _pure.grid_pathwise_rhs
grid_transport_rhs = _pure.grid_transport_rhs
band_apply = _pure.band_apply

__all__ = [
    "BACKEND",
    "ctmc_pathwise_sweep",
    "ctmc_pathwise_rhs",
    "ctmc_transport_sweep",
    "grid_pathwise_sweep",
    "grid_pathwise_rhs",
    "grid_transport_rhs",
    "grid_transport_sweep",
    "band_apply",
    "hmm_fine_sweep",
]
