"""Select the compiled kernels when available, else the numpy fallback."""

import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("EBTOPM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"

mixture_moments = kernels.mixture_moments
em_weights = kernels.em_weights
