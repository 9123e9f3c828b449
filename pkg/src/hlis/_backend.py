"""Select the compiled kernels when importable, else the numpy fallback."""

import os

from . import _fallback

if os.environ.get("HLIS_PURE_PYTHON"):
    kernels = _fallback
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "cython"
    except ImportError:  # extension not built
        kernels = _fallback
        NAME = "python"

forward_log = kernels.forward_log
backward_log = kernels.backward_log
transition_stats = kernels.transition_stats
kde_direct = kernels.kde_direct
