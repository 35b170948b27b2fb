"""Kernel selection: the compiled extension when it was built, NumPy otherwise.

Set ``ROBUSTFEAS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("ROBUSTFEAS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        pass

cycle_flows = _impl.cycle_flows
pressure_violation = _impl.pressure_violation

__all__ = ["BACKEND", "cycle_flows", "pressure_violation"]
