"""Kernel selection: compiled extension when built, numpy fallback otherwise.

Set CELLMD_PURE_PYTHON=1 to force the fallback (used by the benchmark to
compare both implementations in one process).
"""

import os

from . import _kernels_py

if os.environ.get("CELLMD_PURE_PYTHON"):
    impl = _kernels_py
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        impl = _kernels_py

USING_COMPILED_CORE = impl.IMPL_NAME == "compiled"

STATUS_OK = _kernels_py.STATUS_OK
STATUS_SINGULAR = _kernels_py.STATUS_SINGULAR

rl_cell_direct = impl.rl_cell_direct
rl_cell_interp = impl.rl_cell_interp
spread_charge = impl.spread_charge
gather_forces = impl.gather_forces
