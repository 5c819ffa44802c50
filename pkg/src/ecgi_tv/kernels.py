"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set ECGI_TV_DISABLE_EXT=1 to force the NumPy fallback.
"""

import os

if os.environ.get("ECGI_TV_DISABLE_EXT", "") == "1":
    from . import _kernels_py as impl
else:
    try:
        from . import _kernels as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernels_py as impl

BACKEND = impl.BACKEND

grad_space_apply = impl.grad_space_apply
grad_space_adjoint = impl.grad_space_adjoint
grad_time_apply = impl.grad_time_apply
grad_time_adjoint = impl.grad_time_adjoint
clamp_rows = impl.clamp_rows
clamp_cols = impl.clamp_cols
project_l2_rows = impl.project_l2_rows
axpy_project_l2 = impl.axpy_project_l2
q2_scatter = impl.q2_scatter
q2_gather = impl.q2_gather
q2_weighted_tv = impl.q2_weighted_tv
