"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``STATDA_BACKEND=python`` (or ``compiled``) to
force one. Forcing ``compiled`` when the extension is missing raises
ImportError.
"""

import os

from . import _kernels_py

_choice = os.environ.get("STATDA_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
elif _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise
        _impl = _kernels_py
else:
    raise ImportError(f"unknown STATDA_BACKEND={_choice!r}")

BACKEND = _impl.BACKEND

quad_drift = _impl.quad_drift
rk4_em_step = _impl.rk4_em_step
particle_forecast = _impl.particle_forecast
obs_values = _impl.obs_values
ensemble_moments = _impl.ensemble_moments
centered_m3 = _impl.centered_m3
highorder_increment = _impl.highorder_increment
enkf_increment = _impl.enkf_increment
max_row_norm = _impl.max_row_norm
sample_stats = _impl.sample_stats


def get_backend(name):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(name)
