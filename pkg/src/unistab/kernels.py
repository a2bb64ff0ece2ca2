"""Import-time selection of the kernel backend.

The compiled extension is used when it is importable; setting
``UNISTAB_PURE_PYTHON=1`` forces the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("UNISTAB_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

QUADRATIC = _pykernels.QUADRATIC
LINEAR = _pykernels.LINEAR

psi = _impl.psi
shift_root = _impl.shift_root
pgd_run = _impl.pgd_run


def available_backends():
    """Map backend name to kernel module for every importable backend."""
    backends = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        backends["cython"] = _ckernels
    return backends
