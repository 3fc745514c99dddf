"""Kernel backend selection.

The hot elementwise/reduction kernels exist twice: a Cython extension
(``client_ts._kernels``) and a numpy fallback (``client_ts._kernels_py``).
The compiled module is preferred when importable; ``CLIENT_BACKEND=python``
forces the fallback. ``client-ts bench`` compares the two.

Matrix products are numpy (BLAS) in both backends; BLAS thread count is
capped by the ``CLIENT_THREADS`` env var, which the CLI exports to the BLAS
runtime before numpy loads.
"""

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

K = _kernels_py
if _compiled is not None and os.environ.get("CLIENT_BACKEND", "").lower() != "python":
    K = _compiled


def backend_name():
    return K.BACKEND


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.append("compiled")
    return names


def use(name):
    """Switch kernel backend at runtime ('python' or 'compiled')."""
    global K
    if name == "python":
        K = _kernels_py
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel extension is not available")
        K = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    return K
