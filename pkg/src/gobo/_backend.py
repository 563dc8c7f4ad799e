"""Kernel backend selection.

The compiled extension is preferred when importable; GOBO_PURE_PYTHON=1
forces the numpy fallback.  Both expose the same functions with identical
numerics, so selection never changes results, only speed.
"""

import os

from . import _accel_py

try:
    from . import _accel
except ImportError:
    _accel = None

_BACKENDS = {"numpy": _accel_py}
if _accel is not None:
    _BACKENDS["cython"] = _accel

if os.environ.get("GOBO_PURE_PYTHON") == "1" or _accel is None:
    DEFAULT = "numpy"
else:
    DEFAULT = "cython"


def available_backends():
    return tuple(sorted(_BACKENDS))


def get_backend(name=None):
    """Resolve a backend module by name; None picks the import-time default."""
    if name is None:
        name = DEFAULT
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown backend {name!r}; available: {available_backends()}"
        ) from None
