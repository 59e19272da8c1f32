"""Batched state-vector kernels with backend selection at import time.

The compiled Cython extension is preferred; the NumPy implementation is a
drop-in fallback.  Set QPERC_KERNELS=numpy (or =cython) to force a
backend, e.g. for benchmarking.
"""

import os

from . import _pykernels

_forced = os.environ.get("QPERC_KERNELS", "").strip().lower()

if _forced == "numpy":
    _impl = _pykernels
elif _forced == "cython":
    from . import _cykernels as _impl
else:
    try:
        from . import _cykernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.NAME

apply_gate = _impl.apply_gate
apply_gate_pair = _impl.apply_gate_pair
apply_block_diag = _impl.apply_block_diag
expect_obs = _impl.expect_obs


def get_backend(name: str):
    """Return a kernel module by name ('cython' or 'numpy')."""
    if name == "numpy":
        return _pykernels
    if name == "cython":
        from . import _cykernels

        return _cykernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["numpy"]
    try:
        from . import _cykernels  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
