"""Hot row loops, compiled when available.

The compiled module ``_ckernels`` is built from ``_ckernels.pyx`` at install
time if Cython and a C compiler are present.  Otherwise, or when
``ONTOSTORE_PURE_PYTHON=1`` is set, the pure-Python versions are used.
Both produce identical results.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("ONTOSTORE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

contains_scan = _impl.contains_scan
expand_star = _impl.expand_star
hash_join = _impl.hash_join
project = _impl.project

__all__ = ["BACKEND", "contains_scan", "expand_star", "hash_join", "project"]
