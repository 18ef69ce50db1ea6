"""Hot coordination kernels with a compiled/pure split.

The compiled extension (_speedups, Cython) is preferred when it imported
cleanly; set FEDCOORD_PURE_KERNEL=1 to force the pure-Python twin. Both
expose the same functions and must return identical values.
"""

from __future__ import annotations

import os

from fedcoord._kernel import _purekernel


def _select():
    if os.environ.get("FEDCOORD_PURE_KERNEL"):
        return _purekernel
    try:
        from fedcoord._kernel import _speedups

        return _speedups
    except ImportError:
        return _purekernel


def available_backends() -> dict[str, object]:
    """Importable kernel backends by name."""
    backends: dict[str, object] = {"pure": _purekernel}
    try:
        from fedcoord._kernel import _speedups

        backends["compiled"] = _speedups
    except ImportError:
        pass
    return backends


_impl = _select()

BACKEND = _impl.BACKEND_NAME
tag_add = _impl.tag_add
eimt_solve = _impl.eimt_solve
rule1_grants = _impl.rule1_grants
