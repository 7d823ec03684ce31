"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when the
``GRAPHUNWRAP_PURE`` environment variable is set to a non-empty value other
than ``0``) the numpy fallback is used. Both expose the same functions.
"""

import os

from . import _kernels_py


def _load_compiled():
    if os.environ.get("GRAPHUNWRAP_PURE", "") not in ("", "0"):
        return None
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()
backend = _compiled if _compiled is not None else _kernels_py
BACKEND = "compiled" if _compiled is not None else "python"


def available() -> dict:
    """Name -> module for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["compiled"] = _kernels
    except ImportError:
        pass
    return out


def set_backend(name: str) -> None:
    """Switch the active backend at runtime ("compiled" or "python")."""
    global backend, BACKEND
    mods = available()
    if name not in mods:
        raise ValueError(f"kernel backend {name!r} is not available (have {sorted(mods)})")
    backend, BACKEND = mods[name], name
