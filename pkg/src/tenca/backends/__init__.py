"""Kernel backend selection.

Two interchangeable implementations of the hot kernels exist: a compiled
extension (``_native``, Cython) and a pure-numpy fallback (``numpy_ref``).
The extension is picked at import time when it built successfully; set
TENCA_BACKEND=python or TENCA_BACKEND=native to force one.
"""

import os

from . import numpy_ref
from ..errors import ConfigError

try:
    from . import _native
    _NATIVE_IMPORT_ERROR = None
except ImportError as exc:  # pure-source checkout or failed build
    _native = None
    _NATIVE_IMPORT_ERROR = exc


def _select_default():
    forced = os.environ.get("TENCA_BACKEND", "").strip().lower()
    if forced in ("python", "numpy"):
        return numpy_ref
    if forced == "native":
        if _native is None:
            raise ConfigError(
                f"TENCA_BACKEND=native but the compiled extension is not importable: "
                f"{_NATIVE_IMPORT_ERROR}")
        return _native
    if forced:
        raise ConfigError(f"unknown TENCA_BACKEND value: {forced!r}")
    return _native if _native is not None else numpy_ref


_active = _select_default()


def active():
    """The backend module currently in use."""
    return _active


def active_name() -> str:
    return _active.NAME


def available() -> dict:
    """Name -> module of every importable backend."""
    out = {numpy_ref.NAME: numpy_ref}
    if _native is not None:
        out[_native.NAME] = _native
    return out


def use(name: str):
    """Switch the active backend; returns the previous module."""
    global _active
    mods = available()
    if name not in mods:
        raise ConfigError(f"backend {name!r} not available (have: {sorted(mods)})")
    prev = _active
    _active = mods[name]
    return prev
