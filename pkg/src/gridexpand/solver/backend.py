"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``GRIDEXPAND_PURE_PYTHON`` is set to a non-empty value
other than ``0``, the numpy/SuperLU fallback is used.
"""
import importlib
import os

_FORCE_PY = os.environ.get("GRIDEXPAND_PURE_PYTHON", "") not in ("", "0")


def load(name=None):
    """Return a kernel module by name (``"compiled"`` or ``"python"``)."""
    if name == "python":
        return importlib.import_module("gridexpand.solver._kernels_py")
    if name == "compiled":
        return importlib.import_module("gridexpand.solver._kernels")
    if name is not None:
        raise ValueError(f"unknown backend {name!r}")
    if not _FORCE_PY:
        try:
            return importlib.import_module("gridexpand.solver._kernels")
        except ImportError:
            pass
    return importlib.import_module("gridexpand.solver._kernels_py")


kernels = load()
BACKEND = kernels.BACKEND


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        load("compiled")
    except ImportError:
        return names
    return ["compiled"] + names
