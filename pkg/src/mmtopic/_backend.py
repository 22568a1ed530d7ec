"""Kernel backend selection.

The compiled extension is used when importable; ``MMTOPIC_BACKEND=python``
forces the pure-Python kernels.
"""
import importlib
import os

_MODULES = {"cython": "mmtopic._gibbs_ext", "python": "mmtopic._gibbs_py"}


def load(name):
    """Return the kernel module for backend ``name`` ("cython" or "python")."""
    if name not in _MODULES:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_MODULES)}")
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    forced = os.environ.get("MMTOPIC_BACKEND")
    if forced:
        return forced, load(forced)
    try:
        return "cython", load("cython")
    except ImportError:
        return "python", load("python")


BACKEND, kernels = _select()
