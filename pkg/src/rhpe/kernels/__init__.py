"""Inner-loop kernels for affine problems.

The compiled ``_affine`` extension is used when it imports; otherwise the
numpy implementation in ``_affine_py`` takes over. Setting the environment
variable ``RHPE_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the
implementation that was selected.
"""
import os

from . import _affine_py
from .codes import *  # noqa: F401,F403

python_run_affine = _affine_py.run_affine
compiled_run_affine = None

if not os.environ.get("RHPE_PURE_PYTHON"):
    try:
        from ._affine import run_affine as compiled_run_affine
    except ImportError:  # extension not built
        compiled_run_affine = None

if compiled_run_affine is not None:
    run_affine = compiled_run_affine
    BACKEND = "cython"
else:
    run_affine = python_run_affine
    BACKEND = "python"


def get_kernel(backend: str = "auto"):
    """Return the ``run_affine`` implementation for ``backend`` ("auto", "cython", "python")."""
    if backend == "auto":
        return run_affine
    if backend == "python":
        return python_run_affine
    if backend == "cython":
        if compiled_run_affine is None:
            raise ImportError("compiled kernel is not available; build the package extension")
        return compiled_run_affine
    raise ValueError(f"unknown kernel backend {backend!r}")
