"""Selects the compiled fork-join kernel, or the pure-Python one if it is missing.

Set ``FHBOUNDS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from fhbounds.sim import _kernel_py

BACKEND = "python"
run_chunk = _kernel_py.run_chunk

if not os.environ.get("FHBOUNDS_PURE_PYTHON"):
    try:
        from fhbounds.sim._kernel import run_chunk  # noqa: F811
    except ImportError:
        pass
    else:
        BACKEND = "cython"

BACKENDS = {"python": _kernel_py.run_chunk}
if BACKEND == "cython":
    BACKENDS["cython"] = run_chunk
