"""Selects the compiled kernels when built, else the pure-Python twin.

Set ``VOCOVAR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("VOCOVAR_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend or python_backend
BACKEND = backend.BACKEND

cholesky_csc = backend.cholesky_csc
recover_entries = backend.recover_entries
