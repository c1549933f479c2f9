"""Kernel backend selection: compiled extension when present, else Python.

Set ``PCNKIT_PURE=1`` to force the pure-Python path (used by the backend
equivalence tests and the benchmark).
"""

from __future__ import annotations

import os

_compiled = None
if os.environ.get("PCNKIT_PURE") != "1":
    try:
        from pcnkit.allocation import _cost_kernel as _compiled
    except ImportError:
        _compiled = None

from pcnkit.allocation import _cost_py

BACKEND = "compiled" if _compiled is not None else "python"

compiled_assign_eval = _compiled.assign_eval if _compiled is not None else None
python_assign_eval = _cost_py.assign_eval
