"""Masking kernel backend selection.

Imports the compiled extension when it was built, otherwise falls back to
the pure numpy implementation. Set DISPLAB_PURE_PYTHON=1 to force the
fallback (used by the parity tests and the benchmark).
"""

from __future__ import annotations

import os

if os.environ.get("DISPLAB_PURE_PYTHON") == "1":
    from . import _pykernels as _impl
else:
    try:
        from . import _cykernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
sample_positions = _impl.sample_positions
paint_shapes = _impl.paint_shapes


def backends():
    """All importable backends, for parity tests and benchmarks."""
    from . import _pykernels

    found = {"python": _pykernels}
    try:
        from . import _cykernels  # type: ignore[attr-defined]

        found["compiled"] = _cykernels
    except ImportError:
        pass
    return found
