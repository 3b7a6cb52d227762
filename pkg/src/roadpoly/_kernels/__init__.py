"""Hot geometry kernels with runtime backend selection.

The compiled Cython extension is preferred when present; otherwise the
numpy fallback is used. Set ``ROADPOLY_PURE_KERNELS=1`` to force the
fallback (useful for benchmarking and debugging). Both backends are
bit-identical by construction.
"""

import os

if os.environ.get("ROADPOLY_PURE_KERNELS", "") not in ("", "0"):
    from . import _pure as _impl
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pure as _impl

BACKEND = _impl.NAME
project_many = _impl.project_many
stamp_band = _impl.stamp_band
