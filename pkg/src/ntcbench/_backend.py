"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-NumPy fallback
is used otherwise.  Set ``NTC_BENCH_BACKEND=python`` or ``=compiled`` to force
a choice (forcing ``compiled`` raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import _py_kernels

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build environment
    _compiled = None

_forced = os.environ.get("NTC_BENCH_BACKEND", "").strip().lower()
if _forced not in ("", "python", "compiled"):
    raise ValueError(f"NTC_BENCH_BACKEND must be 'python' or 'compiled', got {_forced!r}")
if _forced == "compiled" and _compiled is None:
    raise ImportError("NTC_BENCH_BACKEND=compiled but the extension is not built")

if _forced == "python" or _compiled is None:
    _impl = _py_kernels
else:
    _impl = _compiled

HAVE_COMPILED = _compiled is not None
BACKEND = _impl.NAME

levenshtein_matrix = _impl.levenshtein_matrix
receiver_train_epoch = _impl.receiver_train_epoch
