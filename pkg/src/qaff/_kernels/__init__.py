"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise falls back to
the numpy implementations. Set QAFF_PURE_PYTHON=1 to force the fallback.
"""
from __future__ import annotations

import os

if os.environ.get("QAFF_PURE_PYTHON"):
    from . import pure as _impl
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

BACKEND = _impl.BACKEND
huber = _impl.huber
pinball_huber = _impl.pinball_huber
mc_loss_grad = _impl.mc_loss_grad
td0_loss_grad = _impl.td0_loss_grad

__all__ = ["BACKEND", "huber", "pinball_huber", "mc_loss_grad", "td0_loss_grad"]
