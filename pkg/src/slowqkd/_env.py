"""Process-level knobs shared by the sweep and simulation drivers."""

from __future__ import annotations

import os


def worker_count() -> int:
    """Worker cap from the QKD_THREADS environment variable (default 1)."""
    raw = os.environ.get("QKD_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"QKD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"QKD_THREADS must be a positive integer, got {raw!r}")
    return n
