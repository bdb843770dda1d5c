"""Small shared helpers."""

from __future__ import annotations

import os

__all__ = ["worker_count"]


def worker_count() -> int:
    """Worker cap for parallel sections; PHOTONSTAT_THREADS overrides."""
    env = os.environ.get("PHOTONSTAT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"PHOTONSTAT_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1
