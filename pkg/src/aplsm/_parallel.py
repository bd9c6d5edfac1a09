"""Worker-count resolution shared by the parallel loops."""
from __future__ import annotations

import os

ENV_THREADS = "JLS_THREADS"


def resolve_n_jobs(n_jobs=None) -> int:
    """Number of workers to use.

    ``n_jobs=None`` means one worker per CPU. The environment variable
    ``JLS_THREADS`` (a positive integer) caps the result.
    """
    n = (os.cpu_count() or 1) if n_jobs is None else int(n_jobs)
    if n < 1:
        raise ValueError(f"n_jobs must be >= 1, got {n_jobs}")
    cap = os.environ.get(ENV_THREADS)
    if cap:
        try:
            cap_n = int(cap)
        except ValueError:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {cap!r}")
        if cap_n < 1:
            raise ValueError(f"{ENV_THREADS} must be a positive integer, got {cap!r}")
        n = min(n, cap_n)
    return n
