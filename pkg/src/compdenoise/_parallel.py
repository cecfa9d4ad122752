"""Deterministic trial fan-out.

Trial ``t`` always receives the generator for stream ``(seed, t)`` and results
come back in trial order, so the worker count never changes any output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .sources import make_rng


def map_trials(fn, trials: int, seed: int, threads: int = 1, stream: int = 0):
    """Return ``[fn(t, rng_t) for t in range(trials)]`` evaluated on ``threads`` workers."""
    def call(t):
        return fn(t, make_rng(seed, stream, t))

    if threads <= 1 or trials <= 1:
        return [call(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(call, range(trials)))
