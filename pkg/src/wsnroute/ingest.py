"""Query-timestamp traces: parsing, rate estimation, binning, synthetic bursts.

Trace files are plain ASCII, one decimal timestamp (seconds) per line. Blank
lines and lines starting with ``#`` are skipped. Timestamps must be
nondecreasing; the parser does not sort them, because a backwards step usually
means a corrupt log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from wsnroute.errors import EmptyTrace, NonMonotoneTrace, NonPositiveRate, ParseError


@dataclass(frozen=True)
class Trace:
    timestamps: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.ndim != 1:
            raise ValueError("timestamps must be one-dimensional")
        if ts.size > 1 and np.any(np.diff(ts) < 0):
            k = int(np.argmax(np.diff(ts) < 0)) + 1
            raise NonMonotoneTrace(f"timestamp {k} ({ts[k]}) precedes timestamp {k - 1} ({ts[k - 1]})")
        object.__setattr__(self, "timestamps", ts)

    @property
    def count(self) -> int:
        return int(self.timestamps.size)

    @property
    def span(self) -> float:
        if self.count == 0:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0])


def parse_trace(source: bytes | str | IO | Iterable) -> Trace:
    if isinstance(source, bytes):
        lines = source.decode("ascii").splitlines()
    elif isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source
    values = []
    prev = -math.inf
    for lineno, raw in enumerate(lines, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("ascii")
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        try:
            value = float(text)
        except ValueError:
            raise ParseError(lineno, text) from None
        if not math.isfinite(value):
            raise ParseError(lineno, text)
        if value < prev:
            raise NonMonotoneTrace(f"line {lineno}: {value} follows {prev}")
        values.append(value)
        prev = value
    if not values:
        raise EmptyTrace("trace contains no timestamps")
    return Trace(np.array(values))


def read_trace(path: str | Path) -> Trace:
    with open(path, "rb") as fh:
        return parse_trace(fh)


def format_trace(trace: Trace) -> str:
    # repr gives the shortest string that round-trips the double exactly
    return "".join(f"{float(t)!r}\n" for t in trace.timestamps)


def write_trace(trace: Trace, path: str | Path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(format_trace(trace))


def estimate_rate(trace: Trace) -> float:
    """Reciprocal of the mean inter-arrival time, ``(count - 1) / span``."""
    if trace.count < 2:
        raise EmptyTrace(f"need at least two timestamps to estimate a rate, got {trace.count}")
    if trace.span <= 0:
        raise EmptyTrace("all timestamps coincide; rate is undefined")
    return (trace.count - 1) / trace.span


def counts_per_minute(trace: Trace) -> list[tuple[int, int]]:
    if trace.count == 0:
        raise EmptyTrace("trace contains no timestamps")
    rel = trace.timestamps - trace.timestamps[0]
    bins = np.floor(rel / 60.0).astype(np.int64)
    counts = np.bincount(bins)
    return [(int(k), int(n)) for k, n in enumerate(counts)]


def synth_bursty_trace(
    high_rate: float,
    low_rate: float,
    switch_rate: float,
    horizon: float,
    seed: int,
) -> Trace:
    """Two-regime Markov-modulated Poisson arrivals on ``[0, horizon]``.

    Starts in the high regime; regime sojourns are exponential with rate
    ``switch_rate`` (zero means the regime never changes).
    """
    if not (high_rate > 0 and low_rate > 0):
        raise NonPositiveRate(f"regime rates must be positive, got {high_rate}, {low_rate}")
    if switch_rate < 0:
        raise NonPositiveRate(f"switch rate must be >= 0, got {switch_rate}")
    rng = np.random.default_rng(seed)
    out = []
    t = 0.0
    high = True
    while t < horizon:
        stay = rng.exponential(1.0 / switch_rate) if switch_rate > 0 else math.inf
        end = min(t + stay, horizon)
        rate = high_rate if high else low_rate
        n = rng.poisson(rate * (end - t))
        out.append(np.sort(rng.uniform(t, end, size=n)))
        t = end
        high = not high
    return Trace(np.concatenate(out) if out else np.empty(0))


__all__ = [
    "Trace", "parse_trace", "read_trace", "format_trace", "write_trace",
    "estimate_rate", "counts_per_minute", "synth_bursty_trace",
]
