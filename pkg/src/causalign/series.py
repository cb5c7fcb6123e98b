"""Per-video bin series and their preprocessing stages.

All analysis series are histograms over fixed-width bins of video time
(default 5 s). The pipeline order is: bin, trim edges, normalize by active
sessions (responses only), z-normalize, detrend (responses only). Each
stage returns a new BinSeries and records itself in the metadata.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .complexity import ComplexityEvent
from .errors import EventOutOfRange, LengthMismatch, SeriesTooShort
from .ingest import EventKind, Session

logger = logging.getLogger(__name__)

DEFAULT_BIN_WIDTH = 5.0
DEFAULT_TRIM_BINS = 2
DEGENERATE_STD = 1e-12


@dataclass
class SeriesMeta:
    role: str | None = None  # "stimulus" | "response" | "active"
    action: str | None = None
    modality: str | None = None
    condition: str | None = None
    stages: list[str] = field(default_factory=list)
    degenerate: bool = False

    def with_stage(self, stage: str) -> "SeriesMeta":
        return replace(self, stages=[*self.stages, stage])


@dataclass
class BinSeries:
    video_id: str
    bin_width: float
    values: np.ndarray
    meta: SeriesMeta = field(default_factory=SeriesMeta)

    def __len__(self) -> int:
        return len(self.values)

    def derived(self, values: np.ndarray, stage: str, **meta_updates) -> "BinSeries":
        meta = replace(self.meta.with_stage(stage), **meta_updates)
        return BinSeries(self.video_id, self.bin_width, values, meta)


def n_bins(duration: float, bin_width: float) -> int:
    """Number of bins covering [0, duration], final partial bin included."""
    return max(1, math.ceil(duration / bin_width))


def _bin_index(t: float, duration: float, bin_width: float, length: int) -> int:
    if t < 0 or t > duration:
        raise EventOutOfRange(f"event at {t} s outside [0, {duration}]")
    return min(int(t // bin_width), length - 1)  # t == duration joins last bin


def bin_unique_sessions(
    events: Iterable[tuple[str, float]],
    duration: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    *,
    video_id: str = "",
    meta: SeriesMeta | None = None,
) -> BinSeries:
    """Count distinct sessions with at least one event per bin.

    Counting sessions rather than events avoids over-weighting a user who
    acts several times inside one bin.
    """
    length = n_bins(duration, bin_width)
    per_bin: list[set[str]] = [set() for _ in range(length)]
    for session_id, t in events:
        per_bin[_bin_index(t, duration, bin_width, length)].add(session_id)
    values = np.array([len(s) for s in per_bin], dtype=np.float64)
    meta = (meta or SeriesMeta(role="response")).with_stage("bin_unique_sessions")
    return BinSeries(video_id, bin_width, values, meta)


def bin_complexity(
    events: Iterable[ComplexityEvent],
    duration: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    *,
    video_id: str = "",
    meta: SeriesMeta | None = None,
) -> BinSeries:
    """Sum visual-change counts per bin."""
    length = n_bins(duration, bin_width)
    values = np.zeros(length, dtype=np.float64)
    for event in events:
        values[_bin_index(event.timestamp, duration, bin_width, length)] += event.count
    meta = (meta or SeriesMeta(role="stimulus")).with_stage("bin_complexity")
    return BinSeries(video_id, bin_width, values, meta)


def playing_intervals(session: Session) -> list[tuple[float, float]]:
    """Reconstruct half-open playback intervals [start, end) from events.

    Play opens an interval at its position; pause and end close it; a seek
    closes at the source and reopens at the target. Inconsistencies (pause
    with nothing open, backwards-running intervals, a second play while
    playing) are tolerated and logged. A trailing open interval closes at
    its own start: how far playback actually got is unknown.
    """
    intervals: list[tuple[float, float]] = []
    open_pos: float | None = None

    def close(end: float) -> None:
        nonlocal open_pos
        if open_pos is None:
            return
        if end > open_pos:
            intervals.append((open_pos, end))
        elif end < open_pos:
            logger.warning(
                "inconsistent event order in session %s: interval would run "
                "backwards (%s -> %s)",
                session.session_id,
                open_pos,
                end,
            )
        open_pos = None

    for event in session.events:
        if event.kind is EventKind.PLAY:
            if open_pos is not None:
                logger.warning(
                    "inconsistent event order in session %s: play while playing",
                    session.session_id,
                )
                close(event.position)
            open_pos = event.position
        elif event.kind is EventKind.PAUSE or event.kind is EventKind.END:
            if open_pos is None:
                logger.warning(
                    "inconsistent event order in session %s: %s with no open play",
                    session.session_id,
                    event.kind.value,
                )
                continue
            close(event.position)
        elif event.kind is EventKind.SEEK:
            if open_pos is not None:
                close(event.position)
                open_pos = event.seek_to
            # seek while paused just moves the playhead: no interval
    # A trailing open interval is zero-length (end unknown) and drops out.
    return intervals


def active_sessions_per_bin(
    sessions: Iterable[Session],
    duration: float,
    bin_width: float = DEFAULT_BIN_WIDTH,
    *,
    video_id: str = "",
) -> BinSeries:
    """Count sessions whose reconstructed playing intervals touch each bin."""
    length = n_bins(duration, bin_width)
    values = np.zeros(length, dtype=np.float64)
    for session in sessions:
        active_bins: set[int] = set()
        for start, end in playing_intervals(session):
            start = max(0.0, min(start, duration))
            end = max(0.0, min(end, duration))
            if end <= start:
                continue
            first = min(int(start // bin_width), length - 1)
            last = min(math.ceil(end / bin_width) - 1, length - 1)
            active_bins.update(range(first, last + 1))
        for b in active_bins:
            values[b] += 1.0
    meta = SeriesMeta(role="active", stages=["active_sessions_per_bin"])
    return BinSeries(video_id, bin_width, values, meta)


def trim_edges(series: BinSeries, n: int = DEFAULT_TRIM_BINS) -> BinSeries:
    """Drop the first and last ``n`` bins (start/end interaction artifacts)."""
    if len(series.values) <= 2 * n:
        raise SeriesTooShort(
            f"cannot trim {n} bins from each edge of length {len(series.values)}"
        )
    return series.derived(series.values[n : len(series.values) - n], f"trim({n})")


def normalize_by_active(response: BinSeries, active: BinSeries) -> BinSeries:
    """Divide response counts by active-session counts, 0 where none active."""
    if len(response.values) != len(active.values):
        raise LengthMismatch(
            f"response has {len(response.values)} bins, active {len(active.values)}"
        )
    out = np.zeros_like(response.values)
    nonzero = active.values > 0
    out[nonzero] = response.values[nonzero] / active.values[nonzero]
    return response.derived(out, "normalize_by_active")


def z_normalize(series: BinSeries) -> BinSeries:
    """Center to mean 0 and scale to population standard deviation 1.

    A (near-)constant series cannot be scaled; it becomes all zeros and the
    degenerate flag is set, which downstream forces p = 1.
    """
    values = series.values
    if len(values) < 2:
        raise SeriesTooShort(f"z-normalize needs >= 2 bins, got {len(values)}")
    std = float(np.std(values))
    if std < DEGENERATE_STD:
        return series.derived(np.zeros_like(values), "z_normalize", degenerate=True)
    return series.derived((values - np.mean(values)) / std, "z_normalize")


def detrend_linear(series: BinSeries) -> BinSeries:
    """Subtract the least-squares line over (bin index, value)."""
    values = series.values
    if len(values) < 2:
        raise SeriesTooShort(f"detrend needs >= 2 bins, got {len(values)}")
    x = np.arange(len(values), dtype=np.float64)
    slope, intercept = np.polyfit(x, values, 1)
    return series.derived(values - (slope * x + intercept), "detrend_linear")
