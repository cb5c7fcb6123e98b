"""Session log parsing and cleaning.

The input is a CSV with header ``session_id,video_id,wall_time_ms,kind,
position_s[,seek_to_s]`` where kind is one of ``play|pause|seek|end``.
``seek`` rows carry the source position in ``position_s`` and the target in
``seek_to_s``; both are collapsed into a single Seek event on parse. See
docs/formats.md for the full schema.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable

from .errors import (
    MalformedRecord,
    NegativePosition,
    UnknownEventKind,
)

logger = logging.getLogger(__name__)

HEADER = ["session_id", "video_id", "wall_time_ms", "kind", "position_s", "seek_to_s"]


class EventKind(enum.Enum):
    PLAY = "play"
    PAUSE = "pause"
    SEEK = "seek"
    END = "end"


@dataclass(frozen=True)
class InteractionEvent:
    """One playback event. Seek rows carry both from (position) and to."""

    session_id: str
    video_id: str
    wall_time: int  # milliseconds
    kind: EventKind
    position: float  # video-time seconds; for seeks, the source position
    seek_to: float | None = None  # present iff kind is SEEK

    @property
    def effective_position(self) -> float:
        """Where the playhead sits after this event."""
        if self.kind is EventKind.SEEK:
            assert self.seek_to is not None
            return self.seek_to
        return self.position


@dataclass
class Session:
    """All events of one anonymous session on one video, time-sorted."""

    session_id: str
    video_id: str
    events: list[InteractionEvent]
    dropout_position: float | None = field(default=None, compare=False)

    @property
    def seeks(self) -> list[InteractionEvent]:
        return [e for e in self.events if e.kind is EventKind.SEEK]

    @property
    def rewinds(self) -> list[InteractionEvent]:
        """Seeks whose target precedes their source."""
        return [e for e in self.seeks if e.seek_to < e.position]

    @property
    def skips(self) -> list[InteractionEvent]:
        """Seeks whose target follows their source."""
        return [e for e in self.seeks if e.seek_to > e.position]

    def has_play(self) -> bool:
        return any(e.kind is EventKind.PLAY for e in self.events)


@dataclass
class ParseResult:
    """Parsed sessions plus a per-line error report."""

    sessions: list[Session]
    malformed: list[tuple[int, str]] = field(default_factory=list)
    noop_seeks: int = 0
    n_lines: int = 0


def _parse_float(value: str, name: str, line_no: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise MalformedRecord(f"bad {name} {value!r}", line_no) from None


def _parse_row(row: list[str], line_no: int) -> InteractionEvent | None:
    """Build one event from a CSV row; None for discarded no-op seeks."""
    if len(row) not in (5, 6) or any(not f for f in row[:5]):
        raise MalformedRecord(f"expected 5 or 6 fields, got {len(row)}", line_no)
    session_id, video_id, wall_raw, kind_raw, pos_raw = row[:5]
    try:
        wall_time = int(wall_raw)
    except ValueError:
        raise MalformedRecord(f"bad wall_time_ms {wall_raw!r}", line_no) from None
    try:
        kind = EventKind(kind_raw.strip().lower())
    except ValueError:
        raise UnknownEventKind(f"unknown event kind {kind_raw!r}", line_no) from None
    position = _parse_float(pos_raw, "position_s", line_no)
    if position < 0:
        raise NegativePosition(f"position {position} < 0", line_no)

    seek_to = None
    if kind is EventKind.SEEK:
        if len(row) < 6 or not row[5]:
            raise MalformedRecord("seek record without seek_to_s", line_no)
        seek_to = _parse_float(row[5], "seek_to_s", line_no)
        if seek_to < 0:
            raise NegativePosition(f"seek_to {seek_to} < 0", line_no)
        if seek_to == position:
            return None  # no-op seek: neither rewind nor skip
    elif len(row) == 6 and row[5]:
        raise MalformedRecord(f"seek_to_s set on {kind.value!r} record", line_no)

    return InteractionEvent(session_id, video_id, wall_time, kind, position, seek_to)


def parse_session_log(lines: Iterable[str], *, strict: bool = True) -> ParseResult:
    """Parse a session log into one Session per (session_id, video_id).

    Events are stably sorted by wall time within each session, so ties keep
    input order. With ``strict`` (default) the first malformed line raises;
    otherwise malformed lines are skipped and reported in the result with
    their line numbers. Seeks with identical source and target are dropped
    as no-ops.
    """
    reader = csv.reader(lines)
    result = ParseResult(sessions=[])
    grouped: dict[tuple[str, str], list[InteractionEvent]] = {}
    seen_data = False
    for line_no, row in enumerate(reader, start=1):
        row = [f.strip() for f in row]
        if not row or not any(row) or row[0].startswith("#"):
            continue
        if not seen_data and row[0] == "session_id":
            continue  # header
        seen_data = True
        result.n_lines += 1
        try:
            event = _parse_row(row, line_no)
        except MalformedRecord as exc:
            if strict:
                raise
            logger.warning("skipping malformed record: %s", exc)
            result.malformed.append((line_no, str(exc)))
            continue
        if event is None:
            result.noop_seeks += 1
            continue
        grouped.setdefault((event.session_id, event.video_id), []).append(event)

    for (session_id, video_id), events in grouped.items():
        events.sort(key=lambda e: e.wall_time)  # stable: ties keep input order
        result.sessions.append(Session(session_id, video_id, events))
    return result


def serialize_sessions(sessions: Iterable[Session]) -> str:
    """Write sessions back to the documented CSV format (parse round-trips)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for session in sessions:
        for e in session.events:
            writer.writerow(
                [
                    e.session_id,
                    e.video_id,
                    e.wall_time,
                    e.kind.value,
                    repr(e.position),
                    "" if e.seek_to is None else repr(e.seek_to),
                ]
            )
    return buf.getvalue()


def clean_sessions(sessions: list[Session]) -> list[Session]:
    """Drop sessions without any Play event (idempotent)."""
    kept = [s for s in sessions if s.has_play()]
    removed = len(sessions) - len(kept)
    if removed:
        logger.info("removed %d session(s) without a play event", removed)
    return kept


def derive_dropout(
    session: Session, duration: float, bin_width: float = 5.0
) -> float | None:
    """Last known playback position if the session abandoned the video.

    A session counts as a dropout when it neither reaches an End event nor
    a final position within one bin width of the video end. Returns None
    for completed sessions (and for empty ones).
    """
    if not session.events:
        return None
    if any(e.kind is EventKind.END for e in session.events):
        return None
    last = session.events[-1].effective_position
    if last >= duration - bin_width:
        return None
    return last
