"""Visual-change stimulus series from per-frame object annotations.

A frame's complexity under a modality filter is the number of tracking IDs
that appear in it but not in the previous frame, restricted to object
classes of the filtered modalities. The binarized variant keeps only
whether any such change occurred.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import MalformedRecord, UnsortedFrames

logger = logging.getLogger(__name__)


class Modality(enum.Enum):
    TEXTUAL = "textual"
    INFOVIS = "infovis"
    OTHER = "other"


TEXTUAL_CLASSES = frozenset(
    {
        "text object",
        "title",
        "line of text",
        "scientific expressions",
        "systems of equations",
        "terms",
    }
)

INFOVIS_CLASSES = frozenset(
    {
        "information visualization",
        "image object",
        "informative image",
        "technical drawing",
        "structural object",
        "barchart",
        "linechart",
        "scatterplot",
        "diagram component",
        "axis",
        "data visualization",
        "chemical structure",
        "table",
        "row",
        "column",
    }
)


def classify_modality(class_label: str) -> Modality:
    """Map an annotation class label to its modality (case-insensitive).

    Labels in neither taxonomy list fall through to Modality.OTHER, which
    is excluded from every analysis series.
    """
    key = class_label.strip().casefold()
    if key in TEXTUAL_CLASSES:
        return Modality.TEXTUAL
    if key in INFOVIS_CLASSES:
        return Modality.INFOVIS
    return Modality.OTHER


@dataclass(frozen=True)
class VisualObject:
    tracking_id: int
    class_label: str
    bbox: tuple[float, float, float, float]  # x, y, w, h in pixels

    @property
    def modality(self) -> Modality:
        return classify_modality(self.class_label)


@dataclass(frozen=True)
class AnnotationFrame:
    video_id: str
    timestamp: float  # video-time seconds
    objects: tuple[VisualObject, ...]


@dataclass(frozen=True)
class ComplexityEvent:
    timestamp: float
    count: int  # newly appearing tracked objects under the filter


def load_annotations(path: str | Path) -> list[AnnotationFrame]:
    """Read one video's annotation JSON (see docs/formats.md)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        video_id = doc["video_id"]
        raw_frames = doc["frames"]
    except (TypeError, KeyError) as exc:
        raise MalformedRecord(f"{path}: missing {exc} field") from None
    frames = []
    for raw in raw_frames:
        objects = []
        seen_ids = set()
        for obj in raw.get("objects", []):
            try:
                tid = int(obj["id"])
                cls = str(obj["class"])
                bbox = tuple(float(v) for v in obj["bbox"])
            except (TypeError, KeyError, ValueError) as exc:
                raise MalformedRecord(f"{path}: bad object {obj!r} ({exc})") from None
            if len(bbox) != 4:
                raise MalformedRecord(f"{path}: bbox must have 4 entries, got {bbox}")
            if tid in seen_ids:
                raise MalformedRecord(f"{path}: duplicate tracking id {tid} in frame")
            seen_ids.add(tid)
            objects.append(VisualObject(tid, cls, bbox))
        frames.append(AnnotationFrame(video_id, float(raw["t_s"]), tuple(objects)))
    return frames


def complexity_events(
    frames: list[AnnotationFrame], modalities: Iterable[Modality]
) -> list[ComplexityEvent]:
    """Per-frame counts of newly appearing tracking IDs under the filter.

    The first frame counts all its filtered objects as new; a tracking ID
    that disappears and later returns counts as new again (novelty is
    strictly frame-to-frame). Raises UnsortedFrames unless timestamps are
    strictly increasing.
    """
    wanted = frozenset(modalities)
    if not wanted:
        raise ValueError("modality filter must be nonempty")
    events = []
    previous_ids: frozenset[int] = frozenset()
    last_t = None
    for frame in frames:
        if last_t is not None and frame.timestamp <= last_t:
            raise UnsortedFrames(
                f"frame at {frame.timestamp} s does not follow {last_t} s"
            )
        last_t = frame.timestamp
        current_ids = frozenset(
            o.tracking_id for o in frame.objects if o.modality in wanted
        )
        events.append(
            ComplexityEvent(frame.timestamp, len(current_ids - previous_ids))
        )
        previous_ids = current_ids
    return events


def binarize(events: list[ComplexityEvent]) -> list[ComplexityEvent]:
    """Collapse counts to 0/1: did any filtered change occur in this frame."""
    return [
        ComplexityEvent(e.timestamp, 1 if e.count >= 1 else 0) for e in events
    ]
