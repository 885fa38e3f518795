"""Keypoint trace types and the canonical line-oriented trace format.

A trace is a time series of body-keypoint frames. Each frame carries
exactly ten points with coordinates normalized to [0, 1]; points 0-4 are
the top part (head) and points 5-9 the middle part (torso and arms).
Traces are stored one JSON record per line: a header record with frame
rate and session label, then one record per frame. The writer emits a
single canonical form so that parse -> serialize is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

from .errors import InputFormatError
from .util import atomic_write_text

TOP_INDICES = tuple(range(0, 5))
MID_INDICES = tuple(range(5, 10))
POINTS_PER_FRAME = 10


@dataclass(frozen=True)
class Point:
    """One detected body point: normalized position plus detector confidence.

    An undetected point is stored as (0, 0) with confidence 0.
    """

    x: float
    y: float
    confidence: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "confidence", float(self.confidence))
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"x coordinate {self.x!r} outside [0, 1]")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"y coordinate {self.y!r} outside [0, 1]")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence {self.confidence!r} outside [0, 1]")


@dataclass(frozen=True)
class KeypointFrame:
    """All ten body points observed in one video frame."""

    frame_index: int
    points: tuple[Point, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if not isinstance(self.frame_index, int) or self.frame_index < 0:
            raise ValueError(f"frame_index must be a non-negative integer, got {self.frame_index!r}")
        if len(self.points) != POINTS_PER_FRAME:
            raise ValueError(f"expected {POINTS_PER_FRAME} points, got {len(self.points)}")


@dataclass(frozen=True)
class LabeledTrace:
    """A keypoint time series with an optional session-level label.

    label 1 means the high-concentration state, 0 the low one, None an
    unlabeled session (inference input). fps defaults to 20 so that a
    50-frame window spans 2.5 seconds.
    """

    frames: tuple[KeypointFrame, ...]
    label: int | None = None
    fps: float = 20.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "fps", float(self.fps))
        if self.label not in (0, 1, None):
            raise ValueError(f"label must be 0, 1 or None, got {self.label!r}")
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps!r}")
        previous = -1
        for frame in self.frames:
            if frame.frame_index <= previous:
                raise ValueError(
                    f"frame_index {frame.frame_index} not strictly increasing (previous {previous})"
                )
            previous = frame.frame_index

    def __len__(self) -> int:
        return len(self.frames)


def _require_number(value: object, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{what} must be a number, got {value!r}")
    return float(value)


def _parse_header(record: object) -> tuple[float, int | None]:
    if not isinstance(record, dict) or set(record) != {"fps", "label"}:
        raise ValueError('header must be {"fps": <real>, "label": <0|1|null>}')
    fps = _require_number(record["fps"], "fps")
    label = record["label"]
    if label is not None and label not in (0, 1):
        raise ValueError(f"label must be 0, 1 or null, got {label!r}")
    return fps, label


def _parse_frame(record: object) -> KeypointFrame:
    if not isinstance(record, dict) or set(record) != {"frame", "points"}:
        raise ValueError('frame record must be {"frame": <int>, "points": [[x,y,c] x10]}')
    index = record["frame"]
    if isinstance(index, bool) or not isinstance(index, int):
        raise ValueError(f"frame must be an integer, got {index!r}")
    raw_points = record["points"]
    if not isinstance(raw_points, list) or len(raw_points) != POINTS_PER_FRAME:
        count = len(raw_points) if isinstance(raw_points, list) else "non-list"
        raise ValueError(f"frame {index}: expected {POINTS_PER_FRAME} points, got {count}")
    points = []
    for point_index, entry in enumerate(raw_points):
        if not isinstance(entry, list) or len(entry) != 3:
            raise ValueError(f"frame {index}, point {point_index}: expected [x, y, confidence]")
        try:
            points.append(
                Point(
                    _require_number(entry[0], "x"),
                    _require_number(entry[1], "y"),
                    _require_number(entry[2], "confidence"),
                )
            )
        except ValueError as exc:
            raise ValueError(f"frame {index}, point {point_index}: {exc}") from exc
    return KeypointFrame(frame_index=index, points=tuple(points))


def parse_trace(
    stream: IO[str] | IO[bytes] | Iterable[str] | Iterable[bytes],
    *,
    label: int | None = None,
    fps: float | None = None,
    source: str | None = None,
) -> LabeledTrace:
    """Parse a canonical trace from a line stream.

    `label` and `fps`, when given, override the header values. Raises
    InputFormatError with a line number on any malformed or out-of-range
    record.
    """
    frames: list[KeypointFrame] = []
    header_fps: float | None = None
    header_label: int | None = None
    saw_header = False
    previous_index = -1
    line_number = 0
    for line_number, raw in enumerate(stream, start=1):
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
        text = text.strip()
        if not text:
            continue
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputFormatError(f"invalid JSON ({exc.msg})", source=source, line=line_number) from exc
        try:
            if not saw_header:
                header_fps, header_label = _parse_header(record)
                saw_header = True
                continue
            frame = _parse_frame(record)
            if frame.frame_index <= previous_index:
                raise ValueError(
                    f"frame_index {frame.frame_index} not strictly increasing (previous {previous_index})"
                )
            previous_index = frame.frame_index
            frames.append(frame)
        except ValueError as exc:
            raise InputFormatError(str(exc), source=source, line=line_number) from exc
    if not saw_header:
        raise InputFormatError("missing header record", source=source, line=line_number or 1)
    effective_fps = fps if fps is not None else header_fps
    effective_label = label if label is not None else header_label
    try:
        return LabeledTrace(frames=tuple(frames), label=effective_label, fps=effective_fps)
    except ValueError as exc:
        raise InputFormatError(str(exc), source=source) from exc


def serialize_trace(trace: LabeledTrace, sink: IO[str]) -> None:
    """Write `trace` in the canonical line format (inverse of parse_trace)."""
    sink.write(trace_to_text(trace))


def trace_to_text(trace: LabeledTrace) -> str:
    lines = [json.dumps({"fps": trace.fps, "label": trace.label}, separators=(",", ":"))]
    for frame in trace.frames:
        record = {
            "frame": frame.frame_index,
            "points": [[p.x, p.y, p.confidence] for p in frame.points],
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def load_trace(path: str | Path, *, label: int | None = None, fps: float | None = None) -> LabeledTrace:
    with open(path, "rb") as handle:
        return parse_trace(handle, label=label, fps=fps, source=str(path))


def save_trace(trace: LabeledTrace, path: str | Path) -> None:
    atomic_write_text(path, trace_to_text(trace))


def relabel(trace: LabeledTrace, label: int | None) -> LabeledTrace:
    return replace(trace, label=label)


def adapt_detector_output(
    records: Iterable[Mapping[str, object]],
    mapping: Sequence[int],
    *,
    image_width: float | None = None,
    image_height: float | None = None,
) -> list[KeypointFrame]:
    """Convert pose-detector frame records into canonical keypoint frames.

    Each record holds a "people" array whose entries carry a flat
    [x0, y0, c0, x1, y1, c1, ...] keypoint list (either directly or under
    a "pose_keypoints_2d" key); only the first person is used. `mapping`
    assigns each canonical index 0-9 to a detector keypoint index. When
    image dimensions are given, pixel coordinates are normalized by them
    and clamped into [0, 1]. Missing people and zero-confidence keypoints
    become (0, 0) with confidence 0.
    """
    mapping = list(mapping)
    if len(mapping) != POINTS_PER_FRAME:
        raise ValueError(f"mapping must have exactly {POINTS_PER_FRAME} entries, got {len(mapping)}")
    if any(isinstance(m, bool) or not isinstance(m, int) or m < 0 for m in mapping):
        raise ValueError("mapping entries must be non-negative integers")
    if (image_width is None) != (image_height is None):
        raise ValueError("image_width and image_height must be given together")
    if image_width is not None and (image_width <= 0 or image_height <= 0):
        raise ValueError("image dimensions must be positive")

    missing = Point(0.0, 0.0, 0.0)
    frames: list[KeypointFrame] = []
    for frame_index, record in enumerate(records):
        people = record.get("people")
        if people is None or not isinstance(people, list):
            raise InputFormatError('detector record missing "people" array', line=frame_index + 1)
        if not people:
            frames.append(KeypointFrame(frame_index, (missing,) * POINTS_PER_FRAME))
            continue
        person = people[0]
        flat = person.get("pose_keypoints_2d") if isinstance(person, Mapping) else person
        if not isinstance(flat, list):
            raise InputFormatError("person entry has no flat keypoint list", line=frame_index + 1)
        points = []
        for detector_index in mapping:
            offset = 3 * detector_index
            if offset + 3 > len(flat):
                raise InputFormatError(
                    f"detector index {detector_index} out of range "
                    f"(record has {len(flat) // 3} keypoints)",
                    line=frame_index + 1,
                )
            x, y, confidence = (float(flat[offset + k]) for k in range(3))
            if confidence <= 0.0:
                points.append(missing)
                continue
            if image_width is not None:
                x /= image_width
                y /= image_height
            x = min(max(x, 0.0), 1.0)
            y = min(max(y, 0.0), 1.0)
            confidence = min(max(confidence, 0.0), 1.0)
            points.append(Point(x, y, confidence))
        frames.append(KeypointFrame(frame_index, tuple(points)))
    return frames
