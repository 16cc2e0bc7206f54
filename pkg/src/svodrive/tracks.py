"""Track-file ingest for the INTERACTION-style CSV convention."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Union

from .errors import MalformedRow, MissingColumn

# logical field -> column header in the file
INTERACTION_SCHEMA: dict[str, str] = {
    "track_id": "track_id",
    "frame_id": "frame_id",
    "timestamp": "timestamp_ms",
    "x": "x",
    "y": "y",
    "vx": "vx",
    "vy": "vy",
    "heading": "psi_rad",
    "length": "length",
    "width": "width",
}
AGENT_TYPE_COLUMN = "agent_type"
VEHICLE_TYPES = frozenset({"car"})

_INT_FIELDS = ("track_id", "frame_id", "timestamp")


@dataclass(frozen=True, slots=True)
class TrackRecord:
    track_id: int
    frame_id: int
    timestamp: int  # ms
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    length: float
    width: float

    @property
    def speed(self) -> float:
        return (self.vx * self.vx + self.vy * self.vy) ** 0.5


Source = Union[str, os.PathLike, bytes, IO[bytes], IO[str]]


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def load_tracks(source: Source, schema: Mapping[str, str] | None = None) -> list[TrackRecord]:
    """Parse a comma-separated track file into records sorted by (track, time).

    Rows whose ``agent_type`` column exists and is not a car are skipped
    (pedestrians and bicycles carry no vehicle footprint).
    """
    schema = dict(INTERACTION_SCHEMA if schema is None else schema)
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumn("track file has no header row") from None
        missing = [col for col in schema.values() if col not in header]
        if missing:
            raise MissingColumn(f"missing columns: {', '.join(missing)}")
        index = {field: header.index(col) for field, col in schema.items()}
        agent_idx = header.index(AGENT_TYPE_COLUMN) if AGENT_TYPE_COLUMN in header else None

        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if agent_idx is not None and row[agent_idx].strip() not in VEHICLE_TYPES:
                continue
            records.append(_parse_row(row, index, lineno))
    finally:
        if owned:
            fh.close()

    records.sort(key=lambda r: (r.track_id, r.timestamp))
    _check_monotone(records)
    return records


def _parse_row(row: list[str], index: Mapping[str, int], lineno: int) -> TrackRecord:
    values = {}
    for field, i in index.items():
        try:
            raw = row[i].strip()
        except IndexError:
            raise MalformedRow(f"line {lineno}: too few fields") from None
        try:
            values[field] = int(float(raw)) if field in _INT_FIELDS else float(raw)
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric {field!r} value {raw!r}") from None
    if values["length"] <= 0 or values["width"] <= 0:
        raise MalformedRow(f"line {lineno}: vehicle length and width must be positive")
    return TrackRecord(**values)


def _check_monotone(records: list[TrackRecord]) -> None:
    for prev, cur in zip(records, records[1:]):
        if prev.track_id == cur.track_id and cur.timestamp <= prev.timestamp:
            raise MalformedRow(
                f"track {cur.track_id}: duplicate timestamp {cur.timestamp}"
            )


def group_tracks(records: Iterable[TrackRecord]) -> dict[int, list[TrackRecord]]:
    groups: dict[int, list[TrackRecord]] = {}
    for rec in records:
        groups.setdefault(rec.track_id, []).append(rec)
    return groups
