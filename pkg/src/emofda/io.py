"""Reading and writing per-video action-unit CSV files.

Two layouts are handled:

* OpenFace output: a ``frame`` column plus ``AU<NN>_r`` intensity columns
  (extra columns are ignored, header/value padding is stripped).
* Curve files written by this package: a ``t`` column on [0, 1] plus one
  column per AU label, used for smoothed and registered curves.

Emotion labels follow the RAVDESS filename convention
``modality-channel-emotion-intensity-statement-repetition-actor`` unless a
manifest is supplied.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .fdcore import MultiChannelCurve, TimeGrid

__all__ = [
    "AU_LABELS",
    "EMOTIONS",
    "IngestError",
    "VideoRecord",
    "emotion_code",
    "emotion_name",
    "parse_ravdess_name",
    "load_manifest",
    "ingest_csv",
    "write_csv",
    "read_curve_csv",
    "write_curve_csv",
]

AU_LABELS = (
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12",
    "AU14", "AU15", "AU17", "AU20", "AU23", "AU25", "AU26", "AU45",
)
# RAVDESS emotion codes 01..08; group index = code - 1, 0 = neutral
EMOTIONS = ("neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised")
AU_RANGE = (0.0, 5.0)


class IngestError(ValueError):
    """A video file could not be read; the message names the file."""


def emotion_name(code: int) -> str:
    if not 1 <= code <= len(EMOTIONS):
        raise ValueError(f"emotion code must be 1..{len(EMOTIONS)}, got {code}")
    return EMOTIONS[code - 1]


def emotion_code(label) -> int:
    """Code 1..8 from a code (``5``, ``"05"``) or a name (``"angry"``)."""
    text = str(label).strip().lower()
    if text in EMOTIONS:
        return EMOTIONS.index(text) + 1
    if text == "surprise":
        return EMOTIONS.index("surprised") + 1
    try:
        code = int(text)
    except ValueError:
        raise ValueError(f"unknown emotion {label!r}") from None
    emotion_name(code)
    return code


@dataclass(frozen=True, eq=False)
class VideoRecord:
    """Raw per-frame AU intensities of one video.

    ``frames`` has shape (n_frames, n_AUs) in the order of ``labels``.
    """

    path: str
    emotion: int
    actor: str
    frame_index: np.ndarray
    frames: np.ndarray
    labels: tuple = AU_LABELS

    def __post_init__(self):
        frames = np.array(self.frames, dtype=float)
        index = np.array(self.frame_index, dtype=float)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise IngestError(f"{self.path}: no frames")
        if frames.shape != (index.size, len(self.labels)):
            raise IngestError(f"{self.path}: frame table shape {frames.shape} is inconsistent")
        bad = np.argwhere((frames < AU_RANGE[0]) | (frames > AU_RANGE[1]) | ~np.isfinite(frames))
        if bad.size:
            r, c = bad[0]
            raise IngestError(
                f"{self.path}: row {r + 1}, column {self.labels[c]}: intensity "
                f"{frames[r, c]} outside [0, 5]"
            )
        emotion_name(self.emotion)
        frames.setflags(write=False)
        index.setflags(write=False)
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "frame_index", index)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def group(self) -> int:
        return self.emotion - 1

    @property
    def video_id(self) -> str:
        return Path(self.path).stem

    def normalized_times(self) -> np.ndarray:
        idx = self.frame_index
        if idx.size < 2 or np.any(np.diff(idx) <= 0):
            raise IngestError(f"{self.path}: frame numbers must be strictly increasing")
        return (idx - idx[0]) / (idx[-1] - idx[0])

    def to_curve(self) -> MultiChannelCurve:
        """Frame range rescaled to [0, 1]."""
        grid = TimeGrid(self.normalized_times(), 1.0)
        return MultiChannelCurve(grid, self.frames.T, self.labels, self.video_id, self.group)


def parse_ravdess_name(path) -> tuple:
    """``(emotion_code, actor)`` from a RAVDESS-style file name."""
    stem = Path(path).stem
    parts = stem.split("-")
    if len(parts) != 7 or not all(p.isdigit() for p in parts):
        raise IngestError(
            f"{path}: file name {stem!r} does not follow the RAVDESS convention "
            "(seven hyphen-separated numeric fields)"
        )
    try:
        code = emotion_code(parts[2])
    except ValueError:
        raise IngestError(f"{path}: unknown RAVDESS emotion code {parts[2]!r}") from None
    return code, parts[6]


def load_manifest(path) -> dict:
    """Map file names to ``(emotion_code, actor)``.

    The manifest is a CSV with columns ``file``, ``emotion`` (code or name)
    and optionally ``actor``.
    """
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in reader.fieldnames or []]
        if "file" not in fields or "emotion" not in fields:
            raise IngestError(f"{path}: manifest needs 'file' and 'emotion' columns")
        for i, row in enumerate(reader, start=2):
            row = {k.strip(): (v or "").strip() for k, v in row.items()}
            try:
                code = emotion_code(row["emotion"])
            except ValueError as exc:
                raise IngestError(f"{path}: line {i}: {exc}") from None
            out[Path(row["file"]).name] = (code, row.get("actor", "") or "")
    return out


def _labels_for(path, manifest):
    if manifest is None:
        return parse_ravdess_name(path)
    name = Path(path).name
    if name not in manifest:
        raise IngestError(f"{path}: not listed in the manifest")
    return manifest[name]


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[cell.strip() for cell in row] for row in csv.reader(fh)]
    rows = [r for r in rows if any(r)]
    if not rows:
        raise IngestError(f"{path}: file is empty")
    return rows[0], rows[1:]


def ingest_csv(path, manifest: Optional[Mapping] = None) -> VideoRecord:
    """Read an OpenFace-style CSV into a :class:`VideoRecord`.

    Parameters
    ----------
    path : path-like
    manifest : mapping, optional
        File name to ``(emotion_code, actor)``; the RAVDESS file name is
        parsed when omitted.
    """
    path = os.fspath(path)
    header, body = _read_table(path)
    if not body:
        raise IngestError(f"{path}: no data rows")
    col = {name: i for i, name in enumerate(header)}
    missing = [au for au in AU_LABELS if f"{au}_r" not in col]
    if missing:
        raise IngestError(f"{path}: missing AU intensity columns: {', '.join(missing)}")
    if "frame" not in col:
        raise IngestError(f"{path}: missing 'frame' column")
    wanted = [col["frame"]] + [col[f"{au}_r"] for au in AU_LABELS]
    table = np.empty((len(body), len(wanted)))
    for r, row in enumerate(body):
        try:
            table[r] = [float(row[i]) for i in wanted]
        except (ValueError, IndexError):
            raise IngestError(f"{path}: row {r + 1}: unparseable or missing values") from None
    code, actor = _labels_for(path, manifest)
    return VideoRecord(path, code, actor, table[:, 0], table[:, 1:], AU_LABELS)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(record: VideoRecord, path) -> None:
    """Write ``record`` in the OpenFace column layout (17 significant digits)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame"] + [f"{au}_r" for au in record.labels])
        for idx, row in zip(record.frame_index, record.frames):
            frame = str(int(idx)) if float(idx).is_integer() else _fmt(idx)
            w.writerow([frame] + [_fmt(v) for v in row])


def write_curve_csv(curve: MultiChannelCurve, path) -> None:
    """Write a multichannel curve as ``t`` plus one column per channel."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + list(curve.channel_labels))
        for p, t in enumerate(curve.grid.points):
            w.writerow([_fmt(t)] + [_fmt(v) for v in curve.values[:, p]])


def read_curve_csv(path, manifest: Optional[Mapping] = None) -> MultiChannelCurve:
    """Read a file written by :func:`write_curve_csv`; emotion as in ingest."""
    path = os.fspath(path)
    header, body = _read_table(path)
    if not header or header[0] != "t":
        raise IngestError(f"{path}: curve files start with a 't' column")
    if len(body) < 2:
        raise IngestError(f"{path}: need at least 2 time points")
    try:
        table = np.array([[float(v) for v in row] for row in body])
    except ValueError:
        raise IngestError(f"{path}: unparseable values") from None
    if table.shape[1] != len(header):
        raise IngestError(f"{path}: ragged rows")
    code, _ = _labels_for(path, manifest)
    grid = TimeGrid(table[:, 0], 1.0)
    return MultiChannelCurve(grid, table[:, 1:].T, tuple(header[1:]), Path(path).stem, code - 1)


def list_csv(directory, exclude: Sequence[str] = ()) -> list:
    """Sorted CSV files in ``directory`` (names in ``exclude`` skipped)."""
    d = Path(directory)
    if not d.is_dir():
        raise IngestError(f"{directory}: not a directory")
    skip = {Path(e).name for e in exclude}
    return sorted(p for p in d.glob("*.csv") if p.name not in skip)
