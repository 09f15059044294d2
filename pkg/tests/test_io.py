import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emofda.fdcore import MultiChannelCurve, TimeGrid
from emofda.io import (
    AU_LABELS,
    EMOTIONS,
    IngestError,
    VideoRecord,
    emotion_code,
    emotion_name,
    ingest_csv,
    load_manifest,
    parse_ravdess_name,
    read_curve_csv,
    write_csv,
    write_curve_csv,
)


def openface_file(path, n_rows=110, drop=(), extra=True, seed=0, values=None):
    rng = np.random.default_rng(seed)
    cols = ["frame"] + (["face_id", "timestamp", "confidence", "success"] if extra else [])
    aus = [au for au in AU_LABELS if au not in drop]
    # OpenFace pads headers and values with a space
    header = cols + [f"{au}_r" for au in aus] + (["AU01_c"] if extra else [])
    lines = [", ".join(header)]
    vals = rng.uniform(0, 5, (n_rows, len(aus))) if values is None else values
    for i in range(n_rows):
        row = [str(i + 1)] + (["0", f"{i / 30:.3f}", "0.98", "1"] if extra else [])
        row += [f"{v:.2f}" for v in vals[i]] + (["1"] if extra else [])
        lines.append(", ".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_emotion_codes():
    assert EMOTIONS[4] == "angry"
    assert emotion_code("05") == 5 and emotion_code("angry") == 5 and emotion_code(8) == 8
    assert emotion_name(1) == "neutral"
    with pytest.raises(ValueError):
        emotion_code("09")
    with pytest.raises(ValueError):
        emotion_code("bored")


def test_ravdess_filename():
    assert parse_ravdess_name("videos/02-01-05-01-01-01-12.csv") == (5, "12")
    assert emotion_name(parse_ravdess_name("02-01-05-01-01-01-12.csv")[0]) == "angry"
    with pytest.raises(IngestError, match="RAVDESS"):
        parse_ravdess_name("clip7.csv")
    with pytest.raises(IngestError, match="emotion"):
        parse_ravdess_name("02-01-09-01-01-01-12.csv")


def test_happy_path(tmp_path):
    rec = ingest_csv(openface_file(tmp_path / "01-01-03-01-02-01-07.csv"))
    assert rec.frames.shape == (110, 17)
    assert rec.labels == AU_LABELS
    assert rec.emotion == 3 and rec.group == 2 and rec.actor == "07"
    curve = rec.to_curve()
    assert curve.n_channels == 17 and len(curve.grid) == 110
    assert curve.grid.points[0] == 0.0 and curve.grid.points[-1] == 1.0


def test_missing_column_named(tmp_path):
    with pytest.raises(IngestError, match="AU45"):
        ingest_csv(openface_file(tmp_path / "01-01-03-01-02-01-07.csv", drop=("AU45",)))


def test_out_of_range_row_reported(tmp_path):
    vals = np.full((5, 17), 1.0)
    vals[3, 2] = 5.5
    path = openface_file(tmp_path / "01-01-03-01-02-01-07.csv", n_rows=5, values=vals)
    with pytest.raises(IngestError, match=r"row 4, column AU04") as info:
        ingest_csv(path)
    assert "01-01-03-01-02-01-07.csv" in str(info.value)


def test_empty_and_unparseable(tmp_path):
    empty = tmp_path / "01-01-03-01-02-01-07.csv"
    empty.write_text("")
    with pytest.raises(IngestError, match="empty"):
        ingest_csv(empty)
    header_only = tmp_path / "01-01-03-01-02-01-08.csv"
    header_only.write_text("frame," + ",".join(f"{a}_r" for a in AU_LABELS) + "\n")
    with pytest.raises(IngestError, match="no data"):
        ingest_csv(header_only)
    bad = tmp_path / "01-01-03-01-02-01-09.csv"
    bad.write_text("frame," + ",".join(f"{a}_r" for a in AU_LABELS) + "\n1," + ",".join(["x"] * 17) + "\n")
    with pytest.raises(IngestError, match="row 1"):
        ingest_csv(bad)


def test_manifest(tmp_path):
    openface_file(tmp_path / "clip_a.csv", n_rows=4)
    (tmp_path / "manifest.csv").write_text("file,emotion,actor\nclip_a.csv,fearful,A3\n")
    manifest = load_manifest(tmp_path / "manifest.csv")
    rec = ingest_csv(tmp_path / "clip_a.csv", manifest)
    assert rec.emotion == 6 and rec.actor == "A3"
    with pytest.raises(IngestError, match="manifest"):
        ingest_csv(openface_file(tmp_path / "clip_b.csv", n_rows=4), manifest)
    (tmp_path / "bad.csv").write_text("name,label\n")
    with pytest.raises(IngestError):
        load_manifest(tmp_path / "bad.csv")


def test_non_increasing_frames():
    rec = VideoRecord("x.csv", 1, "01", [1, 1, 2], np.zeros((3, 17)))
    with pytest.raises(IngestError, match="increasing"):
        rec.to_curve()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40))
def test_round_trip_bit_exact(tmp_path_factory, seed, n):
    rng = np.random.default_rng(seed)
    frames = rng.uniform(0, 5, (n, 17))
    frames[0, 0] = 0.1 + 0.2  # values with long expansions
    frames[-1, -1] = 5.0
    rec = VideoRecord("02-01-04-01-01-01-03.csv", 4, "03", np.arange(1, n + 1), frames)
    path = tmp_path_factory.mktemp("rt") / "02-01-04-01-01-01-03.csv"
    write_csv(rec, path)
    back = ingest_csv(path)
    assert back.frames.tobytes() == rec.frames.tobytes()
    assert back.frame_index.tobytes() == rec.frame_index.tobytes()


def test_curve_file_round_trip(tmp_path):
    grid = TimeGrid.uniform(13)
    rng = np.random.default_rng(0)
    c = MultiChannelCurve(grid, rng.normal(size=(3, 13)), ("AU01", "AU12", "AU25"), "02-01-02-01-01-01-01", 1)
    path = tmp_path / "02-01-02-01-01-01-01.csv"
    write_curve_csv(c, path)
    back = read_curve_csv(path)
    assert back.values.tobytes() == c.values.tobytes()
    assert back.grid == grid and back.group == 1 and back.channel_labels == c.channel_labels
