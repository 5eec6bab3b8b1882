"""Frame sources: directories, framestreams, decoder subprocesses."""

from __future__ import annotations

import io
import sys

import numpy as np
import pytest
from PIL import Image

from cola.frames import (
    Frame,
    FrameSource,
    FrameSourceError,
    TruncatedStreamError,
    encode_frame_png,
    next_frame,
    open_frame_source,
    write_framestream,
)

from conftest import rgb_frame_array


def build_stream_bytes(width, height, fps_milli, count, frames):
    header = f"FRAMESTREAM 1 {width} {height} {fps_milli} {count}\n".encode()
    return header + b"".join(f.tobytes() for f in frames)


class TestFrameType:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            Frame(0, 0, np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            Frame(0, 0, np.zeros((0, 4, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            Frame(0, 0, np.zeros((4, 4, 3), dtype=np.float64))

    def test_rejects_oversized_frames(self):
        with pytest.raises(ValueError, match="4096"):
            Frame(0, 0, np.zeros((4097, 1, 3), dtype=np.uint8))


class TestImageDirectory:
    def test_lexicographic_order(self, tmp_path):
        for name, value in [("f001.png", 10), ("f000.png", 20)]:
            Image.fromarray(rgb_frame_array(4, 4, (value, value, value))).save(tmp_path / name)
        stream = open_frame_source(FrameSource(kind="image-directory", uri=str(tmp_path)))
        frames = list(stream)
        assert [f.index for f in frames] == [0, 1]
        assert frames[0].pixels[0, 0, 0] == 20  # f000 sorts first
        assert frames[1].pixels[0, 0, 0] == 10

    def test_empty_directory_yields_end_of_stream(self, tmp_path):
        stream = open_frame_source(FrameSource(kind="image-directory", uri=str(tmp_path)))
        assert stream.next_frame() is None
        assert stream.next_frame() is None  # end is sticky

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FrameSourceError, match="not found"):
            open_frame_source(FrameSource(kind="image-directory", uri=str(tmp_path / "nope")))

    def test_fps_hint_synthesizes_timestamps(self, tmp_path):
        for k in range(3):
            Image.fromarray(rgb_frame_array(4, 4, (50, 50, 50))).save(tmp_path / f"f{k}.png")
        stream = open_frame_source(
            FrameSource(kind="image-directory", uri=str(tmp_path), fps_hint=10)
        )
        assert [f.timestamp_ms for f in stream] == [0, 100, 200]

    def test_undecodable_file_reports_filename(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"this is not a png")
        stream = open_frame_source(FrameSource(kind="image-directory", uri=str(tmp_path)))
        with pytest.raises(FrameSourceError, match="bad.png"):
            stream.next_frame()


class TestFramestream:
    def test_declared_count_roundtrip(self, tmp_path):
        frames = [rgb_frame_array(8, 8, (i, 2 * i, 3 * i)) for i in range(3)]
        raw = build_stream_bytes(8, 8, 25000, 3, frames)
        path = tmp_path / "clip.fs"
        path.write_bytes(raw)
        out = list(open_frame_source(FrameSource(kind="framestream", uri=str(path))))
        assert len(out) == 3
        assert all(f.width == 8 and f.height == 8 for f in out)
        for i, f in enumerate(out):
            assert np.array_equal(f.pixels, frames[i])
        assert [f.timestamp_ms for f in out] == [0, 40, 80]

    def test_single_frame_then_sticky_end(self, tmp_path):
        raw = build_stream_bytes(2, 2, 0, 1, [rgb_frame_array(2, 2, (9, 9, 9))])
        path = tmp_path / "one.fs"
        path.write_bytes(raw)
        handle = open_frame_source(FrameSource(kind="framestream", uri=str(path)))
        first = next_frame(handle)
        assert first is not None and first.index == 0
        assert next_frame(handle) is None
        assert next_frame(handle) is None

    def test_unknown_count_reads_to_eof(self, tmp_path):
        frames = [rgb_frame_array(2, 2, (i, i, i)) for i in range(4)]
        raw = build_stream_bytes(2, 2, 0, -1, frames)
        path = tmp_path / "open.fs"
        path.write_bytes(raw)
        out = list(open_frame_source(FrameSource(kind="framestream", uri=str(path))))
        assert len(out) == 4

    def test_truncated_payload_names_byte_counts(self, tmp_path):
        frames = [rgb_frame_array(4, 4, (7, 7, 7))] * 2
        raw = build_stream_bytes(4, 4, 0, 2, frames)
        path = tmp_path / "cut.fs"
        path.write_bytes(raw[:-10])
        stream = open_frame_source(FrameSource(kind="framestream", uri=str(path)))
        assert stream.next_frame() is not None
        with pytest.raises(TruncatedStreamError, match=r"expected 48 bytes, received 38"):
            stream.next_frame()

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "junk.fs"
        path.write_bytes(b"NOTASTREAM 9 9\n")
        with pytest.raises(FrameSourceError, match="malformed"):
            open_frame_source(FrameSource(kind="framestream", uri=str(path))).next_frame()

    def test_oversized_declared_frame_rejected(self, tmp_path):
        path = tmp_path / "big.fs"
        path.write_bytes(b"FRAMESTREAM 1 5000 5000 0 1\n")
        with pytest.raises(FrameSourceError, match="invalid size"):
            open_frame_source(FrameSource(kind="framestream", uri=str(path))).next_frame()

    def test_writer_reader_roundtrip_determinism(self, tmp_path):
        rng = np.random.default_rng(11)
        frames = [rng.integers(0, 256, (6, 5, 3)).astype(np.uint8) for _ in range(5)]
        path = tmp_path / "rt.fs"
        with path.open("wb") as fp:
            write_framestream(fp, frames, fps=12.0)
        source = FrameSource(kind="framestream", uri=str(path))
        first = [f.pixels.tobytes() for f in open_frame_source(source)]
        second = [f.pixels.tobytes() for f in open_frame_source(source)]
        assert first == second == [f.tobytes() for f in frames]

    def test_header_count_must_match_payload(self, tmp_path):
        # Header declares 3 frames but only 2 are present.
        frames = [rgb_frame_array(2, 2, (1, 1, 1))] * 2
        raw = build_stream_bytes(2, 2, 0, 3, frames)
        path = tmp_path / "short.fs"
        path.write_bytes(raw)
        stream = open_frame_source(FrameSource(kind="framestream", uri=str(path)))
        collected = []
        with pytest.raises(TruncatedStreamError):
            for frame in stream:
                collected.append(frame)
        assert len(collected) == 2


class TestDecoderSubprocess:
    def test_decoder_pipes_framestream(self, tmp_path):
        frames = [rgb_frame_array(3, 3, (i * 10, 0, 0)) for i in range(2)]
        clip = tmp_path / "clip.fs"
        clip.write_bytes(build_stream_bytes(3, 3, 2000, 2, frames))
        cmd = (
            f"{sys.executable} -c "
            '"import sys,shutil;shutil.copyfileobj(open(sys.argv[1],\'rb\'),sys.stdout.buffer)" '
            "{input}"
        )
        source = FrameSource(kind="decoder-subprocess", uri=str(clip), decoder_cmd=cmd)
        out = list(open_frame_source(source))
        assert len(out) == 2
        assert out[1].timestamp_ms == 500  # 2 fps from the stream header

    def test_decoder_failing_before_first_frame(self, tmp_path):
        cmd = f"{sys.executable} -c \"import sys;sys.exit(3)\" {{input}}"
        source = FrameSource(kind="decoder-subprocess", uri="ignored", decoder_cmd=cmd)
        with pytest.raises(FrameSourceError, match="status 3"):
            open_frame_source(source).next_frame()

    def test_unspawnable_decoder(self):
        source = FrameSource(
            kind="decoder-subprocess", uri="x", decoder_cmd="/no/such/binary {input}"
        )
        with pytest.raises(FrameSourceError, match="cannot spawn"):
            open_frame_source(source)


def test_png_encoding_is_stable():
    arr = rgb_frame_array(5, 4, (12, 200, 31))
    assert encode_frame_png(arr) == encode_frame_png(arr)
    decoded = np.asarray(Image.open(io.BytesIO(encode_frame_png(arr))))
    assert np.array_equal(decoded, arr)


def test_frame_source_validation():
    with pytest.raises(ValueError, match="unknown source kind"):
        FrameSource(kind="webcam", uri="x")
    with pytest.raises(ValueError, match="decoder_cmd"):
        FrameSource(kind="decoder-subprocess", uri="x")
    with pytest.raises(ValueError, match="fps_hint"):
        FrameSource(kind="framestream", uri="x", fps_hint=0)
