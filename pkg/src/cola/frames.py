"""Uniform decoded-RGB frame streams.

Three source kinds produce the same stream of :class:`Frame` objects:

- ``image-directory``: image files matched by glob patterns, in
  lexicographic filename order.
- ``framestream``: the raw binary interchange format described below.
- ``decoder-subprocess``: an external command that writes a framestream
  to its standard output; this is how container formats are decoded
  without linking any codec.

Framestream v1 layout: one ASCII header line

    FRAMESTREAM 1 <width> <height> <fps_milli> <count>\\n

followed by ``count`` frames of raw RGB24 bytes, row-major.  ``fps_milli``
is frames/second times 1000 (0 if unknown); ``count`` may be ``-1`` for
unknown, in which case the stream ends at EOF on a frame boundary.
"""

from __future__ import annotations

import io
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator, Sequence

import numpy as np
from PIL import Image

MAX_FRAME_DIM = 4096
DEFAULT_FPS_HINT = 25.0
DEFAULT_IMAGE_PATTERNS = ("*.png", "*.jpg")

FRAMESTREAM_MAGIC = "FRAMESTREAM"
FRAMESTREAM_VERSION = 1


class FrameSourceError(RuntimeError):
    """Raised when a frame source cannot be opened or decoded."""


class TruncatedStreamError(FrameSourceError):
    """Raised when a framestream ends mid-frame."""


@dataclass(frozen=True)
class Frame:
    """One decoded RGB frame.

    ``pixels`` is a (height, width, 3) uint8 array, row-major RGB.
    Indices are 0-based and strictly increasing within a source;
    timestamps are milliseconds from stream start, non-decreasing.
    """

    index: int
    timestamp_ms: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(f"pixels must be (h, w, 3) uint8, got {px.shape} {px.dtype}")
        h, w = px.shape[:2]
        if h < 1 or w < 1:
            raise ValueError(f"frame must be at least 1x1, got {w}x{h}")
        if h > MAX_FRAME_DIM or w > MAX_FRAME_DIM:
            raise ValueError(
                f"frame {w}x{h} exceeds the {MAX_FRAME_DIM}x{MAX_FRAME_DIM} limit"
            )

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class FrameSource:
    """Description of where frames come from.

    ``kind`` is one of ``image-directory``, ``framestream``, or
    ``decoder-subprocess``.  For the decoder kind, ``uri`` is the input
    media path and ``decoder_cmd`` a command template containing an
    ``{input}`` placeholder; the command must write framestream v1 to
    stdout.  ``fps_hint`` synthesizes timestamps when the source carries
    none (defaults to 25 fps).
    """

    kind: str
    uri: str
    fps_hint: float | None = None
    patterns: Sequence[str] = DEFAULT_IMAGE_PATTERNS
    decoder_cmd: str | None = None

    KINDS = ("image-directory", "framestream", "decoder-subprocess")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}; expected one of {self.KINDS}")
        if self.fps_hint is not None and self.fps_hint <= 0:
            raise ValueError("fps_hint must be positive")
        if self.kind == "decoder-subprocess" and not self.decoder_cmd:
            raise ValueError("decoder-subprocess sources require decoder_cmd")


def _timestamp_for(index: int, fps: float) -> int:
    return round(index * 1000.0 / fps)


class FrameStream:
    """Single-consumer handle over a frame source.

    ``next_frame`` returns the next :class:`Frame` or ``None`` at end of
    stream; once exhausted it keeps returning ``None``.  Streams are also
    iterable.  Distinct handles over distinct sources are independent and
    may be driven from parallel workers.
    """

    def __init__(self, it: Iterator[Frame], close=None):
        self._it = it
        self._close = close
        self._done = False

    def next_frame(self) -> Frame | None:
        if self._done:
            return None
        try:
            return next(self._it)
        except StopIteration:
            self._done = True
            if self._close is not None:
                self._close()
            return None

    def __iter__(self) -> Iterator[Frame]:
        while True:
            frame = self.next_frame()
            if frame is None:
                return
            yield frame


def next_frame(handle: FrameStream) -> Frame | None:
    """Functional alias for :meth:`FrameStream.next_frame`."""
    return handle.next_frame()


def open_frame_source(source: FrameSource) -> FrameStream:
    """Open a source and return a stream of frames.

    Raises :class:`FrameSourceError` if the path is missing, a file is
    unreadable, a stream header is malformed, or the decoder subprocess
    exits nonzero before producing its first frame.
    """
    if source.kind == "image-directory":
        return _open_image_directory(source)
    if source.kind == "framestream":
        return _open_framestream_file(source)
    return _open_decoder_subprocess(source)


def _open_image_directory(source: FrameSource) -> FrameStream:
    root = Path(source.uri)
    if not root.is_dir():
        raise FrameSourceError(f"image directory not found: {root}")
    paths: list[Path] = []
    for pattern in source.patterns:
        paths.extend(root.glob(pattern))
    paths = sorted(set(paths), key=lambda p: p.name)
    fps = source.fps_hint or DEFAULT_FPS_HINT

    def gen() -> Iterator[Frame]:
        for index, path in enumerate(paths):
            try:
                with Image.open(path) as img:
                    pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
            except Exception as exc:
                raise FrameSourceError(f"undecodable image file {path}: {exc}") from exc
            yield Frame(index=index, timestamp_ms=_timestamp_for(index, fps), pixels=pixels)

    return FrameStream(gen())


def _read_framestream_header(fp: BinaryIO, origin: str) -> tuple[int, int, int, int]:
    line = bytearray()
    while True:
        ch = fp.read(1)
        if not ch:
            raise FrameSourceError(f"malformed framestream header in {origin}: unexpected EOF")
        if ch == b"\n":
            break
        line += ch
        if len(line) > 256:
            raise FrameSourceError(f"malformed framestream header in {origin}: header too long")
    parts = line.decode("ascii", errors="replace").split()
    if len(parts) != 6 or parts[0] != FRAMESTREAM_MAGIC:
        raise FrameSourceError(f"malformed framestream header in {origin}: {bytes(line)!r}")
    try:
        version, width, height, fps_milli, count = (int(p) for p in parts[1:])
    except ValueError as exc:
        raise FrameSourceError(f"malformed framestream header in {origin}: {bytes(line)!r}") from exc
    if version != FRAMESTREAM_VERSION:
        raise FrameSourceError(f"unsupported framestream version {version} in {origin}")
    if width < 1 or height < 1 or width > MAX_FRAME_DIM or height > MAX_FRAME_DIM:
        raise FrameSourceError(f"framestream {origin} declares invalid size {width}x{height}")
    if count < -1:
        raise FrameSourceError(f"framestream {origin} declares invalid count {count}")
    return width, height, fps_milli, count


def _framestream_frames(
    fp: BinaryIO, origin: str, fps_hint: float | None
) -> Iterator[Frame]:
    width, height, fps_milli, count = _read_framestream_header(fp, origin)
    fps = fps_milli / 1000.0 if fps_milli > 0 else (fps_hint or DEFAULT_FPS_HINT)
    frame_bytes = width * height * 3
    index = 0
    while count == -1 or index < count:
        payload = fp.read(frame_bytes)
        if not payload and count == -1:
            return
        if len(payload) != frame_bytes:
            raise TruncatedStreamError(
                f"truncated framestream {origin}: frame {index} expected "
                f"{frame_bytes} bytes, received {len(payload)}"
            )
        pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
        yield Frame(index=index, timestamp_ms=_timestamp_for(index, fps), pixels=pixels.copy())
        index += 1


def _open_framestream_file(source: FrameSource) -> FrameStream:
    path = Path(source.uri)
    if not path.is_file():
        raise FrameSourceError(f"framestream file not found: {path}")
    fp = path.open("rb")
    return FrameStream(_framestream_frames(fp, str(path), source.fps_hint), close=fp.close)


def _open_decoder_subprocess(source: FrameSource) -> FrameStream:
    argv = [tok.replace("{input}", source.uri) for tok in shlex.split(source.decoder_cmd)]
    try:
        proc = subprocess.Popen(argv, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL)
    except OSError as exc:
        raise FrameSourceError(f"cannot spawn decoder {argv[0]!r}: {exc}") from exc

    def gen() -> Iterator[Frame]:
        try:
            inner = _framestream_frames(proc.stdout, f"decoder {argv[0]!r}", source.fps_hint)
            first = True
            for frame in inner:
                first = False
                yield frame
        except FrameSourceError:
            proc.kill()
            proc.wait()
            if first and proc.returncode not in (0, None):
                raise FrameSourceError(
                    f"decoder {argv[0]!r} exited with status {proc.returncode} before first frame"
                ) from None
            raise
        rc = proc.wait()
        if rc != 0:
            raise FrameSourceError(f"decoder {argv[0]!r} exited with status {rc}")

    def close() -> None:
        if proc.poll() is None:
            proc.kill()
            proc.wait()

    return FrameStream(gen(), close=close)


def write_framestream(
    fp: BinaryIO, frames: Sequence[Frame] | Sequence[np.ndarray], fps: float = DEFAULT_FPS_HINT
) -> None:
    """Serialize frames as framestream v1 (the decoder-subprocess output format)."""
    arrays = [f.pixels if isinstance(f, Frame) else np.asarray(f, dtype=np.uint8) for f in frames]
    if not arrays:
        raise ValueError("cannot write an empty framestream without dimensions")
    h, w = arrays[0].shape[:2]
    header = f"{FRAMESTREAM_MAGIC} {FRAMESTREAM_VERSION} {w} {h} {round(fps * 1000)} {len(arrays)}\n"
    fp.write(header.encode("ascii"))
    for arr in arrays:
        if arr.shape != (h, w, 3):
            raise ValueError(f"all frames must be {w}x{h}x3, got {arr.shape}")
        fp.write(arr.tobytes())


def encode_frame_png(frame: Frame | np.ndarray) -> bytes:
    """Encode a frame as PNG bytes (lossless, digest-stable)."""
    pixels = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
