"""Event-stream parsing, slicing and integration into event frames.

Streams are held column-wise (one numpy array per field) so that a
recording with millions of events can be binned with a single
``np.bincount`` call.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

BIN_MAGIC = b"EVS1"
FRAME_MAGIC = b"EVF1"

# u64 t, u16 x, u16 y, u8 p, 3 zero pad bytes
BIN_RECORD = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "V3")]
)
assert BIN_RECORD.itemsize == 16

U16_MAX = np.iinfo(np.uint16).max


class EventFormat(str, Enum):
    CSV = "csv"
    BIN = "bin"


class EventFormatError(ValueError):
    """Raised when an event file cannot be decoded.

    ``line`` is set for CSV input (1-based), ``offset`` for binary input
    (byte offset of the offending record).
    """

    def __init__(self, message: str, *, line: int | None = None,
                 offset: int | None = None):
        where = ""
        if line is not None:
            where = f"line {line}: "
        elif offset is not None:
            where = f"offset {offset}: "
        super().__init__(where + message)
        self.line = line
        self.offset = offset


class Event(NamedTuple):
    x: int
    y: int
    p: int
    t: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered events from a ``width`` x ``height`` sensor."""

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        for name in ("t", "x", "y", "p"):
            arr = np.asarray(getattr(self, name), dtype=np.int64).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event field arrays differ in length")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")
        validate_stream(self)

    @classmethod
    def from_events(cls, events, width: int, height: int) -> "EventStream":
        events = list(events)
        if not events:
            return cls(width, height)
        arr = np.array([(e.t, e.x, e.y, e.p) for e in events], dtype=np.int64)
        return cls(width, height, t=arr[:, 0], x=arr[:, 1], y=arr[:, 2],
                   p=arr[:, 3])

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for x, y, p, t in zip(self.x.tolist(), self.y.tolist(),
                              self.p.tolist(), self.t.tolist()):
            yield Event(x, y, p, t)

    @property
    def events(self) -> list[Event]:
        return list(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("t", "x", "y", "p")))

    def take(self, start: int, stop: int) -> "EventStream":
        return EventStream(self.width, self.height, t=self.t[start:stop],
                           x=self.x[start:stop], y=self.y[start:stop],
                           p=self.p[start:stop])


def validate_stream(stream: EventStream) -> None:
    """Check polarity, bounds and ordering; raises ``EventFormatError``.

    The reported line is the 1-based index of the first offending event.
    """
    if len(stream) == 0:
        return
    checks = [
        (stream.p > 1, "polarity must be 0 or 1"),
        (stream.p < 0, "polarity must be 0 or 1"),
        (stream.t < 0, "negative timestamp"),
        ((stream.x < 0) | (stream.x >= stream.width),
         f"x outside sensor width {stream.width}"),
        ((stream.y < 0) | (stream.y >= stream.height),
         f"y outside sensor height {stream.height}"),
    ]
    regress = np.zeros(len(stream), dtype=bool)
    regress[1:] = np.diff(stream.t) < 0
    checks.append((regress, "timestamp regression"))
    first_bad = None
    for mask, msg in checks:
        if mask.any():
            idx = int(np.argmax(mask))
            if first_bad is None or idx < first_bad[0]:
                first_bad = (idx, msg)
    if first_bad is not None:
        idx, msg = first_bad
        raise EventFormatError(msg, line=idx + 1)


def _parse_csv(data: bytes, width: int | None, height: int | None) -> EventStream:
    text = data.decode("ascii")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    rows = np.empty((len(lines), 4), dtype=np.int64)
    for i, line in enumerate(lines):
        parts = line.split(",")
        if len(parts) != 4:
            raise EventFormatError(f"expected 4 fields, got {len(parts)}",
                                   line=i + 1)
        try:
            rows[i] = [int(v) for v in parts]
        except ValueError:
            raise EventFormatError(f"non-integer field in {line!r}",
                                   line=i + 1) from None
    t, x, y, p = rows.T
    if width is None:
        width = int(x.max()) + 1 if len(x) else 1
    if height is None:
        height = int(y.max()) + 1 if len(y) else 1
    return EventStream(width, height, t=t, x=x, y=y, p=p)


def _parse_bin(data: bytes) -> EventStream:
    if len(data) < 8:
        raise EventFormatError("truncated header", offset=0)
    if data[:4] != BIN_MAGIC:
        raise EventFormatError(f"bad magic {data[:4]!r}", offset=0)
    width, height = struct.unpack_from("<HH", data, 4)
    body = memoryview(data)[8:]
    if len(body) % BIN_RECORD.itemsize:
        last = 8 + (len(body) // BIN_RECORD.itemsize) * BIN_RECORD.itemsize
        raise EventFormatError("truncated record", offset=last)
    rec = np.frombuffer(body, dtype=BIN_RECORD)
    pad = np.frombuffer(body, dtype=np.uint8).reshape(-1, 16)[:, 13:]
    bad_pad = pad.any(axis=1)
    if bad_pad.any():
        raise EventFormatError("nonzero pad bytes",
                               offset=8 + 16 * int(np.argmax(bad_pad)))
    if len(rec) and rec["t"].max() > np.iinfo(np.int64).max:
        raise EventFormatError("timestamp overflow", offset=8)
    try:
        return EventStream(width, height, t=rec["t"].astype(np.int64),
                           x=rec["x"], y=rec["y"], p=rec["p"])
    except EventFormatError as err:
        raise EventFormatError(str(err).split(": ", 1)[-1],
                               offset=8 + 16 * (err.line - 1)) from None


def parse_events(data: bytes, format: EventFormat | str = EventFormat.CSV, *,
                 width: int | None = None,
                 height: int | None = None) -> EventStream:
    """Decode a CSV (``t,x,y,p`` per line) or EVS1 binary event file.

    For CSV the sensor size is taken from ``width``/``height``, or inferred
    as one past the largest coordinate when omitted. Binary files carry the
    size in their header; explicit dimensions must then agree with it.
    """
    fmt = EventFormat(format)
    if fmt is EventFormat.CSV:
        return _parse_csv(data, width, height)
    stream = _parse_bin(data)
    if (width is not None and width != stream.width) or \
            (height is not None and height != stream.height):
        raise EventFormatError(
            f"header size {stream.width}x{stream.height} does not match "
            f"requested {width}x{height}", offset=4)
    return stream


def serialize_events(stream: EventStream,
                     format: EventFormat | str = EventFormat.CSV) -> bytes:
    fmt = EventFormat(format)
    if fmt is EventFormat.CSV:
        if len(stream) == 0:
            return b""
        rows = np.stack([stream.t, stream.x, stream.y, stream.p], axis=1)
        return ("\n".join(",".join(map(str, r)) for r in rows.tolist())
                + "\n").encode("ascii")
    if stream.width > U16_MAX or stream.height > U16_MAX:
        raise ValueError("sensor too large for the binary format")
    rec = np.zeros(len(stream), dtype=BIN_RECORD)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    return BIN_MAGIC + struct.pack("<HH", stream.width, stream.height) + rec.tobytes()


def read_events(path, format: EventFormat | str | None = None, **dims) -> EventStream:
    path = str(path)
    if format is None:
        format = EventFormat.BIN if path.endswith(".bin") else EventFormat.CSV
    with open(path, "rb") as fh:
        return parse_events(fh.read(), format, **dims)


def write_events(path, stream: EventStream,
                 format: EventFormat | str = EventFormat.BIN) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_events(stream, format))


@dataclass(frozen=True, eq=False)
class EventFrameTensor:
    """Per-window event counts, shaped ``[J, 2, H, W]`` (polarity OFF, ON)."""

    frames: np.ndarray
    window_us: int
    t0: int = 0

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[1] != 2:
            raise ValueError(f"frames must be [J, 2, H, W], got {self.frames.shape}")
        if self.window_us <= 0:
            raise ValueError("window_us must be positive")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventFrameTensor):
            return NotImplemented
        return (self.window_us == other.window_us and self.t0 == other.t0
                and self.frames.shape == other.frames.shape
                and np.array_equal(self.frames, other.frames))


def integrate_frames(stream: EventStream, window_us: int, *,
                     t0: int | None = None) -> EventFrameTensor:
    """Count events per pixel and polarity in half-open windows of ``window_us``.

    Windows are anchored at the first event (or at ``t0`` when given, which
    must not exceed the first timestamp). The last partial window is kept.
    """
    window_us = int(window_us)
    if window_us <= 0:
        raise ValueError("window_us must be positive")
    H, W = stream.height, stream.width
    if len(stream) == 0:
        return EventFrameTensor(np.zeros((0, 2, H, W), np.int64), window_us,
                                0 if t0 is None else int(t0))
    start = int(stream.t[0]) if t0 is None else int(t0)
    if start > stream.t[0]:
        raise ValueError("t0 lies after the first event")
    span = int(stream.t[-1]) - start + 1
    J = -(-span // window_us)
    j = (stream.t - start) // window_us
    flat = ((j * 2 + stream.p) * H + stream.y) * W + stream.x
    counts = np.bincount(flat, minlength=J * 2 * H * W)
    return EventFrameTensor(counts.reshape(J, 2, H, W).astype(np.int64),
                            window_us, start)


def slice_stream(stream: EventStream, boundaries_us) -> list[EventStream]:
    """Split at timestamps; piece ``i`` holds ``boundaries[i-1] <= t < boundaries[i]``."""
    b = np.asarray(boundaries_us, dtype=np.int64).ravel()
    if len(b) > 1 and np.any(np.diff(b) <= 0):
        raise ValueError("boundaries must be strictly increasing")
    cuts = np.searchsorted(stream.t, b, side="left")
    edges = [0, *cuts.tolist(), len(stream)]
    return [stream.take(a, z) for a, z in zip(edges[:-1], edges[1:])]


def save_frames(path, tensor: EventFrameTensor) -> None:
    """Write an EVF1 file; counts saturate at 65535."""
    J, _, H, W = tensor.frames.shape
    header = FRAME_MAGIC + struct.pack("<IIIQ", J, H, W, tensor.window_us)
    body = np.minimum(tensor.frames, U16_MAX).astype("<u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_frames(path) -> EventFrameTensor:
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_frames(data)


def decode_frames(data: bytes) -> EventFrameTensor:
    if data[:4] != FRAME_MAGIC:
        raise EventFormatError(f"bad magic {data[:4]!r}", offset=0)
    if len(data) < 24:
        raise EventFormatError("truncated header", offset=len(data))
    J, H, W, window_us = struct.unpack_from("<IIIQ", data, 4)
    n = J * 2 * H * W
    if len(data) != 24 + 2 * n:
        raise EventFormatError(f"expected {n} counts", offset=24)
    counts = np.frombuffer(data, dtype="<u2", offset=24, count=n)
    return EventFrameTensor(counts.reshape(J, 2, H, W).astype(np.int64),
                            int(window_us))
