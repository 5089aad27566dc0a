"""On-disk corpus layout.

::

    corpus/
      synth.txt              generator settings (key = value)
      train/meta.csv         video_id,label,t_i,span_start,span_end
      train/<video_id>.msfw  features, or <video_id>.bin raw events,
                             or <video_id>.evf binned frames
      test/...

Spans are clip ranges ``[span_start, span_end)``; ``-1`` marks no span.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import events as ev
from .config import as_kv, format_kv, read_kv
from .snn.checkpoint import load_arrays, save_arrays
from .synth import (
    FRAMES_PER_CLIP,
    EventCorpus,
    FeatureCorpus,
    SynthSpec,
    ToyEncoder,
    VideoRecord,
)
from .training import VideoBag

META_FIELDS = ["video_id", "label", "t_i", "span_start", "span_end"]
SPLITS = ("train", "test")


class CorpusError(ValueError):
    pass


def write_meta(path: Path, records: list[VideoRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(META_FIELDS)
        for r in records:
            a, b = r.span if r.span is not None else (-1, -1)
            w.writerow([r.video_id, r.label, r.t_i, a, b])


def read_meta(path: Path) -> list[VideoRecord]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as err:
        raise CorpusError(f"cannot read {path}: {err}") from None
    out = []
    for n, row in enumerate(rows, start=2):
        try:
            a, b = int(row["span_start"]), int(row["span_end"])
            out.append(VideoRecord(row["video_id"], int(row["label"]), int(row["t_i"]),
                                   None if a < 0 else (a, b)))
        except (KeyError, TypeError, ValueError):
            raise CorpusError(f"{path}:{n}: malformed row") from None
    return out


def save_feature_corpus(root, corpus: FeatureCorpus, spec: SynthSpec | None = None) -> None:
    root = Path(root)
    for split, bags in (("train", corpus.train), ("test", corpus.test)):
        d = root / split
        d.mkdir(parents=True, exist_ok=True)
        write_meta(d / "meta.csv", [corpus.records[b.video_id] for b in bags])
        for bag in bags:
            save_arrays(d / f"{bag.video_id}.msfw", {"features": bag.features})
    _write_settings(root, spec, corpus.frames_per_clip)


def save_event_corpus(root, corpus: EventCorpus, spec: SynthSpec | None = None) -> None:
    root = Path(root)
    for split, videos in (("train", corpus.train), ("test", corpus.test)):
        d = root / split
        d.mkdir(parents=True, exist_ok=True)
        write_meta(d / "meta.csv", [v.record for v in videos])
        for v in videos:
            ev.write_events(d / f"{v.record.video_id}.bin", v.stream, ev.EventFormat.BIN)
    _write_settings(root, spec, corpus.frames_per_clip, corpus.window_us)


def _write_settings(root: Path, spec, frames_per_clip: int, window_us: int | None = None):
    values = as_kv(spec) if spec is not None else {"frames_per_clip": frames_per_clip}
    if window_us is not None:
        values["window_us"] = window_us
    (root / "synth.txt").write_text(format_kv(values))


@dataclass
class LoadedSplit:
    bags: list[VideoBag]
    records: dict[str, VideoRecord]


@dataclass
class LoadedCorpus:
    train: LoadedSplit
    test: LoadedSplit
    frames_per_clip: int = FRAMES_PER_CLIP

    def frame_labels(self, bag: VideoBag) -> np.ndarray:
        rec = self.test.records.get(bag.video_id) or self.train.records[bag.video_id]
        return rec.frame_labels(self.frames_per_clip, bag.t_i)


def _load_features(d: Path, rec: VideoRecord, encoder: ToyEncoder | None) -> np.ndarray:
    feat = d / f"{rec.video_id}.msfw"
    if feat.exists():
        arrays = load_arrays(feat)
        if "features" not in arrays:
            raise CorpusError(f"{feat}: no 'features' array")
        return arrays["features"].astype(np.float64)
    frames = d / f"{rec.video_id}.evf"
    if frames.exists():
        if encoder is None:
            raise CorpusError(f"{frames}: frame files need an encoder")
        return encoder(ev.load_frames(frames))
    raise CorpusError(f"no feature (.msfw) or frame (.evf) file for {rec.video_id} in {d}")


def load_corpus(root, encoder: ToyEncoder | None = None,
                splits=SPLITS) -> LoadedCorpus:
    """Read a corpus directory; frame files are encoded with ``encoder``."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus directory {root} not found")
    settings = read_kv(root / "synth.txt") if (root / "synth.txt").exists() else {}
    fpc = int(settings.get("frames_per_clip", FRAMES_PER_CLIP))
    loaded = {}
    for split in SPLITS:
        bags, records = [], {}
        if split in splits:
            d = root / split
            for rec in read_meta(d / "meta.csv"):
                bags.append(VideoBag(_load_features(d, rec, encoder), rec.label, rec.video_id))
                records[rec.video_id] = rec
        loaded[split] = LoadedSplit(bags, records)
    return LoadedCorpus(loaded["train"], loaded["test"], fpc)
