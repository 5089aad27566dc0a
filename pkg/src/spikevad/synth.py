"""Seeded synthetic corpora with planted anomaly spans.

Feature corpora hold Bernoulli spike blocks shaped ``[T_sim, t, D]``;
abnormal videos get one contiguous clip span where a fixed quarter of the
channels fire at a higher rate. Event corpora hold raw DVS streams with
Poisson background activity and a moving high-rate cluster during the
anomaly span.

Every video draws from its own child of ``np.random.SeedSequence(seed)``,
so generation order never changes a video's content.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .events import EventFrameTensor, EventStream
from .snn.neurons import DEFAULT_TAU, DEFAULT_V_TH, lif_sequence
from .training import VideoBag

FRAMES_PER_CLIP = 16
PAPER_WINDOW_US = 533_328


@dataclass(frozen=True)
class SynthSpec:
    n_train: int = 40
    n_test: int = 20
    clips_min: int = 30
    clips_max: int = 60
    D: int = 16
    T_sim: int = 4
    anomaly_fraction: float = 0.5
    span_min: int = 5
    span_max: int = 15
    base_rate: float = 0.05
    anomaly_rate: float = 0.5
    frames_per_clip: int = FRAMES_PER_CLIP
    seed: int = 7

    def __post_init__(self):
        if self.n_train < 0 or self.n_test < 0:
            raise ValueError("video counts must be non-negative")
        if not 1 <= self.clips_min <= self.clips_max:
            raise ValueError("need 1 <= clips_min <= clips_max")
        if self.D < 4 or self.D % 4:
            raise ValueError("D must be a positive multiple of 4")
        if self.T_sim < 1:
            raise ValueError("T_sim must be >= 1")
        if not 0.0 <= self.anomaly_fraction <= 1.0:
            raise ValueError("anomaly_fraction must lie in [0, 1]")
        if not 0.0 <= self.base_rate < self.anomaly_rate <= 1.0:
            raise ValueError("need 0 <= base_rate < anomaly_rate <= 1")
        if self.anomaly_fraction > 0 and not 1 <= self.span_min <= self.span_max <= self.clips_min:
            raise ValueError("anomaly spans must satisfy 1 <= span_min <= span_max <= clips_min")
        if self.frames_per_clip < 1:
            raise ValueError("frames_per_clip must be >= 1")


@dataclass
class VideoRecord:
    video_id: str
    label: int
    t_i: int
    span: tuple[int, int] | None = None  # clip range [start, end)

    def frame_labels(self, frames_per_clip: int = FRAMES_PER_CLIP,
                     n_clips: int | None = None) -> np.ndarray:
        n = (self.t_i if n_clips is None else n_clips) * frames_per_clip
        labels = np.zeros(n, dtype=np.int64)
        if self.span is not None:
            a, b = self.span
            labels[a * frames_per_clip: b * frames_per_clip] = 1
        return labels


@dataclass
class FeatureCorpus:
    train: list[VideoBag]
    test: list[VideoBag]
    records: dict[str, VideoRecord]
    planted_channels: np.ndarray
    frames_per_clip: int = FRAMES_PER_CLIP

    def frame_labels(self, bag: VideoBag) -> np.ndarray:
        return self.records[bag.video_id].frame_labels(self.frames_per_clip, bag.t_i)


@dataclass
class EventVideo:
    record: VideoRecord
    stream: EventStream


@dataclass
class EventCorpus:
    train: list[EventVideo]
    test: list[EventVideo]
    window_us: int
    frames_per_clip: int = FRAMES_PER_CLIP


def _labels(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    labels[: int(round(fraction * n))] = 1
    return rng.permutation(labels)


def _plan(spec: SynthSpec):
    """Per-split label vectors, per-video generators and the planted channel set."""
    root = np.random.SeedSequence(spec.seed)
    meta_seq, train_seq, test_seq = root.spawn(3)
    meta = np.random.default_rng(meta_seq)
    planted = np.sort(meta.choice(spec.D, size=spec.D // 4, replace=False))
    plan = {}
    for split, n, seq in (("train", spec.n_train, train_seq), ("test", spec.n_test, test_seq)):
        labels = _labels(n, spec.anomaly_fraction, meta)
        plan[split] = [(f"{split}_{i:04d}", int(y), np.random.default_rng(child))
                       for i, (y, child) in enumerate(zip(labels, seq.spawn(n)))]
    return plan, planted


def _draw_record(video_id: str, label: int, spec: SynthSpec,
                 rng: np.random.Generator) -> VideoRecord:
    t_i = int(rng.integers(spec.clips_min, spec.clips_max + 1))
    span = None
    if label:
        length = int(rng.integers(spec.span_min, spec.span_max + 1))
        start = int(rng.integers(0, t_i - length + 1))
        span = (start, start + length)
    return VideoRecord(video_id, label, t_i, span)


def gen_feature_corpus(spec: SynthSpec = SynthSpec()) -> FeatureCorpus:
    plan, planted = _plan(spec)
    records: dict[str, VideoRecord] = {}
    splits = {}
    for split, videos in plan.items():
        bags = []
        for video_id, label, rng in videos:
            rec = _draw_record(video_id, label, spec, rng)
            feats = (rng.random((spec.T_sim, rec.t_i, spec.D)) < spec.base_rate).astype(np.float64)
            if rec.span is not None:
                a, b = rec.span
                burst = rng.random((spec.T_sim, b - a, planted.size)) < spec.anomaly_rate
                feats[:, a:b, planted] = burst
            records[video_id] = rec
            bags.append(VideoBag(feats, label, video_id))
        splits[split] = bags
    return FeatureCorpus(splits["train"], splits["test"], records, planted,
                         spec.frames_per_clip)


def _window_events(rng, n: int, t_lo: int, window_us: int, x, y):
    t = t_lo + rng.integers(0, window_us, size=n)
    p = rng.integers(0, 2, size=n)
    return t, x, y, p


def gen_event_stream(record: VideoRecord, rng: np.random.Generator, width: int,
                     height: int, window_us: int, frames_per_clip: int,
                     base_intensity: float, anomaly_intensity: float,
                     cluster_radius: float) -> EventStream:
    n_windows = record.t_i * frames_per_clip
    counts = rng.poisson(base_intensity, size=n_windows) if base_intensity > 0 \
        else np.zeros(n_windows, dtype=np.int64)
    parts = []
    for j, n in enumerate(counts.tolist()):
        if n:
            parts.append(_window_events(rng, n, j * window_us, window_us,
                                        rng.integers(0, width, size=n),
                                        rng.integers(0, height, size=n)))
    if record.span is not None and anomaly_intensity > 0:
        a, b = record.span
        first, last = a * frames_per_clip, b * frames_per_clip
        start = rng.uniform((0, 0), (width, height))
        end = rng.uniform((0, 0), (width, height))
        for j in range(first, last):
            frac = (j - first) / max(last - first - 1, 1)
            cx, cy = start + frac * (end - start)
            n = int(rng.poisson(anomaly_intensity))
            if not n:
                continue
            xs = np.clip(np.rint(rng.normal(cx, cluster_radius, size=n)), 0, width - 1)
            ys = np.clip(np.rint(rng.normal(cy, cluster_radius, size=n)), 0, height - 1)
            parts.append(_window_events(rng, n, j * window_us, window_us,
                                        xs.astype(np.int64), ys.astype(np.int64)))
    if not parts:
        return EventStream(width, height)
    t, x, y, p = (np.concatenate(col) for col in zip(*parts))
    order = np.argsort(t, kind="stable")
    return EventStream(width, height, t=t[order], x=x[order], y=y[order], p=p[order])


def gen_event_corpus(spec: SynthSpec = SynthSpec(), width: int = 64, height: int = 48,
                     window_us: int = PAPER_WINDOW_US, base_intensity: float = 50.0,
                     anomaly_intensity: float = 400.0,
                     cluster_radius: float = 3.0) -> EventCorpus:
    """Raw event streams; video ``i`` spans ``t_i * frames_per_clip`` windows.

    ``base_intensity`` and ``anomaly_intensity`` are mean events per window.
    """
    if base_intensity < 0 or anomaly_intensity < 0:
        raise ValueError("intensities must be non-negative")
    plan, _ = _plan(spec)
    splits = {}
    for split, videos in plan.items():
        out = []
        for video_id, label, rng in videos:
            rec = _draw_record(video_id, label, spec, rng)
            stream = gen_event_stream(rec, rng, width, height, window_us,
                                      spec.frames_per_clip, base_intensity,
                                      anomaly_intensity, cluster_radius)
            out.append(EventVideo(rec, stream))
        splits[split] = out
    return EventCorpus(splits["train"], splits["test"], window_us, spec.frames_per_clip)


# -- encoder -----------------------------------------------------------------

@dataclass(frozen=True)
class ToyEncoder:
    """Untrained stand-in for a pretrained spiking feature extractor.

    Per-frame polarity counts are pooled on a ``grid x grid`` lattice,
    summed over groups of ``frames_per_clip`` frames and log-compressed.
    Output channel ``d`` reads pools ``d, d + D, d + 2D, ...`` through fixed
    non-negative weights. The resulting current drives LIF neurons for
    ``T_sim`` steps, so more events never produce fewer spikes.
    """

    D: int = 16
    T_sim: int = 4
    grid: int = 4
    frames_per_clip: int = FRAMES_PER_CLIP
    gain: float = 1.0
    offset: float = 0.5
    seed: int = 0
    tau: float = DEFAULT_TAU
    v_th: float = DEFAULT_V_TH
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n_pools = 2 * self.grid * self.grid
        rng = np.random.default_rng(self.seed)
        w = np.zeros((self.D, n_pools))
        for d in range(self.D):
            taps = np.arange(d % n_pools, n_pools, self.D)
            w[d, taps] = rng.uniform(0.5, 1.0, size=taps.size)
        w /= w.sum(axis=1, keepdims=True)
        object.__setattr__(self, "_weights", w)

    def pools(self, frames: np.ndarray) -> np.ndarray:
        J, _, H, W = frames.shape
        rows = np.unique(np.linspace(0, H, self.grid, endpoint=False).astype(int))
        cols = np.unique(np.linspace(0, W, self.grid, endpoint=False).astype(int))
        pooled = np.add.reduceat(np.add.reduceat(frames, rows, axis=2), cols, axis=3)
        out = np.zeros((J, 2, self.grid, self.grid))
        out[:, :, : pooled.shape[2], : pooled.shape[3]] = pooled
        return out.reshape(J, -1)

    def __call__(self, frames: EventFrameTensor | np.ndarray) -> np.ndarray:
        arr = frames.frames if isinstance(frames, EventFrameTensor) else np.asarray(frames)
        J = arr.shape[0]
        n_clips = -(-J // self.frames_per_clip)
        if J == 0:
            return np.zeros((self.T_sim, 0, self.D))
        per_frame = self.pools(arr.astype(np.float64))
        starts = np.arange(0, J, self.frames_per_clip)
        clip_pool = np.add.reduceat(per_frame, starts, axis=0)
        lengths = np.diff(np.r_[starts, J])[:, None]
        rate = np.log1p(clip_pool / lengths)
        current = self.gain * rate @ self._weights.T - self.offset
        drive = np.broadcast_to(current, (self.T_sim, n_clips, self.D))
        return lif_sequence(drive, self.tau, self.v_th)


def toy_encoder(frames: EventFrameTensor | np.ndarray, T_sim: int = 4, D: int = 16,
                **kwargs) -> np.ndarray:
    """Encode event frames as clip spikes ``[T_sim, ceil(J / 16), D]``."""
    return ToyEncoder(D=D, T_sim=T_sim, **kwargs)(frames)
