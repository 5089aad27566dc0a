"""Frame-level ROC AUC and false-alarm rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


def expand_scores(clip_scores, frames_per_clip: int, total_frames: int) -> np.ndarray:
    """Repeat each clip score over its frames, then cut or pad-by-last to ``total_frames``."""
    clip_scores = np.asarray(clip_scores, dtype=np.float64).ravel()
    if clip_scores.size == 0:
        raise MetricError("no clip scores")
    if frames_per_clip < 1 or total_frames < 0:
        raise MetricError("frames_per_clip must be >= 1 and total_frames >= 0")
    if clip_scores.size * frames_per_clip < total_frames - frames_per_clip:
        raise MetricError(f"{clip_scores.size} clips of {frames_per_clip} frames "
                          f"cannot cover {total_frames} frames")
    idx = np.minimum(np.arange(total_frames) // frames_per_clip, clip_scores.size - 1)
    return clip_scores[idx]


def _binary_labels(labels) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    return labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """AUC as the Mann-Whitney statistic ``U / (n_pos * n_neg)``; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    pos = _binary_labels(labels)
    if scores.shape != pos.shape:
        raise MetricError("scores and labels differ in length")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined unless both classes are present")
    order = np.argsort(scores, kind="mergesort")
    ranked = scores[order]
    # midranks over runs of tied scores
    starts = np.flatnonzero(np.r_[True, ranked[1:] != ranked[:-1]])
    ends = np.r_[starts[1:], ranked.size]
    mid = (starts + ends + 1) / 2.0
    ranks = np.empty(scores.size)
    ranks[order] = np.repeat(mid, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def far(scores, labels, threshold: float = 0.5) -> float:
    """Share of normal frames whose score reaches ``threshold``."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    pos = _binary_labels(labels)
    neg = ~pos
    if not neg.any():
        raise MetricError("FAR needs at least one normal frame")
    return float(np.count_nonzero(scores[neg] >= threshold) / np.count_nonzero(neg))


@dataclass(frozen=True)
class MetricReport:
    auc: float
    far: float
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_frames(cls, scores, labels, threshold: float = 0.5) -> "MetricReport":
        scores = np.asarray(scores, dtype=np.float64).ravel()
        pos = _binary_labels(labels)
        alarm = scores >= threshold
        tp = int(np.count_nonzero(alarm & pos))
        fp = int(np.count_nonzero(alarm & ~pos))
        tn = int(np.count_nonzero(~alarm & ~pos))
        fn = int(np.count_nonzero(~alarm & pos))
        try:
            auc = roc_auc(scores, pos)
        except MetricError:
            auc = math.nan
        rate = fp / (fp + tn) if fp + tn else math.nan
        return cls(auc, rate, tp, fp, tn, fn)


@dataclass
class VideoResult:
    video_id: str
    frame_scores: np.ndarray
    frame_labels: np.ndarray

    @property
    def report(self) -> MetricReport:
        return MetricReport.from_frames(self.frame_scores, self.frame_labels)


def pooled_report(results: list[VideoResult], threshold: float = 0.5) -> MetricReport:
    """Metrics over the frames of all videos taken together."""
    scores = np.concatenate([r.frame_scores for r in results])
    labels = np.concatenate([r.frame_labels for r in results])
    return MetricReport.from_frames(scores, labels, threshold)


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def write_metric_csv(path, results: list[VideoResult]) -> MetricReport:
    """``video_id,auc,far`` per video, then a ``pooled`` summary row.

    Single-class videos have an undefined AUC, written as ``nan``.
    """
    pooled = pooled_report(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "auc", "far"])
        for r in results:
            rep = r.report
            w.writerow([r.video_id, _fmt(rep.auc), _fmt(rep.far)])
        w.writerow(["pooled", _fmt(pooled.auc), _fmt(pooled.far)])
    return pooled


def write_frame_scores_csv(path, results: list[VideoResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video_id", "frame", "score", "label"])
        for r in results:
            for i, (s, y) in enumerate(zip(r.frame_scores.tolist(), r.frame_labels.tolist())):
                w.writerow([r.video_id, i, f"{s:.6f}", int(y)])
