"""Glue between corpus, model, training and metrics used by the CLI."""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from .corpus import LoadedCorpus
from .evaluation import MetricReport, VideoResult, expand_scores, pooled_report
from .model import MsfConfig, MsfParams, init_params, predict
from .snn.checkpoint import load_arrays, save_arrays
from .training import EpochMetrics, TrainConfig, VideoBag, train

LOG_FIELDS = ["epoch", "loss_dmil", "loss_center", "loss_total"]


class ModelMismatch(ValueError):
    pass


def check_dims(bags: list[VideoBag], config: MsfConfig) -> None:
    for bag in bags:
        T, _, D = bag.features.shape
        if D != config.D or T != config.T_sim:
            raise ModelMismatch(f"{bag.video_id}: features [T_sim={T}, D={D}] do not match "
                                f"model [T_sim={config.T_sim}, D={config.D}]")


def score_videos(bags: list[VideoBag], params: MsfParams, label_fn,
                 frames_per_clip: int) -> list[VideoResult]:
    results = []
    for bag in bags:
        labels = label_fn(bag)
        scores = expand_scores(predict(bag.features, params), frames_per_clip, len(labels))
        results.append(VideoResult(bag.video_id, scores, labels))
    return results


def evaluate(corpus: LoadedCorpus, params: MsfParams) -> tuple[MetricReport, list[VideoResult]]:
    check_dims(corpus.test.bags, params.config)
    results = score_videos(corpus.test.bags, params, corpus.frame_labels, corpus.frames_per_clip)
    return pooled_report(results), results


def fit(bags: list[VideoBag], model_config: MsfConfig, train_config: TrainConfig,
        log_path: Path | None = None, checkpoint_dir: Path | None = None,
        save_every: int = 0) -> tuple[MsfParams, list[EpochMetrics]]:
    """Initialise from ``train_config.seed`` and train; optionally log and checkpoint."""
    check_dims(bags, model_config)
    params = init_params(model_config, train_config.seed)
    log_fh = open(log_path, "w", newline="") if log_path is not None else None
    writer = None
    if log_fh is not None:
        writer = csv.writer(log_fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)

    def on_epoch(p: MsfParams, m: EpochMetrics):
        if writer is not None:
            writer.writerow([m.epoch, repr(m.loss_dmil), repr(m.loss_center), repr(m.loss_total)])
        if checkpoint_dir is not None and save_every and m.epoch % save_every == 0:
            save_checkpoint(checkpoint_dir / f"checkpoint_{m.epoch:05d}.msfw", p)

    try:
        return train(bags, params, train_config, on_epoch)
    finally:
        if log_fh is not None:
            log_fh.close()


def save_checkpoint(path, params: MsfParams) -> None:
    save_arrays(path, params.weights)


def load_checkpoint(path, config: MsfConfig) -> MsfParams:
    arrays = load_arrays(path)
    expected = config.param_shapes()
    for name, shape in expected.items():
        if name not in arrays:
            raise ModelMismatch(f"checkpoint lacks {name!r}")
        if arrays[name].shape != shape:
            raise ModelMismatch(f"checkpoint {name!r} has shape {arrays[name].shape}, "
                                f"config expects {shape}")
    extra = sorted(set(arrays) - set(expected))
    if extra:
        raise ModelMismatch(f"checkpoint has unexpected arrays {extra}")
    return MsfParams(config, {k: v.astype(np.float64) for k, v in arrays.items()})


MODULE_SETTINGS = {
    "none": dict(use_lsf=False, use_gsf=False, use_tim=False),
    "lsf": dict(use_lsf=True, use_gsf=False, use_tim=False),
    "gsf": dict(use_lsf=False, use_gsf=True, use_tim=False),
    "tim": dict(use_lsf=False, use_gsf=False, use_tim=True),
    "lsf+gsf": dict(use_lsf=True, use_gsf=True, use_tim=False),
    "lsf+tim": dict(use_lsf=True, use_gsf=False, use_tim=True),
    "gsf+tim": dict(use_lsf=False, use_gsf=True, use_tim=True),
    "all": dict(use_lsf=True, use_gsf=True, use_tim=True),
}


def sweep_config(base: MsfConfig, sweep: str, value: str) -> MsfConfig:
    if sweep == "tau":
        return dataclasses.replace(base, tau=float(value))
    if sweep == "alpha":
        return dataclasses.replace(base, alpha=float(value))
    if sweep == "modules":
        if value not in MODULE_SETTINGS:
            raise ValueError(f"unknown module setting {value!r}; "
                             f"choose from {', '.join(MODULE_SETTINGS)}")
        return dataclasses.replace(base, **MODULE_SETTINGS[value])
    raise ValueError(f"unknown sweep {sweep!r}")


def ablate(corpus: LoadedCorpus, base: MsfConfig, train_config: TrainConfig, sweep: str,
           values: list[str]) -> list[tuple[str, MetricReport]]:
    """Retrain once per setting with the same seed and report test metrics."""
    if not values:
        raise ValueError("sweep needs at least one value")
    configs = [sweep_config(base, sweep, v) for v in values]
    rows = []
    for value, cfg in zip(values, configs):
        params, _ = fit(corpus.train.bags, cfg, train_config)
        report, _ = evaluate(corpus, params)
        rows.append((value, report))
    return rows
