"""Command-line entry point: ``spikevad {synth,bin,train,eval,ablate}``.

Exit codes: 0 ok, 2 configuration error, 3 data/model mismatch,
4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import shutil
import sys
from dataclasses import dataclass
from pathlib import Path

from . import events as ev
from .config import ConfigError, apply_kv, as_kv, check_keys, format_kv, read_kv
from .corpus import CorpusError, load_corpus, save_event_corpus, save_feature_corpus
from .model import MsfConfig
from .pipeline import ModelMismatch, ablate, evaluate, fit, load_checkpoint, save_checkpoint
from .evaluation import write_frame_scores_csv, write_metric_csv
from .snn.checkpoint import CheckpointError
from .synth import PAPER_WINDOW_US, SynthSpec, ToyEncoder, gen_event_corpus, gen_feature_corpus
from .training import TrainConfig, TrainingError

log = logging.getLogger("spikevad")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


@dataclass(frozen=True)
class EventSettings:
    width: int = 64
    height: int = 48
    window_us: int = PAPER_WINDOW_US
    base_intensity: float = 50.0
    anomaly_intensity: float = 400.0
    cluster_radius: float = 3.0


SECTIONS = (MsfConfig, TrainConfig, SynthSpec, EventSettings)


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


@dataclass
class RunConfig:
    """Model, training, synthesis and event settings merged from file and flags."""

    model: MsfConfig
    train: TrainConfig
    synth: SynthSpec
    events: EventSettings

    @classmethod
    def build(cls, values: dict[str, str]) -> "RunConfig":
        check_keys(values, *SECTIONS)
        return cls(*(apply_kv(section(), values) for section in SECTIONS))

    def model_and_train_kv(self) -> dict[str, object]:
        kv = as_kv(self.model)
        kv.update(as_kv(self.train))
        return kv


def resolve_config(args, extra: dict[str, object] | None = None) -> RunConfig:
    values: dict[str, str] = {}
    if getattr(args, "config", None):
        values.update(read_kv(args.config))
    for key, value in (extra or {}).items():
        if value is not None:
            values[key] = str(value)
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return RunConfig.build(values)


def _out_dir(args) -> Path:
    if not args.out:
        raise CliError("--out is required", EXIT_CONFIG)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cfg = resolve_config(args, {"width": args.width, "height": args.height,
                                "window_us": args.window_us})
    if args.mode == "features":
        save_feature_corpus(out, gen_feature_corpus(cfg.synth), cfg.synth)
    else:
        e = cfg.events
        corpus = gen_event_corpus(cfg.synth, e.width, e.height, e.window_us,
                                  e.base_intensity, e.anomaly_intensity, e.cluster_radius)
        save_event_corpus(out, corpus, cfg.synth)
    log.info("wrote %s corpus to %s", args.mode, out)
    return EXIT_OK


def cmd_bin(args) -> int:
    src = Path(args.events)
    if not src.is_dir():
        raise CliError(f"event directory {src} not found", EXIT_CONFIG)
    if args.window_us <= 0:
        raise CliError("--window-us must be positive", EXIT_CONFIG)
    dst = Path(args.out) if args.out else src
    # meta.csv sits next to the streams in a corpus directory and is not an event file
    files = sorted(p for p in src.rglob("*")
                   if p.suffix in (".bin", ".csv") and p.name != "meta.csv")
    if not files:
        raise CliError(f"no .bin or .csv event files under {src}", EXIT_DATA)
    for path in files:
        rel = path.relative_to(src)
        target = (dst / rel).with_suffix(".evf")
        target.parent.mkdir(parents=True, exist_ok=True)
        try:
            stream = ev.read_events(path, width=args.width, height=args.height) \
                if path.suffix == ".csv" else ev.read_events(path)
        except ev.EventFormatError as err:
            raise CliError(f"{path}: {err}", EXIT_DATA) from None
        ev.save_frames(target, ev.integrate_frames(stream, args.window_us))
    if dst != src:
        for aux in list(src.rglob("meta.csv")) + list(src.glob("synth.txt")):
            target = dst / aux.relative_to(src)
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(aux, target)
    log.info("binned %d streams into %s", len(files), dst)
    return EXIT_OK


def _load(corpus_dir, cfg: RunConfig, splits):
    encoder = ToyEncoder(D=cfg.model.D, T_sim=cfg.model.T_sim, tau=cfg.model.tau,
                         v_th=cfg.model.v_th)
    return load_corpus(corpus_dir, encoder, splits)


def _train_config(cfg: RunConfig, epochs: int) -> TrainConfig:
    return dataclasses.replace(cfg.train, epochs=epochs)


def cmd_train(args) -> int:
    out = _out_dir(args)
    cfg = resolve_config(args)
    tcfg = _train_config(cfg, args.epochs)
    corpus = _load(args.corpus, cfg, ("train",))
    params, history = fit(corpus.train.bags, cfg.model, tcfg, out / "train_log.csv",
                          out, args.save_every)
    save_checkpoint(out / "checkpoint.msfw", params)
    kv = as_kv(cfg.model)
    kv.update(as_kv(tcfg))
    (out / "config.txt").write_text(format_kv(kv))
    if history:
        log.info("loss %.5f -> %.5f over %d epochs", history[0].loss_total,
                 history[-1].loss_total, len(history))
    return EXIT_OK


def cmd_eval(args) -> int:
    out = _out_dir(args)
    if args.config is None:
        sidecar = Path(args.checkpoint).with_name("config.txt")
        if sidecar.exists():
            args.config = str(sidecar)
    cfg = resolve_config(args)
    corpus = _load(args.corpus, cfg, ("test",))
    if not corpus.test.bags:
        raise CliError("corpus has no test videos", EXIT_DATA)
    params = load_checkpoint(args.checkpoint, cfg.model)
    _, results = evaluate(corpus, params)
    pooled = write_metric_csv(out / "metrics.csv", results)
    write_frame_scores_csv(out / "frame_scores.csv", results)
    print(f"pooled auc={pooled.auc:.4f} far={pooled.far:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    out = _out_dir(args)
    cfg = resolve_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise CliError("--values must list at least one setting", EXIT_CONFIG)
    corpus = _load(args.corpus, cfg, ("train", "test"))
    try:
        rows = ablate(corpus, cfg.model, _train_config(cfg, args.epochs), args.sweep, values)
    except ValueError as err:
        if isinstance(err, (ModelMismatch, TrainingError)):
            raise
        raise CliError(str(err), EXIT_CONFIG) from None
    path = out / f"ablation_{args.sweep}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "auc", "far"])
        for value, rep in rows:
            w.writerow([value, f"{rep.auc:.6f}", f"{rep.far:.6f}"])
            print(f"{args.sweep}={value} auc={rep.auc:.4f} far={rep.far:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value settings file")
    common.add_argument("--seed", type=int, help="overrides the seed for data and training")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="spikevad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--mode", choices=("features", "events"), default="features")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--window-us", type=int)
    p.set_defaults(func=cmd_synth, command_parser=p)

    p = sub.add_parser("bin", parents=[common], help="integrate event files into EVF1 frames")
    p.add_argument("events", help="directory searched recursively for .bin/.csv streams")
    p.add_argument("--window-us", type=int, default=PAPER_WINDOW_US)
    p.add_argument("--width", type=int, help="sensor width for CSV input")
    p.add_argument("--height", type=int, help="sensor height for CSV input")
    p.set_defaults(func=cmd_bin, command_parser=p)

    p = sub.add_parser("train", parents=[common], help="train the MSF head")
    p.add_argument("corpus")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--save-every", type=int, default=0, metavar="N",
                   help="also write a checkpoint every N epochs")
    p.set_defaults(func=cmd_train, command_parser=p)

    p = sub.add_parser("eval", parents=[common], help="frame-level AUC/FAR on the test split")
    p.add_argument("corpus")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval, command_parser=p)

    p = sub.add_parser("ablate", parents=[common], help="retrain across a parameter sweep")
    p.add_argument("corpus")
    p.add_argument("--sweep", choices=("tau", "alpha", "modules"), required=True)
    p.add_argument("--values", required=True, help="comma-separated settings")
    p.add_argument("--epochs", type=int, required=True)
    p.set_defaults(func=cmd_ablate, command_parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    if getattr(args, "epochs", 0) is not None and getattr(args, "epochs", 0) < 0:
        parser.error("--epochs must be >= 0")
    try:
        return args.func(args)
    except CliError as err:
        if err.code == EXIT_CONFIG:
            args.command_parser.print_usage(sys.stderr)
        print(f"spikevad: {err}", file=sys.stderr)
        return err.code
    except ConfigError as err:
        print(f"spikevad: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelMismatch, CorpusError, CheckpointError, TrainingError,
            ev.EventFormatError) as err:
        print(f"spikevad: {err}", file=sys.stderr)
        return EXIT_DATA
    except Exception as err:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"spikevad: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
