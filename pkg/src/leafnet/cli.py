"""Command-line interface: prepare, train, evaluate, predict, report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Settings come from built-in defaults, overridden by a JSON ``--config``
file, overridden by explicit flags.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .data.batches import ImageLoader
from .data.images import augment_record, preprocess, save_png
from .data.manifest import DatasetManifest, scan_dataset, split_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    ImageError,
    SpecMismatchError,
    TrainingDivergedError,
)
from .model import DEFAULT_FILTERS, ModelSpec, build_model
from .optim import FAMILIES, OptimizerConfig
from .report import MalformedLogError, load_runs, render_svg, summary_table
from .trainer import Trainer, TrainingConfig, epoch_csv, evaluate, predict

log = logging.getLogger("leafnet")

DEFAULTS = {
    "seed": 0,
    "out": ".",
    "optimizer": "adam",
    "lr": 0.001,
    "momentum": 0.9,
    "rho": 0.9,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-7,
    "batch_size": 32,
    "epochs": 10,
    "padding": "valid",
    "track_best": False,
    "image_size": 256,
    "filters": list(DEFAULT_FILTERS),
    "dense_units": 64,
    "dropout": 0.1,
    "precision": "float32",
    "ratios": [0.8, 0.1, 0.1],
    "augment": True,
    "crop_fraction": 0.8,
    "rotation_degrees": 10.0,
    "cache_images": False,
    "prefetch": 2,
    "log_wall_time": False,
    "split": "test",
    "dataset": "dataset",
    "average": "macro",
    "k": 3,
}


class UsageError(Exception):
    pass


def resolve_config(args):
    """Merge defaults < config file < flags that were given explicitly."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(data)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _loader(cfg, size):
    return ImageLoader(size, cfg["crop_fraction"], cfg["rotation_degrees"],
                       cache=cfg["cache_images"])


def cmd_prepare(args, cfg):
    out = Path(cfg["out"])
    try:
        class_names, items = scan_dataset(args.dataset_root)
        manifest = split_dataset(items, class_names, tuple(cfg["ratios"]), cfg["seed"],
                                 augment=cfg["augment"])
    except DatasetError as exc:
        raise UsageError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.manifest) if args.manifest else out / "manifest.json"
    manifest.save(path)

    width = max(len("class"), *(len(n) for n in class_names))
    print(f"{'class':<{width}}  train    val   test")
    totals = [0, 0, 0]
    for name, row in manifest.class_counts().items():
        vals = [row["train"], row["val"], row["test"]]
        totals = [a + b for a, b in zip(totals, vals)]
        print(f"{name:<{width}}  {vals[0]:>5}  {vals[1]:>5}  {vals[2]:>5}")
    print(f"{'total':<{width}}  {totals[0]:>5}  {totals[1]:>5}  {totals[2]:>5}")
    counts = manifest.counts()
    print(f"records per split (with augmentation): train={counts['train']} "
          f"val={counts['val']} test={counts['test']}")
    print(f"wrote {path}")

    if args.export_augmented:
        export = Path(args.export_augmented)
        size = cfg["image_size"]
        for r in manifest.split("train"):
            if r.provenance != "original":
                continue
            dest = export / class_names[r.label]
            dest.mkdir(parents=True, exist_ok=True)
            stem = Path(r.path).stem
            variants = augment_record(preprocess(r.path, size), cfg["crop_fraction"],
                                      cfg["rotation_degrees"])
            for prov, img in variants.items():
                save_png(img, dest / f"{stem}_{prov}.png")
        print(f"exported augmented images to {export}")
    return 0


def _training_config(cfg):
    try:
        opt = OptimizerConfig(cfg["optimizer"], cfg["lr"], cfg["momentum"], cfg["rho"],
                              cfg["beta1"], cfg["beta2"], cfg["eps"])
        return TrainingConfig(opt, cfg["batch_size"], cfg["epochs"], cfg["seed"],
                              cfg["precision"], bool(cfg["track_best"]), cfg["prefetch"])
    except (ConfigError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args, cfg):
    tcfg = _training_config(cfg)
    manifest = _load_manifest(args.manifest)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        ckpt = _load_ckpt(args.resume)
        try:
            ckpt.check_compatible(manifest.class_names)
        except SpecMismatchError as exc:
            raise UsageError(str(exc)) from None
        size = ckpt.spec.input_shape[:2]
        tcfg.seed = ckpt.seed
        trainer = Trainer.from_checkpoint(ckpt, tcfg, _loader(cfg, size))
    else:
        s = cfg["image_size"]
        try:
            spec = ModelSpec(manifest.num_classes, (s, s, 3), tuple(cfg["filters"]),
                             dense_units=cfg["dense_units"], dropout=cfg["dropout"],
                             padding=cfg["padding"])
            model = build_model(spec, cfg["seed"], cfg["precision"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        trainer = Trainer(model, manifest.class_names, tcfg, loader=_loader(cfg, (s, s)))
    try:
        trainer.fit(manifest)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except DatasetError as exc:
        raise UsageError(str(exc)) from None
    (out / "epochs.csv").write_text(epoch_csv(trainer.history, cfg["log_wall_time"]))
    save_checkpoint(trainer.checkpoint(), out / "final.lfnt")
    if trainer.best is not None:
        save_checkpoint(trainer.best, out / "best.lfnt")
        print(f"best validation accuracy {trainer.best_val_accuracy:.4f} "
              f"at epoch {trainer.best_epoch}")
    last = trainer.history[-1]
    print(f"epoch {last.epoch}: train_acc={last.train_accuracy:.4f} "
          f"val_acc={last.val_accuracy:.4f}")
    print(f"wrote {out / 'epochs.csv'} and {out / 'final.lfnt'}")
    return 0


def cmd_evaluate(args, cfg):
    manifest = _load_manifest(args.manifest)
    ckpt = _load_ckpt(args.checkpoint)
    try:
        ckpt.check_compatible(manifest.class_names)
    except SpecMismatchError as exc:
        raise UsageError(str(exc)) from None
    model = ckpt.build_model()
    split = cfg["split"]
    try:
        report, cm = evaluate(model, manifest, split, cfg["batch_size"],
                              _loader(cfg, ckpt.spec.input_shape[:2]), cfg["average"])
    except (DatasetError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv(cfg["dataset"], split))
    (out / "confusion.csv").write_text(cm.to_csv())
    print(report.to_csv(cfg["dataset"], split), end="")
    return 0


def cmd_predict(args, cfg):
    ckpt = _load_ckpt(args.checkpoint)
    model = ckpt.build_model()
    k = max(1, min(cfg["k"], len(ckpt.class_names)))
    failures = 0
    for path in args.images:
        try:
            ranked = predict(model, path, ckpt.class_names)
        except ImageError as exc:
            print(f"error: {exc}", file=sys.stderr)
            failures += 1
            continue
        print(path)
        for rank, (name, p) in enumerate(ranked[:k], start=1):
            print(f"  {rank}. {name}  {p:.6f}")
    return 1 if failures == len(args.images) else 0


def cmd_report(args, cfg):
    try:
        runs = load_runs(args.csvs, args.names)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MalformedLogError as exc:
        raise UsageError(str(exc)) from None
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.svg").write_text(render_svg(runs))
    table = summary_table(runs)
    (out / "summary.csv").write_text(table)
    print(table, end="")
    for r in runs:
        e, a = r.best_epoch()
        print(f"{r.name}: best epoch {e} (val_acc {a:.4f})")
    return 0


def _load_manifest(path):
    try:
        return DatasetManifest.load(path)
    except OSError as exc:
        raise RuntimeError(f"cannot read manifest {path}: {exc}") from None
    except DatasetError as exc:
        raise UsageError(str(exc)) from None


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise RuntimeError(f"cannot read checkpoint {path}: {exc}") from None
    except CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _ratios(text):
    parts = [float(p) for p in text.replace("/", ",").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios need three values, e.g. 0.8,0.1,0.1")
    return parts


def _filters(text):
    return [int(p) for p in text.split(",") if p]


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON file with default settings")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out", help="output directory")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="leafnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"leafnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[shared], help="scan a dataset and write a manifest")
    p.add_argument("dataset_root")
    p.add_argument("--manifest", help="manifest path (default <out>/manifest.json)")
    p.add_argument("--ratios", type=_ratios, help="train,val,test shares (default 0.8,0.1,0.1)")
    p.add_argument("--no-augment", dest="augment", action="store_false", default=None)
    p.add_argument("--export-augmented", metavar="DIR",
                   help="also write the four augmented variants of each train image")
    p.add_argument("--image-size", type=int)
    p.add_argument("--crop-fraction", type=float)
    p.add_argument("--rotation-degrees", type=float)

    p = sub.add_parser("train", parents=[shared], help="train the CNN on a manifest")
    p.add_argument("manifest")
    p.add_argument("--optimizer", choices=FAMILIES, metavar="{" + "|".join(FAMILIES) + "}")
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int, help="total number of epochs")
    p.add_argument("--padding", choices=("valid", "same"))
    p.add_argument("--track-best", action="store_true", default=None)
    p.add_argument("--image-size", type=int)
    p.add_argument("--filters", type=_filters, help="conv filter counts, e.g. 32,64,64")
    p.add_argument("--dense-units", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--precision", choices=("float32", "float64"))
    p.add_argument("--crop-fraction", type=float)
    p.add_argument("--rotation-degrees", type=float)
    p.add_argument("--cache-images", action="store_true", default=None)
    p.add_argument("--prefetch", type=int, help="batches to prefetch (0 disables)")
    p.add_argument("--log-wall-time", action="store_true", default=None,
                   help="fill the seconds column of epochs.csv")
    p.add_argument("--resume", metavar="CHECKPOINT", help="continue from a checkpoint")

    p = sub.add_parser("evaluate", parents=[shared], help="metrics on one split")
    p.add_argument("manifest")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--dataset", help="dataset name for the metrics row")
    p.add_argument("--average", choices=("macro", "weighted"))
    p.add_argument("--batch-size", type=int)

    p = sub.add_parser("predict", parents=[shared], help="rank classes for images")
    p.add_argument("checkpoint")
    p.add_argument("images", nargs="+")
    p.add_argument("-k", type=int, help="classes to list per image (default 3)")

    p = sub.add_parser("report", parents=[shared], help="accuracy-vs-epoch SVG chart")
    p.add_argument("csvs", nargs="+", metavar="epochs.csv")
    p.add_argument("--names", nargs="+", help="run labels, one per CSV")
    return parser


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "report" and args.names and len(args.names) != len(args.csvs):
            raise UsageError("--names needs one label per CSV")
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
