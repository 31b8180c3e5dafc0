"""Command-line entry point: prepare, train, predict, refine, evaluate, report.

Outputs go to ``--out`` when given, otherwise to a timestamped directory
under ``$DEFOREST_SEG_OUT`` (default ``./runs``).
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import dataset as ds
from .losses import LossConfig
from .metrics import evaluate_many
from .model import ModelConfig, build_attention_unet, load_checkpoint, predict_batch, save_checkpoint
from .preprocess import PreprocessConfig, assemble_sample, preprocess_bands
from .refine import (
    NIR_BAND,
    RED_BAND,
    NoDataError,
    PredictionRecord,
    RefineConfig,
    Variant,
    available_records,
    read_queries,
    read_records,
    refine_query,
    write_records,
)
from .trainer import TrainConfig, train

log = logging.getLogger("deforest_seg")

OUT_ENV = "DEFOREST_SEG_OUT"
DEFAULT_VAL_FRACTION = 0.1
SENSOR_CHOICES = [s.value for s in ds.Sensor]


def default_config() -> dict:
    """Every tunable default, flattened into one mapping."""
    cfg = {}
    train_defaults = TrainConfig()
    for f in fields(TrainConfig):
        if f.name not in ("loss", "augment"):
            cfg[f.name] = getattr(train_defaults, f.name)
    cfg.update(asdict(LossConfig()))
    cfg.update(asdict(RefineConfig()))
    pre = PreprocessConfig()
    cfg["stretch_percent"] = pre.stretch_percent
    cfg["epsilon_ratio"] = pre.epsilon_ratio
    cfg["depth"] = 4
    cfg["base_filters"] = 64
    cfg["val_fraction"] = DEFAULT_VAL_FRACTION
    return cfg


def resolved_config(args: argparse.Namespace) -> dict:
    cfg = default_config()
    overrides = {
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "epochs": args.epochs,
        "seed": args.seed,
        "ndvi_threshold": args.ndvi_threshold,
        "cloud_fraction_limit": args.cloud_limit,
        "aggregate_threshold": args.agg_threshold,
        "kernel": args.kernel,
        "depth": args.depth,
        "base_filters": args.base_filters,
        "val_fraction": args.val_fraction,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.items())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory (default: run-stamped under $%s)" % OUT_ENV)
    common.add_argument("--manifest", type=Path)
    common.add_argument("--sensor", choices=SENSOR_CHOICES)
    common.add_argument("--checkpoint", type=Path)
    common.add_argument("--predictions", type=Path, action="append", help="prediction directory (repeatable)")
    common.add_argument("--queries", type=Path)
    common.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.REFINED.value)
    common.add_argument("--pred", type=Path, help="directory of predicted masks")
    common.add_argument("--truth", type=Path, help="directory of ground-truth masks")
    common.add_argument("--average", choices=["micro", "macro"], default="micro")
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("--depth", type=int)
    common.add_argument("--base-filters", type=int)
    common.add_argument("--val-fraction", type=float)
    common.add_argument("--ndvi-threshold", type=float)
    common.add_argument("--cloud-limit", type=float)
    common.add_argument("--agg-threshold", type=float)
    common.add_argument("--kernel", type=int)
    common.add_argument("--no-pool-sensors", action="store_true", help="average each sensor separately, then merge")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="deforest-seg", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, helptext in [
        ("prepare", "validate a manifest and print dataset statistics"),
        ("train", "train one sensor's model; writes checkpoint and history"),
        ("predict", "run a checkpoint over a manifest; writes prediction records"),
        ("refine", "turn prediction records into one mask per query"),
        ("evaluate", "score predicted masks against ground truth"),
        ("report", "render metric tables and mask thumbnails"),
    ]:
        sub.add_parser(name, parents=[common], help=helptext, description=helptext)
    return parser


class UsageError(Exception):
    pass


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, [])]
    if missing:
        raise UsageError(f"{args.command} requires " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _out_dir(args) -> Path:
    if args.out is not None:
        out = args.out
    else:
        stamp = dt.datetime.now().strftime("%Y%m%dT%H%M%S")
        out = Path(os.environ.get(OUT_ENV, "runs")) / f"{args.command}-{stamp}"
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, require_labels=True) -> ds.Manifest:
    manifest = ds.load_manifest(args.manifest, require_labels=require_labels)
    if args.sensor is not None and manifest.sensor.value != args.sensor:
        raise ds.ManifestError(f"--sensor {args.sensor} but manifest holds {manifest.sensor.value} entries")
    return manifest


def _samples(manifest: ds.Manifest, cfg: dict) -> list[ds.Sample]:
    pre = PreprocessConfig(cfg["stretch_percent"], cfg["epsilon_ratio"])
    samples = []
    for entry in manifest:
        bands, label = ds.load_sample(entry)
        samples.append(assemble_sample(bands, label, entry.sensor, entry.key, pre))
    return samples


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_prepare(args, cfg) -> int:
    _require(args, "manifest")
    manifest = _manifest(args)
    samples = _samples(manifest, cfg)
    images = np.stack([s.image for s in samples])
    labels = np.stack([s.label for s in samples])
    stats = {
        "sensor": manifest.sensor.value,
        "entries": len(manifest),
        "image_shape": list(images.shape[1:]),
        "bands": list(manifest.sensor.bands) + (["VV/VH"] if manifest.sensor is ds.Sensor.SENTINEL1 else []),
        "channel_mean": [round(float(v), 6) for v in images.mean(axis=(0, 1, 2))],
        "channel_std": [round(float(v), 6) for v in images.std(axis=(0, 1, 2))],
        "positive_fraction": round(float(labels.mean()), 6),
        "date_range": [min(e.date for e in manifest).isoformat(), max(e.date for e in manifest).isoformat()],
    }
    out = _out_dir(args)
    _write_json(out / "dataset_stats.json", stats)
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(args, cfg) -> int:
    _require(args, "manifest")
    manifest = _manifest(args)
    train_m, val_m = ds.split_dataset(manifest, cfg["val_fraction"], cfg["seed"])
    if not val_m.entries:
        raise ValueError("manifest too small to hold out a validation entry")
    train_set, val_set = _samples(train_m, cfg), _samples(val_m, cfg)
    sensor = manifest.sensor
    model_cfg = ModelConfig(sensor.channels, cfg["depth"], cfg["base_filters"])
    train_cfg = TrainConfig(
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        epochs=cfg["epochs"],
        adam_beta1=cfg["adam_beta1"],
        adam_beta2=cfg["adam_beta2"],
        adam_epsilon=cfg["adam_epsilon"],
        seed=cfg["seed"],
        loss=LossConfig(cfg["bce_weight"], cfg["dice_weight"], cfg["dice_smooth"], cfg["prob_clip_epsilon"]),
    )
    model = build_attention_unet(model_cfg, cfg["seed"])
    model, history = train(model, train_set, val_set, train_cfg, sensor)
    out = _out_dir(args)
    save_checkpoint(model, out / "checkpoint.npz", sensor.value, cfg["seed"])
    history.write(out / "history.jsonl")
    _write_json(out / "config.json", {**cfg, "sensor": sensor.value})
    last = history[-1]
    print(f"epochs={len(history)} updates={history.total_updates} train_acc={last.train_acc:.4f} val_acc={last.val_acc:.4f}")
    print(f"checkpoint={out / 'checkpoint.npz'}")
    return 0


def cmd_predict(args, cfg) -> int:
    _require(args, "manifest", "checkpoint")
    manifest = _manifest(args, require_labels=False)
    model, header = load_checkpoint(args.checkpoint, expected_sensor=manifest.sensor.value)
    pre = PreprocessConfig(cfg["stretch_percent"], cfg["epsilon_ratio"])
    records = []
    for entry in manifest:
        bands, _ = ds.load_sample(entry)
        image = preprocess_bands(bands, entry.sensor, pre)
        prob = predict_batch(model, image[None])[0]
        red = nir = None
        if entry.sensor is ds.Sensor.LANDSAT8:
            red, nir = bands[RED_BAND], bands[NIR_BAND]
        records.append(PredictionRecord(entry.lat, entry.lon, entry.date, entry.sensor, prob, red, nir))
    out = _out_dir(args)
    index = write_records(records, out)
    print(f"records={len(records)} index={index}")
    return 0


def cmd_refine(args, cfg) -> int:
    _require(args, "predictions", "queries")
    records = [r for p in args.predictions for r in read_records(p)]
    queries = read_queries(args.queries)
    rcfg = RefineConfig(
        cfg["ndvi_threshold"], cfg["cloud_fraction_limit"], cfg["aggregate_threshold"], cfg["kernel"],
        not args.no_pool_sensors,
    )
    out = _out_dir(args)
    n_ok = n_missing = 0
    for q in queries:
        try:
            result = refine_query(q, available_records(q, records), rcfg, Variant(args.variant))
        except NoDataError as exc:
            log.warning("no data for %s: %s", q.name, exc)
            _write_json(out / f"{q.name}.json", {"query": q.name, "status": "no_data", "reason": str(exc)})
            n_missing += 1
            continue
        ds.write_tile(out / f"{q.name}.tif", result.mask)
        _write_json(out / f"{q.name}.json", {**result.provenance(), "status": "ok"})
        n_ok += 1
    print(f"queries={len(queries)} masks={n_ok} no_data={n_missing} variant={args.variant}")
    return 0


def _mask_pairs(pred_dir: Path, truth_dir: Path) -> list[tuple[str, np.ndarray, np.ndarray]]:
    names = sorted(p.name for p in pred_dir.glob("*.tif"))
    if not names:
        raise FileNotFoundError(f"no .tif masks in {pred_dir}")
    pairs = []
    for name in names:
        truth = truth_dir / name
        if not truth.is_file():
            raise FileNotFoundError(f"no ground truth for {name} in {truth_dir}")
        pairs.append((name, ds.read_tile(pred_dir / name), ds.read_label(truth, size=ds.read_tile(truth).shape[0])))
    return pairs


def cmd_evaluate(args, cfg) -> int:
    _require(args, "pred", "truth")
    pairs = _mask_pairs(args.pred, args.truth)
    rep = evaluate_many([(p, t) for _, p, t in pairs], args.average)
    out = _out_dir(args)
    text = rep.to_text()
    (out / "metrics.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_report(args, cfg) -> int:
    from .report import render_report

    _require(args, "pred", "truth")
    pairs = _mask_pairs(args.pred, args.truth)
    out = _out_dir(args)
    written = render_report(pairs, out, average=args.average)
    print(f"figures={len(written)} out={out}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "predict": cmd_predict,
    "refine": cmd_refine,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    cfg = resolved_config(args)
    if args.print_config:
        sys.stdout.write(format_config(cfg))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"deforest-seg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("traceback", exc_info=True)
        print(f"deforest-seg {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
