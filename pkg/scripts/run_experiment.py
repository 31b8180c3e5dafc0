"""Train both sensor models on a synthetic corpus and compare the raw and refined submissions.

    python scripts/make_fixtures.py --out data/synthetic
    python scripts/run_experiment.py --data data/synthetic --out runs/experiment --epochs 40 --batch-size 4

Prints a pixel accuracy / F1 / IoU table for the ``raw`` and ``v2`` variants.
Ground truth is the per-site label written by ``make_fixtures.py``.
"""

import argparse
from pathlib import Path

from deforest_seg import cli
from deforest_seg.metrics import MetricsReport


def step(argv):
    print("$ deforest-seg " + " ".join(argv), flush=True)
    status = cli.run(argv)
    if status:
        raise SystemExit(status)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", type=Path, default=Path("data/synthetic"))
    ap.add_argument("--out", type=Path, default=Path("runs/experiment"))
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--batch-size", type=int, default=4)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--base-filters", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model_flags = ["--epochs", str(args.epochs), "--batch-size", str(args.batch_size), "--depth", str(args.depth),
                   "--base-filters", str(args.base_filters), "--seed", str(args.seed)]
    preds = []
    for sensor in ("landsat8", "sentinel1"):
        manifest = args.data / sensor / f"{sensor}.manifest"
        step(["train", "--manifest", str(manifest), "--out", str(args.out / f"train_{sensor}"), *model_flags])
        step(["predict", "--manifest", str(manifest), "--checkpoint", str(args.out / f"train_{sensor}" / "checkpoint.npz"),
              "--out", str(args.out / f"pred_{sensor}")])
        preds += ["--predictions", str(args.out / f"pred_{sensor}")]

    rows = []
    for variant in ("raw", "v2"):
        step(["refine", *preds, "--queries", str(args.data / "queries.txt"), "--variant", variant,
              "--out", str(args.out / f"masks_{variant}")])
        step(["evaluate", "--pred", str(args.out / f"masks_{variant}"), "--truth", str(args.data / "sentinel1" / "labels"),
              "--out", str(args.out / f"eval_{variant}")])
        step(["report", "--pred", str(args.out / f"masks_{variant}"), "--truth", str(args.data / "sentinel1" / "labels"),
              "--out", str(args.out / f"report_{variant}")])
        rows.append((variant, MetricsReport.from_text((args.out / f"eval_{variant}" / "metrics.txt").read_text())))

    print(f"\n{'variant':<10}{'pixel acc':>12}{'F1':>10}{'IoU':>10}")
    for name, r in rows:
        print(f"{name:<10}{100 * r.pixel_accuracy:>11.2f}%{r.f1:>10.4f}{r.iou:>10.4f}")


if __name__ == "__main__":
    main()
