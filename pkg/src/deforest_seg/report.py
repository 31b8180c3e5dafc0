"""Static figures: a metrics table and per-query prediction/truth thumbnails."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .metrics import evaluate, evaluate_many  # noqa: E402

# agreement colours: true negative, false positive, false negative, true positive
PALETTE = np.array([[235, 235, 235], [214, 39, 40], [31, 119, 180], [44, 160, 44]], dtype=np.uint8)


def overlay(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """RGB image coding each pixel by its confusion cell."""
    code = np.asarray(pred, dtype=np.uint8) + 2 * np.asarray(truth, dtype=np.uint8)
    # code: 0 tn, 1 fp, 2 fn, 3 tp
    return PALETTE[code]


def thumbnail(pred: np.ndarray, truth: np.ndarray, size: int = 128) -> Image.Image:
    """Prediction, truth and confusion overlay side by side."""
    gray = lambda m: np.repeat((np.asarray(m, dtype=np.uint8) * 255)[..., None], 3, axis=-1)  # noqa: E731
    panels = [gray(pred), gray(truth), overlay(pred, truth)]
    tiles = [Image.fromarray(p).resize((size, size), Image.NEAREST) for p in panels]
    canvas = Image.new("RGB", (3 * size + 8, size), (255, 255, 255))
    for i, tile in enumerate(tiles):
        canvas.paste(tile, (i * (size + 4), 0))
    return canvas


def metrics_table(rows: Sequence[tuple[str, float, float, float]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(rows) + 1))
    ax.axis("off")
    table = ax.table(
        cellText=[[name, f"{acc * 100:.2f}", f"{f1:.4f}", f"{iou:.4f}"] for name, acc, f1, iou in rows],
        colLabels=["Query", "Pixel Accuracy", "F1-Score", "IoU"],
        loc="center",
    )
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def render_report(pairs: Sequence[tuple[str, np.ndarray, np.ndarray]], out_dir: Path, average: str = "micro") -> list[Path]:
    out_dir = Path(out_dir)
    thumbs = out_dir / "thumbnails"
    thumbs.mkdir(parents=True, exist_ok=True)
    written = []
    rows = []
    for name, pred, truth in pairs:
        r = evaluate(pred, truth)
        rows.append((Path(name).stem, r.pixel_accuracy, r.f1, r.iou))
        path = thumbs / f"{Path(name).stem}.png"
        thumbnail(pred, truth).save(path)
        written.append(path)
    total = evaluate_many([(p, t) for _, p, t in pairs], average)
    rows.append((f"all ({average})", total.pixel_accuracy, total.f1, total.iou))
    table_path = out_dir / "metrics_table.png"
    metrics_table(rows, table_path)
    written.append(table_path)
    (out_dir / "metrics.txt").write_text(total.to_text(), encoding="utf-8")
    return written
