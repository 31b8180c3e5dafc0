"""Per-query post-processing of per-image probability masks.

Two variants are supported:

* ``raw``: average every available mask for the query and threshold at 0.5.
* ``v2``: drop cloudy Landsat-8 masks (NDVI test), average the survivors at
  0.4, then apply a morphological opening (erosion followed by dilation).
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Sensor, parse_date

log = logging.getLogger(__name__)

NIR_BAND = "SR_B5"
RED_BAND = "SR_B4"
LOCATION_TOL = 1e-6


class Variant(str, enum.Enum):
    RAW_AVERAGE = "raw"
    REFINED = "v2"


class NoDataError(LookupError):
    """No usable prediction exists for a query."""


@dataclass(frozen=True)
class RefineConfig:
    ndvi_threshold: float = 0.1
    cloud_fraction_limit: float = 0.01
    aggregate_threshold: float = 0.4
    kernel: int = 3
    pool_sensors: bool = True

    def __post_init__(self):
        for name in ("cloud_fraction_limit", "aggregate_threshold"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        if not -1.0 <= self.ndvi_threshold <= 1.0:
            raise ValueError(f"ndvi_threshold must lie in [-1, 1], got {self.ndvi_threshold}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and >= 1, got {self.kernel}")


@dataclass(frozen=True)
class Query:
    lat: float
    lon: float
    date: dt.date

    @property
    def name(self) -> str:
        return f"{self.lat!r}_{self.lon!r}_{self.date.isoformat()}"

    def matches(self, lat: float, lon: float) -> bool:
        return abs(self.lat - lat) <= LOCATION_TOL and abs(self.lon - lon) <= LOCATION_TOL


@dataclass
class PredictionRecord:
    lat: float
    lon: float
    date: dt.date
    sensor: Sensor
    prob_mask: np.ndarray
    red: np.ndarray | None = None
    nir: np.ndarray | None = None

    @property
    def key(self) -> tuple:
        return (self.lat, self.lon, self.date, self.sensor)

    @property
    def label(self) -> str:
        return f"{self.sensor.value}:{self.lat!r}_{self.lon!r}_{self.date.isoformat()}"


@dataclass
class RefineResult:
    query: Query
    mask: np.ndarray
    variant: Variant
    used: list[str] = field(default_factory=list)
    discarded: list[tuple[str, str]] = field(default_factory=list)

    def provenance(self) -> dict:
        return {
            "query": {"lat": self.query.lat, "lon": self.query.lon, "date": self.query.date.isoformat()},
            "variant": self.variant.value,
            "used": self.used,
            "discarded": [{"record": r, "reason": why} for r, why in self.discarded],
            "positive_pixels": int(self.mask.sum()),
        }


def ndvi(red: np.ndarray, nir: np.ndarray) -> np.ndarray:
    """(nir - red) / (nir + red) per pixel, 0 where both are 0."""
    red = np.asarray(red, dtype=np.float64)
    nir = np.asarray(nir, dtype=np.float64)
    if red.shape != nir.shape:
        raise ValueError(f"red shape {red.shape} does not match NIR shape {nir.shape}")
    if (red < 0).any() or (nir < 0).any():
        raise ValueError("NDVI inputs must be non-negative reflectances")
    total = nir + red
    out = np.zeros_like(total)
    np.divide(nir - red, total, out=out, where=total > 0)
    return out


def cloud_fraction(ndvi_grid: np.ndarray, ndvi_threshold: float = 0.1) -> float:
    """Fraction of pixels strictly below the NDVI threshold."""
    grid = np.asarray(ndvi_grid)
    return float(np.count_nonzero(grid < ndvi_threshold) / grid.size)


def filter_cloudy(
    records: Sequence[PredictionRecord], config: RefineConfig = RefineConfig()
) -> tuple[list[PredictionRecord], list[tuple[PredictionRecord, str]]]:
    """Split optical records into kept and discarded (with reason).

    A record is discarded when its cloud fraction exceeds the limit strictly.
    """
    kept, dropped = [], []
    for rec in records:
        if rec.red is None or rec.nir is None:
            raise ValueError(f"{rec.label}: optical record lacks red/NIR bands for the cloud test")
        frac = cloud_fraction(ndvi(rec.red, rec.nir), config.ndvi_threshold)
        if frac > config.cloud_fraction_limit:
            reason = f"cloud_fraction {frac:.4f} > {config.cloud_fraction_limit:.4f}"
            log.info("discarding %s: %s", rec.label, reason)
            dropped.append((rec, reason))
        else:
            kept.append(rec)
    return kept, dropped


def mean_mask(masks: Sequence[np.ndarray]) -> np.ndarray:
    if not masks:
        raise NoDataError("no masks to aggregate")
    shapes = {np.shape(m) for m in masks}
    if len(shapes) != 1:
        raise ValueError(f"masks have differing shapes {sorted(shapes)}")
    # sorted summation keeps the mean independent of input order
    stacked = np.sort(np.stack([np.asarray(m, dtype=np.float64) for m in masks]), axis=0)
    return stacked.sum(axis=0) / len(masks)


def aggregate_masks(masks: Sequence[np.ndarray], threshold: float = 0.4) -> np.ndarray:
    """Per-pixel mean of the masks, binarized with ``mean >= threshold``."""
    return (mean_mask(masks) >= threshold).astype(np.uint8)


def _windows(mask: np.ndarray, kernel: int) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"expected a 2-D mask, got shape {mask.shape}")
    if ((mask != 0) & (mask != 1)).any():
        raise ValueError("morphology input must be binary")
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be odd and >= 1, got {kernel}")
    r = kernel // 2
    padded = np.pad(mask.astype(np.uint8), r, constant_values=0)
    return sliding_window_view(padded, (kernel, kernel))


def erode(mask: np.ndarray, kernel: int = 3) -> np.ndarray:
    """Binary erosion by a square of ones; pixels beyond the border count as 0."""
    return _windows(mask, kernel).min(axis=(-2, -1))


def dilate(mask: np.ndarray, kernel: int = 3) -> np.ndarray:
    return _windows(mask, kernel).max(axis=(-2, -1))


def opening(mask: np.ndarray, kernel: int = 3) -> np.ndarray:
    return dilate(erode(mask, kernel), kernel)


def _average(records: Sequence[PredictionRecord], pool_sensors: bool) -> np.ndarray:
    if pool_sensors:
        return mean_mask([r.prob_mask for r in records])
    per_sensor = [
        mean_mask([r.prob_mask for r in records if r.sensor is s]) for s in Sensor if any(r.sensor is s for r in records)
    ]
    return mean_mask(per_sensor)


def available_records(query: Query, records: Iterable[PredictionRecord]) -> list[PredictionRecord]:
    """Records at the query location with a source date on or before the query date."""
    return [r for r in records if query.matches(r.lat, r.lon) and r.date <= query.date]


def refine_query(
    query: Query,
    records: Sequence[PredictionRecord],
    config: RefineConfig = RefineConfig(),
    variant: Variant = Variant.REFINED,
) -> RefineResult:
    variant = Variant(variant)
    for r in records:
        if not query.matches(r.lat, r.lon):
            raise ValueError(f"{r.label} does not belong to query {query.name}")
    if not records:
        raise NoDataError(f"no predictions available for query {query.name}")
    ordered = sorted(records, key=lambda r: (r.sensor.value, r.date))
    if variant is Variant.RAW_AVERAGE:
        mask = (_average(ordered, config.pool_sensors) >= 0.5).astype(np.uint8)
        return RefineResult(query, mask, variant, used=[r.label for r in ordered])

    optical = [r for r in ordered if r.sensor is Sensor.LANDSAT8]
    sar = [r for r in ordered if r.sensor is Sensor.SENTINEL1]
    kept, dropped = filter_cloudy(optical, config)
    usable = kept + sar
    discarded = [(r.label, why) for r, why in dropped]
    if not usable:
        raise NoDataError(f"all {len(optical)} prediction(s) for query {query.name} were discarded as cloudy")
    mean = _average(usable, config.pool_sensors)
    mask = opening((mean >= config.aggregate_threshold).astype(np.uint8), config.kernel)
    return RefineResult(query, mask, variant, used=[r.label for r in usable], discarded=discarded)


# --- file formats -----------------------------------------------------------

RECORD_INDEX = "predictions.jsonl"


def write_records(records: Sequence[PredictionRecord], out_dir: str | Path) -> Path:
    """Write one ``.npz`` per record plus a line-delimited JSON index."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for rec in sorted(records, key=lambda r: (r.lat, r.lon, r.date, r.sensor.value)):
        fname = f"{rec.sensor.value}_{rec.lat!r}_{rec.lon!r}_{rec.date.isoformat()}.npz"
        arrays = {"prob_mask": np.asarray(rec.prob_mask, dtype=np.float32)}
        if rec.red is not None:
            arrays["red"] = np.asarray(rec.red)
            arrays["nir"] = np.asarray(rec.nir)
        with open(out_dir / fname, "wb") as fh:
            np.savez(fh, **arrays)
        lines.append(
            json.dumps({"sensor": rec.sensor.value, "lat": rec.lat, "lon": rec.lon, "date": rec.date.isoformat(), "file": fname})
        )
    index = out_dir / RECORD_INDEX
    index.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return index


def read_records(path: str | Path) -> list[PredictionRecord]:
    """Read records from an index file or a directory containing one."""
    path = Path(path)
    if path.is_dir():
        path = path / RECORD_INDEX
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            meta = json.loads(line)
            with np.load(path.parent / meta["file"], allow_pickle=False) as data:
                red = data["red"] if "red" in data.files else None
                nir = data["nir"] if "nir" in data.files else None
                records.append(
                    PredictionRecord(
                        float(meta["lat"]), float(meta["lon"]), parse_date(meta["date"]), Sensor(meta["sensor"]),
                        data["prob_mask"], red, nir,
                    )
                )
        except (KeyError, ValueError, OSError) as exc:
            raise ValueError(f"{path}:{lineno}: bad prediction record ({exc})") from exc
    return records


def read_queries(path: str | Path) -> list[Query]:
    """Parse a query file: one ``lat lon date`` triple per line (whitespace or comma separated)."""
    queries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'lat lon date', got {line!r}")
        try:
            queries.append(Query(float(parts[0]), float(parts[1]), parse_date(parts[2])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return queries
