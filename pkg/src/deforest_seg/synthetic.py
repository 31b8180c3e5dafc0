"""Synthetic tiles with blob-shaped clearings, for tests and smoke runs."""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import numpy as np

from .dataset import LABEL_SIZE, Manifest, ManifestEntry, Sensor, write_manifest, write_tile


def blob_mask(rng: np.random.Generator, size: int, n_blobs: int | None = None, radius=(0.1, 0.25)) -> np.ndarray:
    yy, xx = np.mgrid[:size, :size]
    mask = np.zeros((size, size), dtype=np.uint8)
    for _ in range(n_blobs if n_blobs is not None else int(rng.integers(1, 4))):
        r = rng.uniform(*radius) * size
        cy, cx = rng.uniform(r, size - r, 2)
        mask |= ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.uint8)
    return mask


def nearest_downsample(mask: np.ndarray, size: int) -> np.ndarray:
    idx = np.round(np.linspace(0, mask.shape[0] - 1, size)).astype(int)
    return mask[np.ix_(idx, idx)]


def landsat_bands(rng: np.random.Generator, label: np.ndarray, cloud_fraction: float = 0.0) -> dict[str, np.ndarray]:
    """Surface reflectance (float32) and brightness temperature bands on the 85x85 grid.

    Forest has high NIR and low red (NDVI ~ 0.75); clearings have NDVI ~ 0.3.
    A ``cloud_fraction`` share of pixels is overwritten with flat bright
    reflectance (NDVI ~ 0).
    """
    lab = nearest_downsample(label, Sensor.LANDSAT8.native_size).astype(np.float64)
    shape = lab.shape
    noise = lambda s: rng.normal(0.0, s, shape)  # noqa: E731
    forest = {"SR_B1": 0.02, "SR_B2": 0.03, "SR_B3": 0.05, "SR_B4": 0.04, "SR_B5": 0.30, "SR_B6": 0.15, "SR_B7": 0.06}
    clear = {"SR_B1": 0.05, "SR_B2": 0.07, "SR_B3": 0.10, "SR_B4": 0.12, "SR_B5": 0.22, "SR_B6": 0.25, "SR_B7": 0.18}
    bands = {b: np.clip(forest[b] + (clear[b] - forest[b]) * lab + noise(0.005), 0.001, 1.0) for b in forest}
    bands["ST_B10"] = 297.0 + 4.0 * lab + noise(0.3)
    n_cloud = int(round(cloud_fraction * lab.size))
    if n_cloud:
        flat = rng.choice(lab.size, n_cloud, replace=False)
        for b in forest:
            bands[b].flat[flat] = 0.5
        bands["ST_B10"].flat[flat] = 280.0
    return {b: v.astype(np.float32) for b, v in bands.items()}


def sentinel_bands(rng: np.random.Generator, label: np.ndarray) -> dict[str, np.ndarray]:
    """Linear-power VV/VH backscatter with multiplicative speckle."""
    lab = label.astype(np.float64)
    speckle = lambda: rng.gamma(8.0, 1.0 / 8.0, lab.shape)  # noqa: E731
    vv = (0.12 - 0.05 * lab) * speckle()
    vh = (0.035 - 0.02 * lab) * speckle()
    return {"VV": vv.astype(np.float32), "VH": vh.astype(np.float32)}


def write_fixture(
    root: str | Path,
    sensor: Sensor,
    n_entries: int,
    seed: int = 0,
    n_locations: int | None = None,
    start: dt.date = dt.date(2018, 8, 1),
    cloud_fractions: dict[int, float] | None = None,
    with_labels: bool = True,
    label_seed: int | None = None,
) -> Path:
    """Write ``n_entries`` tiles plus labels and a manifest under ``root``.

    Entries cycle over ``n_locations`` sites inside the challenge window, one
    acquisition date per visit. Each site keeps a fixed label drawn from
    ``label_seed`` (default ``seed``), so two sensors written with the same
    ``label_seed`` share ground truth. Returns the manifest path.
    """
    root = Path(root)
    (root / "tiles").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_locations = n_locations or n_entries
    sites = [(round(-3.87 - 0.01 * i, 4), round(-54.8 - 0.005 * i, 4)) for i in range(n_locations)]
    label_rng = np.random.default_rng([seed if label_seed is None else label_seed, 1])
    site_labels = [blob_mask(label_rng, LABEL_SIZE) for _ in sites]
    cloud_fractions = cloud_fractions or {}
    entries = []
    for i in range(n_entries):
        s = i % n_locations
        lat, lon = sites[s]
        date = start + dt.timedelta(days=16 * (i // n_locations))
        label = site_labels[s]
        stem = f"{sensor.value}_{i:03d}"
        label_path = root / "labels" / f"{lat!r}_{lon!r}_{date.isoformat()}.tif"
        write_tile(label_path, label)
        if sensor is Sensor.LANDSAT8:
            bands = landsat_bands(rng, label, cloud_fractions.get(i, 0.0))
        else:
            bands = sentinel_bands(rng, label)
        paths = {}
        for name, values in bands.items():
            paths[name] = root / "tiles" / f"{stem}_{name}.tif"
            write_tile(paths[name], values)
        entries.append(ManifestEntry(sensor, lat, lon, date, paths, label_path if with_labels else None))
    manifest_path = root / f"{sensor.value}.manifest"
    write_manifest(Manifest(sensor, tuple(entries)), manifest_path)
    return manifest_path
