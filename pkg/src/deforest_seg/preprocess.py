"""Sensor-specific band transforms that turn raw tiles into model inputs.

Landsat-8: every band min-max scaled to [0, 1] per tile, then bilinearly
resampled from 85x85 to the 256x256 label grid. Sentinel-1: VV, VH and a
VV/VH ratio band, each clipped to its own [p, 100-p] percentile window and
rescaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LABEL_SIZE, Sample, Sensor

TRANSFORMS = ("identity", "rot90", "rot180", "rot270", "hflip", "vflip")


@dataclass(frozen=True)
class PreprocessConfig:
    stretch_percent: float = 1.0
    epsilon_ratio: float = 1e-6
    resample_target: tuple[int, int] = (LABEL_SIZE, LABEL_SIZE)

    def __post_init__(self):
        if not 0.0 <= self.stretch_percent < 50.0:
            raise ValueError(f"stretch_percent must lie in [0, 50), got {self.stretch_percent}")
        if not self.epsilon_ratio > 0:
            raise ValueError(f"epsilon_ratio must be positive, got {self.epsilon_ratio}")


def _rescale(band: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if not hi > lo:
        return np.zeros(band.shape, dtype=np.float64)
    out = (np.clip(band, lo, hi) - lo) / (hi - lo)
    # guard against one-ulp overshoot of the division
    return np.clip(out, 0.0, 1.0)


def minmax_normalize(band: np.ndarray) -> np.ndarray:
    """Map a band affinely onto [0, 1]; a constant band maps to zeros."""
    band = np.asarray(band, dtype=np.float64)
    return _rescale(band, float(band.min()), float(band.max()))


def percentile_stretch(band: np.ndarray, p: float = 1.0) -> np.ndarray:
    """Clip to the [p, 100 - p] percentile window, then rescale to [0, 1].

    Percentiles interpolate linearly between order statistics. A degenerate
    window yields zeros.
    """
    if not 0.0 <= p < 50.0:
        raise ValueError(f"percent must lie in [0, 50), got {p}")
    band = np.asarray(band, dtype=np.float64)
    lo, hi = np.percentile(band, [p, 100.0 - p])
    return _rescale(band, float(lo), float(hi))


def ratio_band(vv: np.ndarray, vh: np.ndarray, epsilon: float = 1e-6) -> np.ndarray:
    vv = np.asarray(vv, dtype=np.float64)
    vh = np.asarray(vh, dtype=np.float64)
    if vv.shape != vh.shape:
        raise ValueError(f"VV shape {vv.shape} does not match VH shape {vh.shape}")
    return vv / np.maximum(vh, epsilon)


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if n_out == 1 or n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    i0 = np.minimum(np.floor(pos).astype(np.intp), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def resample_bilinear(band: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling on a corner-aligned grid (output corners hit input corners)."""
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be at least 1x1, got {out_h}x{out_w}")
    band = np.asarray(band, dtype=np.float64)
    if band.ndim != 2 or band.size == 0:
        raise ValueError(f"expected a non-empty 2-D band, got shape {band.shape}")
    r0, r1, wr = _axis_weights(band.shape[0], out_h)
    c0, c1, wc = _axis_weights(band.shape[1], out_w)
    # v0 + w * (v1 - v0) keeps constants exact
    rows = band[r0] + wr[:, None] * (band[r1] - band[r0])
    out = rows[:, c0] + wc[None, :] * (rows[:, c1] - rows[:, c0])
    return np.clip(out, band.min(), band.max())


def preprocess_bands(bands: dict[str, np.ndarray], sensor: Sensor, config: PreprocessConfig | None = None) -> np.ndarray:
    """Stack the sensor's bands into an (H, W, C) float32 image in [0, 1]."""
    config = config or PreprocessConfig()
    missing = [b for b in sensor.bands if b not in bands]
    if missing:
        raise ValueError(f"missing band(s) for {sensor.value}: {', '.join(missing)}")
    out_h, out_w = config.resample_target
    if sensor is Sensor.LANDSAT8:
        layers = [resample_bilinear(minmax_normalize(bands[b]), out_h, out_w) for b in sensor.bands]
    else:
        vv, vh = bands["VV"], bands["VH"]
        raw = [vv, vh, ratio_band(vv, vh, config.epsilon_ratio)]
        layers = [percentile_stretch(b, config.stretch_percent) for b in raw]
        if layers[0].shape != (out_h, out_w):
            layers = [resample_bilinear(b, out_h, out_w) for b in layers]
    return np.stack(layers, axis=-1).astype(np.float32)


def assemble_sample(bands: dict[str, np.ndarray], label: np.ndarray, sensor: Sensor, key, config: PreprocessConfig | None = None) -> Sample:
    image = preprocess_bands(bands, sensor, config)
    label = np.asarray(label, dtype=np.uint8)
    if label.shape != image.shape[:2]:
        raise ValueError(f"label shape {label.shape} does not match image grid {image.shape[:2]}")
    return Sample(image, label, key)


def apply_transform(array: np.ndarray, name: str) -> np.ndarray:
    """Apply a named dihedral transform to the two leading (spatial) axes."""
    if name == "identity":
        out = array
    elif name.startswith("rot"):
        out = np.rot90(array, k=int(name[3:]) // 90, axes=(0, 1))
    elif name == "hflip":
        out = array[:, ::-1]
    elif name == "vflip":
        out = array[::-1]
    else:
        raise ValueError(f"unknown transform {name!r}")
    return np.ascontiguousarray(out)


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Apply one transform, drawn uniformly, identically to image and label."""
    name = TRANSFORMS[int(rng.integers(len(TRANSFORMS)))]
    return Sample(apply_transform(sample.image, name), apply_transform(sample.label, name), sample.key)
