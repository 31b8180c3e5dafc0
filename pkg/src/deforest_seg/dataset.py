"""Manifest-driven ingestion of raster tiles and binary label masks.

Manifest format (UTF-8, one record per line, tab separated)::

    sensor  lat  lon  date  label_path  BAND=path  BAND=path ...

``sensor`` is ``landsat8`` or ``sentinel1``, ``date`` is ISO-8601
(``YYYY-MM-DD``). Relative paths resolve against the manifest's directory.
Blank lines and lines starting with ``#`` are ignored. A label path of ``-``
marks an unlabelled entry (only accepted with ``require_labels=False``).

Tiles are single-band TIFF files (uint8/uint16/int16/int32/float32), read and
written with ``tifffile``. A loaded tile is a 2-D numpy array in its stored
dtype; no scaling happens at load time.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile

TILE_DTYPES = (np.uint8, np.uint16, np.int16, np.int32, np.float32)
NO_LABEL = "-"


class Sensor(str, enum.Enum):
    LANDSAT8 = "landsat8"
    SENTINEL1 = "sentinel1"

    @property
    def bands(self) -> tuple[str, ...]:
        return SENSOR_BANDS[self]

    @property
    def channels(self) -> int:
        """Channel count of a preprocessed sample for this sensor."""
        return 8 if self is Sensor.LANDSAT8 else 3

    @property
    def native_size(self) -> int:
        return 85 if self is Sensor.LANDSAT8 else 256


SENSOR_BANDS = {
    Sensor.LANDSAT8: ("SR_B1", "SR_B2", "SR_B3", "SR_B4", "SR_B5", "SR_B6", "SR_B7", "ST_B10"),
    Sensor.SENTINEL1: ("VV", "VH"),
}

LABEL_SIZE = 256


class ManifestError(ValueError):
    """Raised for malformed, incomplete or inconsistent manifests."""


class TileError(ValueError):
    """Raised when a raster file cannot be used as a tile or label."""


Key = tuple[float, float, dt.date, Sensor]


@dataclass(frozen=True)
class ManifestEntry:
    sensor: Sensor
    lat: float
    lon: float
    date: dt.date
    band_paths: dict[str, Path] = field(hash=False)
    label_path: Path | None

    @property
    def key(self) -> Key:
        return (self.lat, self.lon, self.date, self.sensor)

    def validate(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ManifestError(f"{self.describe()}: latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ManifestError(f"{self.describe()}: longitude {self.lon} outside [-180, 180]")
        expected = set(self.sensor.bands)
        declared = set(self.band_paths)
        missing = sorted(expected - declared, key=self.sensor.bands.index)
        if missing:
            raise ManifestError(f"{self.describe()}: missing band(s) {', '.join(missing)}")
        extra = sorted(declared - expected)
        if extra:
            raise ManifestError(f"{self.describe()}: unexpected band(s) {', '.join(extra)}")

    def describe(self) -> str:
        return f"entry ({self.sensor.value}, {self.lat}, {self.lon}, {self.date.isoformat()})"

    def to_line(self, root: Path | None = None) -> str:
        def rel(p: Path | None) -> str:
            if p is None:
                return NO_LABEL
            if root is not None:
                try:
                    return str(p.relative_to(root))
                except ValueError:
                    pass
            return str(p)

        fields = [self.sensor.value, repr(self.lat), repr(self.lon), self.date.isoformat(), rel(self.label_path)]
        fields += [f"{b}={rel(self.band_paths[b])}" for b in self.sensor.bands]
        return "\t".join(fields)


@dataclass(frozen=True)
class Manifest:
    sensor: Sensor
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class Sample:
    """Preprocessed image (H, W, C) float32 in [0, 1] with its binary label (H, W) uint8."""

    image: np.ndarray
    label: np.ndarray
    key: Key


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _parse_line(line: str, lineno: int, root: Path) -> ManifestEntry:
    parts = line.split("\t")
    if len(parts) < 5:
        raise ManifestError(f"line {lineno}: expected at least 5 tab-separated fields, got {len(parts)}")
    sensor_s, lat_s, lon_s, date_s, label_s, *band_fields = parts
    try:
        sensor = Sensor(sensor_s.strip().lower())
    except ValueError:
        raise ManifestError(f"line {lineno}: unknown sensor {sensor_s!r}") from None
    try:
        lat, lon = float(lat_s), float(lon_s)
        date = parse_date(date_s.strip())
    except ValueError as exc:
        raise ManifestError(f"line {lineno}: {exc}") from None

    def resolve(p: str) -> Path:
        path = Path(p.strip())
        return path if path.is_absolute() else root / path

    bands: dict[str, Path] = {}
    for item in band_fields:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ManifestError(f"line {lineno}: band field {item!r} is not BAND=path")
        if name in bands:
            raise ManifestError(f"line {lineno}: band {name} declared twice")
        bands[name.strip()] = resolve(path)
    label = None if label_s.strip() == NO_LABEL else resolve(label_s)
    entry = ManifestEntry(sensor, lat, lon, date, bands, label)
    try:
        entry.validate()
    except ManifestError as exc:
        raise ManifestError(f"line {lineno}: {exc}") from None
    return entry


def load_manifest(path: str | Path, require_labels: bool = True, check_files: bool = True) -> Manifest:
    """Parse and validate a manifest file.

    Every entry must declare exactly its sensor's bands, keys must be unique,
    all entries must share one sensor, and (with ``check_files``) every
    referenced file must exist.
    """
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: dict[Key, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            entry = _parse_line(line, lineno, root)
            if entry.key in seen:
                lat, lon, date, sensor = entry.key
                raise ManifestError(
                    f"line {lineno}: duplicate key ({sensor.value}, {lat}, {lon}, {date.isoformat()}), "
                    f"first seen on line {seen[entry.key]}"
                )
            seen[entry.key] = lineno
            if entry.label_path is None and require_labels:
                raise ManifestError(f"line {lineno}: {entry.describe()} has no label")
            if check_files:
                for name, p in [*entry.band_paths.items(), ("label", entry.label_path)]:
                    if p is not None and not p.is_file():
                        raise ManifestError(f"line {lineno}: {entry.describe()}: {name} file not found: {p}")
            entries.append(entry)
    if not entries:
        raise ManifestError(f"{path}: manifest has no entries")
    sensors = {e.sensor for e in entries}
    if len(sensors) > 1:
        raise ManifestError(f"{path}: mixed sensors {sorted(s.value for s in sensors)}; one sensor per manifest")
    return Manifest(entries[0].sensor, tuple(entries))


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    path = Path(path)
    root = path.parent.resolve()
    lines = [e.to_line(root) for e in manifest.entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tile(path: str | Path) -> np.ndarray:
    """Read a single-band tile, rejecting non-2-D, empty or non-finite rasters."""
    path = Path(path)
    try:
        values = tifffile.imread(path)
    except Exception as exc:  # tifffile raises a variety of types on bad input
        raise TileError(f"{path}: unreadable raster ({exc})") from exc
    values = np.squeeze(values) if values.ndim > 2 else values
    if values.ndim != 2 or values.size == 0:
        raise TileError(f"{path}: expected a non-empty single-band 2-D raster, got shape {values.shape}")
    if values.dtype.kind == "f" and not np.all(np.isfinite(values)):
        bad = int(np.count_nonzero(~np.isfinite(values)))
        raise TileError(f"{path}: {bad} non-finite pixel(s)")
    return values


def write_tile(path: str | Path, values: np.ndarray) -> None:
    values = np.asarray(values)
    if values.dtype == np.float64:
        values = values.astype(np.float32)
    if values.dtype not in TILE_DTYPES:
        raise TileError(f"unsupported tile dtype {values.dtype}")
    tifffile.imwrite(Path(path), values)


def read_label(path: str | Path, size: int = LABEL_SIZE) -> np.ndarray:
    values = read_tile(path)
    if values.shape != (size, size):
        raise TileError(f"{path}: label must be {size}x{size}, got {values.shape[0]}x{values.shape[1]}")
    bad = values[(values != 0) & (values != 1)]
    if bad.size:
        raise TileError(f"{path}: label must be binary, found value {bad.flat[0].item()!r}")
    return values.astype(np.uint8)


def load_sample(entry: ManifestEntry) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    """Load the raw bands (native size, stored dtype) and the label of one entry."""
    bands = {name: read_tile(entry.band_paths[name]) for name in entry.sensor.bands}
    shapes = {b.shape for b in bands.values()}
    if len(shapes) != 1:
        raise TileError(f"{entry.describe()}: bands have differing shapes {sorted(shapes)}")
    label = read_label(entry.label_path) if entry.label_path is not None else None
    return bands, label


def split_dataset(manifest: Manifest, val_fraction: float = 0.1, seed: int = 0) -> tuple[Manifest, Manifest]:
    """Random entry-level train/validation partition, deterministic in ``seed``.

    Entries are ordered by key before shuffling, so the split does not depend
    on manifest line order.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    if not manifest.entries:
        raise ValueError("cannot split an empty manifest")
    ordered = sorted(manifest.entries, key=lambda e: (e.lat, e.lon, e.date, e.sensor.value))
    n = len(ordered)
    n_val = min(n - 1, max(1, round(n * val_fraction))) if n > 1 else 0
    perm = np.random.default_rng(seed).permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = tuple(e for i, e in enumerate(ordered) if i not in val_idx)
    val = tuple(e for i, e in enumerate(ordered) if i in val_idx)
    return Manifest(manifest.sensor, train), Manifest(manifest.sensor, val)
