import datetime as dt

import numpy as np
import pytest

from deforest_seg import dataset as ds
from deforest_seg.dataset import Manifest, ManifestEntry, ManifestError, Sensor, TileError


def _s1_files(tmp_path, n=2):
    lines = []
    for i in range(n):
        vv, vh, lab = (tmp_path / f"{i}_vv.tif", tmp_path / f"{i}_vh.tif", tmp_path / f"{i}_label.tif")
        ds.write_tile(vv, np.full((256, 256), 0.1, np.float32))
        ds.write_tile(vh, np.full((256, 256), 0.02, np.float32))
        ds.write_tile(lab, np.zeros((256, 256), np.uint8))
        lines.append(f"sentinel1\t-3.9\t{-54.8 - i}\t2019-01-0{i + 1}\t{lab.name}\tVV={vv.name}\tVH={vh.name}")
    return lines


def test_load_well_formed_manifest(tmp_path):
    path = tmp_path / "m.manifest"
    path.write_text("# comment\n" + "\n".join(_s1_files(tmp_path)) + "\n\n")
    m = ds.load_manifest(path)
    assert m.sensor is Sensor.SENTINEL1
    assert len(m) == 2
    assert m.entries[1].lon == -55.8
    assert m.entries[0].date == dt.date(2019, 1, 1)
    assert m.entries[0].band_paths["VV"] == tmp_path / "0_vv.tif"


def test_missing_band_names_entry(tmp_path):
    lines = _s1_files(tmp_path)
    lines[1] = lines[1].rsplit("\t", 1)[0]
    path = tmp_path / "m.manifest"
    path.write_text("\n".join(lines))
    with pytest.raises(ManifestError, match=r"line 2: .*sentinel1, -3.9, -55.8.*missing band\(s\) VH"):
        ds.load_manifest(path)


def test_duplicate_key_rejected(tmp_path):
    lines = _s1_files(tmp_path, 1)
    path = tmp_path / "m.manifest"
    path.write_text("\n".join(lines * 2))
    with pytest.raises(ManifestError, match="duplicate key .*2019-01-01.*line 1"):
        ds.load_manifest(path)


def test_missing_file_rejected(tmp_path):
    lines = _s1_files(tmp_path, 1)
    (tmp_path / "0_vh.tif").unlink()
    path = tmp_path / "m.manifest"
    path.write_text(lines[0])
    with pytest.raises(ManifestError, match="VH file not found"):
        ds.load_manifest(path)


@pytest.mark.parametrize(
    "line, match",
    [
        ("sentinel1\t-3.9\t-54.8", "at least 5"),
        ("sentinel2\t-3.9\t-54.8\t2019-01-01\tl.tif", "unknown sensor"),
        ("sentinel1\tabc\t-54.8\t2019-01-01\tl.tif", "line 1"),
        ("sentinel1\t-3.9\t-54.8\t2019-13-01\tl.tif", "line 1"),
        ("sentinel1\t-93.9\t-54.8\t2019-01-01\tl.tif\tVV=a\tVH=b", "latitude"),
        ("sentinel1\t-3.9\t-54.8\t2019-01-01\tl.tif\tVV=a\tVH=b\tHH=c", "unexpected band"),
        ("sentinel1\t-3.9\t-54.8\t2019-01-01\tl.tif\tVV", "not BAND=path"),
    ],
)
def test_parse_errors(tmp_path, line, match):
    path = tmp_path / "m.manifest"
    path.write_text(line + "\n")
    with pytest.raises(ManifestError, match=match):
        ds.load_manifest(path, check_files=False)


def test_mixed_sensors_rejected(tmp_path):
    path = tmp_path / "m.manifest"
    l8 = "\t".join(["landsat8", "-3.9", "-54.8", "2019-01-01", "l.tif"] + [f"{b}=x" for b in Sensor.LANDSAT8.bands])
    s1 = "sentinel1\t-3.9\t-54.8\t2019-01-01\tl.tif\tVV=a\tVH=b"
    path.write_text(l8 + "\n" + s1 + "\n")
    with pytest.raises(ManifestError, match="mixed sensors"):
        ds.load_manifest(path, check_files=False)


def test_unlabelled_entries_only_when_allowed(tmp_path):
    path = tmp_path / "m.manifest"
    path.write_text("sentinel1\t-3.9\t-54.8\t2019-01-01\t-\tVV=a\tVH=b\n")
    with pytest.raises(ManifestError, match="no label"):
        ds.load_manifest(path, check_files=False)
    assert ds.load_manifest(path, require_labels=False, check_files=False).entries[0].label_path is None


def test_landsat_sample_native_sizes(l8_fixture):
    m = ds.load_manifest(l8_fixture)
    bands, label = ds.load_sample(m.entries[0])
    assert list(bands) == list(Sensor.LANDSAT8.bands)
    assert all(b.shape == (85, 85) for b in bands.values())
    assert label.shape == (256, 256)


def test_sentinel_sample_native_sizes(s1_fixture):
    m = ds.load_manifest(s1_fixture)
    bands, label = ds.load_sample(m.entries[0])
    assert sorted(bands) == ["VH", "VV"]
    assert all(b.shape == (256, 256) for b in bands.values())
    assert set(np.unique(label)) <= {0, 1}


@pytest.mark.parametrize("dtype", [np.uint16, np.int16, np.int32, np.float32])
def test_load_is_bit_exact(tmp_path, rng, dtype):
    info = np.iinfo(dtype) if np.dtype(dtype).kind in "iu" else None
    if info:
        values = rng.integers(info.min, info.max, (85, 85), endpoint=True).astype(dtype)
    else:
        values = rng.normal(0, 1e3, (85, 85)).astype(dtype)
    ds.write_tile(tmp_path / "t.tif", values)
    loaded = ds.read_tile(tmp_path / "t.tif")
    assert loaded.dtype == values.dtype
    assert loaded.tobytes() == values.tobytes()


def test_non_finite_tile_rejected(tmp_path):
    values = np.zeros((4, 4), np.float32)
    values[1, 2] = np.nan
    ds.write_tile(tmp_path / "t.tif", values)
    with pytest.raises(TileError, match="1 non-finite"):
        ds.read_tile(tmp_path / "t.tif")


def test_non_binary_label_reports_value(tmp_path):
    label = np.zeros((256, 256), np.uint8)
    label[5, 5] = 7
    ds.write_tile(tmp_path / "l.tif", label)
    with pytest.raises(TileError, match="found value 7"):
        ds.read_label(tmp_path / "l.tif")


def test_unreadable_tile(tmp_path):
    (tmp_path / "bad.tif").write_bytes(b"not a tiff")
    with pytest.raises(TileError, match="unreadable"):
        ds.read_tile(tmp_path / "bad.tif")


def _manifest(n):
    entries = tuple(
        ManifestEntry(Sensor.SENTINEL1, -3.9, -54.8 - 0.01 * i, dt.date(2019, 1, 1), {"VV": "a", "VH": "b"}, "l")
        for i in range(n)
    )
    return Manifest(Sensor.SENTINEL1, entries)


def test_split_sizes_and_determinism():
    m = _manifest(10)
    train, val = ds.split_dataset(m, 0.2, seed=7)
    assert (len(train), len(val)) == (8, 2)
    again = ds.split_dataset(m, 0.2, seed=7)
    assert [e.key for e in again[0]] == [e.key for e in train]
    assert [e.key for e in again[1]] == [e.key for e in val]


def test_split_is_partition_and_order_independent():
    m = _manifest(23)
    train, val = ds.split_dataset(m, 0.3, seed=1)
    keys = {e.key for e in m}
    assert {e.key for e in train} | {e.key for e in val} == keys
    assert not {e.key for e in train} & {e.key for e in val}
    shuffled = Manifest(m.sensor, tuple(reversed(m.entries)))
    assert {e.key for e in ds.split_dataset(shuffled, 0.3, seed=1)[1]} == {e.key for e in val}


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
def test_split_fraction_bounds(frac):
    with pytest.raises(ValueError):
        ds.split_dataset(_manifest(4), frac, seed=0)


def test_manifest_round_trip(tmp_path, s1_fixture):
    m = ds.load_manifest(s1_fixture)
    out = s1_fixture.parent / "copy.manifest"
    ds.write_manifest(m, out)
    assert ds.load_manifest(out) == m
