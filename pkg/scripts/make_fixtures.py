"""Write a synthetic Landsat-8 + Sentinel-1 corpus with shared ground truth and a query file.

    python scripts/make_fixtures.py --out data/synthetic --entries 24 --sites 6
"""

import argparse
import datetime as dt
from pathlib import Path

from deforest_seg.dataset import Sensor, load_manifest
from deforest_seg.synthetic import write_fixture


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("data/synthetic"))
    ap.add_argument("--entries", type=int, default=24, help="acquisitions per sensor")
    ap.add_argument("--sites", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cloudy-every", type=int, default=4, help="every n-th Landsat-8 scene gets 3%% cloud pixels")
    args = ap.parse_args()

    clouds = {i: 0.03 for i in range(0, args.entries, args.cloudy_every)} if args.cloudy_every else {}
    s1 = write_fixture(args.out / "sentinel1", Sensor.SENTINEL1, args.entries, args.seed, args.sites, label_seed=args.seed)
    l8 = write_fixture(
        args.out / "landsat8", Sensor.LANDSAT8, args.entries, args.seed + 1, args.sites,
        cloud_fractions=clouds, label_seed=args.seed,
    )
    # one query per site, dated at the last acquisition
    m = load_manifest(s1)
    last: dict[tuple[float, float], dt.date] = {}
    for e in m:
        last[(e.lat, e.lon)] = max(e.date, last.get((e.lat, e.lon), e.date))
    lines = [f"{lat!r} {lon!r} {d.isoformat()}" for (lat, lon), d in sorted(last.items())]
    (args.out / "queries.txt").write_text("\n".join(lines) + "\n")
    print(f"sentinel1 manifest: {s1}\nlandsat8 manifest: {l8}\nqueries: {args.out / 'queries.txt'} ({len(lines)})")


if __name__ == "__main__":
    main()
