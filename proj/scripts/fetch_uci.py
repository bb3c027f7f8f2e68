#!/usr/bin/env python3
"""Fetch the UCI regression sets used by the benchmark and convert them to CSV.

The raw files come from Yarin Gal's DropoutUncertaintyExps repository, which
pins the exact train/test material the published numbers were computed on
(boston, concrete, energy, kin8nm, power, wine, yacht). Each data.txt is
whitespace-separated with the target in the last column and no header.

Usage:
    python3 scripts/fetch_uci.py --out data
    python3 scripts/fetch_uci.py --out data --base-url https://some-mirror/github
    python3 scripts/fetch_uci.py --out data --from-dir /path/to/DropoutUncertaintyExps

Output: <out>/<name>.csv with header x1,...,xD,y.
"""

import argparse
import io
import pathlib
import sys
import tarfile
import urllib.request

DATASETS = {
    "boston": "bostonHousing",
    "concrete": "concrete",
    "energy": "energy",
    "kin8nm": "kin8nm",
    "power": "power-plant",
    "wine": "wine-quality-red",
    "yacht": "yacht",
}

DEFAULT_BASE = "https://github.com"
ARCHIVE_PATH = "yaringal/DropoutUncertaintyExps/archive/master.tar.gz"


def convert(lines, out_path):
    rows = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        rows.append([float(v) for v in line.replace(",", " ").split()])
    width = len(rows[0])
    for r in rows:
        if len(r) != width:
            raise SystemExit(f"ragged row in {out_path.name}: {len(r)} != {width}")
    header = [f"x{i}" for i in range(1, width)] + ["y"]
    with open(out_path, "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(repr(v) for v in r) + "\n")
    return len(rows), width


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--base-url", default=DEFAULT_BASE,
                    help="mirror that serves GitHub archive tarballs")
    ap.add_argument("--from-dir", default=None,
                    help="existing checkout of DropoutUncertaintyExps")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    texts = {}
    if args.from_dir:
        root = pathlib.Path(args.from_dir)
        for name, repo_dir in DATASETS.items():
            p = root / "UCI_Datasets" / repo_dir / "data" / "data.txt"
            texts[name] = p.read_text().splitlines()
    else:
        url = f"{args.base_url.rstrip('/')}/{ARCHIVE_PATH}"
        print(f"downloading {url} ...", file=sys.stderr)
        blob = urllib.request.urlopen(url, timeout=120).read()
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tf:
            for member in tf.getmembers():
                parts = member.name.split("/")
                if len(parts) >= 5 and parts[1] == "UCI_Datasets" and parts[-2:] == ["data", "data.txt"]:
                    repo_dir = parts[2]
                    for name, d in DATASETS.items():
                        if d == repo_dir:
                            texts[name] = tf.extractfile(member).read().decode().splitlines()

    missing = sorted(set(DATASETS) - set(texts))
    if missing:
        raise SystemExit(f"missing datasets: {missing}")

    for name in sorted(DATASETS):
        n, width = convert(texts[name], out / f"{name}.csv")
        print(f"{name}: {n} rows, {width - 1} features -> {out / (name + '.csv')}")


if __name__ == "__main__":
    main()
