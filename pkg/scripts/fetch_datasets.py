#!/usr/bin/env python3
"""Fetch and verify the evaluation datasets.

Most of the corpora sit behind registration pages or per-release archive
links, so this script does not hardcode URLs that rot. For each dataset it
either downloads a user-supplied archive URL (with mandatory sha256
verification) or prints where to register and what layout to unpack to.

Usage:
    python scripts/fetch_datasets.py phenobench --url https://... \
        --sha256 <digest> --dest data/phenobench
    python scripts/fetch_datasets.py cvppp2017          # prints instructions

After unpacking, check the layout with:
    phytoseg datasets verify --dataset <id> --root data/<id>
"""

from __future__ import annotations

import argparse
import hashlib
import shutil
import sys
import tarfile
import tempfile
import urllib.request
import zipfile
from pathlib import Path

INSTRUCTIONS = {
    "phenobench": (
        "Register and download the PhenoBench release from "
        "https://www.phenobench.org (the semantic segmentation bundle).\n"
        "Unpack so that <dest>/train/images and <dest>/train/semantics exist\n"
        "(same for val; the test split ships without semantics)."
    ),
    "appletree": (
        "The apple tree foliage dataset accompanies its publication; obtain "
        "the archive from the authors' release page.\n"
        "Unpack to <dest>/<split>/images and <dest>/<split>/masks with "
        "binary foliage masks."
    ),
    "plantgrowth": (
        "The plant growth time-series dataset is distributed by its "
        "authors; request or download the archive from their project page.\n"
        "Unpack to <dest>/<split>/images and <dest>/<split>/masks."
    ),
    "cvppp2017": (
        "Request the CVPPP 2017 LSC dataset (A1-A4) via "
        "https://www.plant-phenotyping.org/datasets — registration is "
        "required.\nUnpack so that <dest>/train/A1/plant*_rgb.png and the "
        "matching plant*_label.png (or plant*_fg.png) files exist."
    ),
}


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def download(url: str, dest: Path) -> None:
    print(f"downloading {url}")
    with urllib.request.urlopen(url) as resp, open(dest, "wb") as out:
        shutil.copyfileobj(resp, out)


def unpack(archive: Path, dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    if zipfile.is_zipfile(archive):
        with zipfile.ZipFile(archive) as zf:
            zf.extractall(dest)
    elif tarfile.is_tarfile(archive):
        with tarfile.open(archive) as tf:
            tf.extractall(dest, filter="data")
    else:
        raise SystemExit(f"{archive} is neither a zip nor a tar archive")
    print(f"unpacked into {dest}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset", choices=sorted(INSTRUCTIONS))
    parser.add_argument("--url", help="archive URL to download")
    parser.add_argument("--sha256", help="expected archive digest (required with --url)")
    parser.add_argument("--dest", default=None, help="unpack destination")
    args = parser.parse_args(argv)

    if not args.url:
        print(f"No public direct link is bundled for '{args.dataset}'.")
        print(INSTRUCTIONS[args.dataset])
        return 0
    if not args.sha256:
        parser.error("--sha256 is required when --url is given")

    dest = Path(args.dest or f"data/{args.dataset}")
    with tempfile.TemporaryDirectory() as tmp:
        archive = Path(tmp) / Path(args.url).name
        download(args.url, archive)
        actual = sha256_of(archive)
        if actual != args.sha256.lower():
            raise SystemExit(
                f"checksum mismatch for {archive.name}:\n"
                f"  expected {args.sha256.lower()}\n  actual   {actual}"
            )
        print("checksum verified")
        unpack(archive, dest)
    print(f"verify with: phytoseg datasets verify --dataset {args.dataset} "
          f"--root {dest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
