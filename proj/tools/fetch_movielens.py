#!/usr/bin/env python3
"""Fetch MovieLens-100K and write the tab-separated files the idcl CLI reads.

The GroupLens archive is mirrored inside the RecBole wheel on PyPI
(recbole/dataset_example/ml-100k). Both the wheel and the extracted files are
checked against pinned SHA-256 digests.

Output (no headers):
  <out>/ratings.tsv        user \t item \t rating \t timestamp
  <out>/item_concepts.tsv  item \t genre      (the "unknown" genre is dropped)
"""

import argparse
import hashlib
import io
import pathlib
import sys
import urllib.request
import zipfile

WHEEL_URL = ("https://files.pythonhosted.org/packages/ab/fe/"
             "7d606cb7cd2b166a36b100cb9435d21014ceee16c192d972deb0976967a8/recbole-1.2.1-py3-none-any.whl")
WHEEL_SHA256 = "9c9948202011f37eb0a7c6768129313f00d6403ad221ec940d5e2d5d5f33a407"
INTER = ("recbole/dataset_example/ml-100k/ml-100k.inter",
         "4edb74e2a81178c2ba9ff381495f754f996c4aea351b1272ca36b43da0935eff")
ITEM = ("recbole/dataset_example/ml-100k/ml-100k.item",
        "51d7cdf777ce5c0f5b32c1d947a4a81fe07d75e78abbe761e0cd4d0756064532")
DROPPED_GENRES = {"unknown"}


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_wheel(path):
    if path:
        return pathlib.Path(path).read_bytes()
    print(f"downloading {WHEEL_URL}", file=sys.stderr)
    with urllib.request.urlopen(WHEEL_URL, timeout=300) as r:
        return r.read()


def checked_member(archive, name, digest):
    data = archive.read(name)
    if sha256(data) != digest:
        sys.exit(f"checksum mismatch for {name}: got {sha256(data)}, expected {digest}")
    return data.decode("utf-8")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="data/ml-100k")
    ap.add_argument("--wheel", help="use a local copy of the wheel instead of downloading")
    ap.add_argument("--if-missing", action="store_true", help="do nothing when both output files exist")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    if args.if_missing and (out / "ratings.tsv").exists() and (out / "item_concepts.tsv").exists():
        return

    blob = load_wheel(args.wheel)
    if sha256(blob) != WHEEL_SHA256:
        sys.exit(f"checksum mismatch for the wheel: got {sha256(blob)}, expected {WHEEL_SHA256}")
    archive = zipfile.ZipFile(io.BytesIO(blob))
    inter = checked_member(archive, *INTER).splitlines()
    items = checked_member(archive, *ITEM).splitlines()

    out.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out / "ratings.tsv", "w", newline="\n") as f:
        for line in inter[1:]:
            if not line.strip():
                continue
            user, item, rating, ts = line.split("\t")
            f.write(f"{user}\t{item}\t{int(float(rating))}\t{int(float(ts))}\n")
            n += 1
    genres = set()
    m = 0
    with open(out / "item_concepts.tsv", "w", newline="\n") as f:
        for line in items[1:]:
            if not line.strip():
                continue
            fields = line.split("\t")
            for genre in fields[3].split():
                if genre in DROPPED_GENRES:
                    continue
                genres.add(genre)
                f.write(f"{fields[0]}\t{genre}\n")
                m += 1
    print(f"wrote {n} ratings and {m} item-genre rows ({len(genres)} genres) to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
