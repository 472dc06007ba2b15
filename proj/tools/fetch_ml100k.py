#!/usr/bin/env python3
# Copyright 2026 The oracle4rec Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes MovieLens-100K as `user<TAB>item<TAB>timestamp<TAB>genre|genre` TSV.

The raw ratings and genre table are taken from the copy bundled in the
RecBole wheel on PyPI, so only a package index is needed.
"""
import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

PREFIX = "recbole/dataset_example/ml-100k/"


def find_wheel(workdir):
    subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                           "-q", "recbole==1.2.1", "-d", workdir])
    wheels = glob.glob(os.path.join(workdir, "recbole-*.whl"))
    if not wheels:
        raise SystemExit("recbole wheel not found after download")
    return wheels[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/ml100k.tsv")
    ap.add_argument("--wheel", help="use an already-downloaded recbole wheel")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or find_wheel(tmp)
        with zipfile.ZipFile(wheel) as z:
            inter = z.read(PREFIX + "ml-100k.inter").decode("utf-8").splitlines()
            items = z.read(PREFIX + "ml-100k.item").decode("latin-1").splitlines()

    genres = {}
    for line in items[1:]:
        cols = line.split("\t")
        genres[cols[0]] = "|".join(cols[3].split()) if len(cols) > 3 else ""

    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as f:
        for line in inter[1:]:
            user, item, _rating, ts = line.split("\t")
            cats = genres.get(item, "")
            row = [user, item, str(int(float(ts)))]
            if cats:
                row.append(cats)
            f.write("\t".join(row) + "\n")
    print(f"wrote {len(inter) - 1} interactions to {args.out}")


if __name__ == "__main__":
    main()
