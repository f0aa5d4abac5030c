#!/usr/bin/env python3
"""Materialize MovieLens-100K (u.data / u.user) from the RecBole wheel.

The GroupLens host is not always reachable; the RecBole distribution ships
the same 100,000 ratings and 943 user profiles in its atomic-file format.
This script converts them back to the original ML-100K layout:

    u.data  user \t item \t rating \t timestamp
    u.user  user|age|gender|occupation|zip

Usage: scripts/fetch_ml100k.py [output_dir]   (default: data/ml-100k)
"""
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

out = sys.argv[1] if len(sys.argv) > 1 else "data/ml-100k"
os.makedirs(out, exist_ok=True)
with tempfile.TemporaryDirectory() as tmp:
    subprocess.check_call(
        [sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps", "-d", tmp]
    )
    wheel = zipfile.ZipFile(glob.glob(os.path.join(tmp, "recbole-*.whl"))[0])
    base = "recbole/dataset_example/ml-100k/ml-100k."
    inter = wheel.read(base + "inter").decode().splitlines()[1:]
    users = wheel.read(base + "user").decode().splitlines()[1:]

with open(os.path.join(out, "u.data"), "w") as f:
    for line in inter:
        f.write(line + "\n")
with open(os.path.join(out, "u.user"), "w") as f:
    for line in users:
        f.write("|".join(line.split("\t")) + "\n")
print(f"wrote {len(inter)} ratings and {len(users)} users to {out}")
