#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Rebuild the bundled datasets under data/ from locally available sources.

Regression tables come from the Rdatasets collection (as packaged by the
`pydataset` sdist) and scikit-learn's bundled diabetes set. The mushroom
table comes from the KEEL repository copy shipped in the `keel-ds` wheel,
which omits the rows with missing stalk-root values (5644 of 8124 rows).
It is rewritten in the raw agaricus-lepiota layout (label column first).

usage: prepare_datasets.py --rdata DIR --keel DIR [--out data]
"""
import argparse
import gzip
import os

import numpy as np
import pandas as pd


def write(df, target, path):
    cols = [c for c in df.columns if c != target] + [target]
    df = df[cols].astype(float)
    assert not df.isna().any().any()
    df.to_csv(path, index=False, float_format="%.10g")
    print(f"{path}: {df.shape[0]} rows, {df.shape[1] - 1} features, target={target}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rdata", required=True, help="pydataset resources/rdata/csv directory")
    ap.add_argument("--keel", required=True, help="keel_ds/data/balanced/raw directory")
    ap.add_argument("--out", default="data")
    a = ap.parse_args()
    uci = os.path.join(a.out, "uci")
    os.makedirs(uci, exist_ok=True)

    boston = pd.read_csv(os.path.join(a.rdata, "MASS", "Boston.csv"), index_col=0)
    write(boston, "medv", os.path.join(uci, "boston.csv"))

    import sklearn.datasets as skd
    base = os.path.join(os.path.dirname(skd.__file__), "data")
    x = np.loadtxt(gzip.open(os.path.join(base, "diabetes_data_raw.csv.gz")))
    y = np.loadtxt(gzip.open(os.path.join(base, "diabetes_target.csv.gz")))
    diab = pd.DataFrame(x, columns=["age", "sex", "bmi", "bp", "s1", "s2", "s3", "s4", "s5", "s6"])
    diab["progression"] = y
    write(diab, "progression", os.path.join(uci, "diabetes.csv"))

    gil = pd.read_csv(os.path.join(a.rdata, "MASS", "gilgais.csv"), index_col=0)
    write(gil, "c80", os.path.join(uci, "gilgais.csv"))

    clo = pd.read_csv(os.path.join(a.rdata, "Ecdat", "Clothing.csv"), index_col=0)
    write(clo.drop(columns=["sales"]), "tsales", os.path.join(uci, "clothing.csv"))

    cas = pd.read_csv(os.path.join(a.rdata, "Ecdat", "Caschool.csv"), index_col=0)
    keep = ["enrltot", "teachers", "calwpct", "mealpct", "computer", "compstu",
            "expnstu", "str", "avginc", "elpct", "testscr"]
    write(cas[keep], "testscr", os.path.join(uci, "caschool.csv"))

    rows = []
    with open(os.path.join(a.keel, "mushroom.dat")) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("@"):
                continue
            cells = line.split(",")
            rows.append(",".join([cells[-1]] + cells[:-1]))
    os.makedirs(os.path.join(a.out, "mushroom"), exist_ok=True)
    path = os.path.join(a.out, "mushroom", "agaricus-lepiota.data")
    with open(path, "w") as f:
        f.write("\n".join(rows) + "\n")
    print(f"{path}: {len(rows)} rows")


if __name__ == "__main__":
    main()
