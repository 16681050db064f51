#!/usr/bin/env python3
"""Materialize the benchmark datasets as CSVs under data/.

Breast Cancer Wisconsin (Diagnostic) ships with scikit-learn, so it is
exported directly. The other three UCI sets have no offline copy here; for
each one the script prints the download URL and the column layout expected
by `dofs bench`, and writes the CSV if the raw file is already present in
data/raw/.
"""

import argparse
import csv
import os
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
DATA = os.path.join(os.path.dirname(HERE), "data")

UCI = {
    "ionosphere": {
        "url": "https://archive.ics.uci.edu/ml/machine-learning-databases/ionosphere/ionosphere.data",
        "raw": "ionosphere.data",
        "describe": "34 real features, label g/b in the last column",
    },
    "spambase": {
        "url": "https://archive.ics.uci.edu/ml/machine-learning-databases/spambase/spambase.data",
        "raw": "spambase.data",
        "describe": "57 real features, label 0/1 in the last column",
    },
    "spectf": {
        "url": "https://archive.ics.uci.edu/ml/machine-learning-databases/spect/SPECTF.train "
               "+ .../SPECTF.test (concatenate)",
        "raw": "spectf.data",
        "describe": "44 integer features, label 0/1 in the FIRST column",
    },
}


def export_wdbc(path):
    try:
        from sklearn.datasets import load_breast_cancer
    except ImportError:
        print("wdbc: scikit-learn unavailable; install it or place wdbc.csv manually")
        return False
    ds = load_breast_cancer()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        names = [n.replace(" ", "_") for n in ds.feature_names]
        w.writerow(names + ["label"])
        for row, y in zip(ds.data, ds.target):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
    print(f"wdbc: wrote {path} ({ds.data.shape[0]} rows, {ds.data.shape[1]} features)")
    return True


def convert_uci(name, spec, out_path):
    raw = os.path.join(DATA, "raw", spec["raw"])
    if not os.path.exists(raw):
        print(f"{name}: raw file missing ({raw})")
        print(f"  download: {spec['url']}")
        print(f"  layout:   {spec['describe']}")
        return False
    rows = []
    with open(raw) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.split(","))
    label_first = name == "spectf"
    n_feat = len(rows[0]) - 1
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(n_feat)] + ["label"])
        for r in rows:
            if label_first:
                w.writerow(r[1:] + [r[0]])
            else:
                w.writerow(r)
    print(f"{name}: wrote {out_path} ({len(rows)} rows, {n_feat} features)")
    return True


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=DATA, help="output directory (default: data/)")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    ok = export_wdbc(os.path.join(args.out, "wdbc.csv"))
    for name, spec in UCI.items():
        ok = convert_uci(name, spec, os.path.join(args.out, f"{name}.csv")) and ok
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
