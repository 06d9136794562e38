#!/usr/bin/env python3
"""Extract the COMPAS and Adult datasets into data/.

Both files are read from the `responsibly` 0.1.2 wheel, which bundles the
original ProPublica and UCI files. Pass the wheel with --wheel, or let the
script fetch it with pip.

LSAC and Taiwanese credit are not redistributable this way; see
data/lsac/README.md and data/credit/README.md.
"""

import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
WHEEL = "responsibly==0.1.2"

COMPAS_COLUMNS = [
    "sex", "age_cat", "race", "juv_fel_count", "juv_misd_count",
    "juv_other_count", "priors_count", "c_charge_degree", "two_year_recid",
]

ADULT_NAMES = [
    "age", "workclass", "fnlwgt", "education", "educational-num",
    "marital-status", "occupation", "relationship", "race", "gender",
    "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]
ADULT_KEEP = [c for c in ADULT_NAMES if c not in ("fnlwgt", "education")]


def fetch_wheel(dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary", ":all:",
         WHEEL, "-d", str(dest)],
        check=True,
    )
    return next(Path(dest).glob("responsibly-*.whl"))


def compas(wheel):
    text = wheel.read("responsibly/dataset/compas/compas-scores-two-years.csv").decode()
    rows = list(csv.DictReader(io.StringIO(text)))
    # the usual ProPublica screening filter
    kept = [
        r for r in rows
        if r["days_b_screening_arrest"] != ""
        and -30 <= int(float(r["days_b_screening_arrest"])) <= 30
        and r["is_recid"] != "-1"
        and r["c_charge_degree"] != "O"
        and r["score_text"] != "N/A"
    ]
    out = ROOT / "data" / "compas" / "compas.csv"
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COMPAS_COLUMNS)
        for r in kept:
            w.writerow([r[c] for c in COMPAS_COLUMNS])
    print(f"{out.relative_to(ROOT)}: {len(kept)} rows")


def adult(wheel):
    out = ROOT / "data" / "adult" / "adult.csv"
    n = 0
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ADULT_KEEP)
        for part in ("adult.data", "adult.test"):
            text = wheel.read(f"responsibly/dataset/adult/{part}").decode()
            for rec in csv.reader(io.StringIO(text)):
                if len(rec) != len(ADULT_NAMES):
                    continue
                rec = [v.strip() for v in rec]
                row = dict(zip(ADULT_NAMES, rec))
                row["income"] = row["income"].rstrip(".")
                w.writerow([row[c] for c in ADULT_KEEP])
                n += 1
    print(f"{out.relative_to(ROOT)}: {n} rows (missing values are dropped at load time)")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", type=Path, help="path to a responsibly-0.1.2 wheel")
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        path = args.wheel or fetch_wheel(tmp)
        with zipfile.ZipFile(path) as wheel:
            compas(wheel)
            adult(wheel)


if __name__ == "__main__":
    main()
