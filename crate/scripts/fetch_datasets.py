#!/usr/bin/env python3
"""Materialize the benchmark datasets as plain CSV files under data/.

Canonical public sources:

  iris           UCI Iris                      https://archive.ics.uci.edu/dataset/53/iris
  breast_cancer  UCI Breast Cancer Wisconsin   https://archive.ics.uci.edu/dataset/17
                 (Diagnostic)
  wine           UCI Wine                      https://archive.ics.uci.edu/dataset/109/wine
  digits         UCI Optical Recognition of    https://archive.ics.uci.edu/dataset/80
                 Handwritten Digits (8x8)
  diabetes       Pima Indians Diabetes         https://www.openml.org/d/37
  titanic        Kaggle Titanic (train split)  https://www.kaggle.com/c/titanic
                 also https://www.openml.org/d/40945
  german_credit  UCI Statlog German Credit     https://archive.ics.uci.edu/dataset/144

The script does not talk to those hosts directly. It reads copies that ship
inside ordinary Python packages, so it only needs a package index:

  * scikit-learn bundles iris, breast_cancer, wine and digits.
  * common-datasets bundles the UCI german.data file and the KEEL copy of Pima.
  * explainerdashboard bundles the 891-row Kaggle Titanic training table.

Usage: python3 scripts/fetch_datasets.py [--out data]
"""

import argparse
import csv
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    print(f"wrote {path} ({len(rows)} rows)")


def fmt(v):
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def sklearn_sets(out):
    from sklearn import datasets

    specs = {
        "iris": (datasets.load_iris, "species"),
        "breast_cancer": (datasets.load_breast_cancer, "diagnosis"),
        "wine": (datasets.load_wine, "cultivar"),
        "digits": (datasets.load_digits, "digit"),
    }
    for name, (loader, label) in specs.items():
        b = loader()
        if name == "digits":
            names = [f"pixel_{i}" for i in range(b.data.shape[1])]
        else:
            names = [n.replace(" ", "_").replace("(", "").replace(")", "").replace("/", "_") for n in b.feature_names]
        targets = [str(t) for t in b.target_names]
        rows = [[fmt(float(x)) for x in row] + [targets[t]] for row, t in zip(b.data, b.target)]
        write_csv(os.path.join(out, f"{name}.csv"), names + [label], rows)


def pip_wheel(package, tmp):
    dest = os.path.join(tmp, package)
    subprocess.run(
        [sys.executable, "-m", "pip", "download", package, "--no-deps", "-q", "-d", dest],
        check=True,
    )
    return zipfile.ZipFile(glob.glob(os.path.join(dest, "*.whl"))[0])


def pima(z, out):
    text = z.read("common_datasets/data/classification/pima/pima.dat").decode()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        parts = [p.strip() for p in line.split(",")]
        label = "diabetic" if parts[-1] == "positive" else "healthy"
        rows.append(parts[:-1] + [label])
    header = [
        "pregnancies", "glucose", "blood_pressure", "skin_thickness",
        "insulin", "bmi", "pedigree", "age", "outcome",
    ]
    write_csv(os.path.join(out, "diabetes.csv"), header, rows)


def german(z, out):
    text = z.read("common_datasets/data/classification/german/german.data.txt").decode()
    header = [
        "checking_status", "duration", "credit_history", "purpose", "credit_amount",
        "savings_status", "employment", "installment_commitment", "personal_status",
        "other_parties", "residence_since", "property_magnitude", "age",
        "other_payment_plans", "housing", "existing_credits", "job", "num_dependents",
        "own_telephone", "foreign_worker", "class",
    ]
    rows = []
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        label = "good" if parts[-1] == "1" else "bad"
        rows.append(parts[:-1] + [label])
    write_csv(os.path.join(out, "german_credit.csv"), header, rows)


def titanic(z, out):
    rows = []
    for part in ("train", "test"):
        raw = z.read(f"explainerdashboard/datasets/titanic_{part}.csv").decode()
        for r in csv.DictReader(io.StringIO(raw)):
            sex = "female" if r["Sex_female"] == "1" else "male"
            emb = "NA"
            for port, code in (("Cherbourg", "C"), ("Queenstown", "Q"), ("Southampton", "S")):
                if r[f"Embarked_{port}"] == "1":
                    emb = code
            age = r["Age"]
            age = "NA" if float(age) < 0 else age
            rows.append([
                r["PassengerClass"], sex, age, r["No_of_siblings_plus_spouses_on_board"],
                r["No_of_parents_plus_children_on_board"], r["Fare"], emb,
                "survived" if r["Survival"] == "1" else "died",
            ])
    header = ["pclass", "sex", "age", "sibsp", "parch", "fare", "embarked", "survived"]
    write_csv(os.path.join(out, "titanic.csv"), header, rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    sklearn_sets(args.out)
    with tempfile.TemporaryDirectory() as tmp:
        cd = pip_wheel("common-datasets", tmp)
        pima(cd, args.out)
        german(cd, args.out)
        titanic(pip_wheel("explainerdashboard", tmp), args.out)


if __name__ == "__main__":
    main()
