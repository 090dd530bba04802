#!/usr/bin/env python3
"""Build adult.csv (header row, comma separated, '?' for missing cells) from
the UCI adult.data / adult.test pair, a directory holding them, or a wheel
that bundles them under */adult/."""

import argparse
import csv
import io
import sys
import zipfile
from pathlib import Path

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "educational-num", "marital-status",
    "occupation", "relationship", "race", "gender", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]


def read_sources(source: Path) -> list[str]:
    if source.suffix == ".whl" or zipfile.is_zipfile(source):
        with zipfile.ZipFile(source) as z:
            names = [n for n in z.namelist() if n.endswith(("adult/adult.data", "adult/adult.test"))]
            if len(names) != 2:
                sys.exit(f"{source}: adult.data/adult.test not found")
            return [z.read(n).decode("utf-8") for n in sorted(names)]
    if source.is_dir():
        return [(source / n).read_text() for n in ("adult.data", "adult.test")]
    sys.exit(f"{source}: expected a directory or an archive")


def rows(text: str):
    for line in text.splitlines():
        if not line.strip() or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(COLUMNS):
            continue
        cells[-1] = cells[-1].rstrip(".")
        yield cells


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("source", type=Path)
    parser.add_argument("out", type=Path)
    args = parser.parse_args()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    count = 0
    for text in read_sources(args.source):
        for r in rows(text):
            writer.writerow(r)
            count += 1
    args.out.write_text(buffer.getvalue())
    print(f"wrote {count} rows to {args.out}")


if __name__ == "__main__":
    main()
