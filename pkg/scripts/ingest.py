#!/usr/bin/env python3
"""Convert raw dataset downloads into the canonical CSV format.

Each converter reads a locally downloaded copy of one corpus (this
script performs no downloads) and writes `doc_id,split,label,text` CSV
rows the pipeline's `load_dataset` accepts, with labels as class-name
strings matching the bundled manifest. Splits: datasets with a
published train/test split keep it; the BBC corpora have none, so every
row is written as `unsplit` and the training harness applies the
stratified 80:20 split (seed 42) at load time.

Expected source layouts:

  20ng        scikit-learn cache (fetched via sklearn on first use)
  bbc_news    bbc/              <class>/<nnn>.txt   (bbc-fulltext.zip)
  bbc_sports  bbcsport/         <class>/<nnn>.txt   (bbcsport-fulltext.zip)
  ag_news     train.csv + test.csv with rows "class_index","title","body"
  imdb        aclImdb/{train,test}/{pos,neg}/*.txt
  r8          r8-train-all-terms.txt + r8-test-all-terms.txt ("label\\ttext")

Usage:
    python3 scripts/ingest.py 20ng --out data/20ng.csv
    python3 scripts/ingest.py bbc_news --src ~/downloads/bbc --out data/bbc_news.csv
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path


def _write(out_path: str, rows: list[tuple[str, str, str, str]]) -> None:
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("doc_id", "split", "label", "text"))
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows -> {out_path}")


def ingest_20ng(src: str | None, out: str) -> None:
    """Fetch via scikit-learn (cached under ~/scikit_learn_data)."""
    from sklearn.datasets import fetch_20newsgroups

    rows = []
    for split in ("train", "test"):
        bundle = fetch_20newsgroups(
            subset=split, data_home=src, remove=()  # keep headers/footers/quotes
        )
        names = bundle.target_names
        for i, (text, target) in enumerate(zip(bundle.data, bundle.target)):
            rows.append((f"20ng-{split}-{i:05d}", split, names[target], text))
    _write(out, rows)


def _ingest_bbc_tree(src: str, out: str, prefix: str) -> None:
    root = Path(src)
    if not root.is_dir():
        raise SystemExit(f"source directory not found: {src}")
    rows = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for txt in sorted(class_dir.glob("*.txt")):
            text = txt.read_text(encoding="utf-8", errors="replace")
            rows.append((f"{prefix}-{class_dir.name}-{txt.stem}", "unsplit", class_dir.name, text))
    if not rows:
        raise SystemExit(f"no <class>/<nnn>.txt files under {src}")
    _write(out, rows)


def ingest_bbc_news(src: str | None, out: str) -> None:
    _ingest_bbc_tree(src or "bbc", out, "bbcnews")


def ingest_bbc_sports(src: str | None, out: str) -> None:
    _ingest_bbc_tree(src or "bbcsport", out, "bbcsport")


def ingest_ag_news(src: str | None, out: str) -> None:
    # class indexes 1-4 in the distribution order world/sports/business/sci-tech
    index_to_name = {1: "world", 2: "sports", 3: "business", 4: "sci/tech"}
    root = Path(src or ".")
    rows = []
    for split in ("train", "test"):
        path = root / f"{split}.csv"
        if not path.exists():
            raise SystemExit(f"missing {path}")
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for i, rec in enumerate(csv.reader(fh)):
                idx, title, body = int(rec[0]), rec[1], rec[2]
                rows.append(
                    (f"agnews-{split}-{i:06d}", split, index_to_name[idx], f"{title} {body}")
                )
    _write(out, rows)


def ingest_imdb(src: str | None, out: str) -> None:
    root = Path(src or "aclImdb")
    rows = []
    for split in ("train", "test"):
        for polarity, label in (("neg", "negative"), ("pos", "positive")):
            folder = root / split / polarity
            if not folder.is_dir():
                raise SystemExit(f"missing {folder}")
            for txt in sorted(folder.glob("*.txt")):
                text = txt.read_text(encoding="utf-8", errors="replace")
                rows.append((f"imdb-{split}-{polarity}-{txt.stem}", split, label, text))
    _write(out, rows)


def ingest_r8(src: str | None, out: str) -> None:
    root = Path(src or ".")
    rows = []
    for split in ("train", "test"):
        path = root / f"r8-{split}-all-terms.txt"
        if not path.exists():
            raise SystemExit(f"missing {path}")
        with open(path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                label, text = line.split("\t", 1)
                rows.append((f"r8-{split}-{i:05d}", split, label, text))
    _write(out, rows)


CONVERTERS = {
    "20ng": ingest_20ng,
    "bbc_news": ingest_bbc_news,
    "bbc_sports": ingest_bbc_sports,
    "ag_news": ingest_ag_news,
    "imdb": ingest_imdb,
    "r8": ingest_r8,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("dataset", choices=sorted(CONVERTERS))
    parser.add_argument("--src", default=None, help="source directory (see module docstring)")
    parser.add_argument("--out", required=True, help="canonical CSV output path")
    args = parser.parse_args()
    CONVERTERS[args.dataset](args.src, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
