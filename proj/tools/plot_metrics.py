#!/usr/bin/env python3
"""Plot per-epoch training metrics written by `medsuggest train` (metrics.csv)."""

import argparse
import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {key: [float(r[key]) for r in rows] for key in rows[0]} if rows else {}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("metrics", nargs="+", help="metrics.csv files; one line per file in each panel")
    ap.add_argument("--out", default="metrics.png")
    args = ap.parse_args()

    panels = [
        ("validation accuracy", ["top1", "top3", "top5"]),
        ("tests suggested per patient", ["avg_suggested"]),
        ("abnormal results found per patient", ["abnormal_found"]),
    ]
    fig, axes = plt.subplots(1, len(panels), figsize=(5 * len(panels), 4))
    for path in args.metrics:
        m = read(path)
        if not m:
            continue
        for ax, (title, keys) in zip(axes, panels):
            for key in keys:
                label = key if len(args.metrics) == 1 else f"{path}:{key}"
                ax.plot(m["epoch"], m[key], label=label)
            ax.set_title(title)
            ax.set_xlabel("epoch")
    for ax in axes:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)


if __name__ == "__main__":
    main()
