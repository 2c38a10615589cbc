"""Per-epoch mean curves and final accuracies from a train/compare output dir.

    hwl4f compare --config configs/calibrated.yaml --out runs/calibrated
    python scripts/summarize_runs.py runs/calibrated

Prints one table per algorithm: epoch, mean train loss, mean train accuracy
across seeds, followed by the test-accuracy summary.
"""

import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np


def curves(out: Path, algorithm: str):
    rows = defaultdict(list)
    for path in sorted(out.glob(f"{algorithm}_seed*.csv")):
        with path.open(newline="") as fh:
            for r in csv.DictReader(fh):
                rows[int(r["epoch"])].append((float(r["train_loss"]), float(r["train_acc"])))
    return {e: np.mean(v, axis=0) for e, v in sorted(rows.items())}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", type=Path)
    args = ap.parse_args()
    for summary in sorted(args.out.glob("summary_*.json")):
        doc = json.loads(summary.read_text())
        algo = doc["algorithm"]
        print(f"== {algo}")
        print("epoch  train_loss  train_acc")
        for epoch, (loss, acc) in curves(args.out, algo).items():
            print(f"{epoch:5d}  {loss:10.4f}  {acc:9.3f}")
        accs = ", ".join(f"{a:.2f}" for a in doc["accuracies"])
        print(f"test accuracy {100 * doc['mean']:.1f} +- {100 * doc['std']:.1f}  [{accs}]\n")


if __name__ == "__main__":
    main()
