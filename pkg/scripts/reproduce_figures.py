"""Regenerate every failure-probability figure through the CLI.

Each figure lands in ``--out`` as ``report-<hash>-<figure>.csv`` plus an
MTTUE summary; pass --trials to trade accuracy for time.

    python3 scripts/reproduce_figures.py --trials 1000 --out results/figures
"""

import argparse
import json
from pathlib import Path

from rdtkit import cli
from rdtkit.presets import FIGURES, REPORTED


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--figures", nargs="*", default=sorted(FIGURES))
    ap.add_argument("--trials", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results/figures")
    args = ap.parse_args(argv)

    out = Path(args.out)
    for fig in args.figures:
        code = cli.main(["report", "--figure", fig, "--seed", str(args.seed), "--trials", str(args.trials),
                         "--threads", str(args.threads), "--out", str(out)])
        if code != 0:
            print(f"{fig}: exit {code}")
            continue
        summary = json.loads(max(out.glob(f"report-*-{fig}-mttue.json"), key=lambda p: p.stat().st_mtime).read_text())
        for entry in summary:
            label, est = entry["label"], entry["estimate"]
            hours = est.get("mttue_hours")
            rep = REPORTED.get(label, {}).get("hours")
            shown = f"{hours:.3g} h" if hours is not None else est.get("status")
            print(f"{fig:32s} {label:18s} {shown:>12s}   reported {rep}")


if __name__ == "__main__":
    main()
