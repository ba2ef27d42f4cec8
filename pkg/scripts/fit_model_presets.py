"""Compare model presets against their published MTTUE values.

Runs each preset's ensemble and prints the estimate next to the reported
hours. With --grid, scans delta_l/N candidates for one label and prints the
closest fits (this is how the temperature and tAggOn presets were chosen).

    python3 scripts/fit_model_presets.py --horizon 500000 m12-80c m13-1000ns
    python3 scripts/fit_model_presets.py --grid m12-50c --delta-l 40 51 60 --n 4 5 6
"""

import argparse
import time
from dataclasses import replace

from rdtkit.montecarlo import InsufficientFailuresError, estimate_mttue, run_trials
from rdtkit.presets import MODEL_PRESETS, REPORTED


def evaluate(params, trials, horizon, seed):
    results, _ = run_trials(params, trials, horizon, seed)
    try:
        return estimate_mttue(results, horizon, params.scrub_interval)
    except InsufficientFailuresError:
        return None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("labels", nargs="*", default=sorted(REPORTED))
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--horizon", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--grid", help="label to refit")
    ap.add_argument("--delta-l", type=int, nargs="*", default=[])
    ap.add_argument("--n", type=int, nargs="*", default=[])
    args = ap.parse_args(argv)

    if args.grid:
        target = REPORTED[args.grid]["hours"]
        base = MODEL_PRESETS[args.grid]
        fits = []
        for dl in args.delta_l or [base.delta_l]:
            for n in args.n or [base.n]:
                est = evaluate(replace(base, delta_l=dl, n=n), args.trials, args.horizon, args.seed)
                if est is not None:
                    fits.append((abs(est.mttue_hours / target - 1), dl, n, est.mttue_hours))
        for err, dl, n, hours in sorted(fits)[:10]:
            print(f"delta_l={dl:4d} n={n:4d}  {hours:.3g} h  (target {target:.3g}, off by {err:.0%})")
        return

    print("label  method  failures  mttue_h  reported_h  ratio  seconds")
    for label in args.labels:
        t0 = time.time()
        est = evaluate(MODEL_PRESETS[label], args.trials, args.horizon, args.seed)
        rep = REPORTED.get(label, {}).get("hours")
        if est is None:
            print(f"{label}  no failures within {args.horizon} epochs  reported={rep}")
            continue
        ratio = f"{est.mttue_hours / rep:.2f}" if rep else "-"
        print(f"{label}  {est.method}  {est.failures}  {est.mttue_hours:.3g}  {rep}  {ratio}  {time.time() - t0:.1f}")


if __name__ == "__main__":
    main()
