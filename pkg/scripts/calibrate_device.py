"""Check (or search) the device-distribution calibration against the profile targets.

For each device seed, profiles 1000 episodes, then reports the RDT_min
min/max ratio, unique flip locations, max flips per iteration and the
first-measurement census coverage at RDT_p10.

    python3 scripts/calibrate_device.py --seeds 8
    python3 scripts/calibrate_device.py --jitter 0.10 0.12 0.14 --seeds 4
"""

import argparse
from dataclasses import replace

from rdtkit.devsim import DISTRIBUTION_PRESETS, DeviceModel, DeviceSpec
from rdtkit.profiler import bitflip_census_at, profile_device, summarize

RATIO_BAND = (0.74, 0.84)
DELTA_L_BAND = (1, 20)
N_BAND = (1, 8)


def in_band(x, band):
    return band[0] <= x <= band[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="paper-worst", choices=sorted(DISTRIBUTION_PRESETS))
    ap.add_argument("--jitter", type=float, nargs="*", help="jitter half-widths to try (default: preset value)")
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--iterations", type=int, default=1000)
    args = ap.parse_args(argv)

    base = DISTRIBUTION_PRESETS[args.preset]
    for j in args.jitter or [base.jitter_half_width]:
        dist = replace(base, jitter_half_width=j)
        misses = 0
        print(f"jitter {j}")
        print("seed  rdt_min  ratio  dL  rows  N  rdt_p10  coverage  ok")
        for seed in range(args.seeds):
            dev = DeviceModel(DeviceSpec(distribution=dist, seed=seed))
            _, ref, matrix = profile_device(dev, args.iterations)
            s = summarize(matrix, ref)
            census = bitflip_census_at(dev, s.rdt_p10, args.iterations)
            ok = (in_band(s.guardband_ratio, RATIO_BAND) and in_band(s.unique_flip_locations, DELTA_L_BAND)
                  and in_band(s.max_flips_in_one_iteration, N_BAND))
            misses += not ok
            print(f"{seed:4d}  {s.rdt_min:7d}  {s.guardband_ratio:.3f}  {s.unique_flip_locations:2d}  "
                  f"{s.unique_weak_rows:4d}  {s.max_flips_in_one_iteration}  {s.rdt_p10:7d}  "
                  f"{census.first_coverage:8.3f}  {ok}")
        print(f"out of band: {misses}/{args.seeds}\n")


if __name__ == "__main__":
    main()
