"""Regenerate the headline numbers: static vs controlled NLoS time and obstacle localization.

    python3 scripts/reproduce_results.py [--seed 0] [--out-dir out/results]

Writes CSV/SVG/JSON outputs under the output directory and prints a short table.
"""

import argparse
import json
import sys

from visionran.cli import main as cli

p = argparse.ArgumentParser()
p.add_argument("--seed", type=int, default=0)
p.add_argument("--policy", default="policies/paper_v_dqn.json")
p.add_argument("--out-dir", default="out/results")
args = p.parse_args()

common = ["--seed", str(args.seed)]
for argv in (["compare", "--policy", args.policy, "--out-dir", f"{args.out_dir}/compare"],
             ["eval-loc", "--out-dir", f"{args.out_dir}/loc-default"],
             ["eval-loc", "--noise-profile", "zero", "--out-dir", f"{args.out_dir}/loc-zero"]):
    rc = cli(argv + common)
    if rc:
        sys.exit(rc)


def load(name):
    with open(f"{args.out_dir}/{name}/report.json") as fh:
        return json.load(fh)


cmp = load("compare")["comparison"]
print()
print(f"NLoS time  static {cmp['nlos_seconds_static']:6.2f} s   controlled {cmp['nlos_seconds_controlled']:6.2f} s"
      f"   reduction {cmp['nlos_reduction']:.1%}")
print(f"throughput static {cmp['mean_thr_bps']['static'] / 1e6:6.1f} Mb/s controlled "
      f"{cmp['mean_thr_bps']['controlled'] / 1e6:6.1f} Mb/s")
for name in ("loc-zero", "loc-default"):
    loc = load(name)["localization"]
    dev = ", ".join(f"{d:.4f}" for d in loc["mean_deviation"])
    print(f"{name:12s} mean estimate {loc['mean']}  deviation (x, y) = {dev} m")
