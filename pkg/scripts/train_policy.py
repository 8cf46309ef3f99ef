"""Train the shipped DQN policy on the reference scenario and check it closes the loop.

    python3 scripts/train_policy.py [--seed 0] [--episodes 160]
"""

import argparse
import json
import sys

from visionran.cli import main as cli

p = argparse.ArgumentParser()
p.add_argument("--seed", type=int, default=0)
p.add_argument("--episodes", type=int, default=160)
p.add_argument("--policy", default="policies/paper_v_dqn.json")
p.add_argument("--out-dir", default="out/train")
args = p.parse_args()

rc = cli(["-v", "train", "--seed", str(args.seed), "--episodes", str(args.episodes),
          "--policy", args.policy, "--out-dir", args.out_dir])
if rc:
    sys.exit(rc)
rc = cli(["compare", "--policy", args.policy, "--out-dir", args.out_dir + "/compare"])
with open(args.out_dir + "/compare/report.json") as fh:
    reduction = json.load(fh)["comparison"]["nlos_reduction"]
print(f"NLoS reduction with the new policy: {reduction:.1%}")
sys.exit(rc)
