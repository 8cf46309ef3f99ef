"""Command line: train, run, compare, eval-loc, replay."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .dqn import (
    FEATURE_ORDER,
    CorruptPolicy,
    Policy,
    SchemaMismatch,
    TrainConfig,
    load_policy,
    save_policy,
    train,
    write_train_log,
)
from .env import VisionTwinEnv, normalization
from .harness import (
    PolicyLoadError,
    compare,
    emit_outputs,
    eval_localization,
    read_decision_log,
    run_scenario,
)
from .scenario import ScenarioLoadError, load_scenario
from .xapp import StateVector

DEFAULT_SCENARIO = "scenarios/paper_v.json"
DEFAULT_POLICY = "policies/paper_v_dqn.json"

log = logging.getLogger("visionran")


def _common(p: argparse.ArgumentParser, policy: bool = False, noise: bool = True) -> None:
    p.add_argument("--scenario", default=DEFAULT_SCENARIO, help="scenario JSON (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    if policy:
        p.add_argument("--policy", default=DEFAULT_POLICY, help="policy file (default: %(default)s)")
    if noise:
        p.add_argument("--noise-profile", default="default", help="noise profile name from the scenario")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="visionran", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a DQN policy in the digital twin")
    _common(p, noise=False)
    p.add_argument("--episodes", type=int, default=TrainConfig.episodes)
    p.add_argument("--policy", default=DEFAULT_POLICY, help="where to write the policy")

    p = sub.add_parser("run", help="closed-loop emulation of one mode")
    _common(p, policy=True)
    p.add_argument("--mode", choices=("static", "controlled"), default="controlled")

    p = sub.add_parser("compare", help="static vs controlled gNB on the same scenario")
    _common(p, policy=True)

    p = sub.add_parser("eval-loc", help="obstacle localization accuracy over all frames")
    _common(p)

    p = sub.add_parser("replay", help="re-drive the world from a decision log")
    _common(p)
    p.add_argument("--decision-log", required=True)
    p.add_argument("--policy", default=None, help="optionally re-check logged actions against this policy")
    return parser


def cmd_train(args) -> dict:
    scn = load_scenario(args.scenario)
    offset, scale = normalization(scn)
    cfg = TrainConfig(episodes=args.episodes, seed=args.seed, norm_offset=offset, norm_scale=scale)
    t0 = time.perf_counter()
    net, history = train(lambda: VisionTwinEnv(scn), cfg)
    elapsed = time.perf_counter() - t0
    policy = Policy(net, offset, scale, scn.delta, scn.T_ctrl, scn.v_max,
                    meta={"scenario": scn.name, "seed": args.seed, "episodes": args.episodes,
                          "steps": args.episodes * scn.env_config().episode_len})
    Path(args.policy).parent.mkdir(parents=True, exist_ok=True)
    save_policy(policy, args.policy)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_train_log(history, out / "train_log.csv")
    tail = history[-100:]
    summary = {"policy": str(args.policy), "episodes": len(history),
               "final100_nlos_fraction": float(np.mean([e.nlos_fraction for e in tail])),
               "train_seconds": round(elapsed, 1)}
    log.info("trained in %.1f s", elapsed)
    return summary


def cmd_run(args) -> dict:
    scn = load_scenario(args.scenario)
    policy = args.policy if args.mode == "controlled" else None
    rep = run_scenario(scn, args.mode, policy, seed=args.seed, noise_profile=args.noise_profile)
    emit_outputs(args.out_dir, [rep])
    return rep.aggregates()


def cmd_compare(args) -> dict:
    scn = load_scenario(args.scenario)
    static = run_scenario(scn, "static", seed=args.seed, noise_profile=args.noise_profile)
    ctrl = run_scenario(scn, "controlled", args.policy, seed=args.seed, noise_profile=args.noise_profile)
    summary = compare(static, ctrl)
    emit_outputs(args.out_dir, [static, ctrl], comparison=summary)
    return summary


def cmd_eval_loc(args) -> dict:
    scn = load_scenario(args.scenario)
    stats = eval_localization(scn, seed=args.seed, noise_profile=args.noise_profile)
    emit_outputs(args.out_dir, localization=stats)
    return stats.as_dict()


def cmd_replay(args) -> dict:
    scn = load_scenario(args.scenario)
    commands = read_decision_log(args.decision_log)
    rep = run_scenario(scn, "controlled", seed=args.seed, noise_profile=args.noise_profile,
                       control_log=commands)
    extra = {"replayed_commands": len(commands)}
    if args.policy:
        # logged features must reproduce the logged actions
        policy = load_policy(args.policy)
        mismatches = 0
        with open(args.decision_log, newline="") as fh:
            for row in csv.DictReader(fh):
                sv = StateVector.from_array([float(row[k]) for k in FEATURE_ORDER])
                if int(np.argmax(policy.q_values(sv.to_array()))) != int(row["action"]):
                    mismatches += 1
        extra["action_mismatches"] = mismatches
    emit_outputs(args.out_dir, [rep], extra={"replay": extra})
    return {**rep.aggregates(), **extra}


COMMANDS = {"train": cmd_train, "run": cmd_run, "compare": cmd_compare, "eval-loc": cmd_eval_loc,
            "replay": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except (ScenarioLoadError, PolicyLoadError, CorruptPolicy, SchemaMismatch, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
