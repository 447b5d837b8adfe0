"""Infidelity against total counts for a fixed action or a trained agent, with the power-law fit."""
import argparse

from qmeta.agent import Agent
from qmeta.analysis import fit_scaling, format_report, points_from_rows
from qmeta.es import Action
from qmeta.metatrain import evaluate_policy, write_eval_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--action", default="1,1", help="sigma,eta")
    src.add_argument("--agent", help="checkpoint JSON")
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--c-targets", type=int, nargs="+", default=[10, 100, 1_000, 10_000])
    ap.add_argument("--t-max", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="results/scaling.csv")
    args = ap.parse_args()

    policy = Agent.load(args.agent) if args.agent else Action.parse(args.action)
    rows, _ = evaluate_policy(policy, args.instances, args.c_targets, 1, 0, 5, t_max=args.t_max, seed=args.seed)
    write_eval_csv(rows, args.out)
    pts = points_from_rows(rows)
    print(format_report(fit_scaling(pts), pts), end="")


if __name__ == "__main__":
    main()
