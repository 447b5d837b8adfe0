"""Learning depolarized one-qubit states: the infidelity floor."""
import argparse

import numpy as np

from qmeta.agent import Agent
from qmeta.es import Action
from qmeta.metatrain import evaluate_policy
from qmeta.qsim import depolarize, fidelity, haar_random_state
from qmeta.seeding import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--action", default="1,1", help="sigma,eta")
    src.add_argument("--agent", help="checkpoint JSON")
    ap.add_argument("--mu", type=float, default=1e-2)
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--c-targets", type=int, nargs="+", default=[100, 1_000, 10_000, 100_000])
    ap.add_argument("--t-max", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    pure = [haar_random_state(1, make_rng(args.seed, i, "state")) for i in range(args.instances)]
    mixed = [depolarize(psi, args.mu) for psi in pure]
    floor = np.mean([1 - fidelity(p, r) for p, r in zip(pure, mixed)])
    print(f"floor 1-<psi|rho|psi> = {floor:.4g}   (mu/2 = {args.mu / 2:.4g})")
    policy = Agent.load(args.agent) if args.agent else Action.parse(args.action)
    rows, _ = evaluate_policy(policy, args.instances, args.c_targets, 1, 0, 5, t_max=args.t_max,
                              seed=args.seed, states=mixed)
    for r in rows:
        print(f"c_target={r.c_target:<7d} C_total={r.mean_c_total:10.4g} f={r.mean_infidelity:.4g} "
              f"ratio to floor={r.mean_infidelity / floor:.2f} halted={r.halted_fraction:.2f}")


if __name__ == "__main__":
    main()
