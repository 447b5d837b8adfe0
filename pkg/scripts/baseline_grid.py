"""Fixed-action ES over the 4x4 (sigma, eta) grid for one qubit.

    python scripts/baseline_grid.py --instances 100 --out results/grid.csv
"""
import argparse
from pathlib import Path

import numpy as np

from qmeta.metatrain import TrainingConfig, evaluate_policy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--c-target", type=int, default=10_000)
    ap.add_argument("--t-max", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/grid.csv")
    args = ap.parse_args()

    cfg = TrainingConfig.preset(1)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["sigma,eta,mean_c_total,mean_infidelity,halted_fraction"]
    for i in range(len(cfg.grid)):
        a = cfg.grid.action(i)
        s, e = a.sigma, a.eta
        (row,), _ = evaluate_policy(a, args.instances, [args.c_target], 1, 0, cfg.k,
                                    t_max=args.t_max, seed=args.seed)
        lines.append(f"{s},{e},{row.mean_c_total!r},{row.mean_infidelity!r},{row.halted_fraction!r}")
        print(f"sigma={s:<6g} eta={e:<6g} log10 C={np.log10(row.mean_c_total):.3f} "
              f"f={row.mean_infidelity:.3e} halted={row.halted_fraction:.2f}", flush=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
