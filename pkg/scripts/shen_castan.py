"""Properties of the 5-qubit Shen-Castan state and one learning run on it."""
import argparse

from qmeta.es import Action, EsConfig, run_learning
from qmeta.metatrain import GENERALIZATION
from qmeta.qsim import HeaSpec, shen_castan_normalizer, shen_castan_state, shen_castan_vector, subsystem_entropy
from qmeta.seeding import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--action", default="0.1,0.33", help="sigma,eta")
    ap.add_argument("--c-target", type=int, default=100)
    ap.add_argument("--t-max", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rho = shen_castan_state()
    print(f"normalizer K = {shen_castan_normalizer():.6g}")
    print("single-qubit entropies:", " ".join(f"{subsystem_entropy(rho, q):.4f}" for q in range(5)))

    g = GENERALIZATION[5]
    cfg = EsConfig(k=g["k"], c_target=args.c_target, t_max=args.t_max, t_rep=g["t_rep"])
    out = run_learning(shen_castan_vector(), HeaSpec(5, g["layers"]), Action.parse(args.action), cfg,
                       make_rng(args.seed, 0, "es"))
    print(f"halted={out.halted} t_h={out.t_h} C_total={out.c_total} fidelity={1 - out.infidelity:.4f}")


if __name__ == "__main__":
    main()
