"""Desk-scale one-qubit meta-training with the 16-action grid."""
import argparse

from qmeta.metatrain import TrainingConfig, run_training


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=150)
    ap.add_argument("--updates", type=int, default=200)
    ap.add_argument("--t-max", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/train_1q")
    args = ap.parse_args()

    cfg = TrainingConfig.preset(1, episodes=args.episodes, updates_per_episode=args.updates,
                                t_max=args.t_max, seed=args.seed)

    def progress(m):
        print(f"T={m.T:<4d} t_rep={m.t_rep:<3d} C={m.mean_c_total:9.0f} f={m.mean_infidelity:.3e} "
              f"halted={m.halted_fraction:.2f}", flush=True)

    res = run_training(cfg, out_dir=args.out, progress=progress)
    print(f"best rolling C_total {res.best_rolling_c_total} at episode {res.best_episode}")
    for c in (0, 10, 100, 1_000, 5_000):
        p = res.agent.probabilities(c, cfg.c_target)
        a = cfg.grid.action(int(p.argmax()))
        print(f"count {c:>5}: most likely sigma={a.sigma:g} eta={a.eta:g} (p={p.max():.2f})")


if __name__ == "__main__":
    main()
