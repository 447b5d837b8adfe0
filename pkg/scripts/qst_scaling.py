"""Tomography infidelity against shots per Pauli setting."""
import argparse

import numpy as np

from qmeta.analysis import fit_scaling, format_report
from qmeta.qsim import haar_random_state
from qmeta.qst import build_settings, tomography_run
from qmeta.seeding import make_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--qubits", type=int, default=1)
    ap.add_argument("--shots", type=int, nargs="+", default=[100, 1_000, 10_000, 100_000])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()

    settings = build_settings(args.qubits)
    states = [haar_random_state(args.qubits, make_rng(args.seed, i, "state")) for i in range(args.instances)]
    pts = []
    for n in args.shots:
        infs = [tomography_run(psi, n, make_rng(args.seed, i, f"qst-{n}"), settings)[0]
                for i, psi in enumerate(states)]
        pts.append((n * len(settings.labels), float(np.mean(infs))))
        print(f"shots/setting={n:<7d} mean f={pts[-1][1]:.3e} median f={np.median(infs):.3e}", flush=True)
    print(format_report(fit_scaling(pts), pts), end="")


if __name__ == "__main__":
    main()
