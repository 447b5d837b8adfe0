"""Command-line entry point: ``qmeta <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, qst
from .agent import Agent, ActionGrid
from .config import ConfigError, load_config
from .es import Action, EsConfig, as_policy, learn_batch, outcomes_to_jsonl
from .harness import chunks, manifest_path, max_workers, pool_map, read_manifest, write_manifest
from .metatrain import PRESETS, TrainingConfig, evaluate_policy, run_training
from .qsim import (HeaSpec, depolarize, haar_random_state, load_state, save_state, shen_castan_state,
                   subsystem_entropy)
from .seeding import derive_subseed, make_rng, make_rngs

log = logging.getLogger("qmeta")

DEFAULT_LAYERS = {1: 0, 2: 1, 3: 5}
DEFAULT_K = {1: 5, 2: 10, 3: 30}


def default_layers(n: int) -> int:
    return DEFAULT_LAYERS.get(n, 10)


def default_k(n: int) -> int:
    return DEFAULT_K.get(n, 100)


# --------------------------------------------------------------------------- subcommands


def cmd_train_agent(args) -> tuple[dict, list]:
    if args.config:
        cfg = load_config(args.config)
    elif args.qubits in PRESETS:
        cfg = TrainingConfig.preset(args.qubits)
    else:
        raise ValueError(f"no training preset for {args.qubits} qubits; pass --config")
    overrides = {k: v for k, v in {
        "episodes": args.episodes,
        "instances_per_episode": args.instances, "seed": args.seed, "t_max": args.t_max,
        "updates_per_episode": args.updates_per_episode, "advantage_sign": args.advantage_sign,
        "c_target": args.c_target}.items() if v is not None}
    cfg = replace(cfg, **overrides)
    out = Path(args.out)

    def progress(m):
        log.info("T=%d t_rep=%d <C_total>=%.1f halted=%.2f <f>=%.3e", m.T, m.t_rep, m.mean_c_total,
                 m.halted_fraction, m.mean_infidelity)

    res = run_training(cfg, out, resume=args.resume, progress=progress)
    if res.best_episode is not None:
        print(f"best rolling <C_total> {res.best_rolling_c_total:.1f} at episode {res.best_episode}")
    outputs = [out / "metrics.jsonl", out / "checkpoint.json"]
    if (out / "best.json").exists():
        outputs.append(out / "best.json")
    return asdict(cfg), outputs


def _load_agent(path, greedy: bool) -> Agent:
    agent = Agent.load(path)
    agent.greedy = greedy
    return agent


def _learn_job(job):
    states, spec, policy, cfg, seed, idx, meta = job
    return learn_batch(states, spec, policy, cfg, make_rngs(seed, idx, "es"), make_rngs(seed, idx, "agent"),
                       record_transitions=False, meta=meta)


def cmd_learn(args) -> tuple[dict, list]:
    n = args.qubits
    layers = default_layers(n) if args.layers is None else args.layers
    k = default_k(n) if args.k is None else args.k
    if (args.action is None) == (args.agent is None):
        raise ValueError("give exactly one of --action or --agent")
    if args.agent is not None:
        policy = _load_agent(args.agent, args.greedy)
        source = {"agent": str(args.agent), "greedy": args.greedy}
    else:
        policy = Action.parse(args.action)
        source = {"action": [policy.sigma, policy.eta]}
    spec = HeaSpec(n, layers)
    cfg = EsConfig(k=k, c_target=args.c_target, t_max=args.t_max, t_rep=args.t_rep)
    if args.state:
        base = load_state(args.state)
        if base.n_qubits != n:
            raise ValueError(f"state file has {base.n_qubits} qubits, --qubits is {n}")
        states = [base] * args.instances
    else:
        states = [haar_random_state(n, make_rng(args.seed, i, "state")) for i in range(args.instances)]
        if args.mu is not None:
            states = [depolarize(s, args.mu) for s in states]
    meta = [{"instance_id": i, "seed": derive_subseed(args.seed, i, "es"), "n_qubits": n, "layers": layers,
             "c_target": args.c_target, "manifest": manifest_path(args.out).name} for i in range(len(states))]
    jobs = [(states[c[0]:c[-1] + 1], spec, as_policy(policy), cfg, args.seed, c, meta[c[0]:c[-1] + 1])
            for c in chunks(range(len(states)), max_workers())]
    outs = [o for part in pool_map(_learn_job, jobs) for o in part]
    outcomes_to_jsonl(outs, args.out)
    s = analysis.summarize(outs)
    print(f"instances={s.n} <C_total>={s.mean_c_total:.1f} <f>={s.mean_infidelity:.3e} "
          f"fidelity={1 - s.mean_infidelity:.6f} halted={s.halted_fraction:.2f}")
    config = {"n_qubits": n, "layers": layers, "k": k, "c_target": args.c_target, "t_max": args.t_max,
              "t_rep": args.t_rep, "instances": args.instances, "state": args.state, "mu": args.mu, **source}
    return config, [Path(args.out)]


BASELINE_COLUMNS = ("sigma", "eta", "c_target", "mean_c_total", "mean_infidelity", "mean_t_h",
                    "t_h_ratio", "halted_fraction", "n")


def cmd_baseline_grid(args) -> tuple[dict, list]:
    n = args.qubits
    layers = default_layers(n) if args.layers is None else args.layers
    k = default_k(n) if args.k is None else args.k
    grid = ActionGrid.standard_16(n)
    rows = []
    for i in range(len(grid)):
        a = grid.action(i)
        (r,), _ = evaluate_policy(a, args.instances, [args.c_target], n, layers, k, args.t_max, 1, args.seed)
        rows.append((a.sigma, a.eta, r))
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(BASELINE_COLUMNS) + "\n")
        for sg, et, r in rows:
            fh.write(f"{sg!r},{et!r},{r.c_target},{r.mean_c_total!r},{r.mean_infidelity!r},{r.mean_t_h!r},"
                     f"{r.mean_t_h / args.t_max!r},{r.halted_fraction!r},{r.n}\n")
    print(format_grid(rows, grid))
    config = {"n_qubits": n, "layers": layers, "k": k, "c_target": args.c_target, "t_max": args.t_max,
              "instances": args.instances, "grid": grid.to_json()}
    return config, [Path(args.out)]


def format_grid(rows, grid: ActionGrid) -> str:
    """log10 <C_total> table, sigma down the rows and eta across; '*' marks runs that did not all halt."""
    lookup = {(sg, et): r for sg, et, r in rows}
    head = "sigma\\eta " + " ".join(f"{e:>9g}" for e in grid.etas)
    lines = [head]
    for sg in grid.sigmas:
        cells = []
        for et in grid.etas:
            r = lookup[(sg, et)]
            cells.append(f"{np.log10(r.mean_c_total):8.3f}{'*' if r.halted_fraction < 1 else ' '}")
        lines.append(f"{sg:<9g} " + " ".join(cells))
    best = min(rows, key=lambda x: x[2].mean_c_total)
    lines.append(f"lowest <C_total>: sigma={best[0]:g} eta={best[1]:g}")
    return "\n".join(lines)


def _qst_job(job):
    n, shots, seed, idx = job
    settings = qst.build_settings(n)
    lines = []
    for i in idx:
        psi = haar_random_state(n, make_rng(seed, i, "state"))
        f, res = qst.tomography_run(psi, shots, make_rng(seed, i, "qst"), settings=settings)
        lines.append(qst.csv_row(i, n, shots, len(settings), f, res))
    return lines


def cmd_qst(args) -> tuple[dict, list]:
    rows = []
    for shots in args.shots:
        jobs = [(args.qubits, shots, args.seed, c) for c in chunks(range(args.instances), max_workers())]
        rows += [line for part in pool_map(_qst_job, jobs) for line in part]
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(qst.CSV_COLUMNS) + "\n")
        fh.writelines(r + "\n" for r in rows)
    config = {"n_qubits": args.qubits, "shots": list(args.shots), "instances": args.instances}
    return config, [Path(args.out)]


def cmd_fit_scaling(args) -> tuple[dict, list]:
    path = Path(args.input)
    if path.suffix == ".jsonl":
        points = analysis.read_points_jsonl(path)
    elif _has_column(path, "total_shots"):
        points = analysis.read_qst_points(path)
    else:
        points = analysis.read_points_csv(path, args.x_col, args.y_col)
    fit = analysis.fit_scaling(points)
    report = analysis.format_report(fit, points)
    Path(args.out).write_text(report, encoding="utf-8")
    print(report, end="")
    return {"input": str(path)}, [Path(args.out)]


def _has_column(path, name: str) -> bool:
    with open(path, encoding="utf-8") as fh:
        return name in fh.readline().strip().split(",")


def cmd_state(args) -> tuple[dict, list]:
    if args.kind == "shen-castan":
        state = shen_castan_state()
    elif args.kind == "haar":
        state = haar_random_state(args.qubits, make_rng(args.seed, 0, "state"))
    else:
        state = depolarize(haar_random_state(args.qubits, make_rng(args.seed, 0, "state")), args.mu)
    save_state(state, args.out)
    rho = state.density_matrix() if hasattr(state, "density_matrix") else state
    ent = [subsystem_entropy(rho, q) for q in range(state.n_qubits)]
    print(f"{args.kind}: n_qubits={state.n_qubits} purity={rho.purity():.9f} "
          f"entropies={', '.join(f'{e:.4f}' for e in ent)}")
    return {"kind": args.kind, "n_qubits": state.n_qubits, "mu": args.mu}, [Path(args.out)]


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmeta", description=__doc__)
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    t = sub.add_parser("train-agent", help="meta-train the actor-critic agent")
    t.add_argument("--qubits", type=int, default=1)
    t.add_argument("--config", help="INI file with a [training] section")
    t.add_argument("--episodes", type=int)
    t.add_argument("--instances", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--t-max", type=int)
    t.add_argument("--c-target", type=int)
    t.add_argument("--updates-per-episode", type=int)
    t.add_argument("--advantage-sign", choices=("standard", "literal"))
    t.add_argument("--resume", help="checkpoint.json to continue from")
    t.add_argument("--out", default="run")
    t.set_defaults(func=cmd_train_agent)

    le = sub.add_parser("learn", help="learn states with a fixed action or a trained agent")
    le.add_argument("--qubits", type=int, required=True)
    le.add_argument("--layers", type=int)
    le.add_argument("--k", type=int)
    le.add_argument("--c-target", type=int, default=10_000)
    le.add_argument("--t-max", type=int, default=10_000)
    le.add_argument("--t-rep", type=int, default=1)
    le.add_argument("--instances", type=int, default=1)
    le.add_argument("--action", help="sigma,eta")
    le.add_argument("--agent", help="agent checkpoint JSON")
    le.add_argument("--greedy", action="store_true")
    le.add_argument("--state", help="state JSON to learn instead of Haar-random states")
    le.add_argument("--mu", type=float, help="depolarize the Haar states with strength mu")
    le.add_argument("--seed", type=int, default=0)
    le.add_argument("--out", default="outcomes.jsonl")
    le.set_defaults(func=cmd_learn)

    b = sub.add_parser("baseline-grid", help="fixed-action ES over the 16-action grid")
    b.add_argument("--qubits", type=int, default=1)
    b.add_argument("--layers", type=int)
    b.add_argument("--k", type=int)
    b.add_argument("--c-target", type=int, default=10_000)
    b.add_argument("--t-max", type=int, default=10_000)
    b.add_argument("--instances", type=int, default=50)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="baseline.csv")
    b.set_defaults(func=cmd_baseline_grid)

    q = sub.add_parser("qst", help="maximum-likelihood tomography baseline")
    q.add_argument("--qubits", type=int, default=1)
    q.add_argument("--shots", type=int, nargs="+", default=[10_000])
    q.add_argument("--instances", type=int, default=20)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", default="qst.csv")
    q.set_defaults(func=cmd_qst)

    f = sub.add_parser("fit-scaling", help="fit f = alpha * C^-beta")
    f.add_argument("--input", required=True, help="outcome JSONL or CSV")
    f.add_argument("--x-col", default="mean_c_total")
    f.add_argument("--y-col", default="mean_infidelity")
    f.add_argument("--out", default="scaling.txt")
    f.set_defaults(func=cmd_fit_scaling)

    s = sub.add_parser("state", help="generate a state file")
    s.add_argument("action", choices=("gen",))
    s.add_argument("kind", choices=("haar", "shen-castan", "depolarized"))
    s.add_argument("--qubits", type=int, default=1)
    s.add_argument("--mu", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="state.json")
    s.set_defaults(func=cmd_state)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.replay:
        try:
            recorded = read_manifest(args.replay)["argv"]
        except (OSError, KeyError, ValueError) as exc:
            print(f"qmeta: cannot replay {args.replay}: {exc}", file=sys.stderr)
            return 2
        return main(recorded)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    started = datetime.now(timezone.utc)
    try:
        config, outputs = args.func(args)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"qmeta {args.command}: {exc}", file=sys.stderr)
        return 1
    seed = getattr(args, "seed", None)
    if seed is None:
        seed = config.get("seed", 0)
    out = Path(args.out)
    write_manifest(out, args.command, argv, config, seed, outputs, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
