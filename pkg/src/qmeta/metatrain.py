"""Meta-training loop over RL episodes and evaluation of trained agents."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agent import Agent, ActionGrid, ReplayBuffer, ars_schedule, collect_rollouts
from .es import EsConfig, LearnOutcome, as_policy, learn_batch
from .harness import chunks, max_workers, pool_map
from .qsim import HeaSpec, haar_random_state
from .seeding import derive_subseed, make_rng, make_rngs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig:
    """One row of the training settings plus desk-scale run sizes."""

    n_qubits: int = 1
    layers: int = 0
    k: int = 5
    c_target: int = 10_000
    t_max: int = 3_000
    sigmas: tuple = (1.0, 0.1, 0.01, 0.001)
    etas: tuple = (1.0, 0.1, 0.01, 0.001)
    t_l: int = 1
    t_u: int = 50
    T_th: int = 100
    instances_per_episode: int = 100
    episodes: int = 300
    seed: int = 0
    advantage_sign: str = "standard"
    lr: float = 1e-4
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    updates_per_episode: int = 50
    rolling_window: int = 10
    checkpoint_every: int = 10
    select_min_halted: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        if self.advantage_sign not in ("standard", "literal"):
            raise ValueError("advantage_sign must be 'standard' or 'literal'")
        if self.episodes < 0 or self.instances_per_episode < 1:
            raise ValueError("episodes must be >= 0 and instances_per_episode >= 1")

    @property
    def grid(self) -> ActionGrid:
        return ActionGrid(self.sigmas, self.etas)

    @property
    def spec(self) -> HeaSpec:
        return HeaSpec(self.n_qubits, self.layers)

    @property
    def es_config(self) -> EsConfig:
        return EsConfig(k=self.k, c_target=self.c_target, t_max=self.t_max)

    @classmethod
    def preset(cls, n_qubits: int, **overrides) -> "TrainingConfig":
        return replace(PRESETS[n_qubits], **overrides)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


_SMALL = (1.0, 0.1, 0.01, 0.001)
_LARGE_SIGMA = (0.1, 0.01, 0.001, 0.0001)
_LARGE_ETA = (1.0, 0.33, 0.01, 0.033)  # as printed in the settings table

PRESETS = {
    1: TrainingConfig(),
    2: TrainingConfig(n_qubits=2, layers=1, k=10, t_max=10_000, t_l=80, t_u=800, T_th=100, lr=3e-5),
    3: TrainingConfig(n_qubits=3, layers=5, k=30, t_max=20_000, sigmas=_LARGE_SIGMA, etas=_LARGE_ETA,
                      t_l=300, t_u=2000, T_th=500, lr=3e-5),
}

# Evaluation-only rows reusing the 3-qubit agent.
GENERALIZATION = {
    4: {"layers": 10, "k": 100, "t_rep": 300},
    5: {"layers": 10, "k": 100, "t_rep": 300},
}


@dataclass
class EpisodeMetrics:
    T: int
    mean_c_total: float
    mean_infidelity: float
    mean_t_h: float
    t_rep: int
    halted_fraction: float
    losses: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class TrainingResult:
    metrics: list
    agent: Agent
    best_episode: int | None = None
    best_rolling_c_total: float | None = None
    best_agent: Agent | None = None


def rolling_means(values, window: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.size < window:
        return np.zeros(0)
    c = np.cumsum(np.insert(v, 0, 0.0))
    return (c[window:] - c[:-window]) / window


def episode_states(config: TrainingConfig, T: int):
    idx = range(T * config.instances_per_episode, (T + 1) * config.instances_per_episode)
    states = [haar_random_state(config.n_qubits, make_rng(config.seed, i, "state")) for i in idx]
    return list(idx), states


def _write_checkpoint(out_dir: Path, name: str, agent: Agent, update_rng, buffer: ReplayBuffer | None,
                      config: TrainingConfig) -> None:
    extra = {"config": asdict(config)}
    if buffer is not None:
        buf_name = name.replace(".json", ".buffer.npz")
        buffer.save(out_dir / buf_name)
        extra["buffer"] = buf_name
    agent.save(out_dir / name, rng_state=update_rng.bit_generator.state, extra=extra)


def run_training(config: TrainingConfig, out_dir=None, resume: str | Path | None = None,
                 progress=None) -> TrainingResult:
    """Train an agent episode by episode; writes metrics/checkpoints when ``out_dir`` is set."""
    spec, es_cfg = config.spec, config.es_config
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    update_rng = make_rng(config.seed, 0, "update")
    if resume is not None:
        obj = json.loads(Path(resume).read_text(encoding="utf-8"))
        agent = Agent.from_json(obj)
        if agent.grid != config.grid:
            raise ValueError("checkpoint grid does not match the training config")
        update_rng.bit_generator.state = obj["rng_state"]
        buf_path = Path(resume).parent / obj["buffer"] if obj.get("buffer") else None
        buffer = ReplayBuffer.load(buf_path) if buf_path else ReplayBuffer(config.buffer_capacity)
        start = agent.episode
    else:
        agent = Agent(config.grid, make_rng(config.seed, 0, "init"), lr=config.lr,
                      advantage_sign=config.advantage_sign)
        buffer = ReplayBuffer(config.buffer_capacity)
        start = 0

    metrics: list[EpisodeMetrics] = []
    if out is not None and resume is not None and (out / "metrics.jsonl").exists():
        for line in (out / "metrics.jsonl").read_text(encoding="utf-8").splitlines():
            if line.strip() and json.loads(line)["T"] < start:
                metrics.append(EpisodeMetrics(**json.loads(line)))
        # drop episodes logged after the checkpoint was taken
        with open(out / "metrics.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(json.dumps(m.to_json(), sort_keys=True) + "\n" for m in metrics)
    best = (None, None, None)

    for T in range(start, config.episodes):
        t_rep = ars_schedule(T, config.t_l, config.t_u, config.T_th)
        idx, states = episode_states(config, T)
        outcomes = collect_rollouts(agent, states, spec, es_cfg, t_rep,
                                    make_rngs(config.seed, idx, "es"), make_rngs(config.seed, idx, "agent"),
                                    buffer=buffer, t_max_norm=config.t_max)
        losses = {}
        for _ in range(config.updates_per_episode):
            batch = buffer.sample(config.batch_size, update_rng)
            actor_batch = buffer.sample(config.batch_size, update_rng, decision_only=True)
            step = agent.update(batch, actor_batch)
            for key, val in step.items():
                losses[key] = losses.get(key, 0.0) + val / config.updates_per_episode
        agent.episode = T + 1
        m = EpisodeMetrics(T, float(np.mean([o.c_total for o in outcomes])),
                           float(np.mean([o.infidelity for o in outcomes])),
                           float(np.mean([o.t_h for o in outcomes])), t_rep,
                           float(np.mean([o.halted for o in outcomes])), losses)
        metrics.append(m)
        if progress is not None:
            progress(m)
        roll = rolling_means([x.mean_c_total for x in metrics], config.rolling_window)
        roll_halt = rolling_means([x.halted_fraction for x in metrics], config.rolling_window)
        eligible = roll.size and roll_halt[-1] >= config.select_min_halted
        if eligible and (best[1] is None or roll[-1] < best[1]):
            best = (T, float(roll[-1]), Agent.from_json(agent.to_json()))
            if out is not None:
                _write_checkpoint(out, "best.json", agent, update_rng, None, config)
        if out is not None:
            with open(out / "metrics.jsonl", "a" if T > 0 else "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(m.to_json(), sort_keys=True) + "\n")
            if (T + 1) % config.checkpoint_every == 0 or T + 1 == config.episodes:
                _write_checkpoint(out, "checkpoint.json", agent, update_rng, buffer, config)

    if out is not None and config.episodes <= start:
        _write_checkpoint(out, "checkpoint.json", agent, update_rng, buffer, config)
        (out / "metrics.jsonl").touch()
    return TrainingResult(metrics, agent, *best)


# --------------------------------------------------------------------------- evaluation


@dataclass
class EvalRow:
    c_target: int
    mean_c_total: float
    mean_infidelity: float
    mean_t_h: float
    n: int
    halted_fraction: float


EVAL_COLUMNS = ("c_target", "mean_c_total", "mean_infidelity", "mean_t_h", "n")


def evaluate_policy(policy, n_states: int, c_targets, n_qubits: int, layers: int, k: int,
                    t_max: int, t_rep: int = 1, seed: int = 0, states=None):
    """Learn ``n_states`` Haar states per target with a fixed action or agent.

    Instance ``i`` uses the same input state and ES stream for every target.
    Returns (rows, outcomes-by-target).
    """
    spec = HeaSpec(n_qubits, layers)
    policy = as_policy(policy)
    rows, by_target = [], {}
    for ct in c_targets:
        cfg = EsConfig(k=k, c_target=int(ct), t_max=t_max, t_rep=t_rep)
        if states is None:
            inst = [haar_random_state(n_qubits, make_rng(seed, i, "state")) for i in range(n_states)]
        else:
            inst = list(states)[:n_states]
        meta = [{"instance_id": i, "seed": derive_subseed(seed, i, "es"), "n_qubits": n_qubits,
                 "layers": layers, "c_target": int(ct)} for i in range(len(inst))]
        jobs = [(inst[c[0]:c[-1] + 1], spec, policy, cfg, seed, c, meta[c[0]:c[-1] + 1])
                for c in chunks(range(len(inst)), max_workers())]
        outs = [o for part in pool_map(_learn_chunk, jobs) for o in part]
        by_target[int(ct)] = outs
        rows.append(summarize_row(int(ct), outs))
    return rows, by_target


def _learn_chunk(job):
    states, spec, policy, cfg, seed, idx, meta = job
    return learn_batch(states, spec, policy, cfg, make_rngs(seed, idx, "es"), make_rngs(seed, idx, "agent"),
                       record_transitions=False, meta=meta)


def summarize_row(c_target: int, outs: list[LearnOutcome]) -> EvalRow:
    return EvalRow(c_target, float(np.mean([o.c_total for o in outs])),
                   float(np.mean([o.infidelity for o in outs])), float(np.mean([o.t_h for o in outs])),
                   len(outs), float(np.mean([o.halted for o in outs])))


def evaluate_agent(checkpoint, n_states: int, c_targets, n_qubits: int, layers: int, k: int | None = None,
                   t_max: int = 10_000, t_rep: int = 1, greedy: bool = False, seed: int = 0,
                   grid: ActionGrid | None = None):
    """Evaluate a trained agent (object or checkpoint path) without mutating it."""
    if isinstance(checkpoint, Agent):
        agent = Agent.from_json(checkpoint.to_json())
    else:
        agent = Agent.load(checkpoint)
    if grid is not None and grid != agent.grid:
        raise ValueError("requested action grid does not match the checkpoint")
    agent.greedy = greedy
    if k is None:
        k = {1: 5, 2: 10, 3: 30}.get(n_qubits, 100)
    return evaluate_policy(agent, n_states, c_targets, n_qubits, layers, k, t_max, t_rep, seed)


def write_eval_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(EVAL_COLUMNS) + "\n")
        for r in rows:
            fh.write(f"{r.c_target},{r.mean_c_total!r},{r.mean_infidelity!r},{r.mean_t_h!r},{r.n}\n")
