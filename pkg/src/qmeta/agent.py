"""Actor-critic agent choosing (sigma, eta) for the evolution strategy.

Both networks are small ReLU MLPs on a single scalar input (the encoded
success count), written directly in numpy with hand-derived backprop.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .es import Action, EsConfig, LearnOutcome, RolloutLog, learn_batch
from .qsim import HeaSpec

CHECKPOINT_VERSION = 1
ACTOR_HIDDEN = (50, 50, 50)
CRITIC_HIDDEN = (100, 100, 100)


# --------------------------------------------------------------------------- action grids


@dataclass(frozen=True)
class ActionGrid:
    sigmas: tuple
    etas: tuple

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        if not self.sigmas or not self.etas:
            raise ValueError("action grid must be non-empty")
        if min(self.sigmas) <= 0 or min(self.etas) < 0:
            raise ValueError("sigmas must be > 0 and etas >= 0")

    def __len__(self) -> int:
        return len(self.sigmas) * len(self.etas)

    def action(self, index: int) -> Action:
        i, j = divmod(int(index), len(self.etas))
        return Action(self.sigmas[i], self.etas[j], int(index))

    def index_of(self, sigma: float, eta: float) -> int:
        i = int(np.argmin([abs(math.log10(s / sigma)) for s in self.sigmas]))
        j = int(np.argmin([abs(math.log10(e / eta)) for e in self.etas]))
        return i * len(self.etas) + j

    @property
    def sigma_array(self) -> np.ndarray:
        return np.repeat(np.array(self.sigmas), len(self.etas))

    @property
    def eta_array(self) -> np.ndarray:
        return np.tile(np.array(self.etas), len(self.sigmas))

    def to_json(self) -> dict:
        return {"sigmas": list(self.sigmas), "etas": list(self.etas)}

    @classmethod
    def from_json(cls, obj) -> "ActionGrid":
        return cls(tuple(obj["sigmas"]), tuple(obj["etas"]))

    @classmethod
    def standard_16(cls, n_qubits: int = 1) -> "ActionGrid":
        if n_qubits <= 2:
            vals = (1.0, 0.1, 0.01, 0.001)
            return cls(vals, vals)
        return cls((0.1, 0.01, 0.001, 0.0001), (1.0, 0.33, 0.01, 0.033))

    @classmethod
    def extended_169(cls) -> "ActionGrid":
        vals = tuple(10 ** (-0.25 * (i - 1)) for i in range(1, 14))
        return cls(vals, vals)


# --------------------------------------------------------------------------- scalar helpers


def encode_observation(count, c_target: int):
    """``log10(1 + count) / log10(1 + c_target)``; works on scalars and arrays."""
    count = np.asarray(count, dtype=float)
    if np.any(count < 0) or np.any(count > c_target):
        raise ValueError("count must lie in [0, c_target]")
    out = np.log10(1.0 + count) / math.log10(1.0 + c_target)
    return float(out) if out.ndim == 0 else out


def ars_schedule(T: int, t_l: int, t_u: int, T_th: int) -> int:
    """Action-repetition time for RL episode ``T``: linear anneal from t_u to t_l."""
    if not t_u > t_l >= 1:
        raise ValueError("need t_u > t_l >= 1")
    if T_th < 1 or T < 0:
        raise ValueError("need T_th >= 1 and T >= 0")
    return max(math.ceil(t_u - (T / T_th) * (t_u - t_l)), t_l)


def empirical_value(t, t_h, t_max):
    """Normalised empirical return ``(t - t_h) / t_max``."""
    t = np.asarray(t)
    t_h = np.asarray(t_h)
    if np.any(t < 1) or np.any(t > t_h) or np.any(t_h > t_max):
        raise ValueError("need 1 <= t <= t_h <= t_max")
    out = (t - t_h) / t_max
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------- MLPs


@dataclass
class MlpParams:
    weights: list
    biases: list

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def to_json(self) -> dict:
        return {"dims": self.dims, "weights": [w.tolist() for w in self.weights],
                "biases": [b.tolist() for b in self.biases]}

    @classmethod
    def from_json(cls, obj) -> "MlpParams":
        return cls([np.array(w, dtype=float) for w in obj["weights"]],
                   [np.array(b, dtype=float) for b in obj["biases"]])


def init_mlp(dims, rng: np.random.Generator, scale: float = 1.0) -> MlpParams:
    # U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
    ws, bs = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = scale / math.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        bs.append(rng.uniform(-bound, bound, fan_out))
    return MlpParams(ws, bs)


def _forward(params: MlpParams, x: np.ndarray):
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def _backward(params: MlpParams, acts, grad_out: np.ndarray) -> MlpParams:
    gw, gb = [None] * len(params.weights), [None] * len(params.weights)
    g = grad_out
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * (acts[i] > 0)
    return MlpParams(gw, gb)


def _as_input(obs) -> np.ndarray:
    return np.asarray(obs, dtype=float).reshape(-1, 1)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def policy_forward(params: MlpParams, obs) -> np.ndarray:
    """Action probabilities; (|grid|,) for a scalar obs, (B, |grid|) for a batch."""
    logits, _ = _forward(params, _as_input(obs))
    probs = _softmax(logits)
    return probs[0] if np.ndim(obs) == 0 else probs


def critic_forward(params: MlpParams, obs):
    out, _ = _forward(params, _as_input(obs))
    return float(out[0, 0]) if np.ndim(obs) == 0 else out[:, 0]


def critic_loss_and_grad(params: MlpParams, obs, q_target):
    """Mean of ``0.5 (Q(o) - Q~(o))**2`` over the batch and its gradient."""
    q, acts = _forward(params, _as_input(obs))
    diff = q[:, 0] - np.asarray(q_target, dtype=float)
    n = diff.shape[0]
    loss = 0.5 * float(np.mean(diff**2))
    return loss, _backward(params, acts, (diff / n)[:, None])


def actor_loss_and_grad(params: MlpParams, obs, actions, advantage):
    """Minimised loss ``-mean(A * log pi(a|o))`` (i.e. ascent on A log pi)."""
    logits, acts = _forward(params, _as_input(obs))
    actions = np.asarray(actions, dtype=int)
    adv = np.asarray(advantage, dtype=float)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp_all = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = logp_all[np.arange(n), actions]
    loss = -float(np.mean(adv * logp))
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), actions] = 1.0
    grad_logits = -(adv / n)[:, None] * (onehot - np.exp(logp_all))
    return loss, _backward(params, acts, grad_logits)


# --------------------------------------------------------------------------- ADAM


class Adam:
    def __init__(self, params: MlpParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, params: MlpParams, grads: MlpParams) -> bool:
        """In-place update; an all-zero gradient is a no-op (moments untouched)."""
        gs = grads.arrays()
        if not any(np.any(g) for g in gs):
            return False
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1, corr2 = 1 - b1**self.t, 1 - b2**self.t
        for p, g, m, v in zip(params.arrays(), gs, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
        return True

    def to_json(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "t": self.t, "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v]}

    def load_json(self, obj) -> None:
        self.lr, self.beta1, self.beta2, self.eps = obj["lr"], obj["beta1"], obj["beta2"], obj["eps"]
        self.t = int(obj["t"])
        self.m = [np.array(a, dtype=float) for a in obj["m"]]
        self.v = [np.array(a, dtype=float) for a in obj["v"]]


# --------------------------------------------------------------------------- transitions


@dataclass(frozen=True)
class Transition:
    obs: float
    action_index: int
    reward: float
    next_obs: float
    done: bool
    t: int
    t_h: int
    decision: bool = True

    def __post_init__(self):
        if (self.reward == 0) != self.done:
            raise ValueError("reward must be 0 exactly on the terminal transition")


def transitions_from_log(rollout: RolloutLog) -> list[Transition]:
    obs = encode_observation(rollout.obs_count, rollout.c_target)
    nxt = encode_observation(rollout.next_count, rollout.c_target)
    return [Transition(float(obs[i]), int(rollout.action_index[i]), float(rollout.reward[i]),
                       float(nxt[i]), bool(rollout.done[i]), int(rollout.t[i]), int(rollout.t_h),
                       bool(rollout.decision[i])) for i in range(len(rollout))]


@dataclass
class TransitionBatch:
    obs: np.ndarray
    action_index: np.ndarray
    q_target: np.ndarray

    def __len__(self) -> int:
        return len(self.obs)

    @classmethod
    def from_transitions(cls, transitions, t_max: int) -> "TransitionBatch":
        tr = list(transitions)
        return cls(np.array([x.obs for x in tr]), np.array([x.action_index for x in tr]),
                   np.array([empirical_value(x.t, x.t_h, t_max) for x in tr]))


_BUFFER_FIELDS = {"obs": float, "action": np.int64, "reward": float, "next_obs": float,
                  "done": bool, "t": np.int64, "t_h": np.int64, "q_target": float, "decision": bool}


class ReplayBuffer:
    """FIFO ring buffer of transitions stored column-wise."""

    def __init__(self, capacity: int = 1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.cols = {k: np.zeros(capacity, dtype=d) for k, d in _BUFFER_FIELDS.items()}
        self.head = 0  # next write position
        self.size = 0
        self.inserted = 0

    def __len__(self) -> int:
        return self.size

    def add_rollout(self, rollout: RolloutLog, t_max: int) -> None:
        th = min(int(rollout.t_h), t_max)
        n = len(rollout)
        data = {
            "obs": encode_observation(rollout.obs_count, rollout.c_target),
            "action": rollout.action_index, "reward": rollout.reward,
            "next_obs": encode_observation(rollout.next_count, rollout.c_target),
            "done": rollout.done, "t": rollout.t, "t_h": np.full(n, th),
            "q_target": empirical_value(np.minimum(rollout.t, th), th, t_max),
            "decision": rollout.decision,
        }
        self._append(data, n)

    def add(self, tr: Transition, t_max: int) -> None:
        data = {"obs": [tr.obs], "action": [tr.action_index], "reward": [tr.reward],
                "next_obs": [tr.next_obs], "done": [tr.done], "t": [tr.t], "t_h": [tr.t_h],
                "q_target": [empirical_value(tr.t, tr.t_h, t_max)], "decision": [tr.decision]}
        self._append(data, 1)

    def _append(self, data: dict, n: int) -> None:
        if n > self.capacity:  # only the newest `capacity` rows survive
            data = {k: np.asarray(v)[-self.capacity:] for k, v in data.items()}
            n = self.capacity
        pos = (self.head + np.arange(n)) % self.capacity
        for k, v in data.items():
            self.cols[k][pos] = v
        self.head = (self.head + n) % self.capacity
        self.size = min(self.size + n, self.capacity)
        self.inserted += n

    def order(self) -> np.ndarray:
        """Storage positions from oldest to newest."""
        start = (self.head - self.size) % self.capacity
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator, decision_only: bool = False) -> TransitionBatch:
        pool = np.arange(self.size)
        if decision_only:
            pool = pool[self.cols["decision"][: self.size]]
        if pool.size == 0:
            return TransitionBatch(np.zeros(0), np.zeros(0, int), np.zeros(0))
        pick = pool[rng.choice(pool.size, size=min(batch_size, pool.size), replace=False)]
        return TransitionBatch(self.cols["obs"][pick].copy(), self.cols["action"][pick].copy(),
                               self.cols["q_target"][pick].copy())

    def save(self, path) -> None:
        order = self.order()
        np.savez(path, capacity=self.capacity, inserted=self.inserted,
                 **{k: v[order] for k, v in self.cols.items()})

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        with np.load(path) as z:
            buf = cls(int(z["capacity"]))
            n = len(z["obs"])
            buf._append({k: z[k] for k in _BUFFER_FIELDS}, n)
            buf.inserted = int(z["inserted"])
        return buf


# --------------------------------------------------------------------------- agent


class Agent:
    """Actor, critic, their optimizers and the action grid."""

    def __init__(self, grid: ActionGrid, rng: np.random.Generator, lr: float = 1e-4,
                 advantage_sign: str = "standard", greedy: bool = False,
                 actor_hidden=ACTOR_HIDDEN, critic_hidden=CRITIC_HIDDEN, init_scale: float = 1.0):
        if advantage_sign not in ("standard", "literal"):
            raise ValueError("advantage_sign must be 'standard' or 'literal'")
        self.grid = grid
        self.actor = init_mlp([1, *actor_hidden, len(grid)], rng, init_scale)
        self.critic = init_mlp([1, *critic_hidden, 1], rng, init_scale)
        self.actor_opt = Adam(self.actor, lr)
        self.critic_opt = Adam(self.critic, lr)
        self.advantage_sign = advantage_sign
        self.greedy = greedy
        self.episode = 0

    def probabilities(self, counts, c_target: int) -> np.ndarray:
        return policy_forward(self.actor, encode_observation(np.asarray(counts), c_target))

    def choose(self, counts, c_target, rngs):
        probs = np.atleast_2d(self.probabilities(np.asarray(counts), c_target))
        if self.greedy:
            idx = probs.argmax(axis=1)
        else:
            cdf = np.cumsum(probs, axis=1)
            u = np.array([r.random() for r in rngs])
            idx = np.minimum((cdf < (u * cdf[:, -1])[:, None]).sum(axis=1), probs.shape[1] - 1)
        return idx, self.grid.sigma_array[idx], self.grid.eta_array[idx]

    def update(self, critic_batch: TransitionBatch, actor_batch: TransitionBatch | None = None) -> dict:
        return actor_critic_update(self, critic_batch, actor_batch)

    # --- persistence

    def to_json(self, rng_state=None, extra=None) -> dict:
        obj = {"version": CHECKPOINT_VERSION, "episode_T": self.episode, "grid": self.grid.to_json(),
               "advantage_sign": self.advantage_sign,
               "actor": self.actor.to_json(), "critic": self.critic.to_json(),
               "adam": {"actor": self.actor_opt.to_json(), "critic": self.critic_opt.to_json()},
               "rng_state": rng_state}
        if extra:
            obj.update(extra)
        return obj

    @classmethod
    def from_json(cls, obj) -> "Agent":
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
        agent = cls.__new__(cls)
        agent.grid = ActionGrid.from_json(obj["grid"])
        agent.actor = MlpParams.from_json(obj["actor"])
        agent.critic = MlpParams.from_json(obj["critic"])
        agent.actor_opt = Adam(agent.actor, obj["adam"]["actor"]["lr"])
        agent.actor_opt.load_json(obj["adam"]["actor"])
        agent.critic_opt = Adam(agent.critic, obj["adam"]["critic"]["lr"])
        agent.critic_opt.load_json(obj["adam"]["critic"])
        agent.advantage_sign = obj.get("advantage_sign", "standard")
        agent.greedy = False
        agent.episode = int(obj["episode_T"])
        if agent.actor.dims[-1] != len(agent.grid):
            raise ValueError("actor output size does not match the action grid")
        return agent

    def save(self, path, rng_state=None, extra=None) -> None:
        Path(path).write_text(json.dumps(self.to_json(rng_state, extra)) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Agent":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def actor_critic_update(agent: Agent, batch: TransitionBatch, actor_batch: TransitionBatch | None = None) -> dict:
    """One critic step and one actor step.

    The advantage uses the critic *before* its update.  ``advantage_sign``
    'standard' ascends ``(Q~ - Q) log pi``; 'literal' ascends ``(Q - Q~) log pi``.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    actor_batch = batch if actor_batch is None else actor_batch
    losses = {}
    if len(actor_batch):
        q = critic_forward(agent.critic, actor_batch.obs)
        adv = actor_batch.q_target - q
        if agent.advantage_sign == "literal":
            adv = -adv
        losses["actor"], g_actor = actor_loss_and_grad(agent.actor, actor_batch.obs,
                                                       actor_batch.action_index, adv)
        losses["advantage"] = float(np.mean(adv))
    else:
        g_actor = None
    losses["critic"], g_critic = critic_loss_and_grad(agent.critic, batch.obs, batch.q_target)
    agent.critic_opt.step(agent.critic, g_critic)
    if g_actor is not None:
        agent.actor_opt.step(agent.actor, g_actor)
    return losses


def collect_rollouts(agent: Agent, states, spec: HeaSpec, es_config: EsConfig, t_rep: int,
                     es_rngs, agent_rngs, buffer: ReplayBuffer | None = None,
                     t_max_norm: int | None = None, meta=None) -> list[LearnOutcome]:
    """Learn each state with actions sampled from the agent; store every step."""
    outcomes = learn_batch(states, spec, agent, es_config, es_rngs, agent_rngs, t_rep=t_rep, meta=meta)
    if buffer is not None:
        norm = es_config.t_max if t_max_norm is None else t_max_norm
        for o in outcomes:
            buffer.add_rollout(o.transitions, norm)
    return outcomes
