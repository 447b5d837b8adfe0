"""Evolution strategy over HEA angles driven by geometric success counts.

Every instance owns an ``np.random.Generator``.  Per ES step an instance draws,
in this order, ``random(k + 1)`` uniforms (one for the observation count, one
per perturbed sample) and ``standard_normal((k, P))`` perturbations.  The draw
pattern does not depend on the policy or on the other instances of a batch, so
an instance gives the same outcome alone or inside a batch.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .measure import ShotLedger, Target, counts_from_uniforms
from .qsim import HeaSpec, apply_hea_inverse, infidelity, random_params, reconstruct_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EsConfig:
    k: int = 5
    c_target: int = 10_000
    t_max: int = 10_000
    t_rep: int = 1

    def __post_init__(self):
        for name in ("k", "c_target", "t_max", "t_rep"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class Action:
    sigma: float
    eta: float
    grid_index: int = -1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "Action":
        sigma, eta = (float(v) for v in text.split(","))
        return cls(sigma, eta)


@dataclass
class RolloutLog:
    """Per-step records of one run; counts are raw success counts."""

    obs_count: np.ndarray
    next_count: np.ndarray
    action_index: np.ndarray
    decision: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    t: np.ndarray
    t_h: int
    c_target: int

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class LearnOutcome:
    theta_train: np.ndarray
    c_total: int
    t_h: int
    halted: bool
    infidelity: float
    n_fail: int = 0
    transitions: RolloutLog | None = None
    meta: dict = field(default_factory=dict)

    def record(self) -> dict:
        rec = dict(self.meta)
        rec.update(c_total=int(self.c_total), t_h=int(self.t_h), halted=bool(self.halted),
                   infidelity=float(self.infidelity), n_fail=int(self.n_fail),
                   theta_train=[float(v) for v in self.theta_train])
        return rec


def outcomes_to_jsonl(outcomes, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.record(), sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------- policies


class FixedPolicy:
    """Always returns the same action; consumes no randomness."""

    def __init__(self, action: Action):
        self.action = action

    def choose(self, counts, c_target, rngs):
        n = len(counts)
        return (np.full(n, self.action.grid_index),
                np.full(n, self.action.sigma), np.full(n, self.action.eta))


# --------------------------------------------------------------------------- estimator


def estimate_gradient(counts, epsilons, sigma, c_target) -> np.ndarray:
    """``sum_i C_i eps_i / (c_target * sigma * k)``.

    Works on one instance (``counts`` (k,), ``epsilons`` (k, P)) or a batch
    (``counts`` (B, k), ``epsilons`` (B, k, P), ``sigma`` scalar or (B,)).
    """
    counts = np.asarray(counts, dtype=float)
    eps = np.asarray(epsilons, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma == 0):
        raise ZeroDivisionError("sigma must be non-zero")
    if counts.shape != eps.shape[:-1]:
        raise ValueError(f"counts {counts.shape} do not match epsilons {eps.shape}")
    k = counts.shape[-1]
    weighted = np.einsum("...k,...kp->...p", counts, eps)
    return weighted / (c_target * np.expand_dims(sigma, -1) * k)


class _TargetBatch:
    def __init__(self, targets: list[Target]):
        self.pure = all(t.pure for t in targets)
        if self.pure:
            self.vectors = np.stack([t.vector for t in targets])
        else:
            self.matrices = np.stack([t.state.entries if not t.pure
                                      else np.outer(t.vector, t.vector.conj()) for t in targets])

    def probs(self, spec: HeaSpec, params: np.ndarray, rows: np.ndarray, reps: int) -> np.ndarray:
        """p_s for ``params`` (A*reps, P) against targets ``rows`` repeated ``reps`` times."""
        s = np.zeros(spec.dim, dtype=complex)
        s[0] = 1.0

        v = apply_hea_inverse(spec, params, s)
        idx = np.repeat(rows, reps)
        if self.pure:
            p = np.abs(np.einsum("bi,bi->b", v, self.vectors[idx].conj())) ** 2
        else:
            p = np.einsum("bi,bij,bj->b", v.conj(), self.matrices[idx], v).real
        return np.clip(p, 0.0, 1.0)


@dataclass
class EsStepResult:
    theta_next: np.ndarray
    observation: int
    counts: np.ndarray
    halted: bool
    theta_halt: np.ndarray | None


def es_step(theta, action: Action, target, spec: HeaSpec, config: EsConfig,
            rng: np.random.Generator, ledger: ShotLedger | None = None) -> EsStepResult:
    """One ES iteration for a single instance with a fixed action."""
    target = target if isinstance(target, Target) else Target(target)
    tb = _TargetBatch([target])
    theta = np.asarray(theta, dtype=float)
    k, cap = config.k, config.c_target
    u = 1.0 - rng.random(k + 1)
    eps = rng.standard_normal((k, spec.n_params))
    c0 = int(counts_from_uniforms(tb.probs(spec, theta[None], np.array([0]), 1), u[:1], cap)[0])
    if ledger is not None:
        ledger.record(c0, c0 >= cap)
    if c0 >= cap:
        return EsStepResult(theta.copy(), c0, np.zeros(0, np.int64), True, theta.copy())
    samples = theta + action.sigma * eps
    counts = counts_from_uniforms(tb.probs(spec, samples, np.array([0]), k), u[1:], cap)
    if ledger is not None:
        for c in counts:
            ledger.record(int(c), c >= cap)
    hit = np.flatnonzero(counts >= cap)
    if hit.size:
        return EsStepResult(theta.copy(), c0, counts, True, samples[hit[0]].copy())
    grad = estimate_gradient(counts, eps, action.sigma, cap)
    return EsStepResult(theta + action.eta * grad, c0, counts, False, None)


# --------------------------------------------------------------------------- batched runs


class _Log:
    def __init__(self, n: int, t_max: int):
        self.rows = min(t_max, 1024)
        self.t_max = t_max
        self.obs = np.zeros((self.rows, n), np.int64)
        self.act = np.zeros((self.rows, n), np.int64)
        self.decision = np.zeros(self.rows, bool)

    def write(self, t: int, cols, obs, act, decision: bool):
        if t > self.rows:
            grow = min(self.rows * 2, self.t_max)
            self.obs = np.concatenate([self.obs, np.zeros((grow - self.rows, self.obs.shape[1]), np.int64)])
            self.act = np.concatenate([self.act, np.zeros((grow - self.rows, self.act.shape[1]), np.int64)])
            self.decision = np.concatenate([self.decision, np.zeros(grow - self.rows, bool)])
            self.rows = grow
        self.obs[t - 1, cols] = obs
        self.act[t - 1, cols] = act
        self.decision[t - 1] = decision


def is_refresh_step(t: int, t_rep: int) -> bool:
    return t == 1 or t % t_rep == 0


def learn_batch(states, spec: HeaSpec, policy, config: EsConfig, es_rngs, agent_rngs=None,
                t_rep: int | None = None, record_transitions: bool = True,
                init_params=None, meta=None) -> list[LearnOutcome]:
    """Run the ES on several input states in lockstep; one outcome per state."""
    n = len(states)
    t_rep = config.t_rep if t_rep is None else t_rep
    agent_rngs = es_rngs if agent_rngs is None else agent_rngs
    targets = [s if isinstance(s, Target) else Target(s) for s in states]
    tb = _TargetBatch(targets)
    k, cap, P = config.k, config.c_target, spec.n_params

    if init_params is None:
        theta = np.stack([random_params(spec, r) for r in es_rngs])
    else:
        theta = np.array(init_params, dtype=float).reshape(n, P)
    theta_train = theta.copy()
    active = np.ones(n, bool)
    c_total = np.zeros(n, np.int64)
    n_fail = np.zeros(n, np.int64)
    t_h = np.full(n, config.t_max)
    final_count = np.zeros(n, np.int64)
    act_idx = np.full(n, -1)
    sigma = np.ones(n)
    eta = np.zeros(n)
    trace = _Log(n, config.t_max) if record_transitions else None

    for t in range(1, config.t_max + 1):
        rows = np.flatnonzero(active)
        if rows.size == 0:
            break
        u = np.empty((rows.size, k + 1))
        eps = np.empty((rows.size, k, P))
        for j, b in enumerate(rows):
            u[j] = 1.0 - es_rngs[b].random(k + 1)
            eps[j] = es_rngs[b].standard_normal((k, P))

        c0 = counts_from_uniforms(tb.probs(spec, theta[rows], rows, 1), u[:, 0], cap)
        c_total[rows] += c0
        n_fail[rows] += c0 < cap

        decision = is_refresh_step(t, t_rep)
        if decision:
            idx, sg, et = policy.choose(c0, cap, [agent_rngs[b] for b in rows])
            act_idx[rows], sigma[rows], eta[rows] = idx, sg, et
        if trace is not None:
            trace.write(t, rows, c0, act_idx[rows], decision)

        obs_hit = c0 >= cap
        if obs_hit.any():
            done_rows = rows[obs_hit]
            theta_train[done_rows] = theta[done_rows]
            final_count[done_rows] = c0[obs_hit]
            t_h[done_rows] = t
            active[done_rows] = False
        live = ~obs_hit
        rows, u, eps = rows[live], u[live], eps[live]
        if rows.size == 0:
            continue

        samples = theta[rows, None, :] + sigma[rows, None, None] * eps
        cs = counts_from_uniforms(tb.probs(spec, samples.reshape(-1, P), rows, k).reshape(-1, k),
                                  u[:, 1:], cap)
        c_total[rows] += cs.sum(axis=1)
        n_fail[rows] += (cs < cap).sum(axis=1)

        hit = cs >= cap
        halt = hit.any(axis=1)
        if halt.any():
            first = np.argmax(hit, axis=1)
            hr = np.flatnonzero(halt)
            done_rows = rows[hr]
            theta_train[done_rows] = samples[hr, first[hr]]
            final_count[done_rows] = cs[hr].max(axis=1)
            t_h[done_rows] = t
            active[done_rows] = False
        go = ~halt
        if go.any():
            r = rows[go]
            theta[r] = theta[r] + eta[r, None] * estimate_gradient(cs[go], eps[go], sigma[r], cap)

    still = np.flatnonzero(active)
    theta_train[still] = theta[still]
    if still.size:
        log.debug("%d of %d runs did not halt within t_max=%d", still.size, n, config.t_max)

    outcomes = []
    for b in range(n):
        halted = not active[b]
        est = reconstruct_state(spec, theta_train[b])
        tr = None
        if trace is not None:
            th = int(t_h[b])
            obs = trace.obs[:th, b].copy()
            nxt = np.empty_like(obs)
            nxt[:-1] = obs[1:]
            nxt[-1] = final_count[b] if halted else obs[-1]
            reward = -np.ones(th)
            done = np.zeros(th, bool)
            if halted:
                reward[-1] = 0.0
                done[-1] = True
            tr = RolloutLog(obs, nxt, trace.act[:th, b].copy(), trace.decision[:th].copy(),
                            reward, done, np.arange(1, th + 1), th, cap)
        m = dict(meta[b]) if meta is not None else {}
        outcomes.append(LearnOutcome(theta_train[b].copy(), int(c_total[b]), int(t_h[b]), halted,
                                     infidelity(targets[b].state, est), int(n_fail[b]), tr, m))
    return outcomes


def as_policy(policy_source):
    if isinstance(policy_source, Action):
        return FixedPolicy(policy_source)
    return policy_source


def run_learning(input_state, spec: HeaSpec, policy_source, config: EsConfig,
                 rng: np.random.Generator, agent_rng: np.random.Generator | None = None,
                 init_params=None) -> LearnOutcome:
    """Learn one state; ``policy_source`` is a fixed :class:`Action` or an agent."""
    return learn_batch([input_state], spec, as_policy(policy_source), config, [rng],
                       None if agent_rng is None else [agent_rng],
                       init_params=None if init_params is None else [init_params])[0]
