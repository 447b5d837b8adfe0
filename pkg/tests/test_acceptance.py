"""Desk-scale acceptance checks.

Every check prints one ``[criterion n] PASS|FAIL ...`` line. The slow ones
(training, scaling, tomography, mixed states, Shen-Castan) are marked
``slow``; run them alone with ``pytest tests/test_acceptance.py -v -s``.
"""
from __future__ import annotations

import json
import time

import numpy as np
import pytest
from scipy import stats

from oracles import central_diff, hea_unitary as oracle_unitary, rel_err
from qmeta import cli
from qmeta.agent import (ActionGrid, Agent, TransitionBatch, actor_critic_update, actor_loss_and_grad,
                         ars_schedule, critic_forward, critic_loss_and_grad, init_mlp)
from qmeta.analysis import fit_scaling, points_from_rows
from qmeta.es import Action, EsConfig, run_learning
from qmeta.measure import counts_from_uniforms
from qmeta.metatrain import GENERALIZATION, PRESETS, TrainingConfig, evaluate_policy, rolling_means, run_training
from qmeta.qsim import (HeaSpec, depolarize, fidelity, hea_unitary, haar_random_state, random_params,
                        shen_castan_state, shen_castan_vector, subsystem_entropy)
from qmeta.qst import build_settings, tomography_run
from qmeta.seeding import make_rng

SEED = 0
VERDICTS: list[str] = []  # echoed by conftest in the terminal summary
BASELINE_ACTION = Action(0.1, 0.01)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"[criterion {n:>2}] {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)


def haar_states(n: int, n_qubits: int = 1, seed: int = SEED):
    return [haar_random_state(n_qubits, make_rng(seed, i, "state")) for i in range(n)]


# --------------------------------------------------------------------------- shared fixtures


@pytest.fixture(scope="session")
def baseline():
    t0 = time.perf_counter()
    rows, by_target = evaluate_policy(BASELINE_ACTION, 100, [10_000], 1, 0, 5, t_max=10_000, seed=SEED)
    return rows[0], by_target[10_000], time.perf_counter() - t0


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """One desk-scale training run shared by the agent-based checks."""
    cfg = TrainingConfig.preset(1, episodes=150, updates_per_episode=200, t_max=10_000, seed=SEED)
    out = tmp_path_factory.mktemp("train")
    t0 = time.perf_counter()
    result = run_training(cfg, out_dir=out)
    return cfg, result, time.perf_counter() - t0


# --------------------------------------------------------------------------- 1. geometric environment


@pytest.mark.parametrize("p", [0.3, 0.7, 0.9])
def test_c01_geometric_counts(p):
    t0 = time.perf_counter()
    rng = make_rng(SEED, 0, f"geom-{p}")
    n = 100_000
    counts = counts_from_uniforms(np.full(n, p), 1.0 - rng.random(n), 10**9)
    # pool the tail so every expected bin holds at least 5 draws
    k_max = int(np.floor(np.log(5.0 / (n * (1 - p))) / np.log(p)))
    pmf = (1 - p) * p ** np.arange(k_max + 1)
    expected = np.append(pmf, 1 - pmf.sum()) * n
    observed = np.append(np.bincount(np.minimum(counts, k_max + 1), minlength=k_max + 2)[:k_max + 1],
                         np.sum(counts > k_max))
    pval = stats.chisquare(observed, expected).pvalue
    mean, se = counts.mean(), counts.std(ddof=1) / np.sqrt(n)
    z = abs(mean - p / (1 - p)) / se
    dt = time.perf_counter() - t0
    ok = pval > 1e-3 and z < 3 and dt < 5
    report(1, ok, f"p_s={p}: chi2 p-value={pval:.3g}, mean={mean:.4f} vs {p / (1 - p):.4f} "
                  f"({z:.2f} SE), {dt:.2f}s")
    assert ok


# --------------------------------------------------------------------------- 2. circuit


def test_c02_circuit_unitarity_and_param_counts():
    t0 = time.perf_counter()
    rng = make_rng(SEED, 0, "hea")
    worst = 0.0
    for _ in range(200):
        spec = HeaSpec(int(rng.integers(1, 6)), int(rng.integers(0, 11)))
        U = hea_unitary(spec, random_params(spec, rng))
        worst = max(worst, float(np.max(np.abs(U.conj().T @ U - np.eye(spec.dim)))))
    spec = HeaSpec(3, 2)
    theta = random_params(spec, rng)
    oracle_gap = float(np.max(np.abs(hea_unitary(spec, theta) - oracle_unitary(3, 2, theta))))
    rows = {n: c.layers for n, c in PRESETS.items()} | {n: g["layers"] for n, g in GENERALIZATION.items()}
    counts_ok = all(HeaSpec(n, L).n_params == 3 * n * (L + 1) for n, L in rows.items())
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and oracle_gap < 1e-10 and counts_ok and dt < 10
    report(2, ok, f"max|U^dag U - I|={worst:.2e} over 200 circuits, oracle gap={oracle_gap:.1e}, "
                  f"param counts {sorted((n, L, HeaSpec(n, L).n_params) for n, L in rows.items())}, {dt:.2f}s")
    assert ok


# --------------------------------------------------------------------------- 3. ES baseline


@pytest.mark.slow
def test_c03_es_baseline(baseline):
    row, _, dt = baseline
    ok = row.halted_fraction == 1.0 and row.mean_infidelity <= 2e-4 and 2e4 <= row.mean_c_total <= 8e4 and dt < 120
    report(3, ok, f"sigma=0.1 eta=0.01 c_target=1e4: halted={row.halted_fraction:.2f}, "
                  f"mean infidelity={row.mean_infidelity:.3g}, mean C_total={row.mean_c_total:.4g}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------- 4. scaling law


@pytest.mark.slow
def test_c04_scaling_law(trained):
    cfg, result, _ = trained
    agent = Agent.from_json(result.agent.to_json())  # final policy, not the rolling-C checkpoint
    t0 = time.perf_counter()
    rows, _ = evaluate_policy(agent, 100, [10, 100, 1_000, 10_000], 1, 0, cfg.k, t_max=100_000, seed=SEED + 1)
    fit = fit_scaling(points_from_rows(rows))
    dt = time.perf_counter() - t0
    ok = 0.80 <= fit.beta <= 1.15 and fit.r_squared >= 0.95 and dt < 300
    pts = ", ".join(f"({r.mean_c_total:.3g}, {r.mean_infidelity:.3g}, halt {r.halted_fraction:.2f})" for r in rows)
    report(4, ok, f"trained agent: beta={fit.beta:.3f}, R^2={fit.r_squared:.3f}; points {pts}; {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------- 5. meta-learning gain


@pytest.mark.slow
def test_c05_meta_learning_gain(trained, baseline):
    cfg, result, dt = trained
    base = baseline[0]
    m = result.metrics
    w = cfg.rolling_window
    roll_c = rolling_means([x.mean_c_total for x in m], w)
    roll_h = rolling_means([x.halted_fraction for x in m], w)
    roll_f = rolling_means([x.mean_infidelity for x in m], w)
    # compare only windows that are at least as good as the baseline in quality
    eligible = (roll_h >= base.halted_fraction) & (roll_f <= base.mean_infidelity)
    best = float(roll_c[eligible].min()) if eligible.any() else float("inf")
    gain = 1 - best / base.mean_c_total
    ok = gain >= 0.10 and cfg.episodes <= 300 and dt <= 1800
    report(5, ok, f"best quality-matched rolling C_total={best:.4g} vs baseline {base.mean_c_total:.4g} "
                  f"(gain {gain:.1%}); unrestricted best={roll_c.min():.4g}; "
                  f"{cfg.episodes} episodes, {dt / 60:.1f} min")
    assert ok


# --------------------------------------------------------------------------- 6. ARS


def test_c06_ars_schedule():
    anchors = {0: 50, 50: 26, 100: 1, 150: 1, 200: 1}
    got = {T: ars_schedule(T, 1, 50, 100) for T in anchors}
    seq = [ars_schedule(T, 1, 50, 100) for T in range(201)]
    monotone = all(a >= b for a, b in zip(seq, seq[1:]))
    ok = got == anchors and monotone
    report(6, ok, f"anchors {got}, monotone={monotone}")
    assert ok


# --------------------------------------------------------------------------- 7. actor-critic numerics


def test_c07_actor_critic_gradients():
    rng = make_rng(SEED, 0, "ac-fd")
    worst = 0.0
    for _ in range(20):
        hidden = [int(h) for h in rng.integers(2, 7, rng.integers(1, 4))]
        n_act = int(rng.integers(2, 6))
        actor = init_mlp([1, *hidden, n_act], rng)
        critic = init_mlp([1, *hidden, 1], rng)
        obs = rng.uniform(0, 1, 8)
        q = rng.uniform(-1, 0, 8)
        act = rng.integers(0, n_act, 8)
        adv = rng.normal(size=8)
        _, ga = actor_loss_and_grad(actor, obs, act, adv)
        fa = central_diff(lambda: actor_loss_and_grad(actor, obs, act, adv)[0], actor.arrays())
        _, gc = critic_loss_and_grad(critic, obs, q)
        fc = central_diff(lambda: critic_loss_and_grad(critic, obs, q)[0], critic.arrays())
        worst = max([worst] + [rel_err(a, b) for a, b in zip(ga.arrays() + gc.arrays(), fa + fc)])

    agent = Agent(ActionGrid((1.0, 0.1), (1.0, 0.1)), make_rng(SEED, 0, "ac-zero"))
    obs = np.linspace(0, 1, 32)
    before = [a.copy() for a in agent.actor.arrays()]
    actor_critic_update(agent, TransitionBatch(obs, np.arange(32) % 4, critic_forward(agent.critic, obs)))
    unchanged = all(np.array_equal(a, b) for a, b in zip(agent.actor.arrays(), before))
    ok = worst < 1e-4 and unchanged
    report(7, ok, f"worst relative gradient error={worst:.2e} over 20 networks, "
                  f"zero-advantage actor unchanged={unchanged}")
    assert ok


# --------------------------------------------------------------------------- 8. QST baseline


@pytest.mark.slow
def test_c08_qst_baseline():
    t0 = time.perf_counter()
    settings = build_settings(1)
    shots = [100, 1_000, 10_000, 100_000]
    n_states = 100
    states = haar_states(n_states, seed=SEED + 2)
    means, monotone = {}, True
    for n in shots:
        infs = []
        for i, psi in enumerate(states):
            inf, res = tomography_run(psi, n, make_rng(SEED + 2, i, f"qst-{n}"), settings)
            infs.append(inf)
            monotone &= bool(np.all(np.diff(res.history) >= 0))
        means[n] = float(np.mean(infs))
    first20 = float(np.mean([tomography_run(psi, 10_000, make_rng(SEED + 2, i, "qst-10000"), settings)[0]
                             for i, psi in enumerate(states[:20])]))
    fit = fit_scaling([(n * len(settings.labels), f) for n, f in means.items()])
    dt = time.perf_counter() - t0
    ok = first20 <= 1e-2 and monotone and 0.6 <= fit.beta <= 0.9 and dt < 180
    report(8, ok, f"20 states at 1e4 shots: mean infidelity={first20:.3g}; loglik monotone={monotone}; "
                  f"shot exponent={fit.beta:.3f} (R^2 {fit.r_squared:.3f}, {n_states} states/level, "
                  f"means {', '.join(f'{k}:{v:.3g}' for k, v in means.items())}); {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------- 9. mixed states


@pytest.mark.slow
def test_c09_mixed_state_floor(trained):
    cfg, result, _ = trained
    agent = Agent.from_json(result.agent.to_json())
    mu = 1e-2
    pure = haar_states(100, seed=SEED + 3)
    mixed = [depolarize(psi, mu) for psi in pure]
    floor = float(np.mean([1 - fidelity(psi, rho) for psi, rho in zip(pure, mixed)]))
    rows, by_target = evaluate_policy(agent, 100, [100, 1_000, 10_000, 100_000], 1, 0, cfg.k,
                                      t_max=10_000, seed=SEED + 3, states=mixed)
    scored = {ct: float(np.mean([o.infidelity for o in outs])) for ct, outs in by_target.items()}
    plateau = {ct: f for ct, f in scored.items() if ct >= 1_000}
    within = {ct: floor / 2 <= f <= 2 * floor for ct, f in plateau.items()}
    ok = all(within.values())
    report(9, ok, f"floor 1-<psi|rho|psi>={floor:.4g} (mu/2={mu / 2:.4g}); mean infidelity "
                  f"{', '.join(f'{ct:g}:{f:.3g}' for ct, f in scored.items())}; "
                  f"halted {', '.join(f'{r.c_target:g}:{r.halted_fraction:.2f}' for r in rows)}")
    assert ok


# --------------------------------------------------------------------------- 10. Shen-Castan


@pytest.mark.slow
def test_c10_shen_castan():
    rho = shen_castan_state()
    purity = float(np.real(np.trace(rho.entries @ rho.entries)))
    s1 = subsystem_entropy(rho, 0)
    g = GENERALIZATION[5]
    spec = HeaSpec(5, g["layers"])
    cfg = EsConfig(k=g["k"], c_target=100, t_max=20_000, t_rep=g["t_rep"])
    t0 = time.perf_counter()
    out = run_learning(shen_castan_vector(), spec, Action(0.1, 0.33), cfg, make_rng(SEED, 0, "es"))
    dt = time.perf_counter() - t0
    fid = 1 - out.infidelity
    ok = abs(purity - 1) < 1e-6 and abs(s1 - 0.640) <= 5e-3 and out.halted and fid > 0.9
    report(10, ok, f"purity={purity:.9f}, S_1={s1:.4f}; learned with sigma=0.1 eta=0.33 L=10 k=100 "
                   f"t_rep=300: halted={out.halted} at t={out.t_h}, C_total={out.c_total:.3g}, "
                   f"fidelity={fid:.4f}, {dt:.1f}s")
    assert ok


# --------------------------------------------------------------------------- 11. reproducibility


def test_c11_cli_replay_is_byte_identical(tmp_path):
    runs = {
        "learn.jsonl": ["learn", "--qubits", "1", "--instances", "4", "--c-target", "200", "--t-max", "300",
                        "--action", "1,1", "--seed", "7"],
        "qst.csv": ["qst", "--shots", "100", "1000", "--instances", "3", "--seed", "7"],
        "grid.csv": ["baseline-grid", "--instances", "2", "--c-target", "50", "--t-max", "60", "--seed", "7"],
        "haar.json": ["state", "gen", "haar", "--qubits", "2", "--seed", "7"],
    }
    same = {}
    for name, argv in runs.items():
        out = tmp_path / name
        assert cli.main([*argv, "--out", str(out)]) == 0
        first = out.read_bytes()
        manifest = tmp_path / f"{name}.manifest.json"
        recorded = json.loads(manifest.read_text())
        out.unlink()
        assert cli.main(["--replay", str(manifest)]) == 0
        same[name] = out.read_bytes() == first and recorded["master_seed"] == 7
    ok = all(same.values())
    report(11, ok, f"replayed outputs byte-identical: {same}")
    assert ok
