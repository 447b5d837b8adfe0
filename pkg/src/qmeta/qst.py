"""Maximum-likelihood state tomography from Pauli projective measurements (RρR iteration)."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .qsim import DensityMatrix, StateVector, infidelity

log = logging.getLogger(__name__)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
P_FLOOR = 1e-12
CSV_COLUMNS = ("instance", "n_qubits", "shots_per_setting", "total_shots", "infidelity", "iterations", "loglik")


def _eigenprojectors(label: str):
    if label == "I":
        return [PAULI["I"]]
    eye = PAULI["I"]
    return [(eye + PAULI[label]) / 2, (eye - PAULI[label]) / 2]


@dataclass(frozen=True)
class PauliSettings:
    """All non-identity Pauli strings, each resolved into its full outcome set.

    ``projectors`` stacks every outcome projector; ``setting_of[j]`` names the
    setting that projector ``j`` belongs to.
    """

    n_qubits: int
    labels: tuple
    projectors: np.ndarray
    setting_of: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def outcome_slices(self):
        bounds = np.flatnonzero(np.diff(self.setting_of)) + 1
        starts = np.concatenate([[0], bounds])
        ends = np.concatenate([bounds, [len(self.setting_of)]])
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]


def build_settings(n_qubits: int) -> PauliSettings:
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    labels, projs, owner = [], [], []
    for s, combo in enumerate(c for c in itertools.product("IXYZ", repeat=n_qubits) if set(c) != {"I"}):
        labels.append("".join(combo))
        for factors in itertools.product(*(_eigenprojectors(c) for c in combo)):
            projs.append(reduce(np.kron, factors))
            owner.append(len(labels) - 1)
    return PauliSettings(n_qubits, tuple(labels), np.array(projs), np.array(owner))


def _rho(state) -> np.ndarray:
    if isinstance(state, StateVector):
        return state.density_matrix().entries
    if isinstance(state, DensityMatrix):
        return state.entries
    return np.asarray(state, dtype=complex)


def born_probabilities(rho, settings: PauliSettings) -> np.ndarray:
    return np.einsum("kij,ji->k", settings.projectors, _rho(rho)).real


def simulate_frequencies(rho_true, settings: PauliSettings, n_shots: int,
                         rng: np.random.Generator | None = None, exact: bool = False) -> np.ndarray:
    """Outcome frequencies per projector; each setting's block sums to one."""
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    p = np.clip(born_probabilities(rho_true, settings), 0.0, None)
    freqs = np.empty_like(p)
    for sl in settings.outcome_slices():
        block = p[sl] / p[sl].sum()
        if exact:
            freqs[sl] = block
        else:
            freqs[sl] = rng.multinomial(n_shots, block) / n_shots
    return freqs


def loglik(rho, freqs: np.ndarray, settings: PauliSettings) -> float:
    p = np.maximum(born_probabilities(rho, settings), P_FLOOR)
    mask = freqs > 0
    return float(np.sum(freqs[mask] * np.log(p[mask])))


def _r_operator(rho: np.ndarray, freqs: np.ndarray, settings: PauliSettings) -> np.ndarray:
    p = born_probabilities(rho, settings)
    starved = (p < P_FLOOR) & (freqs > 0)
    if starved.any():
        log.debug("clamping %d outcome probabilities to %g", int(starved.sum()), P_FLOOR)
    w = np.where(freqs > 0, freqs / np.maximum(p, P_FLOOR), 0.0)
    return np.einsum("k,kij->ij", w, settings.projectors) / len(settings)


@dataclass
class TomographyResult:
    estimate: DensityMatrix
    iterations: int
    loglik: float
    history: list
    converged: bool


def _hermitize(rho: np.ndarray) -> np.ndarray:
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_init(n_qubits: int, rng: np.random.Generator) -> DensityMatrix:
    """Random Bloch-type vector with unit identity component, projected onto the PSD cone."""
    d = 2**n_qubits
    rho = np.eye(d, dtype=complex) / d
    for combo in itertools.product("IXYZ", repeat=n_qubits):
        if set(combo) != {"I"}:
            rho = rho + rng.uniform(-1, 1) * reduce(np.kron, [PAULI[c] for c in combo]) / d
    w, v = np.linalg.eigh(_hermitize(rho))
    w = np.clip(w, 0.0, None)
    return DensityMatrix(n_qubits, _hermitize((v * w) @ v.conj().T))


def rrhor_estimate(freqs: np.ndarray, settings: PauliSettings, init: DensityMatrix | None = None,
                   alpha: float = 0.5, max_iters: int = 5000, tol: float = 1e-10) -> TomographyResult:
    """Diluted RρR iteration; steps that would lower the log-likelihood are re-diluted.

    A rejected step moves the mixing weight halfway towards 1 until the
    likelihood no longer drops; if even the most diluted step fails the
    iteration stops.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    d = 2**settings.n_qubits
    rho = np.eye(d, dtype=complex) / d if init is None else _rho(init).copy()
    cur = loglik(rho, freqs, settings)
    history = [cur]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        R = _r_operator(rho, freqs, settings)
        rr = R @ rho @ R
        rr = rr / np.trace(rr).real
        a = alpha
        while True:
            cand = _hermitize(a * rho + (1 - a) * rr)
            new = loglik(cand, freqs, settings)
            if new >= cur or a > 1 - 1e-9:
                break
            a = (1 + a) / 2
        if new < cur:
            converged = True
            it -= 1
            break
        gain = new - cur
        rho, cur = cand, new
        history.append(cur)
        if gain < tol:
            converged = True
            break
    return TomographyResult(DensityMatrix(settings.n_qubits, rho), it, cur, history, converged)


def tomography_run(psi, n_shots: int, rng: np.random.Generator, settings: PauliSettings | None = None,
                   exact: bool = False, init: DensityMatrix | None = None, **kwargs):
    """Measure, reconstruct and score one state; returns (infidelity, result)."""
    settings = build_settings(psi.n_qubits) if settings is None else settings
    freqs = simulate_frequencies(psi, settings, n_shots, rng, exact=exact)
    res = rrhor_estimate(freqs, settings, init, **kwargs)
    return infidelity(psi, res.estimate), res


def csv_row(instance: int, n_qubits: int, n_shots: int, n_settings: int, inf: float, res: TomographyResult) -> str:
    return f"{instance},{n_qubits},{n_shots},{n_shots * n_settings},{inf!r},{res.iterations},{res.loglik!r}"
