"""Single-shot success/fail measurement and success-count sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qsim import DensityMatrix, DimensionError, HeaSpec, StateVector, apply_hea_inverse


@dataclass(frozen=True)
class SuccessCountSample:
    count: int
    capped: bool


@dataclass
class ShotLedger:
    total_success: int = 0
    total_fail: int = 0

    def record(self, count: int, capped: bool) -> None:
        self.total_success += int(count)
        if not capped:
            self.total_fail += 1


class Target:
    """Unknown input state prepared for repeated success-probability queries."""

    def __init__(self, state):
        if isinstance(state, StateVector):
            self.n_qubits, self.pure = state.n_qubits, True
            self.vector, self.matrix = state.amplitudes, None
        elif isinstance(state, DensityMatrix):
            self.n_qubits, self.pure = state.n_qubits, False
            self.vector, self.matrix = None, state.entries
        else:
            raise TypeError(f"unsupported state type {type(state).__name__}")
        self.state = state

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def overlap_with(self, vecs: np.ndarray) -> np.ndarray:
        """<v|rho|v> for a batch of vectors (B, d)."""
        if self.pure:
            return np.abs(vecs @ self.vector.conj()) ** 2
        return np.einsum("bi,ij,bj->b", vecs.conj(), self.matrix, vecs).real


def success_probabilities(target: Target, spec: HeaSpec, params: np.ndarray, success_basis: int = 0) -> np.ndarray:
    """Batched ``<s|U rho U^dag|s>`` evaluated as ``<v|rho|v>`` with ``v = U^dag |s>``."""
    if target.dim != spec.dim:
        raise DimensionError(f"state has {target.n_qubits} qubits, circuit has {spec.n_qubits}")
    params = np.atleast_2d(params)
    s = np.zeros(spec.dim, dtype=complex)
    s[success_basis] = 1.0
    vecs = apply_hea_inverse(spec, params, s)
    return np.clip(target.overlap_with(vecs), 0.0, 1.0)


def success_probability(state, spec: HeaSpec, params, success_basis: int = 0) -> float:
    target = state if isinstance(state, Target) else Target(state)
    return float(success_probabilities(target, spec, np.asarray(params, float), success_basis)[0])


def counts_from_uniforms(p: np.ndarray, u: np.ndarray, cap: int) -> np.ndarray:
    """Inverse-transform geometric counts, ``floor(ln u / ln p)`` truncated at ``cap``.

    ``u`` must lie in (0, 1].  Returns int64 counts; ``count == cap`` marks a capped draw.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.floor(np.log(u) / np.log(p))
    raw = np.where(p >= 1.0, cap, np.where(p <= 0.0, 0, raw))
    raw = np.where(np.isfinite(raw), raw, cap)
    return np.minimum(raw, cap).astype(np.int64)


def sample_success_count(p_s: float, cap: int, rng: np.random.Generator,
                         ledger: ShotLedger | None = None, shot_by_shot: bool = False) -> SuccessCountSample:
    """Number of consecutive successes before the first fail, halted at ``cap``."""
    if not 0.0 <= p_s <= 1.0:
        raise ValueError(f"p_s must lie in [0, 1], got {p_s}")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if shot_by_shot:
        count = 0
        while count < cap and rng.random() < p_s:
            count += 1
    else:
        u = 1.0 - rng.random()
        count = int(counts_from_uniforms(np.array(p_s), np.array(u), cap))
    sample = SuccessCountSample(count, count >= cap)
    if ledger is not None:
        ledger.record(sample.count, sample.capped)
    return sample
