"""Dense state-vector / density-matrix simulation.

Qubit 0 is the most significant bit of a basis index, so ``|q0 q1 ... q_{N-1}>``
maps to index ``q0 * 2**(N-1) + ... + q_{N-1}``.

Circuit layout of the hardware-efficient ansatz (HEA)::

    U3 column 0 -> [CNOT chain -> U3 column 1] -> ... -> [CNOT chain -> U3 column L]

with each U3 gate ``exp(i theta . sigma / 2)`` and the CNOT chain applying
``CNOT(i, i+1)`` for ``i = 0 .. N-2`` in order.  A 1-qubit ansatz is a single U3.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import linalg

ATOL = 1e-10


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.n_qubits < 1 or amps.shape[0] != 2**self.n_qubits:
            raise DimensionError(f"expected {2**self.n_qubits} amplitudes, got {amps.shape[0]}")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > ATOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_array(cls, amps) -> "StateVector":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.shape[0])))
        return cls(n, amps / np.linalg.norm(amps))

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    n_qubits: int
    entries: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.entries, dtype=complex)
        d = 2**self.n_qubits
        if rho.shape != (d, d):
            raise DimensionError(f"expected {(d, d)} matrix, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > ATOL:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(rho).min() < -ATOL:
            raise ValueError("density matrix has negative eigenvalues")
        object.__setattr__(self, "entries", rho)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))


@dataclass(frozen=True)
class HeaSpec:
    n_qubits: int
    n_layers: int = 0

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be >= 1")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")

    @property
    def entangler(self) -> str:
        return "none" if self.n_qubits == 1 else "nearest-neighbor-chain"

    @property
    def n_columns(self) -> int:
        return 1 if self.n_qubits == 1 else self.n_layers + 1

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * self.n_columns

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


# --------------------------------------------------------------------------- gates


def u3_matrices(angles: np.ndarray) -> np.ndarray:
    """``exp(i (tx X + ty Y + tz Z) / 2)`` for angle triples of shape (..., 3)."""
    angles = np.asarray(angles, dtype=float)
    tx, ty, tz = angles[..., 0], angles[..., 1], angles[..., 2]
    a = np.sqrt(tx * tx + ty * ty + tz * tz)
    c = np.cos(a / 2)
    s = 0.5 * np.sinc(a / (2 * np.pi))  # sin(a/2) / a, finite at a = 0
    sx, sy, sz = s * tx, s * ty, s * tz
    out = np.empty(angles.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = c + 1j * sz
    out[..., 0, 1] = 1j * sx + sy
    out[..., 1, 0] = 1j * sx - sy
    out[..., 1, 1] = c - 1j * sz
    return out


def u3_expm(theta) -> np.ndarray:
    """Reference U3 via a dense matrix exponential; used to check ``u3_matrices``."""
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.array([[1, 0], [0, -1]], dtype=complex)
    tx, ty, tz = theta
    return linalg.expm(0.5j * (tx * x + ty * y + tz * z))


@lru_cache(maxsize=None)
def _chain_permutation(n_qubits: int) -> tuple[np.ndarray, np.ndarray]:
    """Basis permutation of the CNOT chain; returns (gather-forward, gather-inverse)."""
    idx = np.arange(2**n_qubits)
    bits = (idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))) & 1
    for i in range(n_qubits - 1):
        bits[:, i + 1] ^= bits[:, i]
    image = (bits << (n_qubits - 1 - np.arange(n_qubits))).sum(axis=1)
    forward = np.empty_like(image)
    forward[image] = idx  # new[y] = old[forward[y]]
    return forward, image


def _apply_column(states: np.ndarray, mats: np.ndarray, n: int) -> np.ndarray:
    b = states.shape[0]
    for q in range(n):
        psi = states.reshape(b, 2**q, 2, 2 ** (n - q - 1))
        states = np.einsum("bij,bljr->blir", mats[:, q], psi).reshape(b, -1)
    return states


def _check_batch(spec: HeaSpec, params, states):
    params = np.asarray(params, dtype=float)
    states = np.asarray(states, dtype=complex)
    single = params.ndim == 1
    params = np.atleast_2d(params)
    if params.shape[-1] != spec.n_params:
        raise DimensionError(f"{spec} takes {spec.n_params} angles, got {params.shape[-1]}")
    if states.ndim == 1:
        states = np.broadcast_to(states, (params.shape[0], states.shape[0]))
    if states.shape[-1] != spec.dim:
        raise DimensionError(f"state dimension {states.shape[-1]} != {spec.dim}")
    if states.shape[0] != params.shape[0]:
        raise DimensionError("batch sizes of params and states differ")
    return params, states, single


def apply_hea(spec: HeaSpec, params, state) -> np.ndarray:
    """Apply U(theta) to a state; ``params`` may be (P,) or a batch (B, P)."""
    if isinstance(state, StateVector):
        state = state.amplitudes
    params, states, single = _check_batch(spec, params, state)
    n, b = spec.n_qubits, params.shape[0]
    mats = u3_matrices(params.reshape(b, spec.n_columns, n, 3))
    forward, _ = _chain_permutation(n)
    out = _apply_column(np.array(states), mats[:, 0], n)
    for col in range(1, spec.n_columns):
        out = _apply_column(out[:, forward], mats[:, col], n)
    return out[0] if single else out


def apply_hea_inverse(spec: HeaSpec, params, state) -> np.ndarray:
    """Apply U(theta)^dagger; batched like :func:`apply_hea`."""
    if isinstance(state, StateVector):
        state = state.amplitudes
    params, states, single = _check_batch(spec, params, state)
    n, b = spec.n_qubits, params.shape[0]
    mats = u3_matrices(params.reshape(b, spec.n_columns, n, 3))
    mats = np.conj(np.swapaxes(mats, -1, -2))
    _, inverse = _chain_permutation(n)
    out = np.array(states)
    for col in range(spec.n_columns - 1, 0, -1):
        out = _apply_column(out, mats[:, col], n)[:, inverse]
    out = _apply_column(out, mats[:, 0], n)
    return out[0] if single else out


def hea_unitary(spec: HeaSpec, params) -> np.ndarray:
    """Dense matrix of U(theta), built column by column from basis states."""
    basis = np.eye(spec.dim, dtype=complex)
    cols = apply_hea(spec, np.broadcast_to(np.asarray(params, float), (spec.dim, spec.n_params)), basis)
    return cols.T


def reconstruct_state(spec: HeaSpec, params_trained, success_basis_index: int = 0) -> StateVector:
    """Estimated input state ``U(theta)^dagger |s>``."""
    if not 0 <= success_basis_index < spec.dim:
        raise IndexError(f"basis index {success_basis_index} out of range for {spec.n_qubits} qubits")
    s = np.zeros(spec.dim, dtype=complex)
    s[success_basis_index] = 1.0
    amps = apply_hea_inverse(spec, params_trained, s)
    return StateVector(spec.n_qubits, amps / np.linalg.norm(amps))


def random_params(spec: HeaSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, spec.n_params)


# --------------------------------------------------------------------------- states


def haar_random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    """First column of a Haar unitary (QR of a Ginibre matrix with phase fix)."""
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    d = 2**n_qubits
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    q = q * (diag / np.abs(diag))
    amps = q[:, 0]
    return StateVector(n_qubits, amps / np.linalg.norm(amps))


def depolarize(psi: StateVector, mu: float) -> DensityMatrix:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    d = psi.dim
    rho = (1 - mu) * np.outer(psi.amplitudes, psi.amplitudes.conj()) + mu * np.eye(d) / d
    return DensityMatrix(psi.n_qubits, rho)


SHEN_CASTAN_PUBLISHED_K = 0.00366


def shen_castan_matrix() -> np.ndarray:
    """Unnormalized 32x32 Shen-Castan kernel ``exp(-(|m-16.5| + |n-16.5| + 1) / 10)``."""
    m = np.arange(1, 33)
    dist = np.abs(m - 16.5)
    return np.exp(-(dist[:, None] + dist[None, :] + 1) / 10)


def shen_castan_state() -> DensityMatrix:
    # The printed K does not give unit trace; normalize numerically instead.
    kernel = shen_castan_matrix()
    return DensityMatrix(5, (kernel / np.trace(kernel)).astype(complex))


def shen_castan_normalizer() -> float:
    return float(np.trace(shen_castan_matrix()))


def shen_castan_vector() -> StateVector:
    m = np.arange(1, 33)
    return StateVector.from_array(np.exp(-np.abs(m - 16.5) / 10))


# --------------------------------------------------------------------------- figures of merit


def _as_operator(x):
    if isinstance(x, DensityMatrix):
        return x.entries, False
    if isinstance(x, StateVector):
        return x.amplitudes, True
    x = np.asarray(x, dtype=complex)
    return x, x.ndim == 1


def fidelity(a, b) -> float:
    """Fidelity between two states, each pure (vector) or mixed (matrix)."""
    xa, pure_a = _as_operator(a)
    xb, pure_b = _as_operator(b)
    if xa.shape[0] != xb.shape[0]:
        raise DimensionError(f"dimension mismatch: {xa.shape[0]} vs {xb.shape[0]}")
    if pure_a and pure_b:
        f = abs(np.vdot(xa, xb)) ** 2
    elif pure_a:
        f = np.vdot(xa, xb @ xa).real
    elif pure_b:
        f = np.vdot(xb, xa @ xb).real
    else:
        sa = linalg.sqrtm(xa)
        f = np.real(np.trace(linalg.sqrtm(sa @ xb @ sa))) ** 2
    return float(min(max(f, 0.0), 1.0))


def infidelity(target, estimate) -> float:
    return 1.0 - fidelity(target, estimate)


def partial_trace_keep(rho: np.ndarray, n_qubits: int, keep: int) -> np.ndarray:
    t = rho.reshape((2,) * (2 * n_qubits))
    # Move the kept qubit's row/col axes to the front and trace the rest pairwise.
    other = [q for q in range(n_qubits) if q != keep]
    perm = [keep, n_qubits + keep] + other + [n_qubits + q for q in other]
    rest = 2 ** (n_qubits - 1)
    t = np.transpose(t, perm).reshape(2, 2, rest, rest)
    return np.einsum("abkk->ab", t)


def von_neumann_entropy(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-15]
    return float(max(-(w * np.log2(w)).sum(), 0.0))


def subsystem_entropy(rho, qubit_index: int) -> float:
    """Entropy (bits) of one qubit's reduced state; qubit 0 is the most significant."""
    if isinstance(rho, StateVector):
        rho = rho.density_matrix()
    n = rho.n_qubits
    if not 0 <= qubit_index < n:
        raise IndexError(f"qubit index {qubit_index} out of range for {n} qubits")
    return von_neumann_entropy(partial_trace_keep(rho.entries, n, qubit_index))


# --------------------------------------------------------------------------- files


def state_to_json(state) -> dict:
    if isinstance(state, StateVector):
        return {"n_qubits": state.n_qubits,
                "amplitudes": [[float(z.real), float(z.imag)] for z in state.amplitudes]}
    entries = state.entries.reshape(-1)
    return {"n_qubits": state.n_qubits,
            "entries": [[float(z.real), float(z.imag)] for z in entries]}


def state_from_json(obj: dict):
    n = int(obj["n_qubits"])
    if "amplitudes" in obj:
        amps = np.array([complex(re, im) for re, im in obj["amplitudes"]])
        return StateVector(n, amps)
    if "entries" in obj:
        d = 2**n
        vals = np.array([complex(re, im) for re, im in obj["entries"]])
        return DensityMatrix(n, vals.reshape(d, d))
    raise ValueError("state file needs either 'amplitudes' or 'entries'")


def save_state(state, path) -> None:
    Path(path).write_text(json.dumps(state_to_json(state)) + "\n", encoding="utf-8")


def load_state(path):
    return state_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
